//! The resolved configuration of one invocation and its textual form.
//!
//! Every artifact starts with the same header: the tool version, the
//! subcommand and one `key = value` line per setting that can change the
//! output. Re-running the subcommand with those settings reproduces the
//! artifact. The output directory is left out on purpose, since it never
//! changes file contents.

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: &'static str,
    /// Settings in display order.
    pub entries: Vec<(&'static str, String)>,
}

impl RunConfig {
    pub fn new(command: &'static str) -> Self {
        RunConfig {
            command,
            entries: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &'static str, value: impl ToString) -> &mut Self {
        self.entries.push((key, value.to_string()));
        self
    }

    /// Shortest round-trip form, e.g. `1e-10` rather than `0.0000000001`.
    pub fn set_real(&mut self, key: &'static str, value: f64) -> &mut Self {
        self.set(key, format!("{value:?}"))
    }

    pub fn set_opt<T: ToString>(&mut self, key: &'static str, value: Option<T>) -> &mut Self {
        let text = value.map_or_else(|| "none".to_owned(), |v| v.to_string());
        self.set(key, text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| *k == key).map(|(_, v)| v.as_str())
    }

    fn header_lines(&self) -> Vec<String> {
        let mut lines = vec![format!("cgdm {} {}", env!("CARGO_PKG_VERSION"), self.command)];
        lines.extend(self.entries.iter().map(|(k, v)| format!("{k} = {v}")));
        lines
    }

    /// Header as `#` comment lines, for CSV artifacts.
    pub fn comment_block(&self) -> String {
        self.header_lines().iter().map(|l| format!("# {l}\n")).collect()
    }

    /// Header for TOML artifacts, set off from the body by a blank line.
    pub fn toml_preamble(&self) -> String {
        format!("{}\n", self.comment_block())
    }

    /// Header on one line, for the SVG comment.
    pub fn one_line(&self) -> String {
        self.header_lines().join("; ")
    }
}

/// Comma-joined shortest round-trip representations.
pub fn join_reals(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_formats() {
        let mut c = RunConfig::new("fit");
        c.set("seed", 7).set_opt::<f64>("outlier_sigma", None).set("levels", join_reals(&[0.05, 0.5]));
        assert_eq!(
            c.comment_block(),
            format!(
                "# cgdm {} fit\n# seed = 7\n# outlier_sigma = none\n# levels = 0.05,0.5\n",
                env!("CARGO_PKG_VERSION")
            )
        );
        assert_eq!(c.get("seed"), Some("7"));
        assert!(c.one_line().ends_with("seed = 7; outlier_sigma = none; levels = 0.05,0.5"));
    }
}
