//! The parameters document: a TOML file holding a fitted model together with
//! the configuration and data description that produced it.
//!
//! Fields are written in one fixed order and every real number carries 17
//! significant digits, so reading a document back yields bit-identical
//! values and re-running a command reproduces the file byte for byte.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{FitConfig, FitReport};
use crate::model::{Flow, LagPolicy, ModelParameters};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataInfo {
    pub input: String,
    pub flow: Flow,
    pub first_year: i32,
    pub last_year: i32,
    pub observations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub backtracking: bool,
    pub seed: u64,
    pub lag_policy: LagPolicy,
    #[serde(default)]
    pub outlier_sigma: Option<f64>,
    #[serde(default)]
    pub per_param_scale: Option<Vec<f64>>,
    pub final_mse: f64,
    pub residual_sigma_hat: f64,
    pub iterations_used: usize,
    pub converged: bool,
    #[serde(default)]
    pub excluded_indices: Vec<usize>,
}

impl FitInfo {
    pub fn new(config: &FitConfig, report: &FitReport) -> Self {
        FitInfo {
            learning_rate: config.learning_rate,
            max_iterations: config.max_iterations,
            tolerance: config.tolerance,
            backtracking: config.backtracking,
            seed: config.rng_seed,
            lag_policy: config.lag_policy,
            outlier_sigma: config.outlier_sigma,
            per_param_scale: config.per_param_scale.clone(),
            final_mse: report.final_mse,
            residual_sigma_hat: report.residual_sigma_hat,
            iterations_used: report.iterations_used,
            converged: report.converged,
            excluded_indices: report.excluded_indices.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDocument {
    pub format_version: u32,
    pub model: ModelParameters,
    #[serde(default)]
    pub fit: Option<FitInfo>,
    #[serde(default)]
    pub data: Option<DataInfo>,
}

impl ParameterDocument {
    pub fn new(model: ModelParameters) -> Self {
        ParameterDocument {
            format_version: FORMAT_VERSION,
            model,
            fit: None,
            data: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc: ParameterDocument = toml::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Document(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                doc.format_version
            )));
        }
        doc.model.validate()?;
        Ok(doc)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        line(w, "format_version", self.format_version);
        w.push('\n');

        w.push_str("[model]\n");
        let m = &self.model;
        line(w, "capacity", real(m.capacity));
        line(w, "growth_rate", real(m.growth_rate));
        line(w, "midpoint", real(m.midpoint));
        line(w, "scale", real(m.scale));
        line(w, "exponent", real(m.exponent));
        line(w, "ar_weights", reals(&m.ar_weights));
        line(w, "noise_sigma", real(m.noise_sigma));

        if let Some(f) = &self.fit {
            w.push_str("\n[fit]\n");
            line(w, "learning_rate", real(f.learning_rate));
            line(w, "max_iterations", f.max_iterations);
            line(w, "tolerance", real(f.tolerance));
            line(w, "backtracking", f.backtracking);
            line(w, "seed", f.seed);
            line(w, "lag_policy", quoted(f.lag_policy.as_str()));
            if let Some(k) = f.outlier_sigma {
                line(w, "outlier_sigma", real(k));
            }
            if let Some(s) = &f.per_param_scale {
                line(w, "per_param_scale", reals(s));
            }
            line(w, "final_mse", real(f.final_mse));
            line(w, "residual_sigma_hat", real(f.residual_sigma_hat));
            line(w, "iterations_used", f.iterations_used);
            line(w, "converged", f.converged);
            let excluded: Vec<String> = f.excluded_indices.iter().map(|i| i.to_string()).collect();
            line(w, "excluded_indices", format!("[{}]", excluded.join(", ")));
        }

        if let Some(d) = &self.data {
            w.push_str("\n[data]\n");
            line(w, "input", quoted(&d.input));
            line(w, "flow", quoted(d.flow.as_str()));
            line(w, "first_year", d.first_year);
            line(w, "last_year", d.last_year);
            line(w, "observations", d.observations);
        }
        out
    }
}

fn line(out: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(out, "{key} = {value}");
}

/// 17 significant digits in scientific notation.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn reals(vs: &[f64]) -> String {
    let parts: Vec<String> = vs.iter().map(|v| real(*v)).collect();
    format!("[{}]", parts.join(", "))
}

fn quoted(s: &str) -> String {
    toml::Value::String(s.to_owned()).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> ParameterDocument {
        let mut doc = ParameterDocument::new(ModelParameters {
            capacity: 109.9,
            growth_rate: 0.7,
            midpoint: 2.4,
            scale: 41.0,
            exponent: 1e-6,
            ar_weights: vec![0.2, 0.1, -0.2],
            noise_sigma: 10.0,
        });
        doc.fit = Some(FitInfo {
            learning_rate: 1e-3,
            max_iterations: 200_000,
            tolerance: 1e-10,
            backtracking: true,
            seed: 42,
            lag_policy: LagPolicy::ZeroPad,
            outlier_sigma: Some(3.0),
            per_param_scale: None,
            final_mse: 0.125,
            residual_sigma_hat: 0.125f64.sqrt(),
            iterations_used: 17,
            converged: true,
            excluded_indices: vec![7],
        });
        doc.data = Some(DataInfo {
            input: "data/seizures \"2015\".csv".into(),
            flow: Flow::Import,
            first_year: 2015,
            last_year: 2023,
            observations: 9,
        });
        doc
    }

    #[test]
    fn renders_in_canonical_order() {
        let text = sample().render();
        assert!(text.starts_with("format_version = 1\n\n[model]\ncapacity = 1.0990000000000001e2\n"));
        let keys: Vec<&str> = text.lines().filter_map(|l| l.split(" = ").next()).collect();
        let cap = keys.iter().position(|k| *k == "capacity").unwrap();
        let sigma = keys.iter().position(|k| *k == "noise_sigma").unwrap();
        assert!(cap < sigma);
        assert!(text.contains("lag_policy = \"zero-pad\""));
    }

    #[test]
    fn round_trips_exactly() {
        let doc = sample();
        let back = ParameterDocument::parse(&doc.render()).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.render(), doc.render());
    }

    #[test]
    fn rejects_corrupt_documents() {
        assert!(ParameterDocument::parse("format_version = 1\n").is_err());
        assert!(ParameterDocument::parse("not toml at all [").is_err());
        let bad_sigma = sample().render().replace("noise_sigma = 1.0000000000000000e1", "noise_sigma = -1.0");
        assert!(matches!(ParameterDocument::parse(&bad_sigma), Err(Error::InvalidParameters(_))));
        let future = sample().render().replace("format_version = 1", "format_version = 9");
        assert!(ParameterDocument::parse(&future).is_err());
    }

    #[test]
    fn model_only_document() {
        let doc = ParameterDocument::new(sample().model);
        let back = ParameterDocument::parse(&doc.render()).unwrap();
        assert_eq!(back.fit, None);
        assert_eq!(back.data, None);
    }

    proptest! {
        #[test]
        fn reals_survive_rendering(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let text = format!("x = {}", real(v));
            let table: toml::Table = toml::from_str(&text).unwrap();
            prop_assert_eq!(table["x"].as_float().unwrap().to_bits(), v.to_bits());
        }
    }
}
