use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use cgdm_core::document::real;
use cgdm_core::gradcheck::gradcheck_with;
use cgdm_core::{
    fit as fit_series, forecast_mc, grad_mse, init_params, parse_csv, predict_series, simulate as simulate_values,
    stream_rng, to_time_series, write_csv, DataInfo, Dataset, FitConfig, FitInfo, Flow, Forecast, LagPolicy,
    ModelParameters, ParameterDocument, Record, TimeSeries,
};

use crate::config::{join_reals, RunConfig};
use crate::svg::{Band, Chart, Line};
use crate::{
    FitArgs, ForecastArgs, GradcheckArgs, InputArgs, SimulateArgs, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_VERIFICATION,
};

type CmdResult = anyhow::Result<i32>;

fn load_dataset(path: &Path) -> anyhow::Result<Dataset> {
    let file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    parse_csv(file).map_err(|e| anyhow!("{}: {e}", path.display()))
}

/// The explicit flow, else `fallback`, else the only flow in the data.
fn resolve_flow(data: &Dataset, explicit: Option<Flow>, fallback: Option<Flow>, path: &Path) -> anyhow::Result<Flow> {
    if let Some(flow) = explicit.or(fallback) {
        return Ok(flow);
    }
    match data.flows().as_slice() {
        [only] => Ok(*only),
        many => {
            let names: Vec<&str> = many.iter().map(|f| f.as_str()).collect();
            bail!(
                "{}: input holds several flows ({}); choose one with --flow",
                path.display(),
                names.join(", ")
            )
        }
    }
}

fn load_series(args: &InputArgs, fallback_flow: Option<Flow>) -> anyhow::Result<TimeSeries> {
    let data = load_dataset(&args.input)?;
    let flow = resolve_flow(&data, args.flow, fallback_flow, &args.input)?;
    to_time_series(&data, flow, args.fill).map_err(|e| anyhow!("{}: {e}", args.input.display()))
}

fn load_params(path: &Path) -> anyhow::Result<ParameterDocument> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    ParameterDocument::parse(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn input_config(config: &mut RunConfig, args: &InputArgs, flow: Flow) {
    config
        .set("input", args.input.display())
        .set("flow", flow.as_str())
        .set("fill", args.fill);
}

fn observed_points(series: &TimeSeries) -> Vec<(f64, f64)> {
    series
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| (f64::from(series.year_of(i + 1)), v))
        .collect()
}

pub fn fit(args: &FitArgs) -> CmdResult {
    let series = load_series(&args.input, None)?;
    let fit_config = FitConfig {
        learning_rate: args.learning_rate,
        per_param_scale: None,
        max_iterations: args.max_iters,
        tolerance: args.tolerance,
        backtracking: !args.no_backtracking,
        rng_seed: args.seed,
        outlier_sigma: args.outlier_sigma,
        lag_policy: args.lag_policy,
    };
    let start = match &args.init {
        Some(path) => load_params(path)?.model,
        None => init_params(&fit_config, args.ar_order)?,
    };

    let mut config = RunConfig::new("fit");
    input_config(&mut config, &args.input, series.flow());
    config
        .set("lag_policy", args.lag_policy.as_str())
        .set("ar_order", start.ar_order())
        .set_opt("init", args.init.as_ref().map(|p| p.display()))
        .set_real("learning_rate", args.learning_rate)
        .set("max_iters", args.max_iters)
        .set_real("tolerance", args.tolerance)
        .set("backtracking", fit_config.backtracking)
        .set_opt("outlier_sigma", args.outlier_sigma.map(|k| format!("{k:?}")))
        .set("seed", args.seed);

    let report = fit_series(&series, &fit_config, Some(start))?;

    let mut doc = ParameterDocument::new(report.params.clone());
    doc.fit = Some(FitInfo::new(&fit_config, &report));
    doc.data = Some(DataInfo {
        input: args.input.input.display().to_string(),
        flow: series.flow(),
        first_year: series.first_year(),
        last_year: series.last_year(),
        observations: series.len(),
    });
    let out = &args.output.out_dir;
    write_artifact(out, "params.toml", &format!("{}{}", config.toml_preamble(), doc.render()))?;

    let fitted = predict_series(&report.params, &series, args.lag_policy)?;
    let offset = series.len() - fitted.len();
    let mut table = config.comment_block();
    table.push_str("year,t,observed,fitted,residual\n");
    for (i, &y) in series.values().iter().enumerate() {
        let t = i + 1;
        let _ = match i.checked_sub(offset).map(|j| fitted[j]) {
            Some(f) => writeln!(table, "{},{t},{y},{f},{}", series.year_of(t), y - f),
            None => writeln!(table, "{},{t},{y},,", series.year_of(t)),
        };
    }
    write_artifact(out, "fitted.csv", &table)?;

    if !args.output.no_plot {
        let chart = Chart {
            title: format!("Model fit, {} flow", series.flow()),
            x_label: "year".into(),
            y_label: "count".into(),
            comment: config.one_line(),
            lines: vec![
                Line {
                    label: "observed".into(),
                    color: "#222222",
                    points: observed_points(&series),
                    dashed: false,
                    markers: true,
                },
                Line {
                    label: "fitted".into(),
                    color: "#d62728",
                    points: fitted
                        .iter()
                        .enumerate()
                        .map(|(j, &f)| (f64::from(series.year_of(offset + j + 1)), f))
                        .collect(),
                    dashed: false,
                    markers: false,
                },
            ],
            bands: Vec::new(),
        };
        write_artifact(out, "fit.svg", &chart.render())?;
    }

    println!(
        "final_mse = {} after {} iterations ({})",
        report.final_mse,
        report.iterations_used,
        if report.converged { "converged" } else { "not converged" }
    );
    if !report.excluded_indices.is_empty() {
        let years: Vec<String> = report.excluded_indices.iter().map(|&t| series.year_of(t).to_string()).collect();
        println!("excluded as outliers: {}", years.join(", "));
    }
    if report.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("warning: the fit stopped at the iteration limit before converging");
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn level_name(level: f64) -> String {
    format!("q{level}")
}

fn summary_document(config: &RunConfig, forecast: &Forecast, seed: u64) -> String {
    let mut s = config.toml_preamble();
    let e = &forecast.extrema;
    let levels: Vec<String> = forecast.quantiles.iter().map(|q| real(q.level)).collect();
    let _ = writeln!(s, "[forecast]");
    let _ = writeln!(s, "first_year = {}", forecast.first_forecast_year);
    let _ = writeln!(s, "last_year = {}", forecast.first_forecast_year + forecast.horizon() as i32 - 1);
    let _ = writeln!(s, "horizon = {}", forecast.horizon());
    let _ = writeln!(s, "n_simulations = {}", forecast.n_simulations);
    let _ = writeln!(s, "seed = {seed}");
    let _ = writeln!(s, "levels = [{}]", levels.join(", "));
    let _ = writeln!(s, "\n[extrema]");
    let _ = writeln!(s, "min_year = {}", e.min_year);
    let _ = writeln!(s, "min_value = {}", real(e.min_value));
    let _ = writeln!(s, "max_year = {}", e.max_year);
    let _ = writeln!(s, "max_value = {}", real(e.max_value));
    s
}

pub fn forecast(args: &ForecastArgs) -> CmdResult {
    let doc = load_params(&args.params)?;
    let series = load_series(&args.input, doc.data.as_ref().map(|d| d.flow))?;
    let policy = args
        .lag_policy
        .or(doc.fit.as_ref().map(|f| f.lag_policy))
        .unwrap_or_default();

    let mut config = RunConfig::new("forecast");
    config.set("params", args.params.display());
    input_config(&mut config, &args.input, series.flow());
    config
        .set("lag_policy", policy.as_str())
        .set("horizon", args.horizon)
        .set("sims", args.sims)
        .set("levels", join_reals(&args.levels))
        .set("seed", args.seed);

    let forecast = if args.sims == 0 {
        Forecast::deterministic(&doc.model, &series, args.horizon, policy)?
    } else {
        forecast_mc(&doc.model, &series, args.horizon, args.sims, args.seed, &args.levels, policy)?
    };

    let out = &args.output.out_dir;
    let mut table = config.comment_block();
    table.push_str("year,mean");
    for q in &forecast.quantiles {
        table.push(',');
        table.push_str(&level_name(q.level));
    }
    table.push('\n');
    for (h, year) in forecast.years().enumerate() {
        let _ = write!(table, "{year},{}", forecast.mean_path[h]);
        for q in &forecast.quantiles {
            let _ = write!(table, ",{}", q.values[h]);
        }
        table.push('\n');
    }
    write_artifact(out, "forecast.csv", &table)?;
    write_artifact(out, "summary.toml", &summary_document(&config, &forecast, args.seed))?;

    if !args.output.no_plot {
        let years: Vec<f64> = forecast.years().map(f64::from).collect();
        let mut bands = Vec::new();
        if let (Some(lo), Some(hi)) = (
            forecast.quantiles.iter().min_by(|a, b| a.level.total_cmp(&b.level)),
            forecast.quantiles.iter().max_by(|a, b| a.level.total_cmp(&b.level)),
        ) {
            if lo.level < hi.level {
                bands.push(Band {
                    label: format!("{} to {} band", level_name(lo.level), level_name(hi.level)),
                    color: "#1f77b4",
                    x: years.clone(),
                    lower: lo.values.clone(),
                    upper: hi.values.clone(),
                });
            }
        }
        let chart = Chart {
            title: format!("Forecast {} to {}", forecast.first_forecast_year, years.last().copied().unwrap_or_default()),
            x_label: "year".into(),
            y_label: "count".into(),
            comment: config.one_line(),
            lines: vec![
                Line {
                    label: "observed".into(),
                    color: "#222222",
                    points: observed_points(&series),
                    dashed: false,
                    markers: true,
                },
                Line {
                    label: "forecast".into(),
                    color: "#1f77b4",
                    points: years.iter().copied().zip(forecast.mean_path.iter().copied()).collect(),
                    dashed: true,
                    markers: true,
                },
            ],
            bands,
        };
        write_artifact(out, "forecast.svg", &chart.render())?;
    }

    let e = &forecast.extrema;
    println!(
        "minimum {} in {}, maximum {} in {}",
        e.min_value, e.min_year, e.max_value, e.max_year
    );
    Ok(EXIT_OK)
}

pub fn simulate(args: &SimulateArgs) -> CmdResult {
    let doc = load_params(&args.params)?;
    if args.length == 0 {
        bail!("--length must be at least 1");
    }
    let last_year = i64::from(args.first_year) + args.length as i64 - 1;
    if !(1000..=9999).contains(&args.first_year) || last_year > 9999 {
        bail!("years {}..={last_year} fall outside 1000..=9999", args.first_year);
    }

    let mut rng = stream_rng(args.seed, 0);
    let values = simulate_values(&doc.model, args.length, Some(&mut rng))?;
    let records = values.iter().enumerate().map(|(i, &count)| Record {
        year: args.first_year + i as i32,
        count,
        flow: args.flow,
    });
    if let Some(r) = records.clone().find(|r| r.count < 0.0) {
        bail!(
            "simulated count {} for {} is negative; counts must be non-negative (try a smaller noise_sigma or another --seed)",
            r.count,
            r.year
        );
    }
    let data = Dataset::from_records(records)?;

    let mut config = RunConfig::new("simulate");
    config
        .set("params", args.params.display())
        .set("length", args.length)
        .set("first_year", args.first_year)
        .set("flow", args.flow.as_str())
        .set("seed", args.seed);
    let mut body = Vec::new();
    write_csv(&data, &mut body)?;
    let text = format!("{}{}", config.comment_block(), String::from_utf8(body)?);
    write_artifact(&args.out_dir, "simulated.csv", &text)?;
    Ok(EXIT_OK)
}

pub fn gradcheck(args: &GradcheckArgs) -> CmdResult {
    gradcheck_using(args, grad_mse)
}

/// Runs the check against `analytic` and maps the verdict to an exit code.
fn gradcheck_using<F>(args: &GradcheckArgs, analytic: F) -> CmdResult
where
    F: Fn(&ModelParameters, &TimeSeries, LagPolicy) -> cgdm_core::Result<Vec<f64>>,
{
    if args.instances == 0 {
        bail!("--instances must be at least 1");
    }
    let report = gradcheck_with(args.instances, args.seed, analytic)?;
    print!("{}", report.table());
    Ok(if report.passed() { EXIT_OK } else { EXIT_VERIFICATION })
}
