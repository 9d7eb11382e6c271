//! Recursive multi-step forecasting, Monte Carlo bands, and extrema.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{predict_point, sample_noise, stream_rng, LagPolicy, ModelParameters, TimeSeries};

/// Default number of forecast years (one decade after the data, inclusive).
pub const DEFAULT_HORIZON: usize = 11;

/// Location of the lowest and highest value of a path, by calendar year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrema {
    pub min_year: i32,
    pub min_value: f64,
    pub max_year: i32,
    pub max_value: f64,
}

/// Per-step empirical quantile of the simulated paths at one probability level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBand {
    pub level: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub first_forecast_year: i32,
    /// Noise-free recursive forecast.
    pub mean_path: Vec<f64>,
    /// Empty for a deterministic forecast.
    pub quantiles: Vec<QuantileBand>,
    pub n_simulations: usize,
    pub extrema: Extrema,
}

impl Forecast {
    pub fn horizon(&self) -> usize {
        self.mean_path.len()
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.mean_path.len()).map(move |h| self.first_forecast_year + h as i32)
    }

    /// Deterministic forecast with no simulated band.
    pub fn deterministic(
        params: &ModelParameters,
        series: &TimeSeries,
        horizon: usize,
        policy: LagPolicy,
    ) -> Result<Self> {
        let mean_path = forecast_mean(params, series, horizon, policy)?;
        let first_forecast_year = series.last_year() + 1;
        let extrema = find_extrema(&mean_path, first_forecast_year)?;
        Ok(Forecast {
            first_forecast_year,
            mean_path,
            quantiles: Vec::new(),
            n_simulations: 0,
            extrema,
        })
    }
}

fn check_forecast_args(params: &ModelParameters, series: &TimeSeries, horizon: usize, policy: LagPolicy) -> Result<()> {
    params.validate()?;
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    let p = params.ar_order();
    if policy == LagPolicy::Strict && series.len() < p {
        return Err(Error::InsufficientHistory {
            needed: p,
            available: series.len(),
        });
    }
    Ok(())
}

/// Runs the recursion for `horizon` steps past the end of `series`. Each
/// step receives the noise drawn by `noise`; lags come from the observations
/// and then from earlier steps of the same path.
fn extend_path<F>(params: &ModelParameters, series: &TimeSeries, horizon: usize, policy: LagPolicy, mut noise: F) -> Result<Vec<f64>>
where
    F: FnMut() -> Option<f64>,
{
    let n = series.len();
    let mut buffer = Vec::with_capacity(n + horizon);
    buffer.extend_from_slice(series.values());
    for t in n + 1..=n + horizon {
        let y = predict_point(params, t, &buffer, noise(), policy)?;
        buffer.push(y);
    }
    buffer.drain(..n);
    Ok(buffer)
}

/// Noise-free recursive forecast for time indices `N + 1 ..= N + horizon`.
pub fn forecast_mean(params: &ModelParameters, series: &TimeSeries, horizon: usize, policy: LagPolicy) -> Result<Vec<f64>> {
    check_forecast_args(params, series, horizon, policy)?;
    extend_path(params, series, horizon, policy, || None)
}

/// `n_sims` noisy recursive paths. Path `i` draws from stream `i` of `seed`,
/// so the result does not depend on how the paths are scheduled.
pub fn simulate_paths(
    params: &ModelParameters,
    series: &TimeSeries,
    horizon: usize,
    n_sims: usize,
    seed: u64,
    policy: LagPolicy,
) -> Result<Vec<Vec<f64>>> {
    check_forecast_args(params, series, horizon, policy)?;
    if n_sims == 0 {
        return Err(Error::InvalidConfig("number of simulations must be at least 1".into()));
    }
    (0..n_sims as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            extend_path(params, series, horizon, policy, || Some(sample_noise(params, &mut rng)))
        })
        .collect()
}

/// Deterministic forecast plus per-step empirical quantiles of `n_sims`
/// simulated paths at each of `levels`.
pub fn forecast_mc(
    params: &ModelParameters,
    series: &TimeSeries,
    horizon: usize,
    n_sims: usize,
    seed: u64,
    levels: &[f64],
    policy: LagPolicy,
) -> Result<Forecast> {
    if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(Error::InvalidConfig(format!("quantile level {l} is outside (0, 1)")));
    }
    let mut forecast = Forecast::deterministic(params, series, horizon, policy)?;
    let paths = simulate_paths(params, series, horizon, n_sims, seed, policy)?;

    let mut bands: Vec<QuantileBand> = levels
        .iter()
        .map(|&level| QuantileBand {
            level,
            values: Vec::with_capacity(horizon),
        })
        .collect();
    let mut column = Vec::with_capacity(n_sims);
    for h in 0..horizon {
        column.clear();
        column.extend(paths.iter().map(|p| p[h]));
        column.sort_by(f64::total_cmp);
        for band in &mut bands {
            band.values.push(quantile_sorted(&column, band.level));
        }
    }
    forecast.quantiles = bands;
    forecast.n_simulations = n_sims;
    Ok(forecast)
}

/// Linear-interpolation quantile of ascending `sorted` (position
/// `level * (n - 1)`).
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = level * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Lowest and highest values of `path`, with years counted from
/// `first_year`. Ties go to the earliest year.
pub fn find_extrema(path: &[f64], first_year: i32) -> Result<Extrema> {
    let (&first, rest) = path.split_first().ok_or(Error::EmptyPath)?;
    let (mut lo, mut hi) = ((0usize, first), (0usize, first));
    for (i, &v) in rest.iter().enumerate() {
        if v < lo.1 {
            lo = (i + 1, v);
        }
        if v > hi.1 {
            hi = (i + 1, v);
        }
    }
    Ok(Extrema {
        min_year: first_year + lo.0 as i32,
        min_value: lo.1,
        max_year: first_year + hi.0 as i32,
        max_value: hi.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{eval_logistic, eval_power_law, Flow};
    use approx::assert_abs_diff_eq;

    fn trained_params() -> ModelParameters {
        ModelParameters {
            capacity: 109.9,
            growth_rate: 0.7,
            midpoint: 2.4,
            scale: 41.0,
            exponent: 1e-6,
            ar_weights: vec![0.2, 0.1, -0.2],
            noise_sigma: 10.0,
        }
    }

    fn nine_years() -> TimeSeries {
        TimeSeries::new(2015, vec![150.0, 162.0, 158.0, 171.0, 166.0, 175.0, 240.0, 169.0, 173.0], Flow::Import).unwrap()
    }

    #[test]
    fn horizon_covers_the_next_decade() {
        let f = Forecast::deterministic(&trained_params(), &nine_years(), DEFAULT_HORIZON, LagPolicy::Strict).unwrap();
        assert_eq!(f.first_forecast_year, 2024);
        assert_eq!(f.years().collect::<Vec<_>>(), (2024..=2034).collect::<Vec<_>>());
    }

    #[test]
    fn without_ar_the_forecast_is_the_curve() {
        let mut p = trained_params();
        p.ar_weights = vec![0.0; 3];
        let path = forecast_mean(&p, &nine_years(), 11, LagPolicy::Strict).unwrap();
        for (h, y) in path.iter().enumerate() {
            let t = (10 + h) as f64;
            assert_eq!(*y, eval_logistic(&p, t) + eval_power_law(&p, t).unwrap());
        }
    }

    #[test]
    fn first_step_uses_observed_lags() {
        let series = TimeSeries::new(2015, vec![100.0; 9], Flow::Import).unwrap();
        let p = trained_params();
        let path = forecast_mean(&p, &series, 1, LagPolicy::Strict).unwrap();
        let expected = eval_logistic(&p, 10.0) + eval_power_law(&p, 10.0).unwrap() + 10.0;
        assert_abs_diff_eq!(path[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn later_steps_use_forecast_lags() {
        let p = trained_params();
        let series = nine_years();
        let path = forecast_mean(&p, &series, 3, LagPolicy::Strict).unwrap();
        let t = 12.0;
        let ar = 0.2 * path[1] + 0.1 * path[0] - 0.2 * series.values()[8];
        assert_abs_diff_eq!(path[2], eval_logistic(&p, t) + eval_power_law(&p, t).unwrap() + ar, epsilon = 1e-12);
    }

    #[test]
    fn forecast_argument_errors() {
        let p = trained_params();
        assert!(forecast_mean(&p, &nine_years(), 0, LagPolicy::Strict).is_err());
        let short = TimeSeries::new(2015, vec![1.0, 2.0], Flow::Import).unwrap();
        assert!(matches!(
            forecast_mean(&p, &short, 3, LagPolicy::Strict),
            Err(Error::InsufficientHistory { .. })
        ));
        assert!(forecast_mean(&p, &short, 3, LagPolicy::ZeroPad).is_ok());
        assert!(forecast_mc(&p, &nine_years(), 3, 0, 1, &[0.5], LagPolicy::Strict).is_err());
        assert!(forecast_mc(&p, &nine_years(), 3, 10, 1, &[1.0], LagPolicy::Strict).is_err());
    }

    #[test]
    fn zero_noise_paths_equal_mean() {
        let mut p = trained_params();
        p.noise_sigma = 0.0;
        let series = nine_years();
        let mean = forecast_mean(&p, &series, 11, LagPolicy::Strict).unwrap();
        for path in simulate_paths(&p, &series, 11, 50, 3, LagPolicy::Strict).unwrap() {
            assert_eq!(path, mean);
        }
        let f = forecast_mc(&p, &series, 11, 50, 3, &[0.05, 0.5, 0.95], LagPolicy::Strict).unwrap();
        for band in &f.quantiles {
            assert_eq!(band.values, mean);
        }
    }

    #[test]
    fn mc_is_reproducible_and_ordered() {
        let series = nine_years();
        let a = forecast_mc(&trained_params(), &series, 11, 500, 11, &[0.05, 0.5, 0.95], LagPolicy::Strict).unwrap();
        let b = forecast_mc(&trained_params(), &series, 11, 500, 11, &[0.05, 0.5, 0.95], LagPolicy::Strict).unwrap();
        assert_eq!(a, b);
        for h in 0..11 {
            assert!(a.quantiles[0].values[h] <= a.quantiles[1].values[h]);
            assert!(a.quantiles[1].values[h] <= a.quantiles[2].values[h]);
        }
        let c = forecast_mc(&trained_params(), &series, 11, 500, 12, &[0.05, 0.5, 0.95], LagPolicy::Strict).unwrap();
        assert_ne!(a.quantiles, c.quantiles);
        assert_eq!(a.mean_path, c.mean_path);
    }

    #[test]
    fn mc_spread_matches_sigma_without_ar() {
        let mut p = trained_params();
        p.ar_weights = vec![0.0; 3];
        let paths = simulate_paths(&p, &nine_years(), 11, 100_000, 7, LagPolicy::Strict).unwrap();
        for h in 0..11 {
            let n = paths.len() as f64;
            let mean = paths.iter().map(|x| x[h]).sum::<f64>() / n;
            let var = paths.iter().map(|x| (x[h] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((var.sqrt() - 10.0).abs() < 0.1, "step {h}: std {}", var.sqrt());
        }
    }

    #[test]
    fn extrema_examples() {
        let e = find_extrema(&[5.0, 3.0, 8.0], 2024).unwrap();
        assert_eq!(e, Extrema { min_year: 2025, min_value: 3.0, max_year: 2026, max_value: 8.0 });
        let flat = find_extrema(&[2.0; 11], 2024).unwrap();
        assert_eq!((flat.min_year, flat.max_year), (2024, 2024));
        let ties = find_extrema(&[4.0, 1.0, 9.0, 1.0, 9.0], 2000).unwrap();
        assert_eq!((ties.min_year, ties.max_year), (2001, 2002));
        assert_eq!(find_extrema(&[], 2024), Err(Error::EmptyPath));
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.25), 2.0);
        assert_abs_diff_eq!(quantile_sorted(&v, 0.1), 1.4, epsilon = 1e-12);
        assert_eq!(quantile_sorted(&[7.0], 0.9), 7.0);
    }
}
