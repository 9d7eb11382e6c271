//! Parameter and series types, and evaluation of the additive growth model
//!
//! The one-step predictor is
//!
//! ```text
//! Y(t) = C / (1 + exp(-k (t - m)))     logistic trend
//!      + alpha * t^beta                power-law term
//!      + sum_i w_i * Y(t - i)          autoregressive term
//!      + eps,  eps ~ N(0, sigma^2)     noise
//! ```
//!
//! Time indices are 1-based: the first observation of a series sits at `t = 1`.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator used for every stochastic operation in the crate.
pub type NoiseRng = ChaCha8Rng;

/// Builds the generator for stream `stream` of `seed`.
///
/// Streams of the same seed are independent and do not depend on the order
/// in which they are created, so simulation paths can run in any order.
pub fn stream_rng(seed: u64, stream: u64) -> NoiseRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Which trade direction a series or record describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flow {
    Import,
    Export,
    Combined,
}

impl Flow {
    pub fn as_str(self) -> &'static str {
        match self {
            Flow::Import => "import",
            Flow::Export => "export",
            Flow::Combined => "combined",
        }
    }
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Flow {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "import" => Ok(Flow::Import),
            "export" => Ok(Flow::Export),
            "combined" => Ok(Flow::Combined),
            other => Err(format!("unknown flow `{other}`")),
        }
    }
}

/// How lags that fall before the first observation are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LagPolicy {
    /// Time indices without a full lag window are not predicted and do not
    /// enter the loss.
    #[default]
    Strict,
    /// Missing lags are read as zero; every index is predicted.
    ZeroPad,
}

impl LagPolicy {
    /// First time index that can be predicted with `order` lags.
    pub fn first_fittable(self, order: usize) -> usize {
        match self {
            LagPolicy::Strict => order + 1,
            LagPolicy::ZeroPad => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LagPolicy::Strict => "strict",
            LagPolicy::ZeroPad => "zero-pad",
        }
    }
}

impl fmt::Display for LagPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LagPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "strict" => Ok(LagPolicy::Strict),
            "zero-pad" | "zero_pad" | "zeropad" => Ok(LagPolicy::ZeroPad),
            other => Err(format!("unknown lag policy `{other}`")),
        }
    }
}

/// Full parameter vector of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    /// Upper asymptote of the logistic trend, in series units.
    pub capacity: f64,
    /// Logistic steepness, per time step.
    pub growth_rate: f64,
    /// Time index of the logistic inflection point.
    pub midpoint: f64,
    /// Power-law scale, in series units.
    pub scale: f64,
    /// Power-law exponent.
    pub exponent: f64,
    /// Autoregressive weights `w_1..w_p`; the AR order is the length.
    pub ar_weights: Vec<f64>,
    /// Standard deviation of the Gaussian noise term.
    pub noise_sigma: f64,
}

/// Number of non-autoregressive free parameters (C, k, m, alpha, beta).
pub const N_CURVE_PARAMS: usize = 5;

impl ModelParameters {
    pub fn ar_order(&self) -> usize {
        self.ar_weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("capacity", self.capacity),
            ("growth_rate", self.growth_rate),
            ("midpoint", self.midpoint),
            ("scale", self.scale),
            ("exponent", self.exponent),
            ("noise_sigma", self.noise_sigma),
        ];
        for (name, v) in scalars {
            if !v.is_finite() {
                return Err(Error::InvalidParameters(format!("{name} is not finite ({v})")));
            }
        }
        if let Some(i) = self.ar_weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::InvalidParameters(format!(
                "ar weight {} is not finite ({})",
                i + 1,
                self.ar_weights[i]
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidParameters(format!(
                "noise_sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    /// Number of coordinates touched by gradient descent: C, k, m, alpha,
    /// beta and the AR weights. The noise scale is not one of them.
    pub fn n_free(&self) -> usize {
        N_CURVE_PARAMS + self.ar_weights.len()
    }

    /// Free coordinates in canonical order `(C, k, m, alpha, beta, w_1..w_p)`.
    pub fn free_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_free());
        v.extend_from_slice(&[
            self.capacity,
            self.growth_rate,
            self.midpoint,
            self.scale,
            self.exponent,
        ]);
        v.extend_from_slice(&self.ar_weights);
        v
    }

    /// Copy of `self` with the free coordinates replaced. `noise_sigma` is kept.
    ///
    /// # Panics
    ///
    /// Panics if `free.len() != self.n_free()`.
    pub fn with_free_vector(&self, free: &[f64]) -> Self {
        assert_eq!(free.len(), self.n_free(), "free vector length mismatch");
        ModelParameters {
            capacity: free[0],
            growth_rate: free[1],
            midpoint: free[2],
            scale: free[3],
            exponent: free[4],
            ar_weights: free[N_CURVE_PARAMS..].to_vec(),
            noise_sigma: self.noise_sigma,
        }
    }

    /// Human-readable names of the free coordinates, in canonical order.
    pub fn free_names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["C", "k", "m", "alpha", "beta"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        names.extend((1..=self.ar_order()).map(|i| format!("w{i}")));
        names
    }
}

/// A yearly series of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    first_year: i32,
    values: Vec<f64>,
    flow: Flow,
}

impl TimeSeries {
    pub fn new(first_year: i32, values: Vec<f64>, flow: Flow) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSeries("series has no observations".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "observation {} ({}) is not finite",
                i + 1,
                values[i]
            )));
        }
        Ok(TimeSeries { first_year, values, flow })
    }

    pub fn first_year(&self) -> i32 {
        self.first_year
    }

    pub fn last_year(&self) -> i32 {
        self.first_year + self.values.len() as i32 - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn flow(&self) -> Flow {
        self.flow
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Calendar year of time index `t`.
    pub fn year_of(&self, t: usize) -> i32 {
        self.first_year + t as i32 - 1
    }

    /// Time index of `year`; may lie outside the observed range.
    pub fn index_of(&self, year: i32) -> i64 {
        i64::from(year) - i64::from(self.first_year) + 1
    }

    /// Observation at time index `t` (1-based).
    pub fn at(&self, t: usize) -> Option<f64> {
        t.checked_sub(1).and_then(|j| self.values.get(j).copied())
    }
}

/// Standard logistic `1 / (1 + exp(-z))`, split on the sign of `z` so the
/// exponential never overflows.
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic trend `C / (1 + exp(-k (t - m)))`.
pub fn eval_logistic(params: &ModelParameters, t: f64) -> f64 {
    params.capacity * sigmoid(params.growth_rate * (t - params.midpoint))
}

/// Power-law term `alpha * t^beta`, defined for `t > 0`.
pub fn eval_power_law(params: &ModelParameters, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::PowerLawDomain { t });
    }
    Ok(power_law(params, t))
}

#[inline]
pub(crate) fn power_law(params: &ModelParameters, t: f64) -> f64 {
    params.scale * t.powf(params.exponent)
}

/// Value at time index `lag_t` (1-based) from `history`, or `None` when the
/// index precedes the first observation.
#[inline]
fn lagged(history: &[f64], lag_t: usize) -> Option<f64> {
    lag_t.checked_sub(1).and_then(|j| history.get(j).copied())
}

/// Autoregressive term `sum_i w_i * history[t - i]`.
///
/// `history[j]` holds the value at time index `j + 1`; it must cover every
/// index below `t_index`. Entries at or beyond `t_index` are ignored.
pub fn eval_ar(
    params: &ModelParameters,
    history: &[f64],
    t_index: usize,
    policy: LagPolicy,
) -> Result<f64> {
    if t_index == 0 {
        return Err(Error::InvalidSeries("time index must be at least 1".into()));
    }
    let p = params.ar_order();
    if history.len() < t_index - 1 {
        return Err(Error::InsufficientHistory {
            needed: t_index - 1,
            available: history.len(),
        });
    }
    if policy == LagPolicy::Strict && t_index <= p {
        return Err(Error::InsufficientHistory {
            needed: p,
            available: t_index - 1,
        });
    }
    Ok(ar_sum(params, history, t_index))
}

/// One draw of the noise term.
pub fn sample_noise<R: Rng + ?Sized>(params: &ModelParameters, rng: &mut R) -> f64 {
    if params.noise_sigma == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    params.noise_sigma * z
}

/// Model value at `t_index`: trend + power law + autoregression, plus `noise`
/// when supplied. Without noise this is the deterministic predictor.
pub fn predict_point(
    params: &ModelParameters,
    t_index: usize,
    history: &[f64],
    noise: Option<f64>,
    policy: LagPolicy,
) -> Result<f64> {
    let t = t_index as f64;
    eval_power_law(params, t)?;
    eval_ar(params, history, t_index, policy)?;
    let y = predict_unchecked(params, t_index, history);
    Ok(match noise {
        Some(e) => y + e,
        None => y,
    })
}

/// Deterministic predictor without argument checks; `t_index >= 1` and the
/// lag window must already be known to be valid.
#[inline]
pub(crate) fn predict_unchecked(params: &ModelParameters, t_index: usize, history: &[f64]) -> f64 {
    let t = t_index as f64;
    let trend = eval_logistic(params, t);
    let power = power_law(params, t);
    trend + power + ar_sum(params, history, t_index)
}

#[inline]
fn ar_sum(params: &ModelParameters, history: &[f64], t_index: usize) -> f64 {
    let mut acc = 0.0;
    for (i, w) in params.ar_weights.iter().enumerate() {
        // lags before t = 1 only reach here under zero padding
        if let Some(y) = t_index.checked_sub(i + 1).and_then(|lag_t| lagged(history, lag_t)) {
            acc += w * y;
        }
    }
    acc
}

/// One-step-ahead fitted values for every fittable index of `series`, with
/// lags read from the observations. The first entry belongs to
/// `policy.first_fittable(p)`.
pub fn predict_series(
    params: &ModelParameters,
    series: &TimeSeries,
    policy: LagPolicy,
) -> Result<Vec<f64>> {
    let first = fittable_start(params.ar_order(), series.len(), policy)?;
    (first..=series.len())
        .map(|t| predict_point(params, t, series.values(), None, policy))
        .collect()
}

/// First fittable index, or an error when the series has none.
pub(crate) fn fittable_start(order: usize, len: usize, policy: LagPolicy) -> Result<usize> {
    let first = policy.first_fittable(order);
    if first > len {
        return Err(Error::InsufficientHistory {
            needed: first,
            available: len,
        });
    }
    Ok(first)
}

/// Draws `len` values from the generative model starting at `t = 1`.
///
/// Lags before the first value read as zero. With `rng = None` (or a zero
/// noise scale) the output is the noise-free trajectory, which the one-step
/// predictor reproduces exactly at every fittable index.
pub fn simulate<R: Rng + ?Sized>(
    params: &ModelParameters,
    len: usize,
    mut rng: Option<&mut R>,
) -> Result<Vec<f64>> {
    params.validate()?;
    let mut out = Vec::with_capacity(len);
    for t in 1..=len {
        let noise = rng.as_deref_mut().map(|r| sample_noise(params, r));
        let y = predict_point(params, t, &out, noise, LagPolicy::ZeroPad)?;
        out.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn trained_params() -> ModelParameters {
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

    fn default_start() -> ModelParameters {
        ModelParameters {
            capacity: 100.0,
            growth_rate: 0.1,
            midpoint: 2.0,
            scale: 1.0,
            exponent: 1.0,
            ar_weights: vec![0.0; 3],
            noise_sigma: 10.0,
        }
    }

    #[test]
    fn logistic_midpoint_values() {
        assert_eq!(eval_logistic(&trained_params(), 2.4), 54.95);
        assert_eq!(eval_logistic(&default_start(), 2.0), 50.0);
    }

    #[test]
    fn logistic_late_value() {
        // 109.9 / (1 + exp(-0.7 * 6.6)), evaluated independently
        let v = eval_logistic(&trained_params(), 9.0);
        assert_abs_diff_eq!(v, 108.827_742_447_861_82, epsilon = 1e-10);
    }

    #[test]
    fn logistic_saturates_without_overflow() {
        let mut p = trained_params();
        p.growth_rate = 1e3;
        assert_eq!(eval_logistic(&p, 1e6), p.capacity);
        assert_eq!(eval_logistic(&p, -1e6), 0.0);
        assert!(eval_logistic(&p, -1e6).is_finite());
    }

    #[test]
    fn power_law_values() {
        let p = trained_params();
        assert_eq!(eval_power_law(&p, 1.0).unwrap(), 41.0);
        assert_abs_diff_eq!(eval_power_law(&p, 20.0).unwrap(), 41.000_122_825_207_185, epsilon = 1e-10);
        let q = default_start();
        assert_eq!(eval_power_law(&q, 7.0).unwrap(), 7.0);
    }

    #[test]
    fn power_law_rejects_non_positive_time() {
        let p = trained_params();
        assert_eq!(eval_power_law(&p, 0.0), Err(Error::PowerLawDomain { t: 0.0 }));
        assert!(eval_power_law(&p, -3.0).is_err());
        assert!(eval_power_law(&p, f64::NAN).is_err());
    }

    #[test]
    fn ar_examples() {
        let mut p = trained_params();
        assert_abs_diff_eq!(
            eval_ar(&p, &[10.0, 10.0, 10.0], 4, LagPolicy::Strict).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        p.ar_weights = vec![0.0; 3];
        assert_eq!(eval_ar(&p, &[3.0, 4.0, 5.0], 4, LagPolicy::Strict).unwrap(), 0.0);
        p.ar_weights = vec![1.0];
        assert_eq!(eval_ar(&p, &[42.0], 2, LagPolicy::Strict).unwrap(), 42.0);
    }

    #[test]
    fn ar_strict_requires_full_window() {
        let p = trained_params();
        let err = eval_ar(&p, &[1.0, 2.0], 3, LagPolicy::Strict).unwrap_err();
        assert_eq!(err, Error::InsufficientHistory { needed: 3, available: 2 });
        // short history for the requested index
        assert!(eval_ar(&p, &[1.0], 5, LagPolicy::ZeroPad).is_err());
        assert!(eval_ar(&p, &[], 0, LagPolicy::ZeroPad).is_err());
    }

    #[test]
    fn ar_zero_pad_reads_missing_lags_as_zero() {
        let p = trained_params();
        // t = 2: only y_1 exists
        assert_eq!(eval_ar(&p, &[10.0], 2, LagPolicy::ZeroPad).unwrap(), 2.0);
        assert_eq!(eval_ar(&p, &[], 1, LagPolicy::ZeroPad).unwrap(), 0.0);
    }

    #[test]
    fn noise_zero_sigma_is_exactly_zero() {
        let mut p = trained_params();
        p.noise_sigma = 0.0;
        let mut rng = stream_rng(1, 0);
        for _ in 0..10 {
            assert_eq!(sample_noise(&p, &mut rng), 0.0);
        }
    }

    #[test]
    fn noise_is_reproducible() {
        let p = trained_params();
        let a: Vec<f64> = {
            let mut rng = stream_rng(7, 0);
            (0..100).map(|_| sample_noise(&p, &mut rng)).collect()
        };
        let b: Vec<f64> = {
            let mut rng = stream_rng(7, 0);
            (0..100).map(|_| sample_noise(&p, &mut rng)).collect()
        };
        assert_eq!(a, b);
        let mut other = stream_rng(7, 1);
        assert_ne!(a[0], sample_noise(&p, &mut other));
    }

    #[test]
    fn predict_point_examples() {
        let zero = ModelParameters {
            capacity: 0.0,
            growth_rate: 0.3,
            midpoint: 1.0,
            scale: 0.0,
            exponent: 0.7,
            ar_weights: vec![0.0],
            noise_sigma: 0.0,
        };
        assert_eq!(predict_point(&zero, 2, &[5.0], None, LagPolicy::Strict).unwrap(), 0.0);

        let q = default_start();
        assert_eq!(predict_point(&q, 2, &[9.0], None, LagPolicy::ZeroPad).unwrap(), 52.0);
        assert_eq!(predict_point(&q, 2, &[9.0], Some(1.5), LagPolicy::ZeroPad).unwrap(), 53.5);
    }

    #[test]
    fn predict_point_trained_values_at_t3() {
        // t = 3 has lags y2, y1 and a policy-excluded y0 under zero padding
        let p = trained_params();
        let hist = [10.0, 10.0];
        let expected = eval_logistic(&p, 3.0) + eval_power_law(&p, 3.0).unwrap() + (0.2 * 10.0 + 0.1 * 10.0);
        let got = predict_point(&p, 3, &hist, None, LagPolicy::ZeroPad).unwrap();
        assert_eq!(got, expected);
        // 109.9 / (1 + exp(-0.42)) + 41 * 3^1e-6 + 3
        assert_abs_diff_eq!(got, 66.322_809_160_133_43 + 41.000_045_043_128_58 + 3.0, epsilon = 1e-10);
    }

    #[test]
    fn predict_series_window_arithmetic() {
        let p = trained_params();
        let series = TimeSeries::new(2015, (1..=9).map(f64::from).collect(), Flow::Import).unwrap();
        assert_eq!(predict_series(&p, &series, LagPolicy::Strict).unwrap().len(), 6);
        assert_eq!(predict_series(&p, &series, LagPolicy::ZeroPad).unwrap().len(), 9);
        let short = TimeSeries::new(2015, vec![1.0, 2.0, 3.0], Flow::Import).unwrap();
        assert_eq!(
            predict_series(&p, &short, LagPolicy::Strict).unwrap_err(),
            Error::InsufficientHistory { needed: 4, available: 3 }
        );
    }

    #[test]
    fn predict_series_without_ar_is_the_curve() {
        let mut p = trained_params();
        p.ar_weights = vec![0.0; 3];
        let series = TimeSeries::new(2000, vec![3.0; 8], Flow::Combined).unwrap();
        let fitted = predict_series(&p, &series, LagPolicy::Strict).unwrap();
        for (j, y) in fitted.iter().enumerate() {
            let t = (j + 4) as f64;
            assert_eq!(*y, eval_logistic(&p, t) + eval_power_law(&p, t).unwrap());
        }
    }

    #[test]
    fn simulated_series_is_reproduced_exactly() {
        let p = trained_params();
        let values = simulate::<NoiseRng>(&p, 12, None).unwrap();
        let series = TimeSeries::new(2015, values.clone(), Flow::Combined).unwrap();
        for policy in [LagPolicy::Strict, LagPolicy::ZeroPad] {
            let first = policy.first_fittable(3);
            let fitted = predict_series(&p, &series, policy).unwrap();
            assert_eq!(fitted, values[first - 1..].to_vec());
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut p = trained_params();
        p.noise_sigma = -1.0;
        assert!(p.validate().is_err());
        let mut p = trained_params();
        p.ar_weights[1] = f64::NAN;
        assert!(p.validate().is_err());
        let mut p = trained_params();
        p.capacity = f64::INFINITY;
        assert!(p.validate().is_err());
        assert!(trained_params().validate().is_ok());
    }

    #[test]
    fn series_rejects_bad_values() {
        assert!(TimeSeries::new(2015, vec![], Flow::Import).is_err());
        assert!(TimeSeries::new(2015, vec![1.0, f64::NAN], Flow::Import).is_err());
        let s = TimeSeries::new(2015, vec![1.0; 9], Flow::Import).unwrap();
        assert_eq!(s.last_year(), 2023);
        assert_eq!(s.year_of(1), 2015);
        assert_eq!(s.index_of(2023), 9);
        assert_eq!(s.at(0), None);
    }

    #[test]
    fn free_vector_round_trip() {
        let p = trained_params();
        let v = p.free_vector();
        assert_eq!(v, vec![109.9, 0.7, 2.4, 41.0, 1e-6, 0.2, 0.1, -0.2]);
        assert_eq!(p.with_free_vector(&v), p);
        assert_eq!(p.free_names()[7], "w3");
    }
}
