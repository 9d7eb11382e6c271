//! Mean-squared-error loss, its analytic gradient, and gradient-descent fitting.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{fittable_start, sigmoid, LagPolicy, ModelParameters, TimeSeries, N_CURVE_PARAMS};

/// Smallest fraction of the base step tried by backtracking (2^-30).
pub const STEP_FLOOR_FRACTION: f64 = 1.0 / (1u64 << 30) as f64;

/// Growth of the step length after an accepted step when the two-point
/// estimate is unavailable.
pub const STEP_GROWTH: f64 = 1.1;

/// Relative damping added to the curvature diagonal of the adaptive
/// preconditioner, so coordinates with vanishing sensitivity keep a bounded
/// step.
pub const CURVATURE_DAMPING: f64 = 1e-6;

/// Fixed diagonal preconditioner for `(C, k, m, alpha, beta)`, sized for
/// parameters of magnitude around `(100, 1, 1, 10, 1e-2)`.
pub const FIXED_CURVE_SCALE: [f64; N_CURVE_PARAMS] = [10.0, 0.1, 1.0, 1.0, 0.01];
/// Fixed preconditioner entry for every AR weight.
pub const FIXED_AR_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Base step size.
    pub learning_rate: f64,
    /// Diagonal preconditioner, one entry per free coordinate. `None`
    /// rescales every step by the inverse Gauss-Newton curvature diagonal.
    pub per_param_scale: Option<Vec<f64>>,
    pub max_iterations: usize,
    /// Stop once `|delta mse| / max(mse, 1)` drops below this.
    pub tolerance: f64,
    /// Halve the step whenever it would increase the loss, and size each new
    /// step from the previous move. Off: fixed steps of `learning_rate`.
    pub backtracking: bool,
    /// Seed for the random AR initialisation.
    pub rng_seed: u64,
    /// Residual threshold, in multiples of the residual scale, for the
    /// optional exclusion-and-refit pass.
    pub outlier_sigma: Option<f64>,
    pub lag_policy: LagPolicy,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            learning_rate: 1e-3,
            per_param_scale: None,
            max_iterations: 200_000,
            tolerance: 1e-10,
            backtracking: true,
            rng_seed: 0,
            outlier_sigma: None,
            lag_policy: LagPolicy::Strict,
        }
    }
}

impl FitConfig {
    pub fn validate(&self, n_free: usize) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        if let Some(scale) = &self.per_param_scale {
            if scale.len() != n_free {
                return Err(Error::InvalidConfig(format!(
                    "per_param_scale has {} entries, expected {n_free}",
                    scale.len()
                )));
            }
            if scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Error::InvalidConfig("per_param_scale entries must be positive".into()));
            }
        }
        if let Some(k) = self.outlier_sigma {
            if !(k > 0.0) {
                return Err(Error::InvalidConfig(format!("outlier_sigma must be positive, got {k}")));
            }
        }
        Ok(())
    }
}

/// The fixed preconditioner for AR order `p`.
pub fn fixed_scale(p: usize) -> Vec<f64> {
    let mut s = FIXED_CURVE_SCALE.to_vec();
    s.extend(std::iter::repeat_n(FIXED_AR_SCALE, p));
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: ModelParameters,
    /// Loss after every accepted step, starting with the loss at the initial
    /// point. When an exclusion pass ran, this is the trace of the refit.
    pub loss_trace: Vec<f64>,
    pub final_mse: f64,
    /// `sqrt(final_mse)`.
    pub residual_sigma_hat: f64,
    /// Loss at the end of the first stage, when an exclusion pass ran.
    pub pre_exclusion_mse: Option<f64>,
    /// Time indices removed from the loss as outliers.
    pub excluded_indices: Vec<usize>,
    pub iterations_used: usize,
    pub converged: bool,
}

/// The loss restricted to the fittable, non-excluded points of a series.
struct Objective<'a> {
    values: &'a [f64],
    points: Vec<usize>,
}

impl<'a> Objective<'a> {
    fn new(order: usize, series: &'a TimeSeries, policy: LagPolicy, excluded: &[usize]) -> Result<Self> {
        let first = fittable_start(order, series.len(), policy)?;
        let points: Vec<usize> = (first..=series.len()).filter(|t| !excluded.contains(t)).collect();
        if points.is_empty() {
            return Err(Error::InsufficientHistory {
                needed: first,
                available: series.len() - excluded.len(),
            });
        }
        Ok(Objective {
            values: series.values(),
            points,
        })
    }

    fn residual(&self, params: &ModelParameters, t: usize) -> f64 {
        self.values[t - 1] - crate::model::predict_unchecked(params, t, self.values)
    }

    fn loss(&self, params: &ModelParameters) -> f64 {
        let sse: f64 = self
            .points
            .iter()
            .map(|&t| {
                let r = self.residual(params, t);
                r * r
            })
            .sum();
        sse / self.points.len() as f64
    }

    /// Partial derivatives of the prediction at `t` with respect to the
    /// free coordinates, written into `out`.
    fn prediction_partials(&self, params: &ModelParameters, t: usize, out: &mut [f64]) {
        let tf = t as f64;
        let s = sigmoid(params.growth_rate * (tf - params.midpoint));
        let ds = s * (1.0 - s);
        let tb = tf.powf(params.exponent);
        out[0] = s;
        out[1] = params.capacity * (tf - params.midpoint) * ds;
        out[2] = -params.capacity * params.growth_rate * ds;
        out[3] = tb;
        out[4] = params.scale * tb * tf.ln();
        for i in 1..=params.ar_order() {
            out[N_CURVE_PARAMS + i - 1] = match t.checked_sub(i) {
                Some(lag) if lag >= 1 => self.values[lag - 1],
                _ => 0.0,
            };
        }
    }

    fn gradient(&self, params: &ModelParameters) -> Vec<f64> {
        let n = params.n_free();
        let mut grad = vec![0.0; n];
        let mut partials = vec![0.0; n];
        for &t in &self.points {
            let r = self.residual(params, t);
            self.prediction_partials(params, t, &mut partials);
            for (g, d) in grad.iter_mut().zip(&partials) {
                *g += r * d;
            }
        }
        let factor = -2.0 / self.points.len() as f64;
        for g in &mut grad {
            *g *= factor;
        }
        grad
    }

    /// Inverse of the damped Gauss-Newton curvature diagonal,
    /// `1 / (2 mean(d_j^2) + mu)`, where `mu` is [`CURVATURE_DAMPING`]
    /// times the mean diagonal entry.
    fn jacobi_scale(&self, params: &ModelParameters) -> Vec<f64> {
        let n = params.n_free();
        let mut diag = vec![0.0; n];
        let mut partials = vec![0.0; n];
        for &t in &self.points {
            self.prediction_partials(params, t, &mut partials);
            for (acc, d) in diag.iter_mut().zip(&partials) {
                *acc += d * d;
            }
        }
        let count = self.points.len() as f64;
        for d in &mut diag {
            *d *= 2.0 / count;
        }
        let mean = diag.iter().sum::<f64>() / n as f64;
        let damping = if mean > 0.0 && mean.is_finite() {
            CURVATURE_DAMPING * mean
        } else {
            1.0
        };
        diag.iter().map(|d| 1.0 / (d + damping)).collect()
    }
}

/// Mean of squared one-step residuals over the fittable points of `series`.
pub fn mse(params: &ModelParameters, series: &TimeSeries, lag_policy: LagPolicy) -> Result<f64> {
    params.validate()?;
    Ok(Objective::new(params.ar_order(), series, lag_policy, &[])?.loss(params))
}

/// Analytic gradient of [`mse`] over `(C, k, m, alpha, beta, w_1..w_p)`.
pub fn grad_mse(params: &ModelParameters, series: &TimeSeries, lag_policy: LagPolicy) -> Result<Vec<f64>> {
    params.validate()?;
    Ok(Objective::new(params.ar_order(), series, lag_policy, &[])?.gradient(params))
}

/// Central finite-difference approximation of [`grad_mse`], with step
/// `h_scale * max(1, |theta_j|)` on coordinate `j`.
pub fn fd_gradient(
    params: &ModelParameters,
    series: &TimeSeries,
    lag_policy: LagPolicy,
    h_scale: f64,
) -> Result<Vec<f64>> {
    params.validate()?;
    let objective = Objective::new(params.ar_order(), series, lag_policy, &[])?;
    let theta = params.free_vector();
    let mut probe = theta.clone();
    let mut grad = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        let h = h_scale * theta[j].abs().max(1.0);
        probe[j] = theta[j] + h;
        let up = objective.loss(&params.with_free_vector(&probe));
        probe[j] = theta[j] - h;
        let down = objective.loss(&params.with_free_vector(&probe));
        probe[j] = theta[j];
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Starting point: fixed curve values `C = 100, k = 0.1, m = 2, alpha = 1,
/// beta = 1, sigma = 10` and `p` AR weights drawn uniformly from
/// `[-0.5, 0.5]` with `config.rng_seed`.
pub fn init_params(config: &FitConfig, p: usize) -> Result<ModelParameters> {
    if p == 0 {
        return Err(Error::InvalidConfig("AR order must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    Ok(ModelParameters {
        capacity: 100.0,
        growth_rate: 0.1,
        midpoint: 2.0,
        scale: 1.0,
        exponent: 1.0,
        ar_weights: (0..p).map(|_| rng.random_range(-0.5..=0.5)).collect(),
        noise_sigma: 10.0,
    })
}

/// Time indices of fittable points whose residual exceeds
/// `k_sigma * sqrt(mse)`.
pub fn detect_outliers(
    series: &TimeSeries,
    params: &ModelParameters,
    k_sigma: f64,
    lag_policy: LagPolicy,
) -> Result<Vec<usize>> {
    if !(k_sigma > 0.0) {
        return Err(Error::InvalidConfig(format!("k_sigma must be positive, got {k_sigma}")));
    }
    params.validate()?;
    let objective = Objective::new(params.ar_order(), series, lag_policy, &[])?;
    Ok(outliers_of(&objective, params, k_sigma))
}

fn outliers_of(objective: &Objective<'_>, params: &ModelParameters, k_sigma: f64) -> Vec<usize> {
    let threshold = k_sigma * objective.loss(params).sqrt();
    objective
        .points
        .iter()
        .copied()
        .filter(|&t| objective.residual(params, t).abs() > threshold)
        .collect()
}

struct Descent {
    params: ModelParameters,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Preconditioned gradient descent from `start`.
///
/// Without backtracking every step is `theta -= lr * D * grad`. With
/// backtracking the step length of each iteration starts from the
/// two-point (Barzilai-Borwein) estimate `s'y / y'Dy` of the previous move
/// and is halved until the loss does not increase, down to `lr * 2^-30`.
fn descend(
    objective: &Objective<'_>,
    start: ModelParameters,
    config: &FitConfig,
    fixed_scale: Option<&[f64]>,
) -> Result<Descent> {
    let mut theta = start.free_vector();
    let mut params = start;
    let mut loss = objective.loss(&params);
    if !loss.is_finite() {
        return Err(Error::Diverged { iteration: 0 });
    }
    let mut trace = vec![loss];
    let floor = config.learning_rate * STEP_FLOOR_FRACTION;
    let ceiling = config.learning_rate / STEP_FLOOR_FRACTION;
    let mut step = config.learning_rate;
    let mut iterations = 0;
    let mut converged = loss == 0.0;
    let mut candidate = theta.clone();
    let mut grad = objective.gradient(&params);

    while !converged && iterations < config.max_iterations {
        if grad.iter().all(|g| *g == 0.0) {
            converged = true;
            break;
        }
        let scale = match fixed_scale {
            Some(s) => s.to_vec(),
            None => objective.jacobi_scale(&params),
        };
        let mut trial = step;
        let accepted = loop {
            for j in 0..theta.len() {
                candidate[j] = theta[j] - trial * scale[j] * grad[j];
            }
            let next = params.with_free_vector(&candidate);
            let next_loss = objective.loss(&next);
            if !config.backtracking {
                if !next_loss.is_finite() {
                    return Err(Error::Diverged { iteration: iterations + 1 });
                }
                break Some((next, next_loss));
            }
            if next_loss.is_finite() && next_loss <= loss {
                break Some((next, next_loss));
            }
            trial *= 0.5;
            if trial < floor {
                break None;
            }
        };
        let Some((next, next_loss)) = accepted else {
            // no descent along the scaled gradient down to the step floor
            converged = true;
            break;
        };
        let next_grad = objective.gradient(&next);
        if config.backtracking {
            step = spectral_step(&theta, &candidate, &grad, &next_grad, &scale)
                .unwrap_or(trial * STEP_GROWTH)
                .clamp(floor, ceiling);
        }
        iterations += 1;
        let change = (loss - next_loss).abs() / next_loss.max(1.0);
        theta.copy_from_slice(&candidate);
        params = next;
        loss = next_loss;
        grad = next_grad;
        trace.push(loss);
        if change < config.tolerance || loss == 0.0 {
            converged = true;
        }
    }
    Ok(Descent {
        params,
        trace,
        iterations,
        converged,
    })
}

/// Two-point step length `s'y / y'Dy` in the metric of the preconditioner,
/// or `None` when the curvature along the last move is not positive.
fn spectral_step(theta: &[f64], next: &[f64], grad: &[f64], next_grad: &[f64], scale: &[f64]) -> Option<f64> {
    let (mut sy, mut yy) = (0.0, 0.0);
    for j in 0..theta.len() {
        let s = next[j] - theta[j];
        let y = next_grad[j] - grad[j];
        sy += s * y;
        yy += y * y * scale[j];
    }
    (sy > 0.0 && yy > 0.0 && (sy / yy).is_finite()).then(|| sy / yy)
}

/// Fits the free parameters of the model to `series` by preconditioned
/// gradient descent on [`mse`].
///
/// Starts from `initial`, or from [`init_params`] with AR order 3 when none
/// is given. The noise scale is carried through unchanged. With
/// `config.outlier_sigma = Some(k)`, points whose residual at the first
/// optimum exceeds `k` residual scales are dropped from the loss and the fit
/// is restarted once from that optimum.
pub fn fit(series: &TimeSeries, config: &FitConfig, initial: Option<ModelParameters>) -> Result<FitReport> {
    let start = match initial {
        Some(p) => p,
        None => init_params(config, 3)?,
    };
    start.validate()?;
    config.validate(start.n_free())?;
    let scale = config.per_param_scale.as_deref();

    let objective = Objective::new(start.ar_order(), series, config.lag_policy, &[])?;
    let mut run = descend(&objective, start, config, scale)?;
    let mut excluded = Vec::new();
    let mut pre_exclusion_mse = None;

    if let Some(k_sigma) = config.outlier_sigma {
        let outliers = outliers_of(&objective, &run.params, k_sigma);
        if !outliers.is_empty() {
            let reduced = Objective::new(run.params.ar_order(), series, config.lag_policy, &outliers)?;
            pre_exclusion_mse = run.trace.last().copied();
            let first_iterations = run.iterations;
            run = descend(&reduced, run.params, config, scale)?;
            run.iterations += first_iterations;
            excluded = outliers;
        }
    }

    let final_mse = *run.trace.last().expect("trace holds the initial loss");
    Ok(FitReport {
        params: run.params,
        final_mse,
        residual_sigma_hat: final_mse.sqrt(),
        loss_trace: run.trace,
        pre_exclusion_mse,
        excluded_indices: excluded,
        iterations_used: run.iterations,
        converged: run.converged,
    })
}
