//! Analytic-versus-finite-difference gradient verification on random problems.

use rand::Rng;

use crate::error::Result;
use crate::fitting::{fd_gradient, grad_mse};
use crate::model::{simulate, stream_rng, Flow, LagPolicy, ModelParameters, TimeSeries};

/// Relative error bound for a passing check.
pub const REL_TOLERANCE: f64 = 1e-5;
/// Absolute differences below this always pass.
pub const ABS_FLOOR: f64 = 1e-8;
/// Finite-difference step scale.
pub const FD_STEP: f64 = 1e-6;
/// Length of every generated series (time indices 1..=20).
pub const SERIES_LEN: usize = 20;
pub const AR_ORDER: usize = 3;

/// `|a - b| / max(|a|, |b|)`, or 0 when `|a - b| <= floor`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    let diff = (a - b).abs();
    if diff <= floor {
        0.0
    } else {
        diff / a.abs().max(b.abs())
    }
}

/// A random fitting problem: parameters plus a noisy series drawn from a
/// nearby model, so residuals are of ordinary size.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R) -> (ModelParameters, TimeSeries, LagPolicy) {
    let params = ModelParameters {
        capacity: rng.random_range(50.0..150.0),
        growth_rate: rng.random_range(0.2..1.2),
        midpoint: rng.random_range(2.0..18.0),
        scale: rng.random_range(1.0..50.0),
        exponent: rng.random_range(0.0..1.0),
        ar_weights: (0..AR_ORDER).map(|_| rng.random_range(-0.4..0.4)).collect(),
        noise_sigma: rng.random_range(1.0..10.0),
    };
    let mut source = params.clone();
    source.capacity *= rng.random_range(0.9..1.1);
    source.midpoint += rng.random_range(-1.0..1.0);
    source.scale *= rng.random_range(0.9..1.1);
    let values = simulate(&source, SERIES_LEN, Some(rng)).expect("valid parameters");
    let series = TimeSeries::new(2000, values, Flow::Combined).expect("finite values");
    let policy = if rng.random_bool(0.5) {
        LagPolicy::Strict
    } else {
        LagPolicy::ZeroPad
    };
    (params, series, policy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Analytic and finite-difference values at the worst instance.
    pub worst: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub instances: usize,
    pub seed: u64,
    pub rows: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() <= REL_TOLERANCE
    }

    /// Plain-text table, one row per parameter.
    pub fn table(&self) -> String {
        let mut out = format!(
            "gradient check: {} instances, seed {}, tolerance {:e}\n{:<8} {:>14} {:>22} {:>22}\n",
            self.instances, self.seed, REL_TOLERANCE, "param", "max_rel_err", "analytic", "finite_diff"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<8} {:>14.3e} {:>22.12e} {:>22.12e}\n",
                r.name, r.max_rel_error, r.worst.0, r.worst.1
            ));
        }
        out.push_str(&format!(
            "overall max relative error {:.3e}: {}\n",
            self.max_rel_error(),
            if self.passed() { "PASS" } else { "FAIL" }
        ));
        out
    }
}

/// Compares [`grad_mse`] with [`fd_gradient`] on `instances` random problems.
pub fn gradcheck(instances: usize, seed: u64) -> Result<GradCheckReport> {
    gradcheck_with(instances, seed, grad_mse)
}

/// Like [`gradcheck`] but with the analytic gradient supplied by the caller.
pub fn gradcheck_with<F>(instances: usize, seed: u64, analytic: F) -> Result<GradCheckReport>
where
    F: Fn(&ModelParameters, &TimeSeries, LagPolicy) -> Result<Vec<f64>>,
{
    let mut rng = stream_rng(seed, 0);
    let mut rows: Vec<ParamCheck> = Vec::new();
    for _ in 0..instances {
        let (params, series, policy) = random_instance(&mut rng);
        let first = rows.is_empty();
        if first {
            rows = params
                .free_names()
                .into_iter()
                .map(|name| ParamCheck {
                    name,
                    max_rel_error: 0.0,
                    worst: (0.0, 0.0),
                })
                .collect();
        }
        let a = analytic(&params, &series, policy)?;
        let f = fd_gradient(&params, &series, policy, FD_STEP)?;
        for (row, (&ga, &gf)) in rows.iter_mut().zip(a.iter().zip(&f)) {
            let err = relative_error(ga, gf, ABS_FLOOR);
            if first || err > row.max_rel_error || err.is_nan() {
                row.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
                row.worst = (ga, gf);
            }
        }
    }
    Ok(GradCheckReport { instances, seed, rows })
}
