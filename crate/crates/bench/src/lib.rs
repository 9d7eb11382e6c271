//! Fixtures shared by the benchmarks.

use cgdm_core::{simulate, stream_rng, Flow, ModelParameters, TimeSeries};

/// The trained-value model used for forecasting benchmarks.
pub fn reference_params() -> ModelParameters {
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

/// A noisy series of `len` years drawn from [`reference_params`].
pub fn reference_series(len: usize) -> TimeSeries {
    let values = simulate(&reference_params(), len, Some(&mut stream_rng(1, 0))).expect("valid parameters");
    TimeSeries::new(2000, values, Flow::Combined).expect("finite values")
}
