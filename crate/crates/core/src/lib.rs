//! Additive growth-dynamics forecasting model.
//!
//! A series is modelled as the sum of a logistic trend, a power-law term, an
//! autoregressive term over earlier values, and Gaussian noise. The crate
//! evaluates the model, fits it by gradient descent on the one-step mean
//! squared error, and produces recursive forecasts with Monte Carlo bands.

pub mod data;
pub mod document;
pub mod error;
pub mod fitting;
pub mod forecast;
pub mod gradcheck;
pub mod model;

pub use data::{parse_csv, to_time_series, write_csv, Dataset, FillPolicy, Record};
pub use document::{DataInfo, FitInfo, ParameterDocument};
pub use error::{Error, Result};
pub use fitting::{detect_outliers, fd_gradient, fit, grad_mse, init_params, mse, FitConfig, FitReport};
pub use forecast::{find_extrema, forecast_mc, forecast_mean, simulate_paths, Extrema, Forecast, QuantileBand};
pub use model::{
    eval_ar, eval_logistic, eval_power_law, predict_point, predict_series, sample_noise, simulate, stream_rng, Flow,
    LagPolicy, ModelParameters, NoiseRng, TimeSeries,
};
