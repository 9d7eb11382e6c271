//! Property suites over random parameter draws.

use cgdm_core::{
    eval_ar, eval_logistic, eval_power_law, find_extrema, forecast_mean, mse, simulate, Flow, LagPolicy,
    ModelParameters, NoiseRng, TimeSeries,
};
use proptest::prelude::*;
use proptest::test_runner::Config;

fn curve() -> impl Strategy<Value = ModelParameters> {
    (1.0..500.0f64, 0.01..3.0f64, -20.0..40.0f64, -50.0..50.0f64, -2.0..2.0f64).prop_map(|(c, k, m, a, b)| {
        ModelParameters {
            capacity: c,
            growth_rate: k,
            midpoint: m,
            scale: a,
            exponent: b,
            ar_weights: vec![0.0],
            noise_sigma: 10.0,
        }
    })
}

fn with_ar(p: &ModelParameters, w: Vec<f64>) -> ModelParameters {
    ModelParameters { ar_weights: w, ..p.clone() }
}

proptest! {
    #![proptest_config(Config::with_cases(1000))]

    #[test]
    fn logistic_is_half_capacity_at_midpoint(p in curve()) {
        let v = eval_logistic(&p, p.midpoint);
        prop_assert!((v - p.capacity / 2.0).abs() <= 1e-12 * p.capacity);
    }

    #[test]
    fn logistic_is_symmetric_about_midpoint(p in curve(), d in 0.0..30.0f64) {
        let sum = eval_logistic(&p, p.midpoint + d) + eval_logistic(&p, p.midpoint - d);
        prop_assert!((sum - p.capacity).abs() <= 1e-12 * p.capacity);
    }

    #[test]
    fn logistic_is_monotone_and_bounded(p in curve(), t1 in -50.0..80.0f64, dt in 0.0..50.0f64) {
        let (a, b) = (eval_logistic(&p, t1), eval_logistic(&p, t1 + dt));
        prop_assert!(a <= b);
        prop_assert!((0.0..=p.capacity).contains(&a) && (0.0..=p.capacity).contains(&b));
    }

    #[test]
    fn power_law_anchors(p in curve(), t in 0.01..100.0f64) {
        prop_assert_eq!(eval_power_law(&p, 1.0).unwrap(), p.scale);
        let flat = ModelParameters { exponent: 0.0, ..p.clone() };
        prop_assert_eq!(eval_power_law(&flat, t).unwrap(), p.scale);
        let linear = ModelParameters { exponent: 1.0, ..p.clone() };
        prop_assert!((eval_power_law(&linear, t).unwrap() - p.scale * t).abs() <= 1e-12 * (p.scale * t).abs().max(1.0));
    }

    #[test]
    fn ar_term_is_linear(
        p in curve(),
        w1 in prop::collection::vec(-1.0..1.0f64, 3),
        w2 in prop::collection::vec(-1.0..1.0f64, 3),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        history in prop::collection::vec(0.0..500.0f64, 6),
    ) {
        let combo: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| a * x + b * y).collect();
        let ar = |w: &[f64]| eval_ar(&with_ar(&p, w.to_vec()), &history, 7, LagPolicy::Strict).unwrap();
        let lhs = ar(&combo);
        let rhs = a * ar(&w1) + b * ar(&w2);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));

        let doubled: Vec<f64> = history.iter().map(|h| 2.0 * h).collect();
        let q = with_ar(&p, w1.clone());
        let twice = eval_ar(&q, &doubled, 7, LagPolicy::Strict).unwrap();
        prop_assert!((twice - 2.0 * ar(&w1)).abs() <= 1e-9 * (1.0 + twice.abs()));
    }

    #[test]
    fn mse_is_non_negative(
        p in curve(),
        w in prop::collection::vec(-0.5..0.5f64, 1..4),
        values in prop::collection::vec(0.0..1000.0f64, 5..30),
        zero_pad in any::<bool>(),
    ) {
        let params = with_ar(&p, w);
        let series = TimeSeries::new(1990, values, Flow::Combined).unwrap();
        let policy = if zero_pad { LagPolicy::ZeroPad } else { LagPolicy::Strict };
        prop_assert!(mse(&params, &series, policy).unwrap() >= 0.0);
    }
}

proptest! {
    #![proptest_config(Config::with_cases(200))]

    #[test]
    fn forecast_prefix_is_consistent(
        p in curve(),
        w in prop::collection::vec(-0.4..0.4f64, 3),
        values in prop::collection::vec(50.0..300.0f64, 9),
        h1 in 1usize..8,
        h2 in 1usize..8,
    ) {
        let params = with_ar(&p, w);
        let series = TimeSeries::new(2015, values.clone(), Flow::Import).unwrap();
        let long = forecast_mean(&params, &series, h1 + h2, LagPolicy::Strict).unwrap();
        let short = forecast_mean(&params, &series, h1, LagPolicy::Strict).unwrap();
        prop_assert_eq!(&long[..h1], &short[..]);

        let mut extended = values;
        extended.extend_from_slice(&short);
        let rest = TimeSeries::new(2015, extended, Flow::Import).unwrap();
        prop_assert_eq!(&long[h1..], &forecast_mean(&params, &rest, h2, LagPolicy::Strict).unwrap()[..]);
    }

    #[test]
    fn extrema_agree_with_a_scan(path in prop::collection::vec(-100.0..100.0f64, 1..20), year in 1900i32..2100) {
        let e = find_extrema(&path, year).unwrap();
        let lo = path.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = path.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(e.min_value, lo);
        prop_assert_eq!(e.max_value, hi);
        prop_assert_eq!(e.min_year, year + path.iter().position(|&v| v == lo).unwrap() as i32);
        prop_assert_eq!(e.max_year, year + path.iter().position(|&v| v == hi).unwrap() as i32);
    }

    #[test]
    fn noise_free_simulation_has_zero_loss(p in curve(), w in prop::collection::vec(-0.4..0.4f64, 1..4), n in 5usize..40) {
        let params = with_ar(&p, w);
        let values = simulate::<NoiseRng>(&params, n, None).unwrap();
        let series = TimeSeries::new(2000, values, Flow::Combined).unwrap();
        prop_assert_eq!(mse(&params, &series, LagPolicy::ZeroPad).unwrap(), 0.0);
        if n > params.ar_order() {
            prop_assert_eq!(mse(&params, &series, LagPolicy::Strict).unwrap(), 0.0);
        }
    }
}
