//! Cone sampling through the public API.

use lgf_lab::cone::{conditioned_driver, hitting_sigma, probe_samples, ConeEngine, ConeError, ConeSetup};
use lgf_lab::sphavg::{Method, RadialSample};
use lgf_lab::stats::mean;
use lgf_lab::stochastic::RngSeed;

fn setup(d: u32) -> ConeSetup {
    ConeSetup { d, q_minus_beta: 2.0, beta: 0.5, window: (-1.0, 1.0), h: 0.01 }
}

#[test]
fn recentred_trajectory_starts_at_zero_and_sits_on_the_line() {
    for d in [2, 4] {
        let engine = ConeEngine::new(setup(d)).unwrap();
        let c = engine.cone_sample(5.0, RngSeed::new(1, d as u64)).unwrap();
        let t = &c.trajectory;
        let zero = t.times.iter().position(|&s| s == 0.0).unwrap();
        assert_eq!(t.s_values[zero], 0.0);
        assert_eq!(t.times.len(), 201);
        assert!(c.sigma_b > 0.0);
        assert_eq!(t.deriv_values.len(), if d == 2 { 0 } else { 1 });
    }
}

#[test]
fn same_seed_same_sample() {
    let engine = ConeEngine::new(setup(4)).unwrap();
    let a = engine.cone_sample(3.0, RngSeed::new(7, 0)).unwrap();
    let b = engine.cone_sample(3.0, RngSeed::new(7, 0)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn hitting_time_of_a_deterministic_line() {
    // S ≡ 0 crosses S − 2t = −3 at t = 1.5.
    let times: Vec<f64> = (0..=400).map(|k| k as f64 * 0.01).collect();
    let s = RadialSample { s_values: vec![0.0; times.len()], times, deriv_values: vec![], method: Method::Brownian, truncation_bound: None };
    assert!((hitting_sigma(&s, 2.0, 3.0).unwrap() - 1.5).abs() < 1e-9);
    assert!(matches!(hitting_sigma(&s, 2.0, 30.0), Err(ConeError::NoCrossing { .. })));
    assert!(matches!(hitting_sigma(&s, -1.0, 3.0), Err(ConeError::Drift(_))));
}

#[test]
fn odd_dimensions_and_bad_windows_are_rejected() {
    assert!(matches!(ConeEngine::new(ConeSetup { d: 5, ..setup(4) }), Err(ConeError::Dimension(5))));
    assert!(matches!(ConeEngine::new(ConeSetup { window: (0.5, 1.0), ..setup(4) }), Err(ConeError::Window(..))));
}

#[test]
fn forward_increments_of_the_d2_cone_are_brownian() {
    let engine = ConeEngine::new(setup(2)).unwrap();
    let rows = probe_samples(&engine, 5.0, &[1.0], 2000, RngSeed::new(3, 0)).unwrap();
    let x: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let m = mean(&x);
    let v = x.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
    assert!(m.abs() < 4.0 / (x.len() as f64).sqrt(), "mean {m}");
    assert!((v - 1.0).abs() < 0.15, "variance {v}");
}

#[test]
fn conditioned_driver_stays_above_the_line_in_the_past() {
    let p = conditioned_driver(2.0, 1.0, 1.0, 0.01, RngSeed::new(5, 0)).unwrap();
    assert_eq!(p.times[p.origin_index], 0.0);
    for (t, v) in p.times.iter().zip(&p.values) {
        if *t < 0.0 {
            assert!(*v > 2.0 * t, "B({t}) = {v}");
        }
    }
}
