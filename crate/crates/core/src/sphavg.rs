//! The spherical-average process `S_t = h_{e^{−t}} − h_1`: analytic kernels,
//! the integral-representation and Langevin simulators, the derivative
//! autocovariance, the power spectrum and the two trigonometric identities.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::fftnd::convolve;
use crate::langevin::{companion_system, sample_stationary, ExactStepper, LangevinError};
use crate::params::{c_of_d, gamma_half, ParamError};
use crate::quad::{integrate, integrate_to_inf, QuadError, QuadOpts};
use crate::stochastic::{sample_two_sided, uniform_grid, Path, RngSeed, StochasticError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SphError {
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Langevin(#[from] LangevinError),
    #[error(transparent)]
    Stochastic(#[from] StochasticError),
    #[error("d = {0}: this operation needs an even dimension >= 4")]
    Dimension(u32),
    #[error("radii must be positive, got ({0}, {1})")]
    Radius(f64, f64),
    #[error("grid must be uniform with at least two points")]
    Grid,
    #[error("driving path must cover [{need_lo}, {need_hi}] on the output step, covers [{lo}, {hi}]")]
    Coverage { need_lo: f64, need_hi: f64, lo: f64, hi: f64 },
}

/// Which simulator produced a [`RadialSample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Representation,
    Sde,
    Brownian,
}

/// Sampled `S_t` with derivative columns `S^{(1)} … S^{(c_d)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialSample {
    pub times: Vec<f64>,
    pub s_values: Vec<f64>,
    /// `deriv_values[i][j]` is `S^{(i+1)}` at `times[j]`.
    pub deriv_values: Vec<Vec<f64>>,
    pub method: Method,
    /// `e^{−2T_cut}(d−2)/2 · sup|B|` for the representation method.
    pub truncation_bound: Option<f64>,
}

impl RadialSample {
    pub fn s_at(&self, t: f64) -> f64 {
        crate::stochastic::interp(&self.times, &self.s_values, t)
    }
}

fn quad_opts() -> QuadOpts {
    QuadOpts { abs_tol: 1e-12, rel_tol: 1e-13, max_intervals: 4000 }
}

fn check_even(d: u32) -> Result<u32, SphError> {
    if d < 4 || d % 2 == 1 {
        return Err(SphError::Dimension(d));
    }
    Ok((d - 2) / 2)
}

/// `−c(d) ∫₀^π log(r1² + r2² − 2 r1 r2 cosθ) sin^{d−2}θ dθ`.
pub fn kernel_diag(r1: f64, r2: f64, d: u32) -> Result<f64, SphError> {
    if !(r1 > 0.0 && r2 > 0.0) {
        return Err(SphError::Radius(r1, r2));
    }
    let c = c_of_d(d)?;
    let (dr, pr) = ((r1 - r2) * (r1 - r2), 4.0 * r1 * r2);
    let k = (d - 2) as i32;
    let v = integrate(|t| (dr + pr * (t / 2.0).sin().powi(2)).ln() * t.sin().powi(k), 0.0, PI, quad_opts())?;
    Ok(-c * v)
}

/// `Var(S_t) = |t| + 2c(d) ∫₀^π log((1 + e^{−2|t|} − 2e^{−|t|}cosθ)/(2 − 2cosθ)) sin^{d−2}θ dθ`.
pub fn variance_increment(t: f64, d: u32) -> Result<f64, SphError> {
    let c = c_of_d(d)?;
    let a = t.abs();
    if a == 0.0 {
        return Ok(0.0);
    }
    let q = (-a).exp();
    let k = (d - 2) as i32;
    let v = integrate(
        |th| {
            let s2 = (th / 2.0).sin().powi(2);
            let num = (1.0 - q) * (1.0 - q) + 4.0 * q * s2;
            (num / (4.0 * s2)).ln() * th.sin().powi(k)
        },
        0.0,
        PI,
        quad_opts(),
    )?;
    Ok(a + 2.0 * c * v)
}

/// `g^{(i)}(s)` for `g(s) = (d−2)e^{2s}(1−e^{2s})^{(d−4)/2}`, via the binomial
/// expansion `g = (d−2) Σ_j C(m,j)(−1)^j e^{2(j+1)s}`.
pub fn g_deriv(i: u32, s: f64, d: u32) -> f64 {
    let m = (d - 4) / 2;
    let mut binom = 1.0;
    let mut total = 0.0;
    for j in 0..=m {
        let rate = 2.0 * (j + 1) as f64;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * binom * rate.powi(i as i32) * (rate * s).exp();
        binom = binom * (m - j) as f64 / (j + 1) as f64;
    }
    (d - 2) as f64 * total
}

fn uniform_step(grid: &[f64]) -> Result<f64, SphError> {
    if grid.len() < 2 {
        return Err(SphError::Grid);
    }
    let h = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    if !(h > 0.0) || grid.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
        return Err(SphError::Grid);
    }
    Ok(h)
}

/// Truncated integral representation driven by a given path `B` on a uniform
/// grid. `S_t = Σ_j w_j g(s_j)(B_{s_j+t} − B_{s_j})` (trapezoid on the driver's
/// own grid) and `S^{(i)}_t = (−1)^i Σ_j w_j g^{(i)}(s_j)(B_{s_j+t} − B_t)`; the
/// latter equals `(−1)^i ∫ g^{(i)} B_{s+t} ds` plus, for `i = c_d`, the boundary
/// term `(−1)^{c_d+1} g^{(c_d−1)}(0) B_t`.
pub fn repr_from_driver(driver: &Path, out_grid: &[f64], d: u32, cutoff: f64) -> Result<RadialSample, SphError> {
    let c_d = check_even(d)?;
    let h = uniform_step(&driver.times)?;
    let (lo, hi) = (driver.times[0], driver.times[driver.len() - 1]);
    let j_max = (cutoff / h).round() as usize;
    let need_lo = out_grid[0] - j_max as f64 * h;
    let need_hi = out_grid[out_grid.len() - 1];
    if need_lo < lo - 1e-9 * h || need_hi > hi + 1e-9 * h {
        return Err(SphError::Coverage { need_lo, need_hi, lo, hi });
    }
    let index_of = |t: f64| -> Result<usize, SphError> {
        let x = (t - lo) / h;
        let i = x.round();
        if (x - i).abs() > 1e-6 {
            return Err(SphError::Grid);
        }
        Ok(i as usize)
    };
    let out_idx = out_grid.iter().map(|&t| index_of(t)).collect::<Result<Vec<_>, _>>()?;
    let b = &driver.values;
    let i_first = out_idx[0];
    let i_last = out_idx[out_idx.len() - 1];
    // Driver window needed: [i_first − j_max, i_last].
    let base = i_first - j_max;
    let window = &b[base..=i_last];
    let mut outputs = Vec::with_capacity(c_d as usize + 1);
    for order in 0..=c_d {
        // Kernel k[j] = w_j g^{(order)}(−j h), j = 0..=j_max.
        let kern: Vec<f64> = (0..=j_max)
            .map(|j| {
                let w = if j == 0 || j == j_max { 0.5 * h } else { h };
                w * g_deriv(order, -(j as f64) * h, d)
            })
            .collect();
        let ksum: f64 = kern.iter().sum();
        let conv = convolve(window, &kern);
        // conv[m] = Σ_j kern[j] window[m − j]; time index i ↔ m = i − base.
        let g_at = |i: usize| conv[i - base];
        let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
        let vals: Vec<f64> = if order == 0 {
            let g0 = g_at(i_first.max(base + j_max));
            let origin = index_of(0.0).ok().filter(|&i| i >= base + j_max && i <= i_last);
            let reference = origin.map(g_at).unwrap_or(g0);
            out_idx.iter().map(|&i| g_at(i) - reference).collect()
        } else {
            out_idx.iter().map(|&i| sign * (g_at(i) - ksum * b[i])).collect()
        };
        outputs.push(vals);
    }
    let s_values = outputs.remove(0);
    let sup_b = window.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(RadialSample {
        times: out_grid.to_vec(),
        s_values,
        deriv_values: outputs,
        method: Method::Representation,
        truncation_bound: Some((-2.0 * cutoff).exp() * (d - 2) as f64 / 2.0 * sup_b),
    })
}

/// Default truncation depth of the representation integral.
pub const DEFAULT_CUTOFF: f64 = 15.0;

fn driver_grid(grid: &[f64], h: f64, cutoff: f64) -> Vec<f64> {
    let k_lo = (grid[0] / h).round() as i64 - (cutoff / h).round() as i64;
    let k_hi = (grid[grid.len() - 1] / h).round() as i64;
    let mut g: Vec<f64> = (k_lo..=k_hi).map(|k| k as f64 * h).collect();
    if k_lo > 0 {
        g.insert(0, 0.0);
    }
    if k_hi < 0 {
        g.push(0.0);
    }
    g
}

/// Simulate `S` on a uniform `grid` through the representation with a fresh
/// two-sided driver. `S` is normalized to vanish at `t = 0` when the grid
/// contains 0, and at the first grid time otherwise. `d = 2` returns the driver.
pub fn simulate_repr(grid: &[f64], d: u32, cutoff: f64, seed: RngSeed) -> Result<RadialSample, SphError> {
    let h = uniform_step(grid)?;
    if d == 2 {
        return brownian_radial(grid, seed);
    }
    let dg = driver_grid(grid, h, cutoff);
    let driver = sample_two_sided(&dg, seed)?;
    if dg.len() > 1 && (dg[1] - dg[0] - h).abs() > 1e-9 {
        // 0 was appended off-grid; drop it to keep the driver uniform.
        let mut p = driver;
        let keep: Vec<usize> = (0..p.len()).filter(|&i| (p.times[i] / h - (p.times[i] / h).round()).abs() < 1e-9).collect();
        p.times = keep.iter().map(|&i| p.times[i]).collect();
        p.values = keep.iter().map(|&i| p.values[i]).collect();
        return repr_from_driver(&p, grid, d, cutoff);
    }
    repr_from_driver(&driver, grid, d, cutoff)
}

/// `d = 2`: the spherical-average process is a two-sided Brownian motion.
fn brownian_radial(grid: &[f64], seed: RngSeed) -> Result<RadialSample, SphError> {
    let mut g = grid.to_vec();
    let has_zero = g.contains(&0.0);
    if !has_zero {
        g.push(0.0);
        g.sort_by(|a, b| a.total_cmp(b));
    }
    let p = sample_two_sided(&g, seed)?;
    let s: Vec<f64> = grid.iter().map(|&t| p.values[g.iter().position(|&u| u == t).expect("grid point")]).collect();
    let s0 = if has_zero { 0.0 } else { s[0] };
    Ok(RadialSample {
        times: grid.to_vec(),
        s_values: s.iter().map(|v| v - s0).collect(),
        deriv_values: vec![],
        method: Method::Brownian,
        truncation_bound: None,
    })
}

/// Simulate the derivative vector by exact stationary Langevin steps and
/// integrate the first component (trapezoid) with `S = 0` at the first grid time.
pub fn simulate_sde(grid: &[f64], d: u32, seed: RngSeed) -> Result<RadialSample, SphError> {
    if d == 2 {
        return brownian_radial(grid, seed);
    }
    check_even(d)?;
    if grid.len() < 2 {
        return Err(SphError::Grid);
    }
    let sys = companion_system(d)?;
    let mut rng = seed.rng();
    let mut x = sample_stationary(&sys, &mut rng);
    let mut cache: Option<(f64, ExactStepper)> = None;
    let p = sys.p;
    let mut derivs = vec![Vec::with_capacity(grid.len()); p];
    let mut s_values = Vec::with_capacity(grid.len());
    let push = |x: &DVector<f64>, derivs: &mut Vec<Vec<f64>>| {
        for (k, col) in derivs.iter_mut().enumerate() {
            col.push(x[k]);
        }
    };
    push(&x, &mut derivs);
    s_values.push(0.0);
    for i in 1..grid.len() {
        let dt = grid[i] - grid[i - 1];
        let reuse = matches!(&cache, Some((h, _)) if (h - dt).abs() <= 1e-12 * dt);
        if !reuse {
            cache = Some((dt, ExactStepper::new(&sys, dt)?));
        }
        let stepper = &cache.as_ref().expect("stepper").1;
        let prev = x[0];
        x = stepper.step(&x, &mut rng);
        push(&x, &mut derivs);
        s_values.push(s_values[i - 1] + 0.5 * dt * (prev + x[0]));
    }
    // Re-zero at t = 0 when it lies on the grid.
    if let Some(o) = grid.iter().position(|&t| t == 0.0) {
        let s0 = s_values[o];
        s_values.iter_mut().for_each(|v| *v -= s0);
    }
    Ok(RadialSample { times: grid.to_vec(), s_values, deriv_values: derivs, method: Method::Sde, truncation_bound: None })
}

/// `K^{(1)}(u) = c(d) ∫₀^π (1 − cosθ cosh u)/(cosθ − cosh u)² sin^{d−2}θ dθ`.
pub fn deriv_autocov(u: f64, d: u32) -> Result<f64, SphError> {
    check_even(d)?;
    let c = c_of_d(d)?;
    let k = (d - 2) as i32;
    let a = u.abs();
    let v = if a == 0.0 {
        integrate(|t| t.sin().powi(k) / (2.0 * (t / 2.0).sin().powi(2)), 0.0, PI, quad_opts())?
    } else {
        let sh2 = 2.0 * (a / 2.0).sinh().powi(2);
        let ch = a.cosh();
        integrate(
            |t| {
                let s2 = 2.0 * (t / 2.0).sin().powi(2);
                let den = sh2 + s2;
                (ch * s2 - sh2) / (den * den) * t.sin().powi(k)
            },
            0.0,
            PI,
            quad_opts(),
        )?
    };
    Ok(c * v)
}

/// `(1/√(2π)) 2^{d−2}Γ(d/2)² / ∏_{k=1}^{(d−2)/2}(ω² + (d−2k)²)`.
pub fn power_spectrum(omega: f64, d: u32) -> Result<f64, SphError> {
    let p = check_even(d)?;
    let g = gamma_half(d);
    let den: f64 = (1..=p).map(|k| omega * omega + ((d - 2 * k) as f64).powi(2)).product();
    Ok(2f64.powi(d as i32 - 2) * g * g / den / (2.0 * PI).sqrt())
}

/// `(1/√(2π)) ∫_ℝ power_spectrum(ω, d) dω`, which must equal `deriv_autocov(0, d)`.
pub fn spectrum_mass(d: u32) -> Result<f64, SphError> {
    let half = integrate_to_inf(|w| power_spectrum(w, d).expect("even d"), 0.0, quad_opts())?;
    Ok(2.0 * half / (2.0 * PI).sqrt())
}

/// Absolute residuals of the two trigonometric identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityResiduals {
    /// `∫(e^{(θ−π)ω}+e^{−(θ−π)ω}) sin^{d−2} = (d−2)(d−3)/(ω²+(d−2)²) ∫(…) sin^{d−4}`; `None` for `d < 6`.
    pub first: Option<f64>,
    /// `∫(e^{(θ−π)ω}+e^{−(θ−π)ω}) sin²θ dθ = 2(e^{πω}−e^{−πω})/(ω(ω²+4))`.
    pub second: f64,
}

fn hyperbolic_moment(omega: f64, n: i32) -> Result<f64, QuadError> {
    integrate(|t| 2.0 * ((t - PI) * omega).cosh() * t.sin().powi(n), 0.0, PI, quad_opts())
}

pub fn check_identities(omega: f64, d: u32) -> Result<IdentityResiduals, SphError> {
    let first = if d >= 6 && d.is_multiple_of(2) {
        let n = (d - 2) as i32;
        let lhs = hyperbolic_moment(omega, n)?;
        let df = d as f64;
        let rhs = (df - 2.0) * (df - 3.0) / (omega * omega + (df - 2.0).powi(2)) * hyperbolic_moment(omega, n - 2)?;
        Some((lhs - rhs).abs())
    } else {
        None
    };
    let lhs = hyperbolic_moment(omega, 2)?;
    let rhs = 4.0 * (PI * omega).sinh() / (omega * (omega * omega + 4.0));
    Ok(IdentityResiduals { first, second: (lhs - rhs).abs() })
}

/// Uniform output grid `[0, t_max]` with step `h`.
pub fn output_grid(t_max: f64, h: f64) -> Vec<f64> {
    uniform_grid(0.0, t_max, (t_max / h).round() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, var};

    #[test]
    fn kernel_examples() {
        for d in [2, 3, 4, 6] {
            let a = kernel_diag(0.7, 1.3, d).unwrap();
            let b = kernel_diag(1.3, 0.7, d).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
        let k1 = kernel_diag(0.3, 0.8, 4).unwrap();
        let k2 = kernel_diag(0.6, 1.6, 4).unwrap();
        assert!((k2 - (k1 - 2f64.ln())).abs() < 1e-8);
        assert!(kernel_diag(1.0, 1.0, 2).unwrap().abs() < 1e-9);
        assert!(kernel_diag(0.0, 1.0, 4).is_err());
    }

    #[test]
    fn variance_increment_examples() {
        assert_eq!(variance_increment(0.0, 4).unwrap(), 0.0);
        for t in [0.5, 1.0, 2.0] {
            assert!((variance_increment(t, 2).unwrap() - t).abs() < 1e-8);
            assert!((variance_increment(-t, 2).unwrap() - t).abs() < 1e-8);
        }
        let a = variance_increment(5.0, 4).unwrap() - 5.0;
        let b = variance_increment(10.0, 4).unwrap() - 10.0;
        assert!((a - b).abs() <= 1e-3);
    }

    #[test]
    fn variance_increment_d4_is_integrated_ou() {
        // S' is OU with rate 2 and unit variance, so Var(S_t) = t − (1 − e^{−2t})/2.
        for t in [0.25f64, 1.0, 3.0] {
            let exact = t - (1.0 - (-2.0 * t).exp()) / 2.0;
            assert!((variance_increment(t, 4).unwrap() - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn kernel_polarization_matches_variance() {
        for d in [2, 4] {
            for t in [0.5f64, 1.0] {
                let r = (-t).exp();
                let v = kernel_diag(r, r, d).unwrap() + kernel_diag(1.0, 1.0, d).unwrap() - 2.0 * kernel_diag(r, 1.0, d).unwrap();
                assert!((v - variance_increment(t, d).unwrap()).abs() <= 1e-7, "d = {d}, t = {t}");
            }
        }
    }

    #[test]
    fn deriv_autocov_examples() {
        assert!((deriv_autocov(0.0, 4).unwrap() - 1.0).abs() < 1e-6);
        for u in [0.5f64, 1.0] {
            assert!((deriv_autocov(u, 4).unwrap() - (-2.0 * u).exp()).abs() < 1e-6);
            assert!((deriv_autocov(u, 6).unwrap() - deriv_autocov(-u, 6).unwrap()).abs() < 1e-10);
        }
        // agreement with the c_k representation of the Langevin system for higher d
        for d in [6, 8] {
            let sys = companion_system(d).unwrap();
            for u in [0.0, 0.3, 1.2] {
                let q = deriv_autocov(u, d).unwrap();
                assert!((q - sys.first_component_autocov(u)).abs() < 1e-8 * q.abs().max(1.0), "d = {d}, u = {u}");
            }
        }
    }

    #[test]
    fn power_spectrum_examples() {
        assert!((power_spectrum(0.0, 4).unwrap() - 0.398942).abs() < 1e-6);
        for d in [4, 6, 8] {
            assert!((spectrum_mass(d).unwrap() - deriv_autocov(0.0, d).unwrap()).abs() < 1e-6);
            let mut prev = f64::INFINITY;
            for w in [0.0, 0.5, 1.0, 4.0, 20.0] {
                let v = power_spectrum(w, d).unwrap();
                assert!(v > 0.0 && v < prev);
                prev = v;
            }
        }
    }

    #[test]
    fn identity_examples() {
        assert!(check_identities(1.0, 4).unwrap().second <= 1e-8);
        assert!(check_identities(0.5, 6).unwrap().first.unwrap() <= 1e-8);
        assert!(check_identities(2.0, 8).unwrap().first.unwrap() <= 1e-8);
        assert!(check_identities(1.0, 4).unwrap().first.is_none());
    }

    #[test]
    fn g_derivatives() {
        // d = 4: g = 2e^{2s}; d = 6: g = 4e^{2s}(1 − e^{2s})
        assert!((g_deriv(0, -0.3, 4) - 2.0 * (-0.6f64).exp()).abs() < 1e-15);
        assert!((g_deriv(1, -0.3, 4) - 4.0 * (-0.6f64).exp()).abs() < 1e-15);
        let s = -0.4f64;
        let e = (2.0 * s).exp();
        assert!((g_deriv(0, s, 6) - 4.0 * e * (1.0 - e)).abs() < 1e-15);
        assert!(g_deriv(0, 0.0, 6).abs() < 1e-15);
        let h = 1e-6;
        for d in [6, 8] {
            for i in 0..3 {
                let fd = (g_deriv(i, s + h, d) - g_deriv(i, s - h, d)) / (2.0 * h);
                assert!((fd - g_deriv(i + 1, s, d)).abs() < 1e-5 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_driver_gives_zero() {
        let g = uniform_grid(-16.0, 2.0, 1800);
        let driver = Path { times: g.clone(), values: vec![0.0; g.len()], dim: 1, origin_index: 1600 };
        let s = repr_from_driver(&driver, &output_grid(2.0, 0.01), 6, DEFAULT_CUTOFF).unwrap();
        assert!(s.s_values.iter().chain(s.deriv_values.iter().flatten()).all(|&v| v == 0.0));
    }

    #[test]
    fn repr_starts_at_zero_and_derivative_is_consistent() {
        let grid = output_grid(2.0, 0.001);
        for d in [4, 6] {
            let s = simulate_repr(&grid, d, DEFAULT_CUTOFF, RngSeed::new(3, 0)).unwrap();
            assert_eq!(s.s_values[0], 0.0);
            // S^{(1)} integrates to S up to the grid error
            let mut acc = 0.0;
            let mut worst: f64 = 0.0;
            for j in 1..grid.len() {
                acc += 0.0005 * (s.deriv_values[0][j - 1] + s.deriv_values[0][j]);
                worst = worst.max((acc - s.s_values[j]).abs());
            }
            assert!(worst < 0.05, "d = {d}: {worst}");
        }
    }

    #[test]
    fn sde_integrates_its_derivative() {
        let grid = output_grid(1.0, 0.01);
        let s = simulate_sde(&grid, 6, RngSeed::new(4, 0)).unwrap();
        assert_eq!(s.s_values[0], 0.0);
        assert_eq!(s.deriv_values.len(), 2);
        let ts = simulate_sde(&grid, 6, RngSeed::new(4, 0)).unwrap();
        assert_eq!(s, ts);
    }

    #[test]
    fn sde_stationary_moments_d4() {
        let grid = output_grid(1.0, 0.5);
        let n = 10_000;
        let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for k in 0..n {
            let s = simulate_sde(&grid, 4, RngSeed::new(5, k as u64)).unwrap();
            a.push(s.deriv_values[0][0]);
            b.push(s.deriv_values[0][2]);
        }
        assert!((var(&a) - 1.0).abs() < 3.0 * (2.0f64 / n as f64).sqrt());
        let c = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n as f64 - mean(&a) * mean(&b);
        assert!((c - (-2.0f64).exp()).abs() < 3.0 * (1.0f64 / n as f64).sqrt());
    }

    #[test]
    fn d2_returns_brownian() {
        let grid = output_grid(1.0, 0.1);
        let s = simulate_repr(&grid, 2, DEFAULT_CUTOFF, RngSeed::new(6, 0)).unwrap();
        assert_eq!(s.method, Method::Brownian);
        assert!(s.deriv_values.is_empty());
        assert!(simulate_repr(&grid, 5, DEFAULT_CUTOFF, RngSeed::new(6, 0)).is_err());
    }
}
