//! Clock process along Brownian paths, its inverse and the time-changed path,
//! plus the statistical checks and exponent estimators built on the clock.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::gmc::{
    add_log_singularity, measure_from_regularized, regularized_values, spherical_average, synthesize_lgf, FieldGrid, GmcError, Lattice, MeasureGrid,
    StatPair,
};
use crate::params::{gamma_half, ParamError, Params};
use crate::quad::{integrate, QuadError, QuadOpts};
use crate::sphavg::SphError;
use crate::stats::{linear_fit, mean, LineFit};
use crate::stochastic::{heat_kernel, sample_brownian, uniform_grid, Path, RngSeed, StochasticError};

#[derive(Debug, Error)]
pub enum LbmError {
    #[error("alpha = {0} outside (0, 2)")]
    Alpha(f64),
    #[error("path leaves the box margin after index {last_valid}")]
    Truncated { last_valid: usize },
    #[error("t = {t} outside the clock range [0, {max}]")]
    ClockRange { t: f64, max: f64 },
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("threshold e(chi) = -1 not bracketed by chi_list; e = {0:?}")]
    ThresholdOutside(Vec<f64>),
    #[error("cost guard: {0} terms exceed 1e7")]
    Cost(f64),
    #[error("need d >= 3 for the Green kernel, got {0}")]
    GreenDim(usize),
    #[error("all paths rejected at t = {0}")]
    AllRejected(f64),
    #[error("too few usable times: {0}")]
    TooFewTimes(usize),
    #[error(transparent)]
    Gmc(#[from] GmcError),
    #[error(transparent)]
    Stochastic(#[from] StochasticError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Sph(#[from] SphError),
}

/// `F(s_j)` on the Brownian time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClockSample {
    pub times: Vec<f64>,
    pub f_values: Vec<f64>,
    pub epsilon: f64,
    pub alpha: f64,
}

/// Precomputed clock density `ε^{α²/2} e^{α h_ε}` on the lattice.
#[derive(Debug, Clone)]
pub struct ClockField {
    pub lattice: Lattice,
    pub h_eps: Vec<f64>,
    pub alpha: f64,
    pub epsilon: f64,
    log_pref: f64,
    margin: f64,
}

fn check_alpha(alpha: f64) -> Result<(), LbmError> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(LbmError::Alpha(alpha));
    }
    Ok(())
}

impl ClockField {
    /// `h_ε` by spectral sphere averaging (`ε ≥ 2δx`); the path must keep an
    /// `ε` margin from the box boundary.
    pub fn new(field: &FieldGrid, alpha: f64, epsilon: f64) -> Result<Self, LbmError> {
        check_alpha(alpha)?;
        let lat = field.lattice;
        let h_eps = regularized_values(field, epsilon)?;
        Ok(Self { lattice: lat, h_eps, alpha, epsilon, log_pref: alpha * alpha / 2.0 * epsilon.ln(), margin: lat.half_width() - epsilon })
    }

    /// Clock density at `x`, `None` outside the box margin.
    pub fn density(&self, x: &[f64]) -> Option<f64> {
        if x.iter().any(|c| c.abs() > self.margin) {
            return None;
        }
        self.lattice.interpolate(&self.h_eps, x).map(|h| (self.alpha * h + self.log_pref).exp())
    }

    /// The GMC measure `μ_α` this clock integrates against.
    pub fn measure(&self, field: &FieldGrid) -> Result<MeasureGrid, LbmError> {
        Ok(measure_from_regularized(field, &self.h_eps, self.alpha, self.epsilon)?)
    }

    /// Left Riemann sum `F(s_j) = Σ_{i<j} density(B_{s_i}) Δs_i`.
    pub fn clock(&self, path: &Path) -> Result<ClockSample, LbmError> {
        let mut f = Vec::with_capacity(path.len());
        f.push(0.0);
        for i in 0..path.len() - 1 {
            let rho = self.density(path.point(i)).ok_or(LbmError::Truncated { last_valid: i.saturating_sub(1) })?;
            f.push(f[i] + rho * (path.times[i + 1] - path.times[i]));
        }
        Ok(ClockSample { times: path.times.clone(), f_values: f, epsilon: self.epsilon, alpha: self.alpha })
    }
}

pub fn clock(field: &FieldGrid, alpha: f64, path: &Path, epsilon: f64) -> Result<ClockSample, LbmError> {
    ClockField::new(field, alpha, epsilon)?.clock(path)
}

/// Piecewise-linear inverse of the clock.
pub fn inverse_clock(clock: &ClockSample, t: f64) -> Result<f64, LbmError> {
    let max = *clock.f_values.last().expect("nonempty clock");
    if !(t >= 0.0 && t <= max) {
        return Err(LbmError::ClockRange { t, max });
    }
    let f = &clock.f_values;
    let j = f.partition_point(|&v| v < t);
    if j == 0 {
        return Ok(clock.times[0]);
    }
    let (f0, f1) = (f[j - 1], f[j]);
    let w = if f1 > f0 { (t - f0) / (f1 - f0) } else { 0.0 };
    Ok(clock.times[j - 1] + w * (clock.times[j] - clock.times[j - 1]))
}

fn path_at(path: &Path, s: f64) -> Vec<f64> {
    let j = path.times.partition_point(|&v| v <= s).clamp(1, path.len() - 1);
    let (t0, t1) = (path.times[j - 1], path.times[j]);
    let w = ((s - t0) / (t1 - t0)).clamp(0.0, 1.0);
    let (a, b) = (path.point(j - 1), path.point(j));
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            if w == 0.0 {
                *x
            } else if w == 1.0 {
                *y
            } else {
                x + w * (y - x)
            }
        })
        .collect()
}

/// `B_{F^{−1}(t)}` on `out_grid`.
pub fn lbm_path(field: &FieldGrid, alpha: f64, path: &Path, epsilon: f64, out_grid: &[f64]) -> Result<Path, LbmError> {
    let c = clock(field, alpha, path, epsilon)?;
    lbm_from_clock(&c, path, out_grid)
}

pub fn lbm_from_clock(c: &ClockSample, path: &Path, out_grid: &[f64]) -> Result<Path, LbmError> {
    let mut values = Vec::with_capacity(out_grid.len() * path.dim);
    for &t in out_grid {
        values.extend(path_at(path, inverse_clock(c, t)?));
    }
    Ok(Path { times: out_grid.to_vec(), values, dim: path.dim, origin_index: 0 })
}

fn brownian_from_origin(d: usize, t: f64, steps: usize, seed: RngSeed) -> Result<Path, LbmError> {
    Ok(sample_brownian(d, &uniform_grid(0.0, t, steps), seed)?)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Knobs shared by the path-based checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathSetup {
    /// Time step of the Brownian paths.
    pub dt: f64,
    pub n_paths: usize,
}

/// `∫₀^T p_t(0, y) dt` for `|y| = ρ > 0`.
pub fn truncated_green(rho: f64, t_end: f64, d: usize) -> Result<f64, LbmError> {
    let y: Vec<f64> = std::iter::once(rho).chain(std::iter::repeat_n(0.0, d - 1)).collect();
    let zero = vec![0.0; d];
    let opts = QuadOpts { abs_tol: 1e-13, rel_tol: 1e-10, max_intervals: 4000 };
    Ok(integrate(|t| if t <= 0.0 { 0.0 } else { heat_kernel(t, &zero, &y, d).expect("valid") }, 0.0, t_end, opts)?)
}

/// `∫₀^T P(|B_t| < R) dt`, the Lebesgue value of both Revuz sides.
pub fn lebesgue_occupation(t_end: f64, radius: f64, d: usize) -> Result<f64, LbmError> {
    let chi = ChiSquared::new(d as f64).map_err(|e| LbmError::Geometry(e.to_string()))?;
    let opts = QuadOpts { abs_tol: 1e-12, rel_tol: 1e-10, max_intervals: 4000 };
    Ok(integrate(|t| if t <= 0.0 { 1.0 } else { chi.cdf(radius * radius / t) }, 0.0, t_end, opts)?)
}

/// LHS: Monte Carlo mean of `∫₀^T 1_{B(0,R)}(B_t) dF(t)`; RHS: lattice quadrature
/// of `∫₀^T ∫_{B(0,R)} p_t(0, y) μ(dy) dt` with the same realization's measure.
pub fn revuz_check(cf: &ClockField, field: &FieldGrid, t_end: f64, radius: f64, setup: PathSetup, seed: RngSeed) -> Result<StatPair, LbmError> {
    let lat = cf.lattice;
    let d = lat.d;
    if radius > cf.margin {
        return Err(LbmError::Geometry(format!("ball radius {radius} exceeds box margin {}", cf.margin)));
    }
    let steps = (t_end / setup.dt).round().max(1.0) as usize;
    let lhs = (0..setup.n_paths)
        .into_par_iter()
        .map(|k| -> Result<f64, LbmError> {
            let p = brownian_from_origin(d, t_end, steps, seed.child(k as u64))?;
            let mut acc = 0.0;
            for i in 0..steps {
                let x = p.point(i);
                if norm(x) < radius {
                    acc += cf.density(x).expect("inside ball") * (p.times[i + 1] - p.times[i]);
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let measure = cf.measure(field)?;
    let floor = lat.dx() / 2.0;
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut rhs = 0.0;
    for (i, r) in lat.ball_sites(&vec![0.0; d], radius) {
        if r >= radius {
            continue;
        }
        let r = r.max(floor);
        let key = r.to_bits();
        let g = match cache.get(&key) {
            Some(&g) => g,
            None => {
                let g = truncated_green(r, t_end, d)?;
                cache.insert(key, g);
                g
            }
        };
        rhs += g * measure.masses[i];
    }
    let mut pair = StatPair::from_samples(&lhs, &[rhs]);
    pair.rhs_stderr = 0.0;
    Ok(pair)
}

/// Where the clock-scaling field comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum FieldSource {
    /// Deterministic `𝐡 ≡ 0` control.
    Zero(Lattice),
    /// Fresh pinned torus field per replicate.
    Random(Lattice),
}

/// Geometry of the clock-scaling comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClockScalingSetup {
    pub source: FieldSource,
    pub c: f64,
    /// Clock horizon `τ` of the unscaled path.
    pub tau: f64,
    pub epsilon: f64,
    pub steps: usize,
    pub paths_per_field: usize,
}

/// Compares `e^{−α𝐡_c(0)} F_{𝐡,cε}(c²τ)` along `cB_{·/c²}` with
/// `c^{αQ} F_{𝐡,ε}(τ)` along `B`, using `αQ = 2 + α²/2`. Pathwise the left
/// side is `c^{αQ}` times the clock of `𝐡(c·) − 𝐡_c(0)`, which has the law of `𝐡`.
pub fn clock_scaling_check(params: &Params, setup: ClockScalingSetup, n_reps: usize, seed: RngSeed) -> Result<StatPair, LbmError> {
    let alpha = params.alpha;
    let (lat, random) = match setup.source {
        FieldSource::Zero(l) => (l, false),
        FieldSource::Random(l) => (l, true),
    };
    let c = setup.c;
    let aq = alpha * params.q_val;
    let factor = c.powf(aq);
    let per_field = (0..n_reps)
        .into_par_iter()
        .map(|k| -> Result<Vec<(f64, f64)>, LbmError> {
            let s = seed.child(k as u64);
            let field = if random { synthesize_lgf(lat, s.child(0))? } else { FieldGrid::constant(lat, 0.0) };
            let small = ClockField::new(&field, alpha, setup.epsilon)?;
            let big = if c == 1.0 { small.clone() } else { ClockField::new(&field, alpha, c * setup.epsilon)? };
            let shift = if random && c != 1.0 { (-alpha * spherical_average(&field, &vec![0.0; lat.d], c)?).exp() } else { 1.0 };
            let mut out = Vec::with_capacity(setup.paths_per_field);
            let mut attempt = 0u64;
            while out.len() < setup.paths_per_field {
                attempt += 1;
                if attempt > 100 * setup.paths_per_field as u64 + 100 {
                    return Err(LbmError::Geometry("paths keep leaving the box".into()));
                }
                let p = brownian_from_origin(lat.d, setup.tau, setup.steps, s.child(attempt))?;
                let scaled =
                    Path { times: p.times.iter().map(|t| c * c * t).collect(), values: p.values.iter().map(|v| c * v).collect(), ..p.clone() };
                let (Ok(fb), Ok(fs)) = (big.clock(&scaled), small.clock(&p)) else { continue };
                out.push((shift * fb.f_values.last().expect("nonempty"), factor * fs.f_values.last().expect("nonempty")));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (l, r): (Vec<f64>, Vec<f64>) = per_field.into_iter().flatten().unzip();
    Ok(StatPair::from_samples(&l, &r))
}

/// Knobs of the field-and-path ensembles behind the exponent estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleSetup {
    pub lattice: Lattice,
    pub epsilon: f64,
    pub n_fields: usize,
    pub n_paths: usize,
    /// Time steps per path (independent of `t`).
    pub steps: usize,
}

fn ensemble_field(params: &Params, setup: &EnsembleSetup, seed: RngSeed) -> Result<ClockField, LbmError> {
    let f = synthesize_lgf(setup.lattice, seed)?;
    let f = add_log_singularity(&f, params.beta, &vec![0.0; setup.lattice.d])?;
    ClockField::new(&f, params.alpha, setup.epsilon)
}

/// Fitted exponent with the times that survived confinement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentExponent {
    pub fit: LineFit,
    pub times: Vec<f64>,
    pub dropped: Vec<f64>,
}

/// Regression slope of `log E_B[F(t)^n | sup|B| ≤ t^{1/2−δ}]` (averaged over
/// fields) against `log t`, for the field with a `β` singularity at 0. The
/// conditioning divides out the confinement probability, whose `t`-dependence
/// only vanishes asymptotically.
pub fn moment_exponent(params: &Params, setup: EnsembleSetup, n: u32, t_list: &[f64], delta: f64, seed: RngSeed) -> Result<MomentExponent, LbmError> {
    let per_field = (0..setup.n_fields)
        .into_par_iter()
        .map(|k| -> Result<Vec<Option<f64>>, LbmError> {
            let s = seed.child(k as u64);
            let cf = ensemble_field(params, &setup, s.child(0))?;
            t_list
                .iter()
                .enumerate()
                .map(|(j, &t)| confined_moment(&cf, n, t, delta, setup.n_paths, setup.steps, s.child(1 + j as u64)).map(|m| m.conditional))
                .collect()
        })
        .collect::<Result<Vec<_>, _>>()?;
    fit_over_fields(&per_field, t_list)
}

/// Monte Carlo moments of the clock on paths confined to `B(0, t^{1/2−δ})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfinedMoment {
    /// `E[F(t)^n 1{confined}]`.
    pub raw: f64,
    /// `E[F(t)^n | confined]`; `None` when every path left the ball.
    pub conditional: Option<f64>,
    pub kept: usize,
}

pub fn confined_moment(cf: &ClockField, n: u32, t: f64, delta: f64, n_paths: usize, steps: usize, seed: RngSeed) -> Result<ConfinedMoment, LbmError> {
    let r = t.powf(0.5 - delta);
    if r > cf.margin {
        return Err(LbmError::Geometry(format!("confinement radius {r} exceeds box margin {}", cf.margin)));
    }
    let mut acc = 0.0;
    let mut kept = 0usize;
    for i in 0..n_paths {
        let p = brownian_from_origin(cf.lattice.d, t, steps, seed.child(i as u64))?;
        if (0..p.len()).all(|j| norm(p.point(j)) <= r) {
            let f = cf.clock(&p)?;
            acc += f.f_values.last().expect("nonempty").powi(n as i32);
            kept += 1;
        }
    }
    Ok(ConfinedMoment { raw: acc / n_paths as f64, conditional: (kept > 0).then(|| acc / kept as f64), kept })
}

fn fit_over_fields(per_field: &[Vec<Option<f64>>], t_list: &[f64]) -> Result<MomentExponent, LbmError> {
    let mut times = Vec::new();
    let mut dropped = Vec::new();
    let mut cols = Vec::new();
    for (j, &t) in t_list.iter().enumerate() {
        let logs: Option<Vec<f64>> = per_field.iter().map(|row| row[j].map(f64::ln)).collect();
        match logs {
            Some(l) => {
                times.push(t);
                cols.push(l);
            }
            None => dropped.push(t),
        }
    }
    if times.len() < 2 {
        return Err(LbmError::TooFewTimes(times.len()));
    }
    Ok(MomentExponent { fit: per_field_fit(&times, &cols), times, dropped })
}

/// Slope of the field-averaged log statistic; stderr from the spread of
/// per-field slopes.
fn per_field_fit(times: &[f64], cols: &[Vec<f64>]) -> LineFit {
    let x: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let n_f = cols[0].len();
    let y: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let mut fit = linear_fit(&x, &y);
    if n_f >= 2 {
        let slopes: Vec<f64> = (0..n_f).map(|k| linear_fit(&x, &cols.iter().map(|c| c[k]).collect::<Vec<_>>()).slope).collect();
        fit.slope_stderr = crate::stats::stderr(&slopes);
    }
    fit
}

/// Linear extrapolation of the slope to `δ = 0` from two confinement exponents.
pub fn extrapolate_delta(d1: f64, s1: f64, d2: f64, s2: f64) -> f64 {
    s1 - d1 * (s2 - s1) / (d2 - d1)
}

/// Output of [`spec_dim_estimate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecDimEstimate {
    pub chi_list: Vec<f64>,
    /// Regression exponent `e(χ)` of the small-`t` integrand.
    pub slopes: Vec<f64>,
    pub stderr: Vec<f64>,
    pub chi_bar_hat: f64,
    pub d_spec_hat: f64,
    pub formula_value: f64,
}

/// Locates `e(χ̄) = −1` for the integrand `E_{0,0,t}[F(t)^χ e^{−F(t)}] p_t(0,0)`;
/// the bridge expectation uses Brownian paths on `[0, t/2]` weighted by
/// `2^{d/2} exp(−|B_{t/2}|²/t)`.
pub fn spec_dim_estimate(
    params: &Params,
    setup: EnsembleSetup,
    chi_list: &[f64],
    t_list: &[f64],
    seed: RngSeed,
) -> Result<SpecDimEstimate, LbmError> {
    let d = setup.lattice.d;
    let formula_value = params.spectral_dimension()?;
    // per_field[k][j][c]: log integrand for field k, time j, chi c
    let per_field = (0..setup.n_fields)
        .into_par_iter()
        .map(|k| -> Result<Vec<Vec<f64>>, LbmError> {
            let s = seed.child(k as u64);
            let cf = ensemble_field(params, &setup, s.child(0))?;
            t_list.iter().enumerate().map(|(j, &t)| bridge_integrand(&cf, t, chi_list, setup, s.child(1 + j as u64))).collect()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut slopes = Vec::with_capacity(chi_list.len());
    let mut errs = Vec::with_capacity(chi_list.len());
    for c in 0..chi_list.len() {
        let cols: Vec<Vec<f64>> = (0..t_list.len()).map(|j| per_field.iter().map(|f| f[j][c]).collect()).collect();
        let fit = per_field_fit(t_list, &cols);
        slopes.push(fit.slope);
        errs.push(fit.slope_stderr);
    }
    let chi_bar_hat = locate_threshold(chi_list, &slopes)?;
    let _ = d;
    Ok(SpecDimEstimate { chi_list: chi_list.to_vec(), slopes, stderr: errs, chi_bar_hat, d_spec_hat: 2.0 * (chi_bar_hat + 1.0), formula_value })
}

fn bridge_integrand(cf: &ClockField, t: f64, chi_list: &[f64], setup: EnsembleSetup, seed: RngSeed) -> Result<Vec<f64>, LbmError> {
    let d = cf.lattice.d;
    let mut sums = vec![0.0; chi_list.len()];
    let mut i = 0u64;
    let mut done = 0usize;
    while done < setup.n_paths {
        if i > 10 * setup.n_paths as u64 + 100 {
            return Err(LbmError::AllRejected(t));
        }
        let p = brownian_from_origin(d, t / 2.0, setup.steps, seed.child(i))?;
        i += 1;
        // A path leaving the box has weight below 2^{d/2}e^{−margin²/t}; redraw.
        let Ok(f) = cf.clock(&p) else { continue };
        let end = p.point(p.len() - 1);
        let w = 2f64.powf(d as f64 / 2.0) * (-end.iter().map(|v| v * v).sum::<f64>() / t).exp();
        let fv = *f.f_values.last().expect("nonempty");
        for (s, &chi) in sums.iter_mut().zip(chi_list) {
            *s += w * fv.powf(chi) * (-fv).exp();
        }
        done += 1;
    }
    let log_p = -(d as f64) / 2.0 * (2.0 * PI * t).ln();
    Ok(sums.iter().map(|s| (s / setup.n_paths as f64).ln() + log_p).collect())
}

/// Linear interpolation of `χ ↦ e(χ)` at `e = −1`.
pub fn locate_threshold(chi_list: &[f64], slopes: &[f64]) -> Result<f64, LbmError> {
    for j in 0..chi_list.len().saturating_sub(1) {
        let (e0, e1) = (slopes[j] + 1.0, slopes[j + 1] + 1.0);
        if e0 == 0.0 {
            return Ok(chi_list[j]);
        }
        if e0 * e1 <= 0.0 && e0 != e1 {
            return Ok(chi_list[j] + (chi_list[j + 1] - chi_list[j]) * e0 / (e0 - e1));
        }
    }
    Err(LbmError::ThresholdOutside(slopes.to_vec()))
}

/// `G(x, y) = Γ(d/2−1)/(2π^{d/2}) |x−y|^{2−d}`.
pub fn green(r: f64, d: usize) -> f64 {
    gamma_half(d as u32 - 2) / (2.0 * PI.powf(d as f64 / 2.0)) * r.powf(2.0 - d as f64)
}

/// Brute-force `Σ G(0,x₁) G(x₁,x₂) ⋯ G(x_{n−1},x_n) ∏ μ(x_i)` over cells in `B(0, r)`.
pub fn nested_green_oracle(measure: &MeasureGrid, n: u32, r: f64, d: usize) -> Result<f64, LbmError> {
    if d < 3 {
        return Err(LbmError::GreenDim(d));
    }
    let lat = measure.lattice;
    let floor = lat.dx() / 2.0;
    let cells: Vec<(Vec<f64>, f64)> = lat.ball_sites(&vec![0.0; d], r).into_iter().map(|(i, _)| (lat.site(i), measure.masses[i])).collect();
    let cost = (cells.len() as f64).powi(n as i32);
    if cost > 1e7 {
        return Err(LbmError::Cost(cost));
    }
    // v[i] = Σ over chains ending at cell i.
    let mut v: Vec<f64> = cells.iter().map(|(x, m)| green(norm(x).max(floor), d) * m).collect();
    for _ in 1..n {
        v = cells
            .iter()
            .map(|(y, my)| {
                cells
                    .iter()
                    .zip(&v)
                    .map(|((x, _), vx)| {
                        let dist = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                        vx * green(dist.max(floor), d)
                    })
                    .sum::<f64>()
                    * my
            })
            .collect();
    }
    Ok(v.iter().sum())
}

/// Direct potential at `x` over `B(0, r)` and its four-region split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionSplit {
    pub direct: f64,
    /// `B(0,|x|/2)`, `B(x,|x|/2)`, `B(x/2, 2|x|)`, remainder; first match wins.
    pub regions: [f64; 4],
}

impl RegionSplit {
    pub fn total(&self) -> f64 {
        self.regions.iter().sum()
    }
}

pub fn region_bound_check(measure: &MeasureGrid, x: &[f64], r: f64, d: usize) -> Result<RegionSplit, LbmError> {
    if d < 3 {
        return Err(LbmError::GreenDim(d));
    }
    if norm(x) > r {
        return Err(LbmError::Geometry(format!("|x| = {} outside B(0, {r})", norm(x))));
    }
    let lat = measure.lattice;
    let floor = lat.dx() / 2.0;
    let ax = norm(x);
    let half: Vec<f64> = x.iter().map(|v| v / 2.0).collect();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let mut regions = [0.0; 4];
    let mut direct = 0.0;
    for (i, ry) in lat.ball_sites(&vec![0.0; d], r) {
        let y = lat.site(i);
        let k = dist(x, &y).max(floor).powf(2.0 - d as f64) * measure.masses[i];
        direct += k;
        let region = if ry < ax / 2.0 {
            0
        } else if dist(&y, x) < ax / 2.0 {
            1
        } else if dist(&y, &half) < 2.0 * ax {
            2
        } else {
            3
        };
        regions[region] += k;
    }
    Ok(RegionSplit { direct, regions })
}
