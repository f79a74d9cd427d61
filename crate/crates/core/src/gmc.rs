//! Lattice realizations of the pinned log-correlated field, spherical-average
//! regularization, GMC cell measures and the estimators built on them.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::fftnd::{fft_nd, freq};
use crate::params::{c_of_d, gamma_half, ParamError};
use crate::quad::{integrate, QuadError, QuadOpts};
use crate::sphavg::{kernel_diag, variance_increment, SphError};
use crate::stats::{linear_fit, mean, quantile, stderr, trimmed_mean, LineFit};
use crate::stochastic::{normal, RngSeed};

#[derive(Debug, Error)]
pub enum GmcError {
    #[error("lattice: {0}")]
    Lattice(String),
    #[error("sphere of radius {r} around {x:?} leaves the box [-{half}, {half}]")]
    SphereOutside { x: Vec<f64>, r: f64, half: f64 },
    #[error("radius {r} below resolution 2*dx = {min}")]
    BelowResolution { r: f64, min: f64 },
    #[error("point {0:?} is not a lattice site")]
    OffLattice(Vec<f64>),
    #[error("point has {got} coordinates, lattice dimension is {want}")]
    Dim { got: usize, want: usize },
    #[error("gamma = {gamma} outside (0, sqrt(2d)) for d = {d}")]
    Gamma { d: usize, gamma: f64 },
    #[error("need at least 3 radii spanning 2 octaves, got {0:?}")]
    Radii(Vec<f64>),
    #[error("potential kernel |x-y|^(2-d) degenerates for d = 2")]
    PotentialDim,
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Sph(#[from] SphError),
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// Periodic box `[−L/2, L/2)^d` with `n` sites per axis; site `i` sits at
/// `(i − n/2)·δx`, row-major with the last axis fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lattice {
    pub d: usize,
    pub n: usize,
    pub side: f64,
}

impl Lattice {
    pub fn new(d: usize, n: usize, side: f64) -> Result<Self, GmcError> {
        if !(2..=8).contains(&d) {
            return Err(GmcError::Lattice(format!("dimension {d} outside 2..=8")));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(GmcError::Lattice(format!("n = {n} must be a power of two >= 4")));
        }
        if !(side > 0.0) {
            return Err(GmcError::Lattice(format!("side {side} must be positive")));
        }
        if (n as f64).powi(d as i32) > (1u64 << 27) as f64 {
            return Err(GmcError::Lattice(format!("{n}^{d} sites exceeds the memory guard")));
        }
        Ok(Self { d, n, side })
    }

    pub fn dx(&self) -> f64 {
        self.side / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest coordinate magnitude at which multilinear interpolation is defined.
    pub fn half_width(&self) -> f64 {
        self.side / 2.0 - self.dx()
    }

    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.dx()
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut m = vec![0; self.d];
        for a in (0..self.d).rev() {
            m[a] = idx % self.n;
            idx /= self.n;
        }
        m
    }

    pub fn flat(&self, m: &[usize]) -> usize {
        m.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn site(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx).into_iter().map(|i| self.coord(i)).collect()
    }

    pub fn origin(&self) -> usize {
        self.flat(&vec![self.n / 2; self.d])
    }

    /// Multi-index of a lattice point, `None` if `x` is off-lattice or outside.
    pub fn index_of(&self, x: &[f64]) -> Option<Vec<usize>> {
        let h = self.dx();
        x.iter()
            .map(|&c| {
                let f = c / h + (self.n / 2) as f64;
                let i = f.round();
                ((f - i).abs() < 1e-9 && i >= 0.0 && i < self.n as f64).then_some(i as usize)
            })
            .collect()
    }

    fn check_point(&self, x: &[f64]) -> Result<(), GmcError> {
        if x.len() != self.d {
            return Err(GmcError::Dim { got: x.len(), want: self.d });
        }
        Ok(())
    }

    /// Multilinear interpolation of site values at `x`; `None` outside the box.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> Option<f64> {
        let h = self.dx();
        let mut base = [0usize; 8];
        debug_assert!(x.len() == self.d);
        let mut frac = [0f64; 8];
        for a in 0..self.d {
            let f = x[a] / h + (self.n / 2) as f64;
            if !(f >= 0.0 && f <= (self.n - 1) as f64) {
                return None;
            }
            let i = (f.floor() as usize).min(self.n - 2);
            base[a] = i;
            frac[a] = f - i as f64;
        }
        let strides: Vec<usize> = (0..self.d).map(|a| self.n.pow((self.d - 1 - a) as u32)).collect();
        let b0: usize = (0..self.d).map(|a| base[a] * strides[a]).sum();
        let mut acc = 0.0;
        for corner in 0..(1usize << self.d) {
            let mut w = 1.0;
            let mut off = b0;
            for a in 0..self.d {
                if corner >> a & 1 == 1 {
                    w *= frac[a];
                    off += strides[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 {
                acc += w * values[off];
            }
        }
        Some(acc)
    }

    /// Indices of sites with `|site − x| ≤ r`, plus their distances.
    pub fn ball_sites(&self, x: &[f64], r: f64) -> Vec<(usize, f64)> {
        let h = self.dx();
        let half = (self.n / 2) as f64;
        let lo: Vec<usize> = x.iter().map(|&c| ((c - r) / h + half).ceil().max(0.0) as usize).collect();
        let hi: Vec<usize> = x.iter().map(|&c| ((c + r) / h + half).floor().min((self.n - 1) as f64) as usize).collect();
        let mut out = Vec::new();
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return out;
        }
        let mut m = lo.clone();
        loop {
            let d2: f64 = m.iter().zip(x).map(|(&i, &c)| (self.coord(i) - c).powi(2)).sum();
            if d2 <= r * r * (1.0 + 1e-12) {
                out.push((self.flat(&m), d2.sqrt()));
            }
            let mut a = self.d;
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                if m[a] < hi[a] {
                    m[a] += 1;
                    break;
                }
                m[a] = lo[a];
            }
        }
    }
}

/// A `β log` singularity `−β log|· − center|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Singularity {
    pub beta: f64,
    pub center: Vec<f64>,
}

/// Field values on a [`Lattice`]. `values = gaussian − Σ β log max(|x − c|, δx/2)`;
/// the Gaussian part is kept so singularities stay exactly additive.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub lattice: Lattice,
    pub values: Vec<f64>,
    pub pinned: bool,
    pub singularities: Vec<Singularity>,
    pub seed: Option<RngSeed>,
    gaussian: Vec<f64>,
}

impl FieldGrid {
    /// A deterministic field from site values (no singularity, not pinned).
    pub fn from_values(lattice: Lattice, values: Vec<f64>) -> Result<Self, GmcError> {
        if values.len() != lattice.len() {
            return Err(GmcError::Lattice(format!("{} values for {} sites", values.len(), lattice.len())));
        }
        Ok(Self { lattice, gaussian: values.clone(), values, pinned: false, singularities: vec![], seed: None })
    }

    pub fn constant(lattice: Lattice, c: f64) -> Self {
        Self::from_values(lattice, vec![c; lattice.len()]).expect("length matches")
    }

    pub fn from_fn(lattice: Lattice, f: impl Fn(&[f64]) -> f64) -> Self {
        let v = (0..lattice.len()).map(|i| f(&lattice.site(i))).collect();
        Self::from_values(lattice, v).expect("length matches")
    }

    /// The regular (non-singular) part of the field.
    pub fn gaussian_part(&self) -> &[f64] {
        &self.gaussian
    }

    fn singular_value(&self, x: &[f64]) -> f64 {
        let floor = self.lattice.dx() / 2.0;
        self.singularities
            .iter()
            .map(|s| {
                let r = x.iter().zip(&s.center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                -s.beta * r.max(floor).ln()
            })
            .sum()
    }

    fn rebuild(&mut self) {
        if self.singularities.is_empty() {
            self.values.clone_from(&self.gaussian);
            return;
        }
        let lat = self.lattice;
        self.values = (0..lat.len()).map(|i| self.gaussian[i] + self.singular_value(&lat.site(i))).collect();
    }
}

/// Mode variance `|k|^{−d}/|S^{d−1}|` of the torus field at integer frequency `k`.
pub fn mode_variance(k2: f64, d: usize) -> f64 {
    if k2 == 0.0 {
        return 0.0;
    }
    let area = 2.0 * PI.powf(d as f64 / 2.0) / gamma_half(d as u32);
    k2.powf(-(d as f64) / 2.0) / area
}

fn white_noise_spectrum(lattice: &Lattice, seed: RngSeed) -> Vec<Complex64> {
    let mut rng = seed.rng();
    let mut buf: Vec<Complex64> = (0..lattice.len()).map(|_| Complex64::new(normal(&mut rng), 0.0)).collect();
    fft_nd(&mut buf, lattice.d, lattice.n, false);
    buf
}

fn for_each_k2(lattice: &Lattice, mut f: impl FnMut(usize, i64)) {
    let (d, n) = (lattice.d, lattice.n);
    let mut m = vec![0usize; d];
    for idx in 0..lattice.len() {
        let k2: i64 = m.iter().map(|&i| freq(i, n).pow(2)).sum();
        f(idx, k2);
        let mut a = d;
        while a > 0 {
            a -= 1;
            m[a] += 1;
            if m[a] < n {
                break;
            }
            m[a] = 0;
        }
    }
}

/// Torus field with spectral density `∝ |k|^{−d}` (zero mode dropped), pinned
/// by subtracting its discretized unit-sphere average at the origin.
pub fn synthesize_lgf(lattice: Lattice, seed: RngSeed) -> Result<FieldGrid, GmcError> {
    check_sphere(&lattice, &vec![0.0; lattice.d], 1.0)?;
    let mut buf = white_noise_spectrum(&lattice, seed);
    let d = lattice.d;
    for_each_k2(&lattice, |idx, k2| buf[idx] *= mode_variance(k2 as f64, d).sqrt());
    fft_nd(&mut buf, d, lattice.n, true);
    let norm = (lattice.len() as f64).sqrt();
    let raw: Vec<f64> = buf.iter().map(|z| z.re / norm).collect();
    let mut field = FieldGrid::from_values(lattice, raw)?;
    field.seed = Some(seed);
    let pin = spherical_average(&field, &vec![0.0; d], 1.0)?;
    field.gaussian.iter_mut().for_each(|v| *v -= pin);
    field.pinned = true;
    field.rebuild();
    Ok(field)
}

/// Unit directions and weights of the antipodally symmetric product point set
/// on `S^{dim−1}` with about `rho` points per radian along great circles.
pub fn sphere_points(dim: usize, rho: f64) -> Vec<(Vec<f64>, f64)> {
    if dim == 2 {
        let m = (2.0 * (PI * rho).ceil()).max(8.0) as usize;
        return (0..m)
            .map(|j| {
                let phi = 2.0 * PI * (j as f64 + 0.5) / m as f64;
                (vec![phi.cos(), phi.sin()], 1.0 / m as f64)
            })
            .collect();
    }
    let n_theta = (PI * rho).ceil().max(4.0) as usize;
    let mut levels = Vec::with_capacity(n_theta);
    let mut total = 0.0;
    for i in 0..n_theta {
        let th = (i as f64 + 0.5) * PI / n_theta as f64;
        let w = th.sin().powi(dim as i32 - 2);
        total += w;
        levels.push((th, w));
    }
    let mut out = Vec::new();
    for (th, w) in levels {
        let (c, s) = (th.cos(), th.sin());
        for (u, wu) in sphere_points(dim - 1, rho * s) {
            let mut p = Vec::with_capacity(dim);
            p.push(c);
            p.extend(u.iter().map(|v| s * v));
            out.push((p, w / total * wu));
        }
    }
    out
}

fn check_sphere(lattice: &Lattice, x: &[f64], r: f64) -> Result<(), GmcError> {
    lattice.check_point(x)?;
    let min = 2.0 * lattice.dx();
    if r < min * (1.0 - 1e-12) {
        return Err(GmcError::BelowResolution { r, min });
    }
    let half = lattice.half_width();
    if x.iter().any(|c| c.abs() + r > half + 1e-12) {
        return Err(GmcError::SphereOutside { x: x.to_vec(), r, half });
    }
    Ok(())
}

fn sphere_mean(lattice: &Lattice, values: &[f64], x: &[f64], r: f64) -> f64 {
    let pts = sphere_points(lattice.d, r / lattice.dx());
    let mut p = vec![0.0; lattice.d];
    pts.iter()
        .map(|(u, w)| {
            for a in 0..lattice.d {
                p[a] = x[a] + r * u[a];
            }
            w * lattice.interpolate(values, &p).expect("checked inside")
        })
        .sum()
}

/// Weighted mean of the interpolated field over a quasi-uniform point set on
/// the sphere of radius `r` around `x`.
pub fn spherical_average(field: &FieldGrid, x: &[f64], r: f64) -> Result<f64, GmcError> {
    check_sphere(&field.lattice, x, r)?;
    Ok(sphere_mean(&field.lattice, &field.values, x, r))
}

/// Adds `−β log|· − center|` (center cell clamped at `δx/2`); repeated
/// calls at one center merge into a single weight.
pub fn add_log_singularity(field: &FieldGrid, beta: f64, center: &[f64]) -> Result<FieldGrid, GmcError> {
    field.lattice.check_point(center)?;
    if field.lattice.index_of(center).is_none() {
        return Err(GmcError::OffLattice(center.to_vec()));
    }
    if beta == 0.0 {
        return Ok(field.clone());
    }
    let mut out = field.clone();
    match out.singularities.iter_mut().find(|s| s.center == center) {
        Some(s) => s.beta += beta,
        None => out.singularities.push(Singularity { beta, center: center.to_vec() }),
    }
    out.singularities.retain(|s| s.beta != 0.0);
    out.rebuild();
    Ok(out)
}

/// `∫₀^π cos(κ cosθ) sin^{d−2}θ dθ / ∫₀^π sin^{d−2}θ dθ`, the Fourier symbol
/// of the unit-sphere average.
pub fn sphere_multiplier(kappa: f64, d: usize) -> Result<f64, GmcError> {
    if kappa == 0.0 {
        return Ok(1.0);
    }
    let c = c_of_d(d as u32)?;
    let k = d as i32 - 2;
    let opts = QuadOpts { abs_tol: 1e-12, rel_tol: 1e-12, max_intervals: 4000 };
    Ok(2.0 * c * integrate(|t| (kappa * t.cos()).cos() * t.sin().powi(k), 0.0, PI, opts)?)
}

/// `h_ε` at every site: the Gaussian part is averaged spectrally (exact sphere
/// average of its trigonometric interpolant), each singularity analytically.
pub fn regularized_values(field: &FieldGrid, epsilon: f64) -> Result<Vec<f64>, GmcError> {
    let lat = field.lattice;
    let min = 2.0 * lat.dx();
    if epsilon < min * (1.0 - 1e-12) {
        return Err(GmcError::BelowResolution { r: epsilon, min });
    }
    let mut buf: Vec<Complex64> = field.gaussian.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut buf, lat.d, lat.n, false);
    let mut cache: HashMap<i64, f64> = HashMap::new();
    let scale = 2.0 * PI * epsilon / lat.side;
    let mut err = None;
    for_each_k2(&lat, |idx, k2| {
        let m = *cache.entry(k2).or_insert_with(|| match sphere_multiplier(scale * (k2 as f64).sqrt(), lat.d) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                0.0
            }
        });
        buf[idx] *= m;
    });
    if let Some(e) = err {
        return Err(e);
    }
    fft_nd(&mut buf, lat.d, lat.n, true);
    let inv = 1.0 / lat.len() as f64;
    let mut out: Vec<f64> = buf.iter().map(|z| z.re * inv).collect();
    for s in &field.singularities {
        let c_idx = lat.index_of(&s.center).ok_or_else(|| GmcError::OffLattice(s.center.clone()))?;
        let mut kcache: HashMap<i64, f64> = HashMap::new();
        for (i, v) in out.iter_mut().enumerate() {
            let m2: i64 = lat.multi_index(i).iter().zip(&c_idx).map(|(&a, &b)| (a as i64 - b as i64).pow(2)).sum();
            let avg = match kcache.get(&m2) {
                Some(&a) => a,
                None => {
                    let rho = (m2 as f64).sqrt() * lat.dx();
                    let a = if m2 == 0 { -epsilon.ln() } else { kernel_diag(rho, epsilon, lat.d as u32)? };
                    kcache.insert(m2, a);
                    a
                }
            };
            *v += s.beta * avg;
        }
    }
    Ok(out)
}

/// GMC cell masses `ε^{γ²/2} e^{γ h_ε} δx^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureGrid {
    pub lattice: Lattice,
    pub masses: Vec<f64>,
    pub gamma: f64,
    pub epsilon: f64,
    pub singularities: Vec<Singularity>,
}

fn check_gamma(d: usize, gamma: f64) -> Result<(), GmcError> {
    if !(gamma > 0.0 && gamma < (2.0 * d as f64).sqrt()) {
        return Err(GmcError::Gamma { d, gamma });
    }
    Ok(())
}

/// Masses from precomputed `h_ε` site values.
pub fn measure_from_regularized(field: &FieldGrid, h_eps: &[f64], gamma: f64, epsilon: f64) -> Result<MeasureGrid, GmcError> {
    check_gamma(field.lattice.d, gamma)?;
    let lat = field.lattice;
    let log_pref = gamma * gamma / 2.0 * epsilon.ln() + lat.d as f64 * lat.dx().ln();
    Ok(MeasureGrid {
        lattice: lat,
        masses: h_eps.iter().map(|h| (gamma * h + log_pref).exp()).collect(),
        gamma,
        epsilon,
        singularities: field.singularities.clone(),
    })
}

pub fn gmc_measure(field: &FieldGrid, gamma: f64, epsilon: f64) -> Result<MeasureGrid, GmcError> {
    check_gamma(field.lattice.d, gamma)?;
    let h = regularized_values(field, epsilon)?;
    measure_from_regularized(field, &h, gamma, epsilon)
}

fn check_ball(lattice: &Lattice, x: &[f64], r: f64) -> Result<(), GmcError> {
    lattice.check_point(x)?;
    let half = lattice.side / 2.0;
    if x.iter().any(|c| c.abs() + r > half + 1e-12) {
        return Err(GmcError::SphereOutside { x: x.to_vec(), r, half });
    }
    Ok(())
}

/// Total mass of cells whose centers lie in the closed ball `B(x, r)`.
pub fn ball_mass(measure: &MeasureGrid, x: &[f64], r: f64) -> Result<f64, GmcError> {
    check_ball(&measure.lattice, x, r)?;
    Ok(measure.lattice.ball_sites(x, r).iter().map(|&(i, _)| measure.masses[i]).sum())
}

/// Ball masses at several radii, sharing one sweep over the largest ball.
pub fn ball_masses(measure: &MeasureGrid, x: &[f64], radii: &[f64]) -> Result<Vec<f64>, GmcError> {
    let r_max = radii.iter().cloned().fold(0.0, f64::max);
    check_ball(&measure.lattice, x, r_max)?;
    let mut out = vec![0.0; radii.len()];
    for (i, dist) in measure.lattice.ball_sites(x, r_max) {
        for (o, &r) in out.iter_mut().zip(radii) {
            if dist <= r * (1.0 + 1e-12) {
                *o += measure.masses[i];
            }
        }
    }
    Ok(out)
}

/// Where the balls of [`scaling_exponent`] are centred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterMode {
    Origin,
    Singularity,
}

impl CenterMode {
    pub fn point(&self, measure: &MeasureGrid) -> Vec<f64> {
        match self {
            CenterMode::Singularity if !measure.singularities.is_empty() => measure.singularities[0].center.clone(),
            _ => vec![0.0; measure.lattice.d],
        }
    }
}

/// Ensemble statistic of `ball_mass^q` whose log is regressed on `log r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Statistic {
    /// Mean with the given fraction trimmed from each tail.
    TrimmedMean(f64),
    /// Fixed quantile, for almost-sure scaling.
    Quantile(f64),
    /// Mean of `q log(mass)`, the typical (almost-sure) exponent.
    LogMean,
}

fn stat_log(values: &[f64], q: f64, stat: Statistic) -> f64 {
    match stat {
        Statistic::LogMean => mean(&values.iter().map(|m| q * m.ln()).collect::<Vec<_>>()),
        Statistic::TrimmedMean(p) => trimmed_mean(&values.iter().map(|m| m.powf(q)).collect::<Vec<_>>(), p).ln(),
        Statistic::Quantile(p) => q * quantile(values, p).ln(),
    }
}

/// Regression of the ensemble statistic of `mass^q` against `log r`.
/// `table[k][j]` is the ball mass of replicate `k` at `radii[j]`; the slope
/// error is a leave-one-replicate-out jackknife.
pub fn scaling_exponent(table: &[Vec<f64>], radii: &[f64], q: f64, stat: Statistic) -> Result<LineFit, GmcError> {
    scaling_exponent_blocked(table, radii, q, stat, 1)
}

/// [`scaling_exponent`] for tables holding `block` consecutive rows per
/// replicate (several ball centres in one field); the jackknife drops whole
/// replicates.
pub fn scaling_exponent_blocked(table: &[Vec<f64>], radii: &[f64], q: f64, stat: Statistic, block: usize) -> Result<LineFit, GmcError> {
    let (lo, hi) = radii.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    if radii.len() < 3 || hi < 4.0 * lo * (1.0 - 1e-12) {
        return Err(GmcError::Radii(radii.to_vec()));
    }
    let block = block.max(1);
    let x: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let slope_of = |skip: Option<usize>| -> f64 {
        let y: Vec<f64> = (0..radii.len())
            .map(|j| {
                let col: Vec<f64> = table.iter().enumerate().filter(|(i, _)| Some(i / block) != skip).map(|(_, r)| r[j]).collect();
                stat_log(&col, q, stat)
            })
            .collect();
        linear_fit(&x, &y).slope
    };
    let y: Vec<f64> = (0..radii.len()).map(|j| stat_log(&table.iter().map(|r| r[j]).collect::<Vec<_>>(), q, stat)).collect();
    let mut fit = linear_fit(&x, &y);
    let n = table.len().div_ceil(block);
    if n >= 3 {
        let jk: Vec<f64> = (0..n).map(|k| slope_of(Some(k))).collect();
        let m = mean(&jk);
        fit.slope_stderr = (((n - 1) as f64 / n as f64) * jk.iter().map(|s| (s - m).powi(2)).sum::<f64>()).sqrt();
    }
    Ok(fit)
}

/// `ξ_γ(q) = (d + γ²/2)q − γ²q²/2`.
pub fn multifractal_exponent(d: usize, gamma: f64, q: f64) -> f64 {
    (d as f64 + gamma * gamma / 2.0) * q - gamma * gamma * q * q / 2.0
}

/// Slope of `h_ε(x)` against `|log ε|` over the given radii.
pub fn thickness(field: &FieldGrid, x: &[f64], eps_list: &[f64]) -> Result<f64, GmcError> {
    if eps_list.len() < 3 {
        return Err(GmcError::Radii(eps_list.to_vec()));
    }
    let mut xs = Vec::with_capacity(eps_list.len());
    let mut ys = Vec::with_capacity(eps_list.len());
    for &e in eps_list {
        ys.push(spherical_average(field, x, e)?);
        xs.push(-e.ln());
    }
    Ok(linear_fit(&xs, &ys).slope)
}

/// `Σ_{cells ∈ B(x, radius)} max(|x − y|, δx/2)^{2−d} mass(y)`.
pub fn potential(measure: &MeasureGrid, x: &[f64], radius: f64, d: usize) -> Result<f64, GmcError> {
    if d == 2 {
        return Err(GmcError::PotentialDim);
    }
    let lat = measure.lattice;
    lat.check_point(x)?;
    if x.iter().any(|c| c.abs() > lat.side / 2.0) {
        return Err(GmcError::SphereOutside { x: x.to_vec(), r: 0.0, half: lat.side / 2.0 });
    }
    let floor = lat.dx() / 2.0;
    let p = 2.0 - d as f64;
    Ok(lat.ball_sites(x, radius).iter().map(|&(i, r)| r.max(floor).powf(p) * measure.masses[i]).sum())
}

/// Two Monte Carlo means with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatPair {
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
}

impl StatPair {
    pub fn from_samples(lhs: &[f64], rhs: &[f64]) -> Self {
        Self { lhs: mean(lhs), lhs_stderr: stderr(lhs), rhs: mean(rhs), rhs_stderr: stderr(rhs) }
    }

    /// Whether the `k`σ intervals intersect.
    pub fn overlap(&self, k: f64) -> bool {
        (self.lhs - self.rhs).abs() <= k * (self.lhs_stderr + self.rhs_stderr)
    }
}

/// Geometry of the coordinate-change comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoordinateChangeSetup {
    pub lattice: Lattice,
    pub gamma: f64,
    pub c: f64,
    /// Radius `a` of the test set `A = B(0, a)`.
    pub radius: f64,
    pub epsilon: f64,
}

/// Compares `μ_{𝐡,cε}(cA)` with `c^{d+γ²/2} e^{γ² Var(S_{log c})/2} μ_{𝐡,ε}(A)`
/// on the same field ensemble.
pub fn coordinate_change_check(setup: CoordinateChangeSetup, n_reps: usize, seed: RngSeed) -> Result<StatPair, GmcError> {
    let lat = setup.lattice;
    let d = lat.d;
    check_gamma(d, setup.gamma)?;
    let origin = vec![0.0; d];
    check_ball(&lat, &origin, setup.c * setup.radius)?;
    let g2 = setup.gamma * setup.gamma;
    let factor = setup.c.powf(d as f64 + g2 / 2.0) * (g2 * variance_increment(setup.c.ln(), d as u32)? / 2.0).exp();
    let pairs = (0..n_reps)
        .into_par_iter()
        .map(|k| -> Result<(f64, f64), GmcError> {
            let field = synthesize_lgf(lat, seed.child(k as u64))?;
            let big = gmc_measure(&field, setup.gamma, setup.c * setup.epsilon)?;
            let lhs = ball_mass(&big, &origin, setup.c * setup.radius)?;
            if setup.c == 1.0 {
                return Ok((lhs, lhs));
            }
            let small = gmc_measure(&field, setup.gamma, setup.epsilon)?;
            Ok((lhs, factor * ball_mass(&small, &origin, setup.radius)?))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (l, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(StatPair::from_samples(&l, &r))
}

/// Splits the field into its shell means around the origin (shell width
/// `δx`) and the residual; `radial + residual` reproduces the input.
pub fn radial_project(field: &FieldGrid) -> (FieldGrid, FieldGrid) {
    let lat = field.lattice;
    let shells: Vec<usize> = (0..lat.len())
        .map(|i| {
            let r = lat.site(i).iter().map(|c| c * c).sum::<f64>().sqrt();
            (r / lat.dx()).round() as usize
        })
        .collect();
    let n_shells = shells.iter().max().map_or(0, |m| m + 1);
    let (mut sum, mut count) = (vec![0.0; n_shells], vec![0usize; n_shells]);
    for (&s, &v) in shells.iter().zip(&field.values) {
        sum[s] += v;
        count[s] += 1;
    }
    let avg: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
    let radial: Vec<f64> = shells.iter().map(|&s| avg[s]).collect();
    let residual: Vec<f64> = field.values.iter().zip(&radial).map(|(v, r)| v - r).collect();
    let mk = |v: Vec<f64>| FieldGrid { pinned: field.pinned, ..FieldGrid::from_values(lat, v).expect("length matches") };
    (mk(radial), mk(residual))
}

/// Mean over sites and axes of `h(x) h(x + s e_a)` (periodic) for each shift `s` in cells.
pub fn axis_covariance(field: &FieldGrid, shifts: &[usize]) -> Vec<f64> {
    let lat = field.lattice;
    let v = &field.values;
    shifts
        .iter()
        .map(|&s| {
            let mut acc = 0.0;
            for a in 0..lat.d {
                let stride = lat.n.pow((lat.d - 1 - a) as u32);
                for i in 0..lat.len() {
                    let ia = (i / stride) % lat.n;
                    let j = i - ia * stride + ((ia + s) % lat.n) * stride;
                    acc += v[i] * v[j];
                }
            }
            acc / (lat.d * lat.len()) as f64
        })
        .collect()
}

const MAGIC: &[u8; 8] = b"LGFSNAP1";

/// Writes the little-endian snapshot: magic, `d`, `n`, `L`, seed, pinned
/// flag, singularities, then the row-major site values.
pub fn write_snapshot<W: Write>(field: &FieldGrid, mut w: W) -> Result<(), GmcError> {
    let lat = field.lattice;
    w.write_all(MAGIC)?;
    w.write_all(&(lat.d as u32).to_le_bytes())?;
    w.write_all(&(lat.n as u32).to_le_bytes())?;
    w.write_all(&lat.side.to_le_bytes())?;
    let (has, s, sid) = field.seed.map_or((0u8, 0, 0), |s| (1, s.seed, s.stream_id));
    w.write_all(&[has])?;
    w.write_all(&s.to_le_bytes())?;
    w.write_all(&sid.to_le_bytes())?;
    w.write_all(&[field.pinned as u8])?;
    w.write_all(&(field.singularities.len() as u32).to_le_bytes())?;
    for sg in &field.singularities {
        w.write_all(&sg.beta.to_le_bytes())?;
        for c in &sg.center {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    let mut buf = Vec::with_capacity(8 * field.values.len());
    for v in &field.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_arr<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], GmcError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<FieldGrid, GmcError> {
    if &read_arr::<8, _>(&mut r)? != MAGIC {
        return Err(GmcError::Snapshot("bad magic".into()));
    }
    let d = u32::from_le_bytes(read_arr(&mut r)?) as usize;
    let n = u32::from_le_bytes(read_arr(&mut r)?) as usize;
    let side = f64::from_le_bytes(read_arr(&mut r)?);
    let lattice = Lattice::new(d, n, side)?;
    let has = read_arr::<1, _>(&mut r)?[0];
    let s = u64::from_le_bytes(read_arr(&mut r)?);
    let sid = u64::from_le_bytes(read_arr(&mut r)?);
    let pinned = read_arr::<1, _>(&mut r)?[0] != 0;
    let n_sing = u32::from_le_bytes(read_arr(&mut r)?) as usize;
    let mut singularities = Vec::with_capacity(n_sing);
    for _ in 0..n_sing {
        let beta = f64::from_le_bytes(read_arr(&mut r)?);
        let center = (0..d).map(|_| read_arr(&mut r).map(f64::from_le_bytes)).collect::<Result<Vec<_>, _>>()?;
        singularities.push(Singularity { beta, center });
    }
    let mut raw = vec![0u8; 8 * lattice.len()];
    r.read_exact(&mut raw).map_err(|e| GmcError::Snapshot(format!("truncated values: {e}")))?;
    let values: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let mut field = FieldGrid::from_values(lattice, values)?;
    field.pinned = pinned;
    field.seed = (has == 1).then(|| RngSeed::new(s, sid));
    field.singularities = singularities;
    let sing: Vec<f64> = (0..lattice.len()).map(|i| field.singular_value(&lattice.site(i))).collect();
    field.gaussian = field.values.iter().zip(&sing).map(|(v, s)| v - s).collect();
    Ok(field)
}
