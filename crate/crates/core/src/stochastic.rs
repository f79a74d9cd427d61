//! Seeded Brownian motions, bridges, two-sided paths, the line-conditioned
//! reference path, and the Gaussian heat kernel.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StochasticError {
    #[error("time grid must be strictly increasing (violated at index {0})")]
    NonMonotone(usize),
    #[error("time grid must start at 0, starts at {0}")]
    NotFromZero(f64),
    #[error("time grid must contain 0")]
    MissingZero,
    #[error("time grid must span [0, {t_end}], spans [{lo}, {hi}]")]
    Coverage { t_end: f64, lo: f64, hi: f64 },
    #[error("heat kernel needs t > 0, got {0}")]
    NonPositiveTime(f64),
    #[error("horizon must be positive, got {0}")]
    Horizon(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dim { expected: usize, got: usize },
    #[error("conditioned sampling gave up after {0} rejected attempts")]
    Exhausted(u64),
}

/// Seed plus stream identifier of a counter-based (ChaCha) generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSeed {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Generator for this (seed, stream) pair: ChaCha20 keyed by `seed`, with
    /// `stream_id` selecting the independent 2^64-block stream.
    pub fn rng(&self) -> ChaCha20Rng {
        let mut r = ChaCha20Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream_id);
        r
    }

    /// Independent child stream, for replicate `k` of this experiment.
    pub fn child(&self, k: u64) -> Self {
        Self { seed: splitmix(self.seed ^ splitmix(self.stream_id.wrapping_add(0x5851_F42D))), stream_id: k }
    }
}

/// Discretized trajectory in `R^dim`; values are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub dim: usize,
    pub origin_index: usize,
}

impl Path {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Scalar value of a one-dimensional path.
    pub fn scalar(&self, i: usize) -> f64 {
        self.values[i * self.dim]
    }

    /// Linear interpolation of a one-dimensional path at time `t` (clamped).
    pub fn scalar_at(&self, t: f64) -> f64 {
        interp(&self.times, &self.values, t)
    }
}

/// Linear interpolation of `(xs, ys)` at `x`, clamped to the end values.
pub fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let j = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[j - 1], xs[j]);
    let w = (x - x0) / (x1 - x0);
    ys[j - 1] + w * (ys[j] - ys[j - 1])
}

/// `n+1` equispaced points on `[a, b]`.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / n as f64;
    (0..=n).map(|i| if i == n { b } else { a + i as f64 * h }).collect()
}

fn check_increasing(grid: &[f64]) -> Result<(), StochasticError> {
    match grid.windows(2).position(|w| !(w[1] > w[0])) {
        Some(i) => Err(StochasticError::NonMonotone(i + 1)),
        None => Ok(()),
    }
}

/// Standard normal draw.
pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `dim`-dimensional Brownian motion on `grid` (must start at 0).
pub fn sample_brownian(dim: usize, grid: &[f64], seed: RngSeed) -> Result<Path, StochasticError> {
    if grid.is_empty() || grid[0] != 0.0 {
        return Err(StochasticError::NotFromZero(grid.first().copied().unwrap_or(f64::NAN)));
    }
    check_increasing(grid)?;
    let mut rng = seed.rng();
    let mut values = vec![0.0; grid.len() * dim];
    for i in 1..grid.len() {
        let sd = (grid[i] - grid[i - 1]).sqrt();
        for k in 0..dim {
            values[i * dim + k] = values[(i - 1) * dim + k] + sd * normal(&mut rng);
        }
    }
    Ok(Path { times: grid.to_vec(), values, dim, origin_index: 0 })
}

/// Brownian bridge from `x` at 0 to `y` at `t_end`: `x + W_s − (s/t)(W_t − (y−x))`.
pub fn sample_bridge(dim: usize, t_end: f64, x: &[f64], y: &[f64], grid: &[f64], seed: RngSeed) -> Result<Path, StochasticError> {
    for p in [x, y] {
        if p.len() != dim {
            return Err(StochasticError::Dim { expected: dim, got: p.len() });
        }
    }
    let (lo, hi) = (grid.first().copied().unwrap_or(f64::NAN), grid.last().copied().unwrap_or(f64::NAN));
    if lo != 0.0 || (hi - t_end).abs() > 1e-12 * t_end.max(1.0) {
        return Err(StochasticError::Coverage { t_end, lo, hi });
    }
    let mut p = sample_brownian(dim, grid, seed)?;
    let n = grid.len();
    let wt: Vec<f64> = p.point(n - 1).to_vec();
    for (i, &t) in grid.iter().enumerate() {
        let s = t / t_end;
        for k in 0..dim {
            let v = &mut p.values[i * dim + k];
            *v = x[k] + *v - s * (wt[k] - (y[k] - x[k]));
        }
    }
    p.values[(n - 1) * dim..].copy_from_slice(y);
    Ok(p)
}

/// One-dimensional two-sided Brownian motion: independent motions glued at 0.
pub fn sample_two_sided(grid: &[f64], seed: RngSeed) -> Result<Path, StochasticError> {
    check_increasing(grid)?;
    let o = grid.iter().position(|&t| t == 0.0).ok_or(StochasticError::MissingZero)?;
    let mut rng = seed.rng();
    let mut values = vec![0.0; grid.len()];
    for i in o + 1..grid.len() {
        values[i] = values[i - 1] + (grid[i] - grid[i - 1]).sqrt() * normal(&mut rng);
    }
    for i in (0..o).rev() {
        values[i] = values[i + 1] + (grid[i + 1] - grid[i]).sqrt() * normal(&mut rng);
    }
    Ok(Path { times: grid.to_vec(), values, dim: 1, origin_index: o })
}

/// `(2πt)^{−d/2} exp(−|x−y|²/(2t))`.
pub fn heat_kernel(t: f64, x: &[f64], y: &[f64], dim: usize) -> Result<f64, StochasticError> {
    if !(t > 0.0) {
        return Err(StochasticError::NonPositiveTime(t));
    }
    if x.len() != dim || y.len() != dim {
        return Err(StochasticError::Dim { expected: dim, got: x.len().min(y.len()) });
    }
    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((2.0 * PI * t).powf(-(dim as f64) / 2.0) * (-r2 / (2.0 * t)).exp())
}

/// Accepted conditioned path together with the number of attempts it took.
#[derive(Debug, Clone)]
pub struct ConditionedSample {
    pub path: Path,
    pub attempts: u64,
}

/// Rejection sampler for a 1-d Brownian path on `grid ⊂ [0, horizon]` with
/// `B_t > −slope·t` at every grid time `t > 0`. Attempts are abandoned at the
/// first violating step.
pub fn sample_conditioned_above_line(slope: f64, horizon: f64, grid: &[f64], seed: RngSeed) -> Result<ConditionedSample, StochasticError> {
    const MAX_ATTEMPTS: u64 = 50_000_000;
    if !(horizon > 0.0) {
        return Err(StochasticError::Horizon(horizon));
    }
    if grid.is_empty() || grid[0] != 0.0 {
        return Err(StochasticError::NotFromZero(grid.first().copied().unwrap_or(f64::NAN)));
    }
    check_increasing(grid)?;
    let sd: Vec<f64> = grid.windows(2).map(|w| (w[1] - w[0]).sqrt()).collect();
    let mut rng = seed.rng();
    let mut values = vec![0.0; grid.len()];
    let mut attempts = 0;
    'attempt: while attempts < MAX_ATTEMPTS {
        attempts += 1;
        for i in 1..grid.len() {
            let v = values[i - 1] + sd[i - 1] * normal(&mut rng);
            if v <= -slope * grid[i] {
                continue 'attempt;
            }
            values[i] = v;
        }
        return Ok(ConditionedSample { path: Path { times: grid.to_vec(), values, dim: 1, origin_index: 0 }, attempts });
    }
    Err(StochasticError::Exhausted(attempts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_normal, mean, var};

    #[test]
    fn brownian_moments() {
        let grid = uniform_grid(0.0, 1.0, 4);
        let n = 10_000;
        let mut x1 = Vec::with_capacity(n);
        let mut xh = Vec::with_capacity(n);
        for k in 0..n {
            let p = sample_brownian(3, &grid, RngSeed::new(1, k as u64)).unwrap();
            x1.push(p.point(4)[0]);
            xh.push(p.point(2)[0]);
        }
        let v = var(&x1);
        assert!((v - 1.0).abs() < 3.0 * (2.0f64 / n as f64).sqrt());
        let cov: f64 = x1.iter().zip(&xh).map(|(a, b)| a * b).sum::<f64>() / n as f64 - mean(&x1) * mean(&xh);
        assert!((cov - 0.5).abs() < 3.0 * (0.75f64 / n as f64).sqrt() + 0.01);
    }

    #[test]
    fn single_point_and_errors() {
        let p = sample_brownian(3, &[0.0], RngSeed::new(0, 0)).unwrap();
        assert_eq!(p.values, vec![0.0; 3]);
        assert!(sample_brownian(1, &[0.0, 0.5, 0.5], RngSeed::new(0, 0)).is_err());
        assert!(sample_brownian(1, &[0.1, 0.5], RngSeed::new(0, 0)).is_err());
    }

    #[test]
    fn determinism() {
        let g = uniform_grid(0.0, 1.0, 100);
        let a = sample_brownian(2, &g, RngSeed::new(9, 3)).unwrap();
        let b = sample_brownian(2, &g, RngSeed::new(9, 3)).unwrap();
        let c = sample_brownian(2, &g, RngSeed::new(9, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bridge_moments() {
        let g = uniform_grid(0.0, 1.0, 10);
        let n = 10_000;
        let mut mid = Vec::new();
        let mut mid_shift = Vec::new();
        for k in 0..n {
            let p = sample_bridge(1, 1.0, &[0.0], &[0.0], &g, RngSeed::new(2, k)).unwrap();
            assert_eq!(p.scalar(10), 0.0);
            mid.push(p.scalar(5));
            let q = sample_bridge(2, 1.0, &[0.0, 0.0], &[1.0, 0.0], &g, RngSeed::new(3, k)).unwrap();
            mid_shift.push(q.point(5)[0]);
        }
        assert!((var(&mid) - 0.25).abs() < 3.0 * 0.25 * (2.0f64 / n as f64).sqrt());
        assert!((mean(&mid_shift) - 0.5).abs() < 3.0 * (0.25f64 / n as f64).sqrt());
    }

    #[test]
    fn two_sided_moments() {
        let g = uniform_grid(-2.0, 2.0, 8);
        let n = 10_000;
        let (mut m1, mut p1, mut m2) = (vec![], vec![], vec![]);
        for k in 0..n {
            let p = sample_two_sided(&g, RngSeed::new(4, k)).unwrap();
            assert_eq!(p.scalar(p.origin_index), 0.0);
            m1.push(p.scalar_at(-1.0));
            p1.push(p.scalar_at(1.0));
            m2.push(p.scalar_at(-2.0));
        }
        let cov: f64 = m1.iter().zip(&p1).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        assert!(cov.abs() < 3.0 / (n as f64).sqrt());
        assert!((var(&m2) - 2.0).abs() < 3.0 * 2.0 * (2.0f64 / n as f64).sqrt());
        assert!(sample_two_sided(&[-1.0, 1.0], RngSeed::new(0, 0)).is_err());
    }

    #[test]
    fn heat_kernel_values() {
        assert!((heat_kernel(1.0, &[0.0; 2], &[0.0; 2], 2).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((heat_kernel(1.0, &[0.0; 4], &[0.0; 4], 4).unwrap() - 0.0253303).abs() < 1e-7);
        assert!(heat_kernel(0.0, &[0.0], &[0.0], 1).is_err());
        let h = 0.02;
        let mut s = 0.0;
        for i in -400..=400 {
            for j in -400..=400 {
                s += heat_kernel(1.0, &[0.0, 0.0], &[i as f64 * h, j as f64 * h], 2).unwrap();
            }
        }
        assert!((s * h * h - 1.0).abs() < 1e-6);
    }

    #[test]
    fn conditioned_path() {
        let g = uniform_grid(0.0, 10.0, 10_000);
        let mut total = 0;
        for k in 0..20 {
            let c = sample_conditioned_above_line(1.0, 10.0, &g, RngSeed::new(5, k)).unwrap();
            total += c.attempts;
            for (i, &t) in g.iter().enumerate().skip(1) {
                assert!(c.path.scalar(i) > -t);
            }
        }
        assert!(total >= 20);
        assert!(sample_conditioned_above_line(1.0, 0.0, &g, RngSeed::new(0, 0)).is_err());
    }

    #[test]
    fn steep_line_makes_conditioning_vacuous() {
        let g = uniform_grid(0.0, 1.0, 100);
        let mut ks = vec![];
        for slope in [1.0, 5.0, 20.0] {
            let xs: Vec<f64> =
                (0..4000).map(|k| sample_conditioned_above_line(slope, 1.0, &g, RngSeed::new(6, k)).unwrap().path.scalar(100)).collect();
            ks.push(ks_normal(&xs, 0.0, 1.0).0);
        }
        assert!(ks[0] > ks[1] && ks[1] > ks[2], "{ks:?}");
    }
}
