//! Quantum-cone radial machinery: drifted first passages, recentred
//! processes, the tilde construction and the convergence diagnostics.

use nalgebra::DVector;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::gmc::{FieldGrid, GmcError};
use crate::langevin::{companion_system, sample_stationary, ExactStepper, LangevinError, LangevinSystem};
use crate::sphavg::{repr_from_driver, Method, RadialSample, SphError};
use crate::stats::{energy_distance, energy_permutation_band, quantile};
use crate::stochastic::{interp, normal, sample_brownian, sample_conditioned_above_line, uniform_grid, Path, RngSeed, StochasticError};

#[derive(Debug, Error)]
pub enum ConeError {
    #[error("no crossing of level -{b} within horizon {horizon}")]
    NoCrossing { b: f64, horizon: f64 },
    #[error("sample covers [{lo}, {hi}], need [{need_lo}, {need_hi}]")]
    Coverage { need_lo: f64, need_hi: f64, lo: f64, hi: f64 },
    #[error("drift Q - beta = {0} must be positive")]
    Drift(f64),
    #[error("d = {0}: cone processes need d = 2 or even d >= 4")]
    Dimension(u32),
    #[error("need at least two levels, got {0}")]
    Levels(usize),
    #[error("window [{0}, {1}] must contain 0")]
    Window(f64, f64),
    #[error(transparent)]
    Langevin(#[from] LangevinError),
    #[error(transparent)]
    Sph(#[from] SphError),
    #[error(transparent)]
    Stochastic(#[from] StochasticError),
    #[error(transparent)]
    Gmc(#[from] GmcError),
}

/// Doublings of the first-passage horizon before giving up.
pub const MAX_DOUBLINGS: u32 = 8;

fn first_crossing(times: &[f64], s: &[f64], q_minus_beta: f64, b: f64) -> Option<f64> {
    let start = times.partition_point(|&t| t < 0.0);
    let level = |j: usize| s[j] - q_minus_beta * times[j] + b;
    for j in start..times.len() {
        let v = level(j);
        if v <= 0.0 {
            if j == start {
                return Some(times[j]);
            }
            let u = level(j - 1);
            return Some(times[j - 1] + (times[j] - times[j - 1]) * u / (u - v));
        }
    }
    None
}

/// First time `t ≥ 0` with `S_t − (Q−β)t ≤ −b`, linearly refined on the crossing step.
pub fn hitting_sigma(sample: &RadialSample, q_minus_beta: f64, b: f64) -> Result<f64, ConeError> {
    if !(q_minus_beta > 0.0) {
        return Err(ConeError::Drift(q_minus_beta));
    }
    first_crossing(&sample.times, &sample.s_values, q_minus_beta, b).ok_or(ConeError::NoCrossing { b, horizon: *sample.times.last().unwrap_or(&0.0) })
}

/// `S_{b,s} = S_{s+σ} − S_σ` on `grid`; derivative columns are shifted only.
pub fn recenter(sample: &RadialSample, sigma: f64, grid: &[f64]) -> Result<RadialSample, ConeError> {
    let (lo, hi) = (sample.times[0], *sample.times.last().expect("nonempty"));
    let (need_lo, need_hi) = (sigma + grid[0], sigma + grid[grid.len() - 1]);
    let tol = 1e-9 * (1.0 + hi.abs());
    if need_lo < lo - tol || need_hi > hi + tol {
        return Err(ConeError::Coverage { need_lo, need_hi, lo, hi });
    }
    let at = |ys: &[f64], s: f64| interp(&sample.times, ys, s);
    let s0 = at(&sample.s_values, sigma);
    Ok(RadialSample {
        times: grid.to_vec(),
        s_values: grid.iter().map(|&s| if s == 0.0 { 0.0 } else { at(&sample.s_values, s + sigma) - s0 }).collect(),
        deriv_values: sample.deriv_values.iter().map(|col| grid.iter().map(|&s| at(col, s + sigma)).collect()).collect(),
        method: sample.method,
        truncation_bound: sample.truncation_bound,
    })
}

/// A recentred radial trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSample {
    pub b: f64,
    pub sigma_b: f64,
    pub trajectory: RadialSample,
    pub drift_beta: f64,
}

/// Radial-process geometry shared by the cone operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeSetup {
    pub d: u32,
    pub q_minus_beta: f64,
    pub beta: f64,
    /// Recentred window `[T, T_max]` (contains 0).
    pub window: (f64, f64),
    /// Grid step.
    pub h: f64,
}

impl ConeSetup {
    pub fn window_grid(&self) -> Vec<f64> {
        let (lo, hi) = self.window;
        let k_lo = (lo / self.h).round() as i64;
        let k_hi = (hi / self.h).round() as i64;
        (k_lo..=k_hi).map(|k| k as f64 * self.h).collect()
    }

    fn validate(&self) -> Result<(), ConeError> {
        if !(self.q_minus_beta > 0.0) {
            return Err(ConeError::Drift(self.q_minus_beta));
        }
        if self.d != 2 && (self.d < 4 || self.d % 2 == 1) {
            return Err(ConeError::Dimension(self.d));
        }
        if !(self.window.0 <= 0.0 && self.window.1 >= 0.0) {
            return Err(ConeError::Window(self.window.0, self.window.1));
        }
        Ok(())
    }
}

/// Sequential sampler of `(S_t, S'_t, …)` on a uniform grid: Brownian for
/// `d = 2`, exact Langevin steps of the derivative vector otherwise.
struct RadialStream<'a> {
    stepper: Option<&'a ExactStepper>,
    sqrt_h: f64,
    h: f64,
    state: Option<DVector<f64>>,
    s: f64,
}

impl RadialStream<'_> {
    fn step(&mut self, rng: &mut ChaCha20Rng) {
        match (self.stepper, self.state.as_mut()) {
            (Some(st), Some(x)) => {
                let prev = x[0];
                *x = st.step(x, rng);
                self.s += 0.5 * self.h * (prev + x[0]);
            }
            _ => self.s += self.sqrt_h * normal(rng),
        }
    }

    fn derivs(&self) -> Vec<f64> {
        self.state.as_ref().map_or(vec![], |x| x.iter().copied().collect())
    }
}

/// Engine holding the Langevin system and stepper for one `(d, h)`.
pub struct ConeEngine {
    pub setup: ConeSetup,
    sys: Option<LangevinSystem>,
    stepper: Option<ExactStepper>,
}

impl ConeEngine {
    pub fn new(setup: ConeSetup) -> Result<Self, ConeError> {
        setup.validate()?;
        if setup.d == 2 {
            return Ok(Self { setup, sys: None, stepper: None });
        }
        let sys = companion_system(setup.d)?;
        let stepper = ExactStepper::new(&sys, setup.h)?;
        Ok(Self { setup, sys: Some(sys), stepper: Some(stepper) })
    }

    fn stream(&self, state: Option<DVector<f64>>) -> RadialStream<'_> {
        RadialStream { stepper: self.stepper.as_ref(), sqrt_h: self.setup.h.sqrt(), h: self.setup.h, state, s: 0.0 }
    }

    /// Two-sided stationary `S` on `[t_min, ·)`, run forward until the drifted
    /// crossing of `−b` plus `tail` (horizon doubling, capped).
    pub fn sample_until_crossing(&self, b: f64, t_min: f64, tail: f64, seed: RngSeed) -> Result<(RadialSample, f64), ConeError> {
        let h = self.setup.h;
        let mu = self.setup.q_minus_beta;
        let mut rng = seed.rng();
        let x0 = self.sys.as_ref().map(|s| sample_stationary(s, &mut rng));
        // Backward half: the reversed derivative process is stationary with
        // the same law, started from the sign-flipped odd derivatives.
        let mut back_rng = seed.child(u64::MAX).rng();
        let flip = |x: &DVector<f64>| DVector::from_iterator(x.len(), x.iter().enumerate().map(|(k, v)| if k % 2 == 0 { -v } else { *v }));
        let n_back = (-t_min / h).round() as usize;
        let mut bwd = self.stream(x0.as_ref().map(&flip));
        let mut times = Vec::new();
        let mut s_vals = Vec::new();
        let mut derivs: Vec<Vec<f64>> = Vec::new();
        for _ in 0..n_back {
            bwd.step(&mut back_rng);
            times.push(-(times.len() as f64 + 1.0) * h);
            s_vals.push(-bwd.s);
            derivs.push(bwd.state.as_ref().map_or(vec![], |x| flip(x).iter().copied().collect()));
        }
        times.reverse();
        s_vals.reverse();
        derivs.reverse();
        let mut fwd = self.stream(x0);
        times.push(0.0);
        s_vals.push(0.0);
        derivs.push(fwd.derivs());
        let horizon_cap = (2.0 * b / mu + 10.0) * f64::powi(2.0, MAX_DOUBLINGS as i32);
        let mut sigma = None;
        let mut j = 0usize;
        loop {
            j += 1;
            fwd.step(&mut rng);
            let t = j as f64 * h;
            let prev_level = s_vals[s_vals.len() - 1] - mu * times[times.len() - 1] + b;
            times.push(t);
            s_vals.push(fwd.s);
            derivs.push(fwd.derivs());
            if sigma.is_none() {
                let v = fwd.s - mu * t + b;
                if v <= 0.0 {
                    sigma = Some(t - h + h * prev_level / (prev_level - v));
                } else if t > horizon_cap {
                    return Err(ConeError::NoCrossing { b, horizon: t });
                }
            }
            if let Some(sg) = sigma {
                if t >= sg + tail + h {
                    break;
                }
            }
        }
        let p = derivs[0].len();
        let deriv_values = (0..p).map(|k| derivs.iter().map(|r| r[k]).collect()).collect();
        let method = if self.setup.d == 2 { Method::Brownian } else { Method::Sde };
        let sample = RadialSample { times, s_values: s_vals, deriv_values, method, truncation_bound: None };
        Ok((sample, sigma.expect("crossing found")))
    }

    /// One recentred trajectory at level `b`.
    pub fn cone_sample(&self, b: f64, seed: RngSeed) -> Result<ConeSample, ConeError> {
        let (lo, hi) = self.setup.window;
        let (sample, _) = self.sample_until_crossing(b, lo, hi, seed)?;
        let sigma = hitting_sigma(&sample, self.setup.q_minus_beta, b)?;
        let trajectory = recenter(&sample, sigma, &self.setup.window_grid())?;
        Ok(ConeSample { b, sigma_b: sigma, trajectory, drift_beta: self.setup.beta })
    }
}

/// Two-sided driver `B̃`: for `t < 0` a Brownian path conditioned to stay
/// above the line `(Q−β)t`, for `t ≥ 0` a free Brownian motion.
pub fn conditioned_driver(q_minus_beta: f64, back: f64, forward: f64, h: f64, seed: RngSeed) -> Result<Path, ConeError> {
    let nb = (back / h).round() as usize;
    let nf = (forward / h).round() as usize;
    let neg = sample_conditioned_above_line(q_minus_beta, back, &uniform_grid(0.0, nb as f64 * h, nb), seed.child(0))?.path;
    let pos = sample_brownian(1, &uniform_grid(0.0, nf as f64 * h, nf), seed.child(1))?;
    let mut times: Vec<f64> = (1..=nb).rev().map(|k| -(k as f64) * h).collect();
    let mut values: Vec<f64> = (1..=nb).rev().map(|k| neg.values[k]).collect();
    times.extend((0..=nf).map(|k| k as f64 * h));
    values.extend_from_slice(&pos.values);
    Ok(Path { times, values, dim: 1, origin_index: nb })
}

/// `S̃` from a two-sided driver by the truncated representation, on `[0, t_max]`.
pub fn tilde_process(conditioned_path: &Path, d: u32, cutoff: f64, t_max: f64) -> Result<RadialSample, ConeError> {
    let h = conditioned_path.times[1] - conditioned_path.times[0];
    let n = (t_max / h).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
    Ok(repr_from_driver(conditioned_path, &grid, d, cutoff)?)
}

fn path_as_sample(p: &Path) -> RadialSample {
    RadialSample { times: p.times.clone(), s_values: p.values.clone(), deriv_values: vec![], method: Method::Brownian, truncation_bound: None }
}

/// `(τ̃_b, σ̃_b)`: drifted first passages below `−b` of `B̃` and of `S̃`.
pub fn stopping_pair(b_tilde_path: &Path, tilde_s: &RadialSample, q_minus_beta: f64, b: f64) -> Result<(f64, f64), ConeError> {
    Ok((hitting_sigma(&path_as_sample(b_tilde_path), q_minus_beta, b)?, hitting_sigma(tilde_s, q_minus_beta, b)?))
}

/// Knobs of the tilde construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TildeSetup {
    pub d: u32,
    pub q_minus_beta: f64,
    pub h: f64,
    pub cutoff: f64,
}

/// Samples `(B̃, S̃)` covering both first passages at level `b` plus `tail`,
/// doubling the forward horizon when needed.
pub fn tilde_pair_sample(setup: TildeSetup, b: f64, tail: f64, seed: RngSeed) -> Result<(Path, RadialSample), ConeError> {
    let mu = setup.q_minus_beta;
    let mut horizon = 2.0 * b / mu + 10.0 + tail;
    for _ in 0..=MAX_DOUBLINGS {
        let driver = conditioned_driver(mu, setup.cutoff, horizon, setup.h, seed)?;
        let s = tilde_process(&driver, setup.d, setup.cutoff, horizon)?;
        let tau = first_crossing(&driver.times, &driver.values, mu, b);
        let sig = first_crossing(&s.times, &s.s_values, mu, b);
        if let (Some(t1), Some(t2)) = (tau, sig) {
            if t1.max(t2) + tail <= horizon {
                return Ok((driver, s));
            }
        }
        horizon *= 2.0;
    }
    Err(ConeError::NoCrossing { b, horizon })
}

/// Empirical tail `P(|σ̃_b − τ̃_b| ≥ λ)` on a λ grid plus the 0.9-quantile of the gap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppingTail {
    pub b: f64,
    pub lambdas: Vec<f64>,
    pub tail: Vec<f64>,
    /// Smallest λ with tail below 0.1.
    pub lambda_10: f64,
}

pub fn stopping_tail(setup: TildeSetup, b: f64, lambdas: &[f64], n_reps: usize, seed: RngSeed) -> Result<StoppingTail, ConeError> {
    let gaps = (0..n_reps)
        .into_par_iter()
        .map(|k| -> Result<f64, ConeError> {
            let (drv, s) = tilde_pair_sample(setup, b, 0.0, seed.child(k as u64))?;
            let (tau, sigma) = stopping_pair(&drv, &s, setup.q_minus_beta, b)?;
            Ok((sigma - tau).abs())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let tail = lambdas.iter().map(|&l| gaps.iter().filter(|&&g| g >= l).count() as f64 / n_reps as f64).collect();
    Ok(StoppingTail { b, lambdas: lambdas.to_vec(), tail, lambda_10: quantile(&gaps, 0.9) })
}

/// Energy distance between `(S̃_{τ̃_b+t} − S̃_{τ̃_b})_t` and `(S̃_t − S̃_0)_t`
/// at the probe times, with a permutation null band.
pub fn tilde_recentring_invariance(setup: TildeSetup, b: f64, probes: &[f64], n_reps: usize, seed: RngSeed) -> Result<(f64, f64), ConeError> {
    let tail = probes.iter().cloned().fold(0.0, f64::max);
    let pairs = (0..n_reps)
        .into_par_iter()
        .map(|k| -> Result<(Vec<f64>, Vec<f64>), ConeError> {
            let (drv, s) = tilde_pair_sample(setup, b, tail, seed.child(k as u64))?;
            let tau = hitting_sigma(&path_as_sample(&drv), setup.q_minus_beta, b)?;
            let rec = recenter(&s, tau, probes)?;
            // An independent replicate for the unshifted law.
            let (_, s2) = tilde_pair_sample(setup, b, tail, seed.child((n_reps + k) as u64))?;
            Ok((rec.s_values, probes.iter().map(|&t| interp(&s2.times, &s2.s_values, t)).collect()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (x, y): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok((energy_distance(&x, &y), energy_permutation_band(&x, &y, 200, 0.99, seed.child(u64::MAX))))
}

/// Pairwise energy distances between recentred laws across levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceMatrix {
    pub b_list: Vec<f64>,
    pub probe_times: Vec<f64>,
    pub distances: Vec<Vec<f64>>,
}

/// Probe-time marginals of `n_reps` recentred trajectories at level `b`;
/// replicate `k` uses the same stream for every level.
pub fn probe_samples(engine: &ConeEngine, b: f64, probes: &[f64], n_reps: usize, seed: RngSeed) -> Result<Vec<Vec<f64>>, ConeError> {
    (0..n_reps)
        .into_par_iter()
        .map(|k| {
            let c = engine.cone_sample(b, seed.child(k as u64))?;
            Ok(probes.iter().map(|&s| interp(&c.trajectory.times, &c.trajectory.s_values, s)).collect())
        })
        .collect()
}

pub fn convergence_diagnostic(
    engine: &ConeEngine,
    b_list: &[f64],
    probes: &[f64],
    n_reps: usize,
    seed: RngSeed,
) -> Result<DistanceMatrix, ConeError> {
    if b_list.len() < 2 {
        return Err(ConeError::Levels(b_list.len()));
    }
    let samples = b_list.iter().map(|&b| probe_samples(engine, b, probes, n_reps, seed)).collect::<Result<Vec<_>, _>>()?;
    let n = b_list.len();
    let mut distances = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let e = energy_distance(&samples[i], &samples[j]);
            distances[i][j] = e;
            distances[j][i] = e;
        }
    }
    Ok(DistanceMatrix { b_list: b_list.to_vec(), probe_times: probes.to_vec(), distances })
}

/// `d = 2` limit law at the probe times: free Brownian motion for `s > 0`,
/// Brownian motion conditioned above `(Q−β)s` for `s < 0`.
pub fn d2_reference(q_minus_beta: f64, probes: &[f64], h: f64, n_reps: usize, seed: RngSeed) -> Result<Vec<Vec<f64>>, ConeError> {
    let back = probes.iter().cloned().fold(0.0f64, f64::min).abs();
    let fwd = probes.iter().cloned().fold(0.0f64, f64::max);
    // Conditioning beyond the probes decays like e^{−2(Q−β)²r}; keep a margin.
    let margin = 8.0 / q_minus_beta.powi(2) + 1.0;
    (0..n_reps)
        .into_par_iter()
        .map(|k| {
            let p = conditioned_driver(q_minus_beta, back + margin, fwd + h, h, seed.child(k as u64))?;
            Ok(probes.iter().map(|&s| interp(&p.times, &p.values, s)).collect())
        })
        .collect()
}

/// The field `S_{b,s} + βs` on the sphere of radius `e^{−s}` plus `sphere_part`;
/// the origin cell uses radius `δx/2`.
pub fn cone_field(radial: &ConeSample, sphere_part: &FieldGrid, beta: f64) -> Result<FieldGrid, ConeError> {
    let lat = sphere_part.lattice;
    let tr = &radial.trajectory;
    let (lo, hi) = (tr.times[0], *tr.times.last().expect("nonempty"));
    let r_max = (lat.d as f64).sqrt() * lat.side / 2.0;
    let (need_lo, need_hi) = (-r_max.ln(), -(lat.dx() / 2.0).ln());
    if need_lo < lo || need_hi > hi {
        return Err(ConeError::Coverage { need_lo, need_hi, lo, hi });
    }
    let values = (0..lat.len())
        .map(|i| {
            let r = lat.site(i).iter().map(|c| c * c).sum::<f64>().sqrt().max(lat.dx() / 2.0);
            let s = -r.ln();
            interp(&tr.times, &tr.s_values, s) + beta * s + sphere_part.values[i]
        })
        .collect();
    Ok(FieldGrid::from_values(lat, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmc::{spherical_average, thickness, Lattice};
    use crate::sphavg::variance_increment;
    use crate::stats::{ks_normal, mean, var};

    fn sample_of(times: Vec<f64>, s: Vec<f64>) -> RadialSample {
        RadialSample { times, s_values: s, deriv_values: vec![], method: Method::Brownian, truncation_bound: None }
    }

    #[test]
    fn hitting_examples() {
        let g = uniform_grid(0.0, 20.0, 2000);
        let zero = sample_of(g.clone(), vec![0.0; g.len()]);
        assert!((hitting_sigma(&zero, 2.0, 5.0).unwrap() - 2.5).abs() < 1e-12);
        let lin = sample_of(g.clone(), g.clone());
        assert!((hitting_sigma(&lin, 2.0, 3.0).unwrap() - 3.0).abs() < 1e-12);
        let p = sample_brownian(1, &g, RngSeed::new(1, 0)).unwrap();
        let bm = sample_of(g.clone(), p.values);
        let mut prev = 0.0;
        for b in [0.5, 1.0, 2.0, 4.0] {
            let s = hitting_sigma(&bm, 1.0, b).unwrap();
            assert!(s >= prev);
            prev = s;
        }
        assert!(hitting_sigma(&zero, 2.0, 100.0).is_err());
        assert!(hitting_sigma(&zero, 0.0, 1.0).is_err());
    }

    #[test]
    fn recenter_examples() {
        let g = uniform_grid(0.0, 10.0, 1000);
        let lin = sample_of(g.clone(), g.iter().map(|t| 0.7 * t).collect());
        let w = uniform_grid(-1.0, 2.0, 30);
        let r = recenter(&lin, 3.0, &w).unwrap();
        for (s, v) in w.iter().zip(&r.s_values) {
            assert!((v - 0.7 * s).abs() < 1e-12);
        }
        let p = sample_brownian(1, &g, RngSeed::new(2, 0)).unwrap();
        let bm = sample_of(g.clone(), p.values);
        let r = recenter(&bm, 2.5, &w).unwrap();
        assert_eq!(r.s_values[10], 0.0);
        // σ then 0 composes
        let r0 = recenter(&r, 0.0, &[-1.0, 0.0, 1.0]).unwrap();
        assert!((r0.s_values[2] - r.s_values[20]).abs() < 1e-12);
        assert!(recenter(&bm, 0.5, &w).is_err());
    }

    #[test]
    fn cone_sample_invariants() {
        for d in [2u32, 4, 6] {
            let setup = ConeSetup { d, q_minus_beta: 2.0, beta: 1.0, window: (-1.0, 2.0), h: 0.01 };
            let e = ConeEngine::new(setup).unwrap();
            let (raw, sigma) = e.sample_until_crossing(5.0, -1.0, 2.0, RngSeed::new(3, d as u64)).unwrap();
            let at = interp(&raw.times, &raw.s_values, sigma) - 2.0 * sigma;
            assert!((at + 5.0).abs() < 1e-9);
            let c = e.cone_sample(5.0, RngSeed::new(3, d as u64)).unwrap();
            assert!((c.sigma_b - sigma).abs() < 1e-9);
            let z = c.trajectory.times.iter().position(|&t| t == 0.0).unwrap();
            assert_eq!(c.trajectory.s_values[z], 0.0);
            assert_eq!(c.trajectory.deriv_values.len(), ((d - 2) / 2) as usize);
        }
        assert!(ConeEngine::new(ConeSetup { d: 5, q_minus_beta: 1.0, beta: 0.0, window: (0.0, 1.0), h: 0.1 }).is_err());
    }

    #[test]
    fn two_sided_stream_is_stationary() {
        // Var(S_{−1}) = Var(S_1) = variance_increment(1, 4) for the backward half.
        let setup = ConeSetup { d: 4, q_minus_beta: 50.0, beta: 0.0, window: (-1.0, 0.0), h: 0.01 };
        let e = ConeEngine::new(setup).unwrap();
        let n = 4000;
        let xs: Vec<f64> = (0..n)
            .map(|k| {
                let (s, _) = e.sample_until_crossing(0.01, -1.0, 0.0, RngSeed::new(4, k)).unwrap();
                s.s_values[0]
            })
            .collect();
        let v = variance_increment(1.0, 4).unwrap();
        assert!((var(&xs) - v).abs() < 3.0 * v * (2.0 / n as f64).sqrt(), "{} vs {v}", var(&xs));
    }

    #[test]
    fn d2_positive_side_is_free_brownian() {
        let setup = ConeSetup { d: 2, q_minus_beta: 1.5, beta: 0.5, window: (0.0, 1.0), h: 0.001 };
        let e = ConeEngine::new(setup).unwrap();
        let x: Vec<f64> = probe_samples(&e, 5.0, &[1.0], 2000, RngSeed::new(5, 0)).unwrap().into_iter().map(|v| v[0]).collect();
        let (_, p) = ks_normal(&x, 0.0, 1.0);
        assert!(p > 0.001, "p = {p}");
    }

    #[test]
    fn zero_driver_pair() {
        let g: Vec<f64> = (-1500..=3000).map(|k| k as f64 * 0.01).collect();
        let drv = Path { times: g, values: vec![0.0; 4501], dim: 1, origin_index: 1500 };
        let s = tilde_process(&drv, 4, 15.0, 30.0).unwrap();
        assert!(s.s_values.iter().all(|&v| v == 0.0));
        let (t, sg) = stopping_pair(&drv, &s, 2.0, 5.0).unwrap();
        assert!((t - 2.5).abs() < 1e-9 && (sg - 2.5).abs() < 1e-9);
    }

    #[test]
    fn tilde_free_side_variance() {
        let setup = TildeSetup { d: 4, q_minus_beta: 2.0, h: 0.01, cutoff: 15.0 };
        let n = 1500;
        let xs: Vec<f64> = (0..n)
            .map(|k| {
                let drv = conditioned_driver(setup.q_minus_beta, setup.cutoff, 1.0, setup.h, RngSeed::new(6, k)).unwrap();
                let s = tilde_process(&drv, 4, setup.cutoff, 1.0).unwrap();
                s.s_values[s.s_values.len() - 1]
            })
            .collect();
        // S̃_1 − S̃_0 uses the conditioned past only through the kernel tail;
        // its variance stays near variance_increment(1, 4) (the mean shifts).
        let v = variance_increment(1.0, 4).unwrap();
        assert!((var(&xs) - v).abs() < 4.0 * v * (2.0 / n as f64).sqrt() + 0.02, "{} vs {v}", var(&xs));
        let _ = mean(&xs);
    }

    #[test]
    fn distance_identity() {
        let setup = ConeSetup { d: 4, q_minus_beta: 2.0, beta: 1.0, window: (-0.5, 1.0), h: 0.02 };
        let e = ConeEngine::new(setup).unwrap();
        let m = convergence_diagnostic(&e, &[3.0, 3.0, 6.0], &[-0.5, 0.5, 1.0], 50, RngSeed::new(7, 0)).unwrap();
        assert_eq!(m.distances[0][1], 0.0);
        assert!(m.distances[0][2] > 0.0);
        assert!(convergence_diagnostic(&e, &[3.0], &[0.5], 5, RngSeed::new(7, 0)).is_err());
    }

    #[test]
    fn cone_field_examples() {
        let lat = Lattice::new(4, 32, 4.0).unwrap();
        let zero = FieldGrid::constant(lat, 0.0);
        let grid: Vec<f64> = (-200..=450).map(|k| k as f64 * 0.01).collect();
        let flat = ConeSample { b: 1.0, sigma_b: 0.5, trajectory: sample_of(grid.clone(), vec![0.0; grid.len()]), drift_beta: 0.0 };
        let f = cone_field(&flat, &zero, 0.0).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
        let beta = 0.5;
        let f = cone_field(&flat, &zero, beta).unwrap();
        let th = thickness(&f, &[0.0; 4], &[1.0, 0.75, 0.5]).unwrap();
        assert!((th - beta).abs() < 0.05, "{th}");
        // radial-only: spherical average at radius e^{−s} returns S_{b,s} + βs
        let wavy = ConeSample { trajectory: sample_of(grid.clone(), grid.iter().map(|s| 0.3 * (2.0 * s).sin()).collect()), ..flat };
        let f = cone_field(&wavy, &zero, beta).unwrap();
        for s in [0.0f64, 0.5] {
            let want = 0.3 * (2.0 * s).sin() + beta * s;
            let got = spherical_average(&f, &[0.0; 4], (-s).exp()).unwrap();
            assert!((got - want).abs() < 0.03, "{s}: {got} vs {want}");
        }
        let short = ConeSample { trajectory: sample_of(vec![0.0, 1.0], vec![0.0, 0.0]), ..flat };
        assert!(cone_field(&short, &zero, 0.0).is_err());
    }
}
