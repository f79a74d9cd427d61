//! Companion-matrix Langevin systems: construction, exact Gaussian transitions,
//! the augmented integrator system and its KL/Pinsker mixing bound.
//!
//! Every matrix function goes through the analytic eigenstructure: the
//! eigenvalues `−(d−2k)` are distinct integers and the eigenvectors of a
//! companion matrix are Vandermonde columns `(1, μ, μ², …)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::params::gamma_half;
use crate::stochastic::{normal, RngSeed};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LangevinError {
    #[error("companion systems need even d >= 4, got {0}")]
    Dimension(u32),
    #[error("drift matrix is not Hurwitz (eigenvalue {0} >= 0)")]
    NotHurwitz(f64),
    #[error("augmented covariance is numerically singular at t = {t} (guard t >= {guard})")]
    Conditioning { t: f64, guard: f64 },
    #[error("time step must be positive, got {0}")]
    Step(f64),
    #[error("KL divergence must be nonnegative, got {0}")]
    NegativeKl(f64),
    #[error("radius must be positive, got {0}")]
    Radius(f64),
    #[error("state has length {got}, expected {expected}")]
    Dim { expected: usize, got: usize },
}

/// Companion system `dX = A X dt + b dB` of order `p = (d−2)/2`.
#[derive(Debug, Clone)]
pub struct LangevinSystem {
    pub p: usize,
    /// `a_0 .. a_{p−1}` of the monic polynomial `λ^p + a_{p−1}λ^{p−1} + … + a_0`.
    pub a_coeffs: Vec<f64>,
    pub a: DMatrix<f64>,
    pub b_vec: DVector<f64>,
    /// Eigenvalues `−λ_k`, ordered `k = 1..p` (so `λ_k = d − 2k`).
    pub eigenvalues: Vec<f64>,
    /// `c_k = 1/∏_{j≠k}(λ_j − λ_k)`.
    pub weights: Vec<f64>,
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
}

/// Mean and covariance of a Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Build the order-`(d−2)/2` system with roots `−(d−2k)` and `b = 2^{d/2−1}Γ(d/2)`.
pub fn companion_system(d: u32) -> Result<LangevinSystem, LangevinError> {
    if d < 4 || d % 2 == 1 {
        return Err(LangevinError::Dimension(d));
    }
    let p = ((d - 2) / 2) as usize;
    let rates: Vec<f64> = (1..=p).map(|k| (d as usize - 2 * k) as f64).collect();
    // Expand ∏(λ + λ_k); coefficients stored low → high.
    let mut poly = vec![1.0];
    for &r in &rates {
        let mut next = vec![0.0; poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i] += r * c;
            next[i + 1] += c;
        }
        poly = next;
    }
    let a_coeffs = poly[..p].to_vec();
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p - 1 {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..p {
        a[(p - 1, j)] = -a_coeffs[j];
    }
    let mut b_vec = DVector::zeros(p);
    b_vec[p - 1] = 2f64.powi(d as i32 / 2 - 1) * gamma_half(d);
    let eigenvalues: Vec<f64> = rates.iter().map(|r| -r).collect();
    let weights = (0..p).map(|k| 1.0 / (0..p).filter(|&j| j != k).map(|j| rates[j] - rates[k]).product::<f64>()).collect();
    let v = DMatrix::from_fn(p, p, |i, k| eigenvalues[k].powi(i as i32));
    let v_inv = v.clone().try_inverse().expect("Vandermonde with distinct nodes is invertible");
    Ok(LangevinSystem { p, a_coeffs, a, b_vec, eigenvalues, weights, v, v_inv })
}

impl LangevinSystem {
    /// Eigenvector matrix `V` (Vandermonde columns).
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// `e^{At} = V e^{Dt} V^{−1}`.
    pub fn exp_a(&self, t: f64) -> DMatrix<f64> {
        let e = DMatrix::from_diagonal(&DVector::from_iterator(self.p, self.eigenvalues.iter().map(|m| (m * t).exp())));
        &self.v * e * &self.v_inv
    }

    fn w(&self) -> DVector<f64> {
        &self.v_inv * &self.b_vec
    }

    /// `∫₀^t e^{As} b bᵀ e^{Aᵀs} ds` in closed form (`t = ∞` gives `Σ_∞`).
    pub fn transition_cov(&self, t: f64) -> DMatrix<f64> {
        let w = self.w();
        let mu = &self.eigenvalues;
        let m = DMatrix::from_fn(self.p, self.p, |j, k| {
            let s = mu[j] + mu[k];
            let integral = if t.is_infinite() { -1.0 / s } else { (s * t).exp_m1() / s };
            w[j] * w[k] * integral
        });
        let c = &self.v * m * self.v.transpose();
        0.5 * (&c + c.transpose())
    }

    /// Autocovariance `E[X^{(1)}_{t+u} X^{(1)}_t] = b² Σ_{j,k} c_j c_k e^{−λ_k|u|}/(λ_j+λ_k)`
    /// of the first component in the `c_k` representation.
    pub fn first_component_autocov(&self, u: f64) -> f64 {
        let b = self.b_vec[self.p - 1];
        let mut s = 0.0;
        for j in 0..self.p {
            for k in 0..self.p {
                let (lj, lk) = (-self.eigenvalues[j], -self.eigenvalues[k]);
                s += self.weights[j] * self.weights[k] * (-lk * u.abs()).exp() / (lj + lk);
            }
        }
        b * b * s
    }
}

/// Stationary covariance solving `AΣ + ΣAᵀ + bbᵀ = 0`.
pub fn stationary_covariance(sys: &LangevinSystem) -> Result<DMatrix<f64>, LangevinError> {
    if let Some(&m) = sys.eigenvalues.iter().find(|&&m| m >= 0.0) {
        return Err(LangevinError::NotHurwitz(m));
    }
    Ok(sys.transition_cov(f64::INFINITY))
}

/// Symmetric square root factor `L` with `L Lᵀ = Σ` (negative eigenvalues clamped).
pub fn psd_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = cov.clone().symmetric_eigen();
    let sq = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()));
    &eig.eigenvectors * DMatrix::from_diagonal(&sq)
}

/// Exact transition over a fixed step, with the matrices precomputed.
#[derive(Debug, Clone)]
pub struct ExactStepper {
    pub mean_map: DMatrix<f64>,
    pub cov: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl ExactStepper {
    pub fn new(sys: &LangevinSystem, dt: f64) -> Result<Self, LangevinError> {
        if !(dt > 0.0) {
            return Err(LangevinError::Step(dt));
        }
        let cov = sys.transition_cov(dt);
        Ok(Self { mean_map: sys.exp_a(dt), factor: psd_factor(&cov), cov })
    }

    pub fn step<R: Rng>(&self, state: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_iterator(state.len(), (0..state.len()).map(|_| normal(rng)));
        &self.mean_map * state + &self.factor * z
    }
}

/// One exact Gaussian step: `N(e^{A dt} x, Σ(dt))`.
pub fn exact_step(sys: &LangevinSystem, state: &DVector<f64>, dt: f64, seed: RngSeed) -> Result<DVector<f64>, LangevinError> {
    if state.len() != sys.p {
        return Err(LangevinError::Dim { expected: sys.p, got: state.len() });
    }
    Ok(ExactStepper::new(sys, dt)?.step(state, &mut seed.rng()))
}

/// Conditional law of one exact step from `state`.
pub fn step_law(sys: &LangevinSystem, state: &DVector<f64>, dt: f64) -> Result<GaussianState, LangevinError> {
    let s = ExactStepper::new(sys, dt)?;
    Ok(GaussianState { mean: &s.mean_map * state, cov: s.cov })
}

/// Draw from the stationary law `N(0, Σ_∞)`.
pub fn sample_stationary<R: Rng>(sys: &LangevinSystem, rng: &mut R) -> DVector<f64> {
    let f = psd_factor(&sys.transition_cov(f64::INFINITY));
    let z = DVector::from_iterator(sys.p, (0..sys.p).map(|_| normal(rng)));
    f * z
}

/// Augmented drift `Ā = [[0, e₁ᵀ], [0, A]]`.
pub fn augmented_drift(sys: &LangevinSystem) -> DMatrix<f64> {
    let p = sys.p;
    let mut m = DMatrix::zeros(p + 1, p + 1);
    m[(0, 1)] = 1.0;
    m.view_mut((1, 1), (p, p)).copy_from(&sys.a);
    m
}

/// `e^{Āt}`: top-right row `∫₀^t (e^{As}e₁)ᵀ ds`, bottom-right `e^{At}`.
pub fn augmented_exp(sys: &LangevinSystem, t: f64) -> DMatrix<f64> {
    let p = sys.p;
    let mut m = DMatrix::zeros(p + 1, p + 1);
    m[(0, 0)] = 1.0;
    m.view_mut((1, 1), (p, p)).copy_from(&sys.exp_a(t));
    // ∫₀^t e^{As} ds = V diag((e^{μt}−1)/μ) V^{−1}; take its first row.
    let integ = DMatrix::from_diagonal(&DVector::from_iterator(p, sys.eigenvalues.iter().map(|m| (m * t).exp_m1() / m)));
    let full = sys.eigenvectors() * integ * &sys.v_inv;
    for j in 0..p {
        m[(0, j + 1)] = full[(0, j)];
    }
    m
}

/// Augmented covariance `Σ_t = ∫₀^t (e^{Ās}b̄)(e^{Ās}b̄)ᵀ ds`, exact via the
/// exponential-sum form `e^{Ās}b̄ = Σ_m e^{ν_m s} z_m` with `ν_0 = 0`.
pub fn augmented_cov(sys: &LangevinSystem, t: f64) -> DMatrix<f64> {
    let p = sys.p;
    let w = sys.w();
    let mut nus = vec![0.0];
    let mut zs = vec![DVector::zeros(p + 1)];
    for k in 0..p {
        let mu = sys.eigenvalues[k];
        zs[0][0] -= w[k] / mu;
        let mut z = DVector::zeros(p + 1);
        z[0] = w[k] / mu;
        for i in 0..p {
            z[i + 1] = w[k] * sys.eigenvectors()[(i, k)];
        }
        nus.push(mu);
        zs.push(z);
    }
    let mut c = DMatrix::zeros(p + 1, p + 1);
    for (a, za) in nus.iter().zip(&zs) {
        for (b, zb) in nus.iter().zip(&zs) {
            let s = a + b;
            let integral = if s == 0.0 { t } else { (s * t).exp_m1() / s };
            c += za * zb.transpose() * integral;
        }
    }
    0.5 * (&c + c.transpose())
}

/// Smallest `t` at which the augmented covariance is inverted.
pub const CONDITIONING_GUARD: f64 = 1e-4;

/// `½ Δmᵀ Σ_t^{−1} Δm` with `Δm = e^{Āt}(x − y)`.
pub fn kl_divergence(sys: &LangevinSystem, x: &[f64], y: &[f64], t: f64) -> Result<f64, LangevinError> {
    for v in [x, y] {
        if v.len() != sys.p + 1 {
            return Err(LangevinError::Dim { expected: sys.p + 1, got: v.len() });
        }
    }
    if !(t >= CONDITIONING_GUARD) {
        return Err(LangevinError::Conditioning { t, guard: CONDITIONING_GUARD });
    }
    if x == y {
        return Ok(0.0);
    }
    let dm = augmented_exp(sys, t) * DVector::from_iterator(x.len(), x.iter().zip(y).map(|(a, b)| a - b));
    let chol = augmented_cov(sys, t).cholesky().ok_or(LangevinError::Conditioning { t, guard: CONDITIONING_GUARD })?;
    let sol = chol.solve(&dm);
    Ok(0.5 * dm.dot(&sol))
}

/// Pinsker bound `√(KL/2)`.
pub fn tv_bound(kl: f64) -> Result<f64, LangevinError> {
    if kl < 0.0 {
        return Err(LangevinError::NegativeKl(kl));
    }
    Ok((kl / 2.0).sqrt())
}

/// Worst-pair Pinsker bound per time, with the pair that attains it.
#[derive(Debug, Clone, Serialize)]
pub struct MixingCurve {
    pub times: Vec<f64>,
    pub tv: Vec<f64>,
    pub worst_kl: Vec<f64>,
}

/// Pinsker curve for explicitly given initial pairs.
pub fn mixing_profile_pairs(sys: &LangevinSystem, pairs: &[(Vec<f64>, Vec<f64>)], t_grid: &[f64]) -> Result<MixingCurve, LangevinError> {
    let mut tv = Vec::with_capacity(t_grid.len());
    let mut worst_kl = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let mut worst: f64 = 0.0;
        for (x, y) in pairs {
            worst = worst.max(kl_divergence(sys, x, y, t)?);
        }
        worst_kl.push(worst);
        tv.push(tv_bound(worst)?);
    }
    Ok(MixingCurve { times: t_grid.to_vec(), tv, worst_kl })
}

/// Uniform draw from the ball `B(0, radius) ⊂ R^n`.
pub fn uniform_in_ball<R: Rng>(n: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    let g: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
    g.iter().map(|v| v * r / norm).collect()
}

/// Empirical analogue of `sup_{x,y ∈ B(0,R)} TV` over `n_pairs` sampled pairs.
pub fn mixing_profile(sys: &LangevinSystem, radius: f64, t_grid: &[f64], n_pairs: usize, seed: RngSeed) -> Result<MixingCurve, LangevinError> {
    if !(radius > 0.0) {
        return Err(LangevinError::Radius(radius));
    }
    let mut rng = seed.rng();
    let pairs: Vec<_> = (0..n_pairs).map(|_| (uniform_in_ball(sys.p + 1, radius, &mut rng), uniform_in_ball(sys.p + 1, radius, &mut rng))).collect();
    mixing_profile_pairs(sys, &pairs, t_grid)
}
