//! Parameter algebra shared by every module: `Q`, `α`, `α_c`, `c(d)` and the
//! closed-form spectral dimension.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("dimension must be at least 2, got {0}")]
    Dimension(u32),
    #[error("gamma = {gamma} outside (0, sqrt(2d)) = (0, {bound}) for d = {d}")]
    Gamma { d: u32, gamma: f64, bound: f64 },
    #[error("Q = {0} <= 2: no subcritical LBM exponent (alpha_c boundary Q = sqrt(2d))")]
    Supercritical(f64),
    #[error("beta = {beta} must be strictly below Q = {q}")]
    Beta { beta: f64, q: f64 },
    #[error("2 + alpha^2/2 - alpha*beta = {0} <= 0: divergent potential regime")]
    Divergent(f64),
    #[error("d = {0} must be even and >= 4 for the spherical/cone modules")]
    NotEven(u32),
}

/// `Γ(m/2)` for a positive integer `m`, computed exactly through the
/// half-integer recurrences `Γ(n) = (n−1)!` and `Γ(n+½) = (n−½)Γ(n−½)`.
pub fn gamma_half(m: u32) -> f64 {
    assert!(m > 0, "gamma_half needs a positive argument");
    let (mut g, mut x) = if m.is_multiple_of(2) { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    let target = m as f64 / 2.0;
    while x < target {
        g *= x;
        x += 1.0;
    }
    g
}

/// `Q = d/γ + γ/2`.
pub fn derive_q(d: u32, gamma: f64) -> Result<f64, ParamError> {
    if d < 2 {
        return Err(ParamError::Dimension(d));
    }
    let bound = (2.0 * d as f64).sqrt();
    if !(gamma > 0.0 && gamma <= bound * (1.0 + 1e-15)) {
        return Err(ParamError::Gamma { d, gamma, bound });
    }
    Ok(d as f64 / gamma + gamma / 2.0)
}

/// Smaller root of `2/α + α/2 = q`, i.e. `q − √(q²−4)`.
pub fn alpha_of_q(q: f64) -> Result<f64, ParamError> {
    if !(q > 2.0) {
        return Err(ParamError::Supercritical(q));
    }
    // 4/(q + √(q²−4)) is the same root without cancellation.
    Ok(4.0 / (q + (q * q - 4.0).sqrt()))
}

/// `α_c = √(2d) − √(2d−4)`.
pub fn alpha_critical(d: u32) -> Result<f64, ParamError> {
    if d < 2 {
        return Err(ParamError::Dimension(d));
    }
    let d = d as f64;
    Ok((2.0 * d).sqrt() - (2.0 * d - 4.0).sqrt())
}

/// Normalizing constant `c(d) = Γ(d/2) / (2√π Γ((d−1)/2))` of the spherical kernel.
pub fn c_of_d(d: u32) -> Result<f64, ParamError> {
    if d < 2 {
        return Err(ParamError::Dimension(d));
    }
    Ok(gamma_half(d) / (2.0 * PI.sqrt() * gamma_half(d - 1)))
}

/// `2 + 2(d−2)/(2 + α²/2 − αβ)`.
pub fn spectral_dimension_formula(d: u32, alpha: f64, beta: f64) -> Result<f64, ParamError> {
    let den = 2.0 + alpha * alpha / 2.0 - alpha * beta;
    if !(den > 0.0) {
        return Err(ParamError::Divergent(den));
    }
    Ok(2.0 + 2.0 * (d as f64 - 2.0) / den)
}

/// Divergence threshold `χ̄ = (d−2)/(2 + α²/2 − αβ)`.
pub fn chi_bar(d: u32, alpha: f64, beta: f64) -> Result<f64, ParamError> {
    Ok((spectral_dimension_formula(d, alpha, beta)? - 2.0) / 2.0)
}

/// Validated parameter bundle; downstream code assumes these invariants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub d: u32,
    pub gamma: f64,
    pub beta: f64,
    pub q_val: f64,
    pub alpha: f64,
    pub alpha_c: f64,
    /// `(d−2)/2` for even `d`, `None` otherwise.
    pub c_d: Option<u32>,
    /// True when the spherical/cone machinery may run (even `d ≥ 4`), or `d = 2`.
    pub even_only_flag: bool,
}

impl Params {
    pub fn new(d: u32, gamma: f64, beta: f64) -> Result<Self, ParamError> {
        let q_val = derive_q(d, gamma)?;
        let bound = (2.0 * d as f64).sqrt();
        if gamma >= bound {
            return Err(ParamError::Gamma { d, gamma, bound });
        }
        let alpha = alpha_of_q(q_val)?;
        if !(beta < q_val) {
            return Err(ParamError::Beta { beta, q: q_val });
        }
        let c_d = d.is_multiple_of(2).then(|| (d - 2) / 2);
        Ok(Self { d, gamma, beta, q_val, alpha, alpha_c: alpha_critical(d)?, c_d, even_only_flag: d.is_multiple_of(2) })
    }

    /// `Q − β`, the drift of the recentred radial process.
    pub fn q_minus_beta(&self) -> f64 {
        self.q_val - self.beta
    }

    /// `c_d` for the spherical/cone modules (even `d ≥ 4`).
    pub fn require_langevin_order(&self) -> Result<u32, ParamError> {
        match self.c_d {
            Some(p) if p >= 1 => Ok(p),
            _ => Err(ParamError::NotEven(self.d)),
        }
    }

    pub fn spectral_dimension(&self) -> Result<f64, ParamError> {
        spectral_dimension_formula(self.d, self.alpha, self.beta)
    }

    pub fn chi_bar(&self) -> Result<f64, ParamError> {
        chi_bar(self.d, self.alpha, self.beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_half_values() {
        assert_eq!(gamma_half(2), 1.0);
        assert_eq!(gamma_half(8), 6.0);
        assert!((gamma_half(1) - PI.sqrt()).abs() < 1e-15);
        assert!((gamma_half(5) - 0.75 * PI.sqrt()).abs() < 1e-15);
        // reference values from a 30-digit evaluation
        for (m, g) in [(7u32, 3.3233509704478426), (10, 24.0), (29, 23092317922.31424), (13, 287.88527781504433)] {
            assert!((gamma_half(m) - g).abs() <= 1e-14 * g, "m = {m}");
        }
    }

    #[test]
    fn derive_q_examples() {
        assert_eq!(derive_q(2, 2.0).unwrap(), 2.0);
        assert_eq!(derive_q(4, 1.0).unwrap(), 4.5);
        assert!((derive_q(4, 8f64.sqrt()).unwrap() - 8f64.sqrt()).abs() < 1e-14);
        assert!(derive_q(1, 1.0).is_err());
        assert!(derive_q(3, 0.0).is_err());
        assert!(derive_q(3, 3.0).is_err());
    }

    #[test]
    fn alpha_examples() {
        assert!((alpha_of_q(2.5).unwrap() - 1.0).abs() < 1e-15);
        let a = alpha_of_q(8f64.sqrt()).unwrap();
        assert!((a - (2.0 * 2f64.sqrt() - 2.0)).abs() < 1e-14);
        let a = alpha_of_q(4.5).unwrap();
        assert!((a - 0.468871).abs() < 1e-6);
        assert!((2.0 / a + a / 2.0 - 4.5).abs() < 1e-14);
        assert!(alpha_of_q(2.0).is_err());
    }

    #[test]
    fn alpha_critical_examples() {
        assert_eq!(alpha_critical(2).unwrap(), 2.0);
        assert!((alpha_critical(4).unwrap() - 0.828427).abs() < 1e-6);
        assert!((alpha_critical(6).unwrap() - 0.635674).abs() < 1e-6);
        for d in 2..=12 {
            let via_q = alpha_of_q((2.0 * d as f64).sqrt());
            let ac = alpha_critical(d).unwrap();
            match via_q {
                Ok(a) => assert!((a - ac).abs() <= 1e-12 * ac),
                Err(_) => assert_eq!(d, 2),
            }
        }
    }

    #[test]
    fn c_of_d_examples() {
        assert!((c_of_d(2).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((c_of_d(3).unwrap() - 0.25).abs() < 1e-15);
        assert!((c_of_d(4).unwrap() - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn spectral_dimension_examples() {
        assert_eq!(spectral_dimension_formula(2, 0.7, 0.3).unwrap(), 2.0);
        let a = 0.468871;
        assert!((spectral_dimension_formula(4, a, a / 2.0).unwrap() - 4.0).abs() < 1e-12);
        let p = Params::new(4, 1.0, 0.0).unwrap();
        assert!((p.spectral_dimension().unwrap() - 3.8958064164776163).abs() < 1e-12);
        assert!(spectral_dimension_formula(4, 1.0, 3.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(Params::new(4, 1.0, 4.5).is_err());
        assert!(Params::new(4, 8f64.sqrt(), 0.0).is_err());
        let p = Params::new(6, 1.0, 0.5).unwrap();
        assert_eq!(p.c_d, Some(2));
        assert_eq!(p.require_langevin_order().unwrap(), 2);
        assert!(Params::new(3, 1.0, 0.0).unwrap().require_langevin_order().is_err());
        assert!(Params::new(2, 1.0, 0.0).unwrap().require_langevin_order().is_err());
    }
}
