//! Small statistical toolkit for the Monte Carlo checks: moments, robust
//! location estimates, least-squares slopes, KS tests and energy distances.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::stochastic::RngSeed;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Standard error of the mean.
pub fn stderr(x: &[f64]) -> f64 {
    (var(x) / x.len() as f64).sqrt()
}

pub fn cov(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Sample variance with its standard error `√((m₄ − s⁴(n−3)/(n−1))/n)`.
pub fn var_with_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = mean(x);
    let s2 = var(x);
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    (s2, ((m4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt())
}

/// Mean after discarding the `trim` fraction from each tail.
pub fn trimmed_mean(x: &[f64], trim: f64) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let k = ((v.len() as f64) * trim).floor() as usize;
    mean(&v[k..v.len() - k])
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let h = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Ordinary least squares fit `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Residual-based standard error of the slope (0 for two points).
    pub slope_stderr: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_stderr = if n > 2.0 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    LineFit { intercept, slope, slope_stderr }
}

/// Kolmogorov survival function `Q_KS(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn ks_pvalue(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    kolmogorov_q((sq + 0.12 + 0.11 / sq) * d)
}

/// One-sample KS test against `N(mu, sigma²)`; returns (statistic, p-value).
pub fn ks_normal(x: &[f64], mu: f64, sigma: f64) -> (f64, f64) {
    let nd = Normal::new(mu, sigma).expect("valid normal");
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, xi) in v.iter().enumerate() {
        let f = nd.cdf(*xi);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    (d, ks_pvalue(d, n))
}

/// Two-sample KS test; returns (statistic, p-value).
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    a.sort_by(|p, q| p.total_cmp(q));
    b.sort_by(|p, q| p.total_cmp(q));
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < na && j < nb {
        let t = a[i].min(b[j]);
        while i < na && a[i] <= t {
            i += 1;
        }
        while j < nb && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let n_eff = (na * nb) as f64 / (na + nb) as f64;
    (d, ks_pvalue(d, n_eff))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_cross(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for a in x {
        for b in y {
            s += dist(a, b);
        }
    }
    s / (x.len() * y.len()) as f64
}

/// Energy distance `2E|X−Y| − E|X−X′| − E|Y−Y′|` between two empirical
/// multivariate samples (V-statistic form, so equal samples give exactly 0).
pub fn energy_distance(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    2.0 * mean_cross(x, y) - mean_cross(x, x) - mean_cross(y, y)
}

/// Permutation null distribution of the energy distance: returns the
/// requested upper quantile of the distances between random relabelings.
pub fn energy_permutation_band(x: &[Vec<f64>], y: &[Vec<f64>], n_perm: usize, level: f64, seed: RngSeed) -> f64 {
    let mut pool: Vec<Vec<f64>> = x.iter().chain(y).cloned().collect();
    let mut rng = seed.rng();
    let mut stats = Vec::with_capacity(n_perm);
    for _ in 0..n_perm {
        for i in (1..pool.len()).rev() {
            let j = rng.random_range(0..=i);
            pool.swap(i, j);
        }
        let (a, b) = pool.split_at(x.len());
        stats.push(energy_distance(a, b));
    }
    quantile(&stats, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::normal;

    #[test]
    fn moments_and_fit() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&x), 2.5);
        assert!((var(&x) - 5.0 / 3.0).abs() < 1e-15);
        let f = linear_fit(&x, &[3.0, 5.0, 7.0, 9.0]);
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!(f.slope_stderr < 1e-12);
        assert_eq!(quantile(&x, 0.5), 2.5);
        assert_eq!(trimmed_mean(&[0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 100.0], 0.1), 1.0);
    }

    #[test]
    fn ks_tests() {
        let mut rng = RngSeed::new(1, 0).rng();
        let x: Vec<f64> = (0..5000).map(|_| normal(&mut rng)).collect();
        let y: Vec<f64> = (0..5000).map(|_| normal(&mut rng)).collect();
        assert!(ks_normal(&x, 0.0, 1.0).1 > 0.01);
        assert!(ks_normal(&x, 0.3, 1.0).1 < 1e-6);
        assert!(ks_two_sample(&x, &y).1 > 0.01);
        let z: Vec<f64> = y.iter().map(|v| v + 0.2).collect();
        assert!(ks_two_sample(&x, &z).1 < 1e-6);
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 1e-3);
    }

    #[test]
    fn energy_distance_properties() {
        let mut rng = RngSeed::new(2, 0).rng();
        let x: Vec<Vec<f64>> = (0..200).map(|_| vec![normal(&mut rng), normal(&mut rng)]).collect();
        let y: Vec<Vec<f64>> = (0..200).map(|_| vec![normal(&mut rng) + 1.0, normal(&mut rng)]).collect();
        assert_eq!(energy_distance(&x, &x), 0.0);
        let band = energy_permutation_band(&x, &y, 50, 0.95, RngSeed::new(3, 0));
        assert!(energy_distance(&x, &y) > band);
    }
}
