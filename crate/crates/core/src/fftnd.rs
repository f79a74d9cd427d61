//! Thin helpers over `rustfft`: separable d-dimensional transforms on cubic
//! lattices and linear convolution of real sequences.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place unnormalized d-dimensional FFT of a row-major `n^d` array.
pub fn fft_nd(data: &mut [Complex64], d: usize, n: usize, inverse: bool) {
    assert_eq!(data.len(), n.pow(d as u32));
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    // Innermost axis is contiguous.
    fft.process_with_scratch(data, &mut scratch);
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..d - 1 {
        let stride = n.pow((d - 1 - axis) as u32);
        let block = stride * n;
        for start in (0..data.len()).step_by(block) {
            for off in 0..stride {
                let base = start + off;
                for (k, v) in line.iter_mut().enumerate() {
                    *v = data[base + k * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (k, v) in line.iter().enumerate() {
                    data[base + k * stride] = *v;
                }
            }
        }
    }
}

/// Full linear convolution `c[k] = Σ_j a[j] b[k−j]`, length `a.len()+b.len()−1`.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 {
        let mut c = vec![0.0; out_len];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                c[i + j] += x * y;
            }
        }
        return c;
    }
    let m = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut fa: Vec<Complex64> = (0..m).map(|i| Complex64::new(a.get(i).copied().unwrap_or(0.0), 0.0)).collect();
    let mut fb: Vec<Complex64> = (0..m).map(|i| Complex64::new(b.get(i).copied().unwrap_or(0.0), 0.0)).collect();
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    fa[..out_len].iter().map(|z| z.re / m as f64).collect()
}

/// Signed integer frequency of FFT bin `i` on an `n`-point axis.
pub fn freq(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_3d() {
        let n = 8;
        let orig: Vec<Complex64> = (0..n * n * n).map(|i| Complex64::new((i as f64 * 0.37).sin(), 0.0)).collect();
        let mut x = orig.clone();
        fft_nd(&mut x, 3, n, false);
        fft_nd(&mut x, 3, n, true);
        for (a, b) in x.iter().zip(&orig) {
            assert!((a / (n * n * n) as f64 - b).norm() < 1e-12);
        }
    }

    #[test]
    fn separable_plane_wave() {
        // The forward transform of e^{2πi(k·x)/n} is a single spike at k.
        let n = 8;
        let k = [1usize, 3];
        let mut x: Vec<Complex64> = (0..n * n)
            .map(|i| {
                let (a, b) = (i / n, i % n);
                let ph = 2.0 * std::f64::consts::PI * ((k[0] * a + k[1] * b) as f64) / n as f64;
                Complex64::new(ph.cos(), ph.sin())
            })
            .collect();
        fft_nd(&mut x, 2, n, false);
        let peak = k[0] * n + k[1];
        assert!((x[peak].re - (n * n) as f64).abs() < 1e-9);
        assert!(x.iter().enumerate().filter(|(i, _)| *i != peak).all(|(_, v)| v.norm() < 1e-9));
    }

    #[test]
    fn convolution_matches_direct() {
        let a: Vec<f64> = (0..100).map(|i| (i as f64).cos()).collect();
        let b: Vec<f64> = (0..70).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let c = convolve(&a, &b);
        for k in [0, 17, 99, 168] {
            let direct: f64 = (0..a.len()).filter(|&j| k >= j && k - j < b.len()).map(|j| a[j] * b[k - j]).sum();
            assert!((c[k] - direct).abs() < 1e-10);
        }
        assert_eq!(freq(5, 8), -3);
        assert_eq!(freq(3, 8), 3);
    }
}
