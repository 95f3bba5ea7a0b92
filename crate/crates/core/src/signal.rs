//! 1-D spectral helpers for trajectory signals.

use rustfft::{num_complex::Complex, FftPlanner};

/// Magnitudes of the positive-frequency DFT bins of `x` after removing the
/// mean. Entry `k` (for `k` in `0..=len/2`) is `|F(k)|`; entry 0 is always 0
/// because of the DC removal.
pub fn dft_magnitudes(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    (0..=n / 2).map(|k| buf[k].norm()).collect()
}

/// Sum of `|F(k)|` (or `|F(k)|^2` when `energy` is set) over `lo..=hi`,
/// clipped to the available positive bins.
pub fn band_sum(mags: &[f64], lo: usize, hi: usize, energy: bool) -> f64 {
    let hi = hi.min(mags.len().saturating_sub(1));
    if lo > hi {
        return 0.0;
    }
    mags[lo..=hi]
        .iter()
        .map(|m| if energy { m * m } else { *m })
        .sum()
}

/// Synthesizes a length-`len` real signal whose DFT support is exactly the
/// bins `lo..=hi` (mirrored band), from per-bin amplitudes and phases.
/// Returns zeros when the band is empty.
pub fn band_limited_signal(
    len: usize,
    lo: usize,
    hi: usize,
    mut bin_params: impl FnMut(usize) -> (f64, f64),
) -> Vec<f64> {
    let nyquist = len / 2;
    let hi = hi.min(nyquist);
    let mut out = vec![0.0; len];
    if lo > hi || lo == 0 {
        return out;
    }
    for k in lo..=hi {
        let (amp, phase) = bin_params(k);
        let w = 2.0 * std::f64::consts::PI * k as f64 / len as f64;
        for (t, v) in out.iter_mut().enumerate() {
            *v += amp * (w * t as f64 + phase).cos();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_limited_support_is_exact() {
        let sig = band_limited_signal(64, 2, 6, |k| (1.0 / k as f64, 0.3 * k as f64));
        let mags = dft_magnitudes(&sig);
        let inside = band_sum(&mags, 2, 6, true);
        let total = band_sum(&mags, 1, 32, true);
        assert!(total > 0.0);
        assert!((inside / total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_bin_sinusoid() {
        let n = 64;
        let sig: Vec<f64> = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * 3.0 * t as f64 / n as f64).sin())
            .collect();
        let mags = dft_magnitudes(&sig);
        assert!(mags[3] > 1.0);
        for (k, m) in mags.iter().enumerate() {
            if k != 3 {
                assert!(*m < 1e-9, "bin {k} leaked {m}");
            }
        }
    }

    #[test]
    fn dc_removed() {
        let sig = vec![5.0; 32];
        let mags = dft_magnitudes(&sig);
        assert!(mags.iter().all(|m| *m < 1e-12));
    }
}
