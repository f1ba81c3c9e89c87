use super::Complex64;
use crate::error::{Error, Result};
use rustfft::FftPlanner;

pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

pub fn next_power_of_two(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// One-sided spectrum (bins `0..=n/2`) of `signal` zero-padded to `n`.
pub fn fft_real(signal: &[f64], n: usize) -> Result<Vec<Complex64>> {
    if !is_power_of_two(n) {
        return Err(Error::Argument(format!("FFT size {n} is not a power of two")));
    }
    if signal.len() > n {
        return Err(Error::Argument(format!(
            "signal of length {} does not fit FFT size {n}",
            signal.len()
        )));
    }
    let mut buf: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.truncate(n / 2 + 1);
    Ok(buf)
}

/// Real inverse of a one-sided spectrum of FFT size `n` (Hermitian extension).
pub(crate) fn ifft_real(half: &[Complex64], n: usize) -> Vec<f64> {
    debug_assert_eq!(half.len(), n / 2 + 1);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[..half.len()].copy_from_slice(half);
    for k in 1..n / 2 {
        buf[n - k] = half[k].conj();
    }
    // DC and Nyquist of a real signal are real
    buf[0].im = 0.0;
    if n > 1 {
        buf[n / 2].im = 0.0;
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}
