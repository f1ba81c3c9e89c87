use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular Mel filters as a `bins x n_filters` matrix, with
/// `bins = n_fft / 2 + 1`. Filter edges and centres are equally spaced on
/// the Mel scale between `f_min` and `f_max`.
pub fn mel_filterbank_matrix(n_filters: usize, n_fft: usize, sample_rate: u32, f_min: f64, f_max: f64) -> Result<Tensor> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
        return Err(Error::Argument(format!(
            "need 0 <= f_min < f_max <= {nyquist}, got [{f_min}, {f_max}]"
        )));
    }
    if n_filters == 0 || n_fft < 2 {
        return Err(Error::Argument("need at least one filter and n_fft >= 2".into()));
    }
    let bins = n_fft / 2 + 1;
    let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_filters + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mut m = vec![0.0; bins * n_filters];
    for j in 0..n_filters {
        let (l, c, r) = (edges[j], edges[j + 1], edges[j + 2]);
        let mut any = false;
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let w = ((f - l) / (c - l)).min((r - f) / (r - c)).max(0.0);
            if w > 0.0 {
                any = true;
            }
            m[k * n_filters + j] = w;
        }
        if !any {
            return Err(Error::Config(format!(
                "Mel filter {j} ({l:.1}-{r:.1} Hz) contains no FFT bin at n_fft {n_fft}; use fewer filters or a larger FFT"
            )));
        }
    }
    Tensor::new(&[bins, n_filters], m)
}
