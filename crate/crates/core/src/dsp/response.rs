use super::fft::{fft_real, is_power_of_two};
use crate::error::{Error, Result};

/// Magnitude response on the grid `k * sample_rate / n_fft_pad`,
/// `k = 0..=n_fft_pad/2`, in dB relative to the filter's own maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    pub frequencies: Vec<f64>,
    pub db: Vec<f64>,
}

impl FrequencyResponse {
    pub fn resolution(&self) -> f64 {
        self.frequencies.get(1).copied().unwrap_or(0.0)
    }

    /// Index of the maximum, ties broken towards the lowest frequency.
    pub fn peak_index(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.db.iter().enumerate() {
            if v > self.db[best] {
                best = i;
            }
        }
        best
    }
}

/// Floor applied to exactly-zero response bins so every value stays finite.
const DB_FLOOR: f64 = -400.0;

pub fn frequency_response(filter: &[f64], sample_rate: u32, n_fft_pad: usize) -> Result<FrequencyResponse> {
    if filter.is_empty() || filter.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateFilter("filter has no non-zero tap".into()));
    }
    if !is_power_of_two(n_fft_pad) || n_fft_pad < 4 * filter.len() {
        return Err(Error::Argument(format!(
            "padding {n_fft_pad} must be a power of two of at least 4 x {} taps",
            filter.len()
        )));
    }
    let mags: Vec<f64> = fft_real(filter, n_fft_pad)?.iter().map(|c| c.norm()).collect();
    let peak = mags.iter().copied().fold(0.0, f64::max);
    let db = mags
        .iter()
        .map(|&m| if m > 0.0 { (20.0 * (m / peak).log10()).max(DB_FLOOR) } else { DB_FLOOR })
        .collect();
    let bin_hz = sample_rate as f64 / n_fft_pad as f64;
    let frequencies = (0..mags.len()).map(|k| k as f64 * bin_hz).collect();
    Ok(FrequencyResponse { frequencies, db })
}

/// Smallest valid padding for a filter of `kernel_length` taps.
pub fn default_padding(kernel_length: usize) -> usize {
    (4 * kernel_length).next_power_of_two()
}
