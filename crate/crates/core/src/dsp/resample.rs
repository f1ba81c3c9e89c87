use super::Waveform;
use crate::error::{Error, Result};

/// Plays `w` back `factor` times faster (pitch and tempo together) using
/// linear interpolation. The output has `round(n / factor)` samples.
pub fn resample_speed(w: &Waveform, factor: f64) -> Result<Waveform> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::Argument(format!("speed factor must be positive, got {factor}")));
    }
    if factor == 1.0 || w.is_empty() {
        return Ok(w.clone());
    }
    let x = w.samples();
    let n = x.len();
    let m = ((n as f64 / factor).round() as usize).max(1);
    let last = (n - 1) as f64;
    let out = (0..m)
        .map(|i| {
            let pos = (i as f64 * factor).min(last);
            let j = pos.floor() as usize;
            let frac = pos - j as f64;
            if j + 1 < n {
                x[j] * (1.0 - frac) + x[j + 1] * frac
            } else {
                x[j]
            }
        })
        .collect();
    Waveform::new(out, w.sample_rate())
}
