use super::fft::{fft_real, ifft_real, is_power_of_two, next_power_of_two};
use super::{Complex64, Waveform};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Framing parameters. `n_fft` defaults to the next power of two at or above
/// the window size (512 for a 400-sample window).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_size: usize,
    pub hop: usize,
    pub n_fft: usize,
}

impl StftConfig {
    pub fn new(window_size: usize, hop: usize) -> Self {
        Self {
            window_size,
            hop,
            n_fft: next_power_of_two(window_size),
        }
    }

    pub fn with_n_fft(mut self, n_fft: usize) -> Self {
        self.n_fft = n_fft;
        self
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// `floor((n - window) / hop) + 1`, or 0 when the signal is too short.
    pub fn frames(&self, n: usize) -> usize {
        if n < self.window_size || self.hop == 0 {
            0
        } else {
            (n - self.window_size) / self.hop + 1
        }
    }

    fn validate(&self) -> Result<()> {
        if self.window_size == 0 || self.hop == 0 {
            return Err(Error::Argument("window size and hop must be positive".into()));
        }
        if !is_power_of_two(self.n_fft) || self.n_fft < self.window_size {
            return Err(Error::Argument(format!(
                "n_fft {} must be a power of two no smaller than the window {}",
                self.n_fft, self.window_size
            )));
        }
        Ok(())
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Frames x one-sided bins of complex STFT values.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    frames: usize,
    config: StftConfig,
    values: Vec<Complex64>,
}

impl ComplexSpectrogram {
    pub fn new(config: StftConfig, frames: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != frames * config.bins() {
            return Err(Error::Shape(format!(
                "{} values for {frames} frames x {} bins",
                values.len(),
                config.bins()
            )));
        }
        Ok(Self { frames, config, values })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.config.bins()
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn n_fft(&self) -> usize {
        self.config.n_fft
    }

    pub fn window_size(&self) -> usize {
        self.config.window_size
    }

    pub fn hop(&self) -> usize {
        self.config.hop
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        let b = self.bins();
        &self.values[t * b..(t + 1) * b]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex64] {
        let b = self.bins();
        &mut self.values[t * b..(t + 1) * b]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|c| *c *= a);
    }

    /// Magnitudes, row-major `frames x bins`.
    pub fn magnitude(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.norm()).collect()
    }

    pub fn power(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn real(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.re).collect()
    }

    pub fn imag(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.im).collect()
    }
}

/// Hann-windowed STFT without boundary padding.
pub fn stft(w: &Waveform, config: StftConfig) -> Result<ComplexSpectrogram> {
    config.validate()?;
    let frames = config.frames(w.len());
    if frames == 0 {
        return Err(Error::EmptyOutput(format!(
            "signal of {} samples is shorter than one {}-sample window",
            w.len(),
            config.window_size
        )));
    }
    let window = hann_window(config.window_size);
    let x = w.samples();
    let mut values = Vec::with_capacity(frames * config.bins());
    let mut frame = vec![0.0; config.window_size];
    for t in 0..frames {
        let start = t * config.hop;
        for (i, f) in frame.iter_mut().enumerate() {
            *f = x[start + i] * window[i];
        }
        values.extend(fft_real(&frame, config.n_fft)?);
    }
    ComplexSpectrogram::new(config, frames, values)
}

/// Weighted overlap-add inverse with the analysis window as synthesis window,
/// normalised by the summed squared window.
///
/// Samples whose envelope vanishes (the outermost edges, or tails not covered
/// by any frame) are returned as zero. A vanishing envelope at an interior
/// sample (at least one window away from both ends) is a configuration error.
pub fn istft(s: &ComplexSpectrogram, output_length: usize, sample_rate: u32) -> Result<Waveform> {
    let cfg = s.config();
    cfg.validate()?;
    let window = hann_window(cfg.window_size);
    let mut out = vec![0.0; output_length];
    let mut env = vec![0.0; output_length];
    for t in 0..s.frames() {
        let frame = ifft_real(s.frame(t), cfg.n_fft);
        let start = t * cfg.hop;
        for i in 0..cfg.window_size {
            let n = start + i;
            if n >= output_length {
                break;
            }
            out[n] += frame[i] * window[i];
            env[n] += window[i] * window[i];
        }
    }
    let tiny = 1e-10;
    let interior = cfg.window_size..output_length.saturating_sub(cfg.window_size);
    for n in 0..output_length {
        if env[n] > tiny {
            out[n] /= env[n];
        } else if interior.contains(&n) {
            return Err(Error::Config(format!(
                "overlap-add envelope vanishes at interior sample {n} (window {}, hop {})",
                cfg.window_size, cfg.hop
            )));
        } else {
            out[n] = 0.0;
        }
    }
    Waveform::new(out, sample_rate)
}
