//! Signal-processing substrate for the front-ends and the analysis tools.

mod fft;
mod gammatone;
mod mel;
mod resample;
mod response;
mod stft;

pub use fft::{fft_real, is_power_of_two, next_power_of_two};
pub use gammatone::{erb, erb_rate, erb_rate_to_hz, gammatone_filterbank, FilterBank, FilterOrigin};
pub use mel::{hz_to_mel, mel_filterbank_matrix, mel_to_hz};
pub use resample::resample_speed;
pub use response::{default_padding, frequency_response, FrequencyResponse};
pub use rustfft::num_complex::Complex64;
pub use stft::{hann_window, istft, stft, ComplexSpectrogram, StftConfig};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Argument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn scaled(&self, a: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|v| v * a).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Pure cosine-phase tone, mostly for tests and synthetic data.
    pub fn tone(freq: f64, amplitude: f64, len: usize, sample_rate: u32) -> Waveform {
        let sr = sample_rate as f64;
        let samples = (0..len)
            .map(|t| amplitude * (2.0 * std::f64::consts::PI * freq * t as f64 / sr).sin())
            .collect();
        Waveform { samples, sample_rate }
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }
}

pub fn rms(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    (xs.iter().map(|v| v * v).sum::<f64>() / xs.len() as f64).sqrt()
}
