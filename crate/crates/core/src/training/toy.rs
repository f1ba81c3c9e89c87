use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::{Error, RandomSource, Result};

/// Synthetic transcription task: each symbol is a fixed-frequency tone
/// segment, segments are separated by noise-only gaps and the whole signal
/// carries white noise at `snr_db` relative to the tone power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyTask {
    /// Tone frequency of symbol `i + 1` (symbol 0 is the blank).
    pub tones: Vec<f64>,
    pub segment_ms: f64,
    pub gap_ms: f64,
    pub snr_db: f64,
    pub amplitude: f64,
    pub min_symbols: usize,
    pub max_symbols: usize,
    pub n_train: usize,
    pub n_dev: usize,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for ToyTask {
    fn default() -> Self {
        Self {
            tones: vec![500.0, 2000.0],
            segment_ms: 400.0,
            gap_ms: 120.0,
            snr_db: 10.0,
            amplitude: 0.5,
            min_symbols: 1,
            max_symbols: 3,
            n_train: 96,
            n_dev: 16,
            sample_rate: 16000,
            seed: 1234,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub waveform: Waveform,
    pub target: Vec<usize>,
}

impl ToyTask {
    /// Output classes including the blank.
    pub fn vocab_size(&self) -> usize {
        self.tones.len() + 1
    }

    fn samples(&self, ms: f64) -> usize {
        (ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.tones.is_empty() || self.tones.iter().any(|&f| !(f > 0.0 && f < nyquist)) {
            return Err(Error::Config(format!("tone frequencies must lie in (0, {nyquist}) Hz")));
        }
        if self.min_symbols == 0 || self.min_symbols > self.max_symbols {
            return Err(Error::Config("need 1 <= min_symbols <= max_symbols".into()));
        }
        if self.samples(self.segment_ms) == 0 || self.gap_ms < 0.0 {
            return Err(Error::Config("segment must be non-empty and gap non-negative".into()));
        }
        Ok(())
    }

    /// Waveform for a given symbol sequence.
    pub fn render(&self, target: &[usize], rng: &mut RandomSource) -> Result<Waveform> {
        let seg = self.samples(self.segment_ms);
        let gap = self.samples(self.gap_ms);
        let sr = self.sample_rate as f64;
        let mut x = vec![0.0; gap];
        for &s in target {
            if s == 0 || s > self.tones.len() {
                return Err(Error::Argument(format!("symbol {s} outside the vocabulary")));
            }
            let f = self.tones[s - 1];
            let phase = rng.uniform(0.0, std::f64::consts::TAU);
            x.extend((0..seg).map(|n| self.amplitude * (std::f64::consts::TAU * f * n as f64 / sr + phase).sin()));
            x.extend(std::iter::repeat(0.0).take(gap));
        }
        let tone_power = self.amplitude * self.amplitude / 2.0;
        let noise_std = (tone_power / 10f64.powf(self.snr_db / 10.0)).sqrt();
        for v in &mut x {
            *v += noise_std * rng.normal();
        }
        Waveform::new(x, self.sample_rate)
    }

    fn example(&self, rng: &mut RandomSource) -> Result<Example> {
        let len = self.min_symbols + rng.int_inclusive(self.max_symbols - self.min_symbols);
        let target: Vec<usize> = (0..len).map(|_| 1 + rng.below(self.tones.len())).collect();
        Ok(Example { waveform: self.render(&target, rng)?, target })
    }

    /// Train and dev splits, fully determined by `seed`.
    pub fn generate(&self) -> Result<(Vec<Example>, Vec<Example>)> {
        self.validate()?;
        let mut rng = RandomSource::new(self.seed);
        let mut train_rng = rng.fork(1);
        let mut dev_rng = rng.fork(2);
        let train = (0..self.n_train).map(|_| self.example(&mut train_rng)).collect::<Result<_>>()?;
        let dev = (0..self.n_dev).map(|_| self.example(&mut dev_rng)).collect::<Result<_>>()?;
        Ok((train, dev))
    }
}
