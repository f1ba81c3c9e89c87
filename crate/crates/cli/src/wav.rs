use std::path::Path;

use anyhow::{bail, Context, Result};
use unifront::dsp::Waveform;

pub const SAMPLE_RATE: u32 = 16000;
const SCALE: f64 = 32768.0;

/// Reads 16-bit PCM mono audio at 16 kHz, scaled to [-1, 1).
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path).with_context(|| format!("cannot read WAV {}", path.display()))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        bail!("{}: only 16-bit PCM is supported, found {} bit {:?}", path.display(), spec.bits_per_sample, spec.sample_format);
    }
    if spec.channels != 1 {
        bail!("{}: expected mono audio, found {} channels", path.display(), spec.channels);
    }
    if spec.sample_rate != SAMPLE_RATE {
        bail!("{}: expected {SAMPLE_RATE} Hz, found {} Hz", path.display(), spec.sample_rate);
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .with_context(|| format!("{}: malformed sample data", path.display()))?;
    if samples.is_empty() {
        bail!("{}: no samples", path.display());
    }
    Ok(Waveform::new(samples, SAMPLE_RATE)?)
}

pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).with_context(|| format!("cannot create {}", path.display()))?;
    for &s in w.samples() {
        let v = (s * SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}
