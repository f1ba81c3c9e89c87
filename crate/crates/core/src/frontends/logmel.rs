use super::config::LogMelConfig;
use super::FeatureTensor;
use crate::dsp::{mel_filterbank_matrix, stft, Waveform};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Log Mel filterbank energies, `ln(mel(|STFT|^2) + eps)`, shaped
/// `[frames, n_mels]`. Nothing here is learnable.
pub fn logmel_forward(w: &Waveform, cfg: &LogMelConfig) -> Result<FeatureTensor> {
    let spec = stft(w, cfg.stft())?;
    let nyq = w.sample_rate() as f64 / 2.0;
    let mel = mel_filterbank_matrix(cfg.n_mels, cfg.n_fft, w.sample_rate(), cfg.f_min, cfg.f_max.unwrap_or(nyq))?;
    if !(cfg.eps > 0.0) {
        return Err(Error::Argument("log epsilon must be positive".into()));
    }
    let bins = spec.bins();
    let power = spec.power();
    let m = mel.data();
    let mut out = vec![0.0; spec.frames() * cfg.n_mels];
    for t in 0..spec.frames() {
        let p = &power[t * bins..(t + 1) * bins];
        let row = &mut out[t * cfg.n_mels..(t + 1) * cfg.n_mels];
        for (k, &pk) in p.iter().enumerate() {
            if pk == 0.0 {
                continue;
            }
            for (r, &wk) in row.iter_mut().zip(&m[k * cfg.n_mels..(k + 1) * cfg.n_mels]) {
                *r += pk * wk;
            }
        }
        row.iter_mut().for_each(|v| *v = (*v + cfg.eps).ln());
    }
    FeatureTensor::new(Tensor::new(&[spec.frames(), cfg.n_mels], out)?)
}
