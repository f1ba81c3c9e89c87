use super::config::Wav2vecConfig;
use super::layers::{time_major, waveform_input};
use super::params::{Bound, ParamSet};
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::tensor::{Activation, Padding, Tape, Tensor, Var};

pub fn wav2vec_params(cfg: &Wav2vecConfig, rng: &mut RandomSource) -> ParamSet {
    let mut p = ParamSet::new();
    let mut c_in = 1;
    for (i, &k) in cfg.kernels.iter().enumerate() {
        let fan_in = c_in * k;
        p.add(
            format!("w2v.{i}.weight"),
            Tensor::kaiming_uniform(&[cfg.channels, c_in, k], fan_in, rng),
            true,
        );
        if cfg.conv_bias {
            p.add(format!("w2v.{i}.bias"), Tensor::zeros(&[cfg.channels]), true);
        }
        c_in = cfg.channels;
    }
    p.add("w2v.norm.gain", Tensor::full(&[cfg.channels], 1.0), true);
    p.add("w2v.norm.offset", Tensor::zeros(&[cfg.channels]), true);
    p
}

/// Receptive field of the strided stack in samples.
pub fn receptive_field(cfg: &Wav2vecConfig) -> usize {
    let mut rf = 1;
    let mut jump = 1;
    for (&k, &s) in cfg.kernels.iter().zip(&cfg.strides) {
        rf += (k - 1) * jump;
        jump *= s;
    }
    rf
}

/// Strided 1D convolution stack with per-channel group norm after the first
/// layer and GELU after every layer. Returns `[frames, channels]`.
pub fn wav2vec_fe_forward(tape: &mut Tape, bound: &Bound, w: &Waveform, cfg: &Wav2vecConfig) -> Result<Var> {
    let rf = receptive_field(cfg);
    if w.len() < rf {
        return Err(Error::EmptyOutput(format!(
            "{} samples is shorter than the {rf}-sample receptive field",
            w.len()
        )));
    }
    let mut x = waveform_input(tape, w)?;
    for (i, &s) in cfg.strides.iter().enumerate() {
        let wt = bound.get(&format!("w2v.{i}.weight"))?;
        let b = bound.maybe(&format!("w2v.{i}.bias"));
        x = tape.conv1d(x, wt, b, s, Padding::Valid)?;
        if i == 0 {
            let g = bound.get("w2v.norm.gain")?;
            let o = bound.get("w2v.norm.offset")?;
            x = tape.group_norm(x, cfg.channels, g, o, cfg.norm_eps)?;
        }
        x = tape.activation(x, Activation::Gelu)?;
    }
    time_major(tape, x)
}
