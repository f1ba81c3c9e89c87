use super::config::ScfConfig;
use super::layers::{time_major, waveform_input};
use super::params::{Bound, ParamSet};
use crate::dsp::Waveform;
use crate::error::Result;
use crate::rng::RandomSource;
use crate::tensor::{Activation, Padding, Tape, Tensor, Var};

pub fn scf_params(cfg: &ScfConfig, rng: &mut RandomSource) -> ParamSet {
    let mut p = ParamSet::new();
    p.add(
        "scf.l1.weight",
        Tensor::kaiming_uniform(&[cfg.l1_filters, 1, cfg.l1_kernel], cfg.l1_kernel, rng),
        true,
    );
    p.add(
        "scf.l2.weight",
        Tensor::kaiming_uniform(&[cfg.l2_filters, 1, cfg.l2_kernel], cfg.l2_kernel, rng),
        true,
    );
    let d = cfg.feature_dim();
    p.add("scf.norm.gain", Tensor::full(&[d], 1.0), true);
    p.add("scf.norm.offset", Tensor::zeros(&[d]), true);
    p
}

/// Supervised convolutional features:
/// time-frequency decomposition (`|conv1d|`), multi-resolution temporal
/// integration shared across channels, 2.5th root, layer norm.
/// Returns `[frames, l1_filters * l2_filters]` with feature index
/// `channel * l2_filters + filter`.
pub fn scf_forward(tape: &mut Tape, bound: &Bound, w: &Waveform, cfg: &ScfConfig) -> Result<Var> {
    let x = waveform_input(tape, w)?;
    let w1 = bound.get("scf.l1.weight")?;
    let y = tape.conv1d(x, w1, None, cfg.l1_stride, Padding::Valid)?;
    let y = tape.activation(y, Activation::Abs)?;
    let t1 = tape.shape(y)[1];
    let y = tape.reshape(y, &[cfg.l1_filters, 1, t1])?;
    let w2 = bound.get("scf.l2.weight")?;
    let z = tape.conv1d(y, w2, None, cfg.l2_stride, Padding::Valid)?;
    let z = tape.activation(z, Activation::MagnitudeRoot(cfg.root))?;
    let t2 = tape.shape(z)[2];
    let z = tape.reshape(z, &[cfg.feature_dim(), t2])?;
    let z = time_major(tape, z)?;
    let g = bound.get("scf.norm.gain")?;
    let o = bound.get("scf.norm.offset")?;
    tape.layer_norm(z, g, o, cfg.norm_eps)
}
