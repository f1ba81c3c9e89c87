use super::config::{FilterInit, FilterbankLayer, FirstLayer, Generic2dConfig};
use super::layers::{conv2d_stack, conv2d_stack_params, merge_channels, time_major, waveform_input};
use super::params::{Bound, ParamSet};
use crate::dsp::{gammatone_filterbank, stft, FilterBank, FilterOrigin, StftConfig, Waveform};
use crate::error::Result;
use crate::rng::RandomSource;
use crate::tensor::{Activation, Padding, Tape, Tensor, Var};

pub(crate) const PREFIX: &str = "g2d";
pub const FILTERBANK_PARAM: &str = "fb.weight";
const RE_IM_PARAM: &str = "g2d.0im";

pub fn generic2d_params(cfg: &Generic2dConfig, sample_rate: u32, rng: &mut RandomSource) -> Result<ParamSet> {
    let mut p = ParamSet::new();
    if let FirstLayer::Filterbank(fb) = &cfg.first_layer {
        let w = match fb.init {
            FilterInit::Random => Tensor::kaiming_uniform(&[fb.n_filters, 1, fb.kernel], fb.kernel, rng),
            FilterInit::Gammatone => gammatone_filterbank(fb.n_filters, fb.kernel, sample_rate, fb.f_min, fb.f_max)?
                .into_filters()
                .reshape(&[fb.n_filters, 1, fb.kernel])?,
        };
        p.add(FILTERBANK_PARAM, w, fb.trainable);
    }
    let channels = cfg.channel_plan();
    conv2d_stack_params(&mut p, PREFIX, 1, &channels, cfg.kernel, rng);
    if let FirstLayer::StftReIm { .. } = cfg.first_layer {
        let mut im = ParamSet::new();
        conv2d_stack_params(&mut im, RE_IM_PARAM, 1, &channels[..1], cfg.kernel, rng);
        p.extend(im);
    }
    Ok(p)
}

/// First-layer output as `[1, time, feature]`.
fn first_layer(tape: &mut Tape, bound: &Bound, w: &Waveform, layer: &FirstLayer) -> Result<FirstOut> {
    match layer {
        FirstLayer::StftMagnitude { window, hop, n_fft } => {
            let s = stft(w, StftConfig::new(*window, *hop).with_n_fft(*n_fft))?;
            let m = Tensor::new(&[1, s.frames(), s.bins()], s.magnitude())?;
            Ok(FirstOut::Single(tape.constant(m)))
        }
        FirstLayer::StftReIm { window, hop, n_fft } => {
            let s = stft(w, StftConfig::new(*window, *hop).with_n_fft(*n_fft))?;
            let re = tape.constant(Tensor::new(&[1, s.frames(), s.bins()], s.real())?);
            let im = tape.constant(Tensor::new(&[1, s.frames(), s.bins()], s.imag())?);
            Ok(FirstOut::Pair(re, im))
        }
        FirstLayer::Filterbank(fb) => Ok(FirstOut::Single(filterbank_layer(tape, bound, w, fb)?)),
    }
}

enum FirstOut {
    Single(Var),
    Pair(Var, Var),
}

/// `|conv1d(w, filters)|` reshaped to `[1, time, n_filters]`.
pub fn filterbank_layer(tape: &mut Tape, bound: &Bound, w: &Waveform, fb: &FilterbankLayer) -> Result<Var> {
    let x = waveform_input(tape, w)?;
    let weight = bound.get(FILTERBANK_PARAM)?;
    let y = tape.conv1d(x, weight, None, fb.stride, Padding::Valid)?;
    let y = tape.activation(y, Activation::Abs)?;
    let y = time_major(tape, y)?;
    let t = tape.shape(y)[0];
    tape.reshape(y, &[1, t, fb.n_filters])
}

/// Generic 2D front-end: a first layer that adds a feature axis, a stack of
/// 3x3 conv + ReLU layers subsampling time, then channels merged into the
/// feature axis. Returns `[frames, channels * feature]`.
pub fn generic2d_forward(tape: &mut Tape, bound: &Bound, w: &Waveform, cfg: &Generic2dConfig) -> Result<Var> {
    cfg.validate()?;
    let strides = cfg.layer_strides();
    let x = match first_layer(tape, bound, w, &cfg.first_layer)? {
        FirstOut::Single(x) => conv2d_stack(tape, bound, PREFIX, x, &strides, 0)?,
        FirstOut::Pair(re, im) => {
            let wr = bound.get(&format!("{PREFIX}.0.weight"))?;
            let br = bound.get(&format!("{PREFIX}.0.bias"))?;
            let wi = bound.get(&format!("{RE_IM_PARAM}.0.weight"))?;
            let bi = bound.get(&format!("{RE_IM_PARAM}.0.bias"))?;
            let a = tape.conv2d(re, wr, Some(br), strides[0], 1, Padding::Same)?;
            let b = tape.conv2d(im, wi, Some(bi), strides[0], 1, Padding::Same)?;
            let s = tape.add(a, b)?;
            let s = tape.activation(s, Activation::Relu)?;
            conv2d_stack(tape, bound, PREFIX, s, &strides, 1)?
        }
    };
    merge_channels(tape, x)
}

/// Current first-layer filters as a [`FilterBank`], if the config has one.
pub fn first_layer_bank(params: &ParamSet, cfg: &Generic2dConfig, sample_rate: u32) -> Option<Result<FilterBank>> {
    let FirstLayer::Filterbank(fb) = &cfg.first_layer else { return None };
    let p = params.get(FILTERBANK_PARAM)?;
    let origin = match (fb.init, fb.trainable) {
        (FilterInit::Gammatone, false) => FilterOrigin::Gammatone,
        (FilterInit::Random, false) => FilterOrigin::Random,
        _ => FilterOrigin::Learned,
    };
    Some(
        p.value
            .clone()
            .reshape(&[fb.n_filters, fb.kernel])
            .and_then(|t| FilterBank::new(t, None, origin, sample_rate)),
    )
}
