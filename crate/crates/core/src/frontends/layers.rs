//! Building blocks shared by the front-ends.

use super::params::{Bound, ParamSet};
use crate::dsp::Waveform;
use crate::error::Result;
use crate::rng::RandomSource;
use crate::tensor::{Activation, Padding, Tape, Tensor, Var};

pub(crate) fn waveform_input(tape: &mut Tape, w: &Waveform) -> Result<Var> {
    Ok(tape.constant(Tensor::new(&[1, w.len()], w.samples().to_vec())?))
}

/// 3x3 (or `kernel`) conv + bias parameters for a stack of 2D layers.
pub(crate) fn conv2d_stack_params(
    params: &mut ParamSet,
    prefix: &str,
    in_channels: usize,
    channels: &[usize],
    kernel: usize,
    rng: &mut RandomSource,
) {
    let mut c_in = in_channels;
    for (i, &c_out) in channels.iter().enumerate() {
        let fan_in = c_in * kernel * kernel;
        params.add(
            format!("{prefix}.{i}.weight"),
            Tensor::kaiming_uniform(&[c_out, c_in, kernel, kernel], fan_in, rng),
            true,
        );
        params.add(format!("{prefix}.{i}.bias"), Tensor::zeros(&[c_out]), true);
        c_in = c_out;
    }
}

/// Runs `[c, t, f]` through same-padded 2D conv + ReLU layers, starting at
/// layer index `first`.
pub(crate) fn conv2d_stack(
    tape: &mut Tape,
    bound: &Bound,
    prefix: &str,
    mut x: Var,
    strides: &[usize],
    first: usize,
) -> Result<Var> {
    for (i, &st) in strides.iter().enumerate().skip(first) {
        let w = bound.get(&format!("{prefix}.{i}.weight"))?;
        let b = bound.get(&format!("{prefix}.{i}.bias"))?;
        let y = tape.conv2d(x, w, Some(b), st, 1, Padding::Same)?;
        x = tape.activation(y, Activation::Relu)?;
    }
    Ok(x)
}

/// `[c, t, f]` to `[t, c * f]`, feature index `c * f + j`.
pub(crate) fn merge_channels(tape: &mut Tape, x: Var) -> Result<Var> {
    let [c, t, f] = *tape.shape(x) else {
        unreachable!("merge_channels expects rank 3")
    };
    let p = tape.permute(x, &[1, 0, 2])?;
    tape.reshape(p, &[t, c * f])
}

/// `[channels, time]` to `[time, channels]`.
pub(crate) fn time_major(tape: &mut Tape, x: Var) -> Result<Var> {
    tape.permute(x, &[1, 0])
}
