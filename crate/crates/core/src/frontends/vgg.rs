use super::config::VggConfig;
use super::layers::{conv2d_stack, conv2d_stack_params, merge_channels};
use super::params::{Bound, ParamSet};
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::tensor::{Tape, Var};

pub(crate) const PREFIX: &str = "vgg";

pub fn vgg_params(cfg: &VggConfig, rng: &mut RandomSource) -> ParamSet {
    let mut p = ParamSet::new();
    conv2d_stack_params(&mut p, PREFIX, 1, &cfg.channels, 3, rng);
    p
}

/// `[frames, dim]` at the extractor's frame rate to
/// `[frames / stride, channels * dim]`.
pub fn vgg_block_forward(tape: &mut Tape, bound: &Bound, features: Var, cfg: &VggConfig) -> Result<Var> {
    let [t, f] = *tape.shape(features) else {
        return Err(Error::Shape(format!("VGG input must be [frames, dim], got {:?}", tape.shape(features))));
    };
    let x = tape.reshape(features, &[1, t, f])?;
    let y = conv2d_stack(tape, bound, PREFIX, x, &cfg.time_strides, 0)?;
    merge_channels(tape, y)
}
