//! Closed-form parameter counts, strides and frame counts per config.

use super::config::{FirstLayer, FrontendConfig, VggConfig};
use super::wav2vec::receptive_field;
use crate::dsp::StftConfig;
use crate::error::{Error, Result};
use crate::tensor::{conv_out_len, Padding};

/// Learnable scalars split by stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParamCount {
    pub extractor: usize,
    pub vgg: usize,
    pub linear: usize,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.extractor + self.vgg + self.linear
    }
}

fn conv2d_stack_count(in_channels: usize, channels: &[usize], kernel: usize) -> usize {
    let mut c_in = in_channels;
    let mut n = 0;
    for &c in channels {
        n += c * c_in * kernel * kernel + c;
        c_in = c;
    }
    n
}

fn vgg_count(v: &VggConfig) -> usize {
    conv2d_stack_count(1, &v.channels, 3)
}

/// Feature dimension at the extractor output (before VGG).
pub fn extractor_dim(cfg: &FrontendConfig) -> usize {
    match cfg {
        FrontendConfig::LogMel(c) => c.n_mels,
        FrontendConfig::Scf(c) => c.feature_dim(),
        FrontendConfig::Wav2vecFe(c) => c.channels,
        FrontendConfig::Generic2d(c) => c.output_channels() * c.first_layer.feature_dim(),
    }
}

/// Feature dimension entering the projection.
pub(crate) fn subsampled_dim(cfg: &FrontendConfig) -> usize {
    match cfg.vgg() {
        Some(v) => v.out_channels() * extractor_dim(cfg),
        None => extractor_dim(cfg),
    }
}

/// Learnable parameter count; `include_linear_to` adds the projection to
/// that model dimension.
pub fn count_parameters(cfg: &FrontendConfig, include_linear_to: Option<usize>) -> ParamCount {
    let extractor = match cfg {
        FrontendConfig::LogMel(_) => 0,
        FrontendConfig::Scf(c) => c.l1_filters * c.l1_kernel + c.l2_filters * c.l2_kernel + 2 * c.feature_dim(),
        FrontendConfig::Wav2vecFe(c) => {
            let mut c_in = 1;
            let mut n = 2 * c.channels;
            for &k in &c.kernels {
                n += c.channels * c_in * k + if c.conv_bias { c.channels } else { 0 };
                c_in = c.channels;
            }
            n
        }
        FrontendConfig::Generic2d(c) => {
            let plan = c.channel_plan();
            let first = match &c.first_layer {
                FirstLayer::Filterbank(fb) if fb.trainable => fb.n_filters * fb.kernel,
                FirstLayer::StftReIm { .. } => conv2d_stack_count(1, &plan[..1], c.kernel),
                _ => 0,
            };
            first + conv2d_stack_count(1, &plan, c.kernel)
        }
    };
    let vgg = cfg.vgg().map_or(0, vgg_count);
    let linear = include_linear_to.map_or(0, |d| subsampled_dim(cfg) * d + d);
    ParamCount { extractor, vgg, linear }
}

/// Samples per extractor output frame (before any VGG block).
pub fn frontend_stride(cfg: &FrontendConfig) -> usize {
    match cfg {
        FrontendConfig::LogMel(c) => c.hop,
        FrontendConfig::Scf(c) => c.l1_stride * c.l2_stride,
        FrontendConfig::Wav2vecFe(c) => c.strides.iter().product(),
        FrontendConfig::Generic2d(c) => c.first_layer.stride() * c.layer_strides().iter().product::<usize>(),
    }
}

/// Samples per frame at the acoustic-model input, including VGG.
pub fn overall_stride(cfg: &FrontendConfig) -> usize {
    frontend_stride(cfg) * cfg.vgg().map_or(1, VggConfig::stride)
}

/// Frame counts after each time-reducing stage for an input of `n` samples.
pub fn frame_chain(cfg: &FrontendConfig, n: usize) -> Result<Vec<usize>> {
    let mut chain = Vec::new();
    match cfg {
        FrontendConfig::LogMel(c) => {
            let f = StftConfig::new(c.window, c.hop).frames(n);
            if f == 0 {
                return Err(Error::EmptyOutput("input shorter than one window".into()));
            }
            chain.push(f);
        }
        FrontendConfig::Scf(c) => {
            let t1 = conv_out_len(n, c.l1_kernel, c.l1_stride, Padding::Valid)?.0;
            chain.push(t1);
            chain.push(conv_out_len(t1, c.l2_kernel, c.l2_stride, Padding::Valid)?.0);
        }
        FrontendConfig::Wav2vecFe(c) => {
            if n < receptive_field(c) {
                return Err(Error::EmptyOutput("input shorter than the receptive field".into()));
            }
            let mut t = n;
            for (&k, &s) in c.kernels.iter().zip(&c.strides) {
                t = conv_out_len(t, k, s, Padding::Valid)?.0;
                chain.push(t);
            }
        }
        FrontendConfig::Generic2d(c) => {
            let mut t = match &c.first_layer {
                FirstLayer::StftMagnitude { window, hop, .. } | FirstLayer::StftReIm { window, hop, .. } => {
                    let f = StftConfig::new(*window, *hop).frames(n);
                    if f == 0 {
                        return Err(Error::EmptyOutput("input shorter than one window".into()));
                    }
                    f
                }
                FirstLayer::Filterbank(fb) => conv_out_len(n, fb.kernel, fb.stride, Padding::Valid)?.0,
            };
            chain.push(t);
            for s in c.layer_strides() {
                t = conv_out_len(t, c.kernel, s, Padding::Same)?.0;
                chain.push(t);
            }
        }
    }
    if let Some(v) = cfg.vgg() {
        let mut t = *chain.last().unwrap();
        for &s in &v.time_strides {
            t = conv_out_len(t, 3, s, Padding::Same)?.0;
            chain.push(t);
        }
    }
    Ok(chain)
}

/// Frames at the acoustic-model input for `n` samples.
pub fn output_frames(cfg: &FrontendConfig, n: usize) -> Result<usize> {
    Ok(*frame_chain(cfg, n)?.last().unwrap())
}
