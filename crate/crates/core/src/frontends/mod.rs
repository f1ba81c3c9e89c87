//! The four feature extractors, the VGG subsampling block and the linear
//! projection to the acoustic-model dimension.

mod accounting;
mod config;
mod generic2d;
mod layers;
mod logmel;
mod params;
mod scf;
mod vgg;
mod wav2vec;

pub use accounting::{count_parameters, extractor_dim, frame_chain, frontend_stride, output_frames, overall_stride, ParamCount};
pub use config::{
    default_channel_plan, FilterInit, FilterbankLayer, FirstLayer, FrontendConfig, Generic2dConfig, LogMelConfig, ScfConfig,
    VggConfig, Wav2vecConfig, DEFAULT_MODEL_DIM, TARGET_STRIDE,
};
pub use generic2d::{filterbank_layer, first_layer_bank, generic2d_forward, generic2d_params, FILTERBANK_PARAM};
pub use logmel::logmel_forward;
pub use params::{Bound, Param, ParamSet};
pub use scf::{scf_forward, scf_params};
pub use vgg::{vgg_block_forward, vgg_params};
pub use wav2vec::{receptive_field, wav2vec_fe_forward, wav2vec_params};

use crate::dsp::{FilterBank, Waveform};
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::tensor::{Tape, Tensor, Var};

pub const PROJECTION_WEIGHT: &str = "proj.weight";
pub const PROJECTION_BIAS: &str = "proj.bias";

/// Frame-level features, `[frames, dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    values: Tensor,
}

impl FeatureTensor {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.rank() != 2 {
            return Err(Error::Shape(format!("features must be [frames, dim], got {:?}", values.shape())));
        }
        Ok(Self { values })
    }

    pub fn frames(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Tensor {
        &mut self.values
    }

    pub fn into_tensor(self) -> Tensor {
        self.values
    }
}

/// A configured front-end with its parameters: extractor, VGG block where
/// applicable and the projection to `model_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frontend {
    config: FrontendConfig,
    model_dim: usize,
    sample_rate: u32,
    params: ParamSet,
}

impl Frontend {
    pub fn new(config: FrontendConfig, model_dim: usize, sample_rate: u32, rng: &mut RandomSource) -> Result<Self> {
        config.validate()?;
        if model_dim == 0 {
            return Err(Error::Config("model dimension must be positive".into()));
        }
        let mut params = match &config {
            FrontendConfig::LogMel(_) => ParamSet::new(),
            FrontendConfig::Scf(c) => scf_params(c, rng),
            FrontendConfig::Wav2vecFe(c) => wav2vec_params(c, rng),
            FrontendConfig::Generic2d(c) => generic2d_params(c, sample_rate, rng)?,
        };
        if let Some(v) = config.vgg() {
            params.extend(vgg_params(v, rng));
        }
        let d_in = accounting::subsampled_dim(&config);
        params.add(PROJECTION_WEIGHT, Tensor::kaiming_uniform(&[model_dim, d_in], d_in, rng), true);
        params.add(PROJECTION_BIAS, Tensor::zeros(&[model_dim]), true);
        Ok(Self { config, model_dim, sample_rate, params })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.config
    }

    pub fn model_dim(&self) -> usize {
        self.model_dim
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn check_rate(&self, w: &Waveform) -> Result<()> {
        if w.sample_rate() != self.sample_rate {
            return Err(Error::Argument(format!(
                "waveform at {} Hz, front-end expects {} Hz",
                w.sample_rate(),
                self.sample_rate
            )));
        }
        Ok(())
    }

    /// Extractor output before any VGG block, `[frames, dim]`.
    pub fn extract(&self, tape: &mut Tape, bound: &Bound, w: &Waveform) -> Result<Var> {
        self.check_rate(w)?;
        match &self.config {
            FrontendConfig::LogMel(c) => {
                let f = logmel_forward(w, c)?;
                Ok(tape.constant(f.into_tensor()))
            }
            FrontendConfig::Scf(c) => scf_forward(tape, bound, w, c),
            FrontendConfig::Wav2vecFe(c) => wav2vec_fe_forward(tape, bound, w, c),
            FrontendConfig::Generic2d(c) => generic2d_forward(tape, bound, w, c),
        }
    }

    /// VGG subsampling for the 10 ms extractors; identity otherwise.
    pub fn subsample(&self, tape: &mut Tape, bound: &Bound, features: Var) -> Result<Var> {
        match self.config.vgg() {
            Some(v) => vgg_block_forward(tape, bound, features, v),
            None => Ok(features),
        }
    }

    pub fn project(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let w = bound.get(PROJECTION_WEIGHT)?;
        let b = bound.get(PROJECTION_BIAS)?;
        tape.linear(x, w, Some(b))
    }

    /// Full path to `[frames at 40 ms, model_dim]`. `mask`, if given, is a
    /// 0/1 multiplier applied to the extractor output (feature-level
    /// SpecAugment) before subsampling.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, w: &Waveform, mask: Option<Vec<f64>>) -> Result<Var> {
        let mut f = self.extract(tape, bound, w)?;
        if let Some(m) = mask {
            f = tape.mul_const(f, m)?;
        }
        let s = self.subsample(tape, bound, f)?;
        self.project(tape, bound, s)
    }

    /// Extractor features without gradient tracking.
    pub fn features(&self, w: &Waveform) -> Result<FeatureTensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let f = self.extract(&mut tape, &bound, w)?;
        FeatureTensor::new(tape.value(f).clone().detached())
    }

    /// Extractor followed by the VGG block (the 40 ms representation fed to
    /// the projection), without gradient tracking.
    pub fn subsampled_features(&self, w: &Waveform) -> Result<FeatureTensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let f = self.extract(&mut tape, &bound, w)?;
        let s = self.subsample(&mut tape, &bound, f)?;
        FeatureTensor::new(tape.value(s).clone().detached())
    }

    /// First-layer filters that act directly on the waveform, as a bank.
    pub fn first_layer_bank(&self) -> Option<Result<FilterBank>> {
        let (name, n, k) = match &self.config {
            FrontendConfig::Generic2d(c) => return first_layer_bank(&self.params, c, self.sample_rate),
            FrontendConfig::Scf(c) => ("scf.l1.weight", c.l1_filters, c.l1_kernel),
            FrontendConfig::Wav2vecFe(c) => ("w2v.0.weight", c.channels, c.kernels[0]),
            FrontendConfig::LogMel(_) => return None,
        };
        let p = self.params.get(name)?;
        Some(
            p.value
                .clone()
                .reshape(&[n, k])
                .and_then(|t| FilterBank::new(t, None, crate::dsp::FilterOrigin::Learned, self.sample_rate)),
        )
    }
}
