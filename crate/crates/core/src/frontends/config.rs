use crate::dsp::StftConfig;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Output frame shift at the acoustic-model input, in samples (40 ms at 16 kHz).
pub const TARGET_STRIDE: usize = 640;

/// Model dimension of the acoustic model the front-end feeds.
pub const DEFAULT_MODEL_DIM: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum FrontendConfig {
    LogMel(LogMelConfig),
    Scf(ScfConfig),
    Wav2vecFe(Wav2vecConfig),
    Generic2d(Generic2dConfig),
}

impl FrontendConfig {
    pub fn name(&self) -> &'static str {
        match self {
            FrontendConfig::LogMel(_) => "log_mel",
            FrontendConfig::Scf(_) => "scf",
            FrontendConfig::Wav2vecFe(_) => "wav2vec_fe",
            FrontendConfig::Generic2d(_) => "generic2d",
        }
    }

    /// Log Mel followed by the VGG block.
    pub fn log_mel() -> Self {
        FrontendConfig::LogMel(LogMelConfig::default())
    }

    pub fn scf() -> Self {
        FrontendConfig::Scf(ScfConfig::default())
    }

    pub fn wav2vec_fe() -> Self {
        FrontendConfig::Wav2vecFe(Wav2vecConfig::default())
    }

    /// Randomly initialised learnable filterbank with 128 filters of 256 taps
    /// at stride 10, followed by six stride-2 3x3 layers.
    pub fn generic2d() -> Self {
        FrontendConfig::Generic2d(Generic2dConfig::default())
    }

    /// The parameter-efficient generic 2D variant with 8 first-layer filters.
    pub fn generic2d_small() -> Self {
        let mut cfg = Generic2dConfig::default();
        if let FirstLayer::Filterbank(fb) = &mut cfg.first_layer {
            fb.n_filters = 8;
        }
        FrontendConfig::Generic2d(cfg)
    }

    /// The VGG block, present only for extractors designed for a 10 ms shift.
    pub fn vgg(&self) -> Option<&VggConfig> {
        match self {
            FrontendConfig::LogMel(c) => Some(&c.vgg),
            FrontendConfig::Scf(c) => Some(&c.vgg),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FrontendConfig::LogMel(c) => {
                if c.n_mels == 0 || c.window == 0 || c.hop == 0 {
                    return Err(Error::Config("log Mel sizes must be positive".into()));
                }
                if !(c.eps > 0.0) {
                    return Err(Error::Config("log epsilon must be positive".into()));
                }
                c.vgg.validate()
            }
            FrontendConfig::Scf(c) => {
                if c.l1_filters == 0 || c.l1_kernel == 0 || c.l2_filters == 0 || c.l2_kernel == 0 {
                    return Err(Error::Config("SCF sizes must be positive".into()));
                }
                if c.l1_stride == 0 || c.l2_stride == 0 {
                    return Err(Error::Config("SCF strides must be positive".into()));
                }
                if !(c.root > 1.0) {
                    return Err(Error::Config("SCF root exponent must exceed 1".into()));
                }
                c.vgg.validate()
            }
            FrontendConfig::Wav2vecFe(c) => {
                if c.kernels.is_empty() || c.kernels.len() != c.strides.len() {
                    return Err(Error::Config("wav2vec kernels and strides must be non-empty and of equal length".into()));
                }
                if c.channels == 0 || c.kernels.iter().chain(&c.strides).any(|&v| v == 0) {
                    return Err(Error::Config("wav2vec sizes must be positive".into()));
                }
                Ok(())
            }
            FrontendConfig::Generic2d(c) => c.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogMelConfig {
    pub window: usize,
    pub hop: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub f_min: f64,
    /// `None` means Nyquist.
    pub f_max: Option<f64>,
    pub eps: f64,
    pub vgg: VggConfig,
}

impl Default for LogMelConfig {
    fn default() -> Self {
        Self {
            window: 400,
            hop: 160,
            n_fft: 512,
            n_mels: 80,
            f_min: 0.0,
            f_max: None,
            eps: 1e-10,
            vgg: VggConfig::default(),
        }
    }
}

impl LogMelConfig {
    pub fn stft(&self) -> StftConfig {
        StftConfig::new(self.window, self.hop).with_n_fft(self.n_fft)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScfConfig {
    pub l1_filters: usize,
    pub l1_kernel: usize,
    pub l1_stride: usize,
    pub l2_filters: usize,
    pub l2_kernel: usize,
    pub l2_stride: usize,
    pub root: f64,
    pub norm_eps: f64,
    pub vgg: VggConfig,
}

impl Default for ScfConfig {
    fn default() -> Self {
        Self {
            l1_filters: 150,
            l1_kernel: 256,
            l1_stride: 10,
            l2_filters: 5,
            l2_kernel: 40,
            l2_stride: 16,
            root: 2.5,
            norm_eps: 1e-5,
            vgg: VggConfig::default(),
        }
    }
}

impl ScfConfig {
    pub fn feature_dim(&self) -> usize {
        self.l1_filters * self.l2_filters
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Wav2vecConfig {
    pub channels: usize,
    pub kernels: Vec<usize>,
    pub strides: Vec<usize>,
    pub conv_bias: bool,
    pub norm_eps: f64,
}

impl Default for Wav2vecConfig {
    fn default() -> Self {
        Self {
            channels: 512,
            kernels: vec![10, 3, 3, 3, 3, 2, 2, 2],
            strides: vec![5, 2, 2, 2, 2, 2, 2, 2],
            conv_bias: false,
            norm_eps: 1e-5,
        }
    }
}

/// Subsampling block: 3x3 convolutions with ReLU; `time_strides[i]` applies
/// to layer `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VggConfig {
    pub channels: Vec<usize>,
    pub time_strides: Vec<usize>,
}

impl Default for VggConfig {
    fn default() -> Self {
        Self {
            channels: vec![32, 64, 64, 32],
            time_strides: vec![1, 2, 1, 2],
        }
    }
}

impl VggConfig {
    pub fn stride(&self) -> usize {
        self.time_strides.iter().product()
    }

    pub fn out_channels(&self) -> usize {
        *self.channels.last().unwrap_or(&1)
    }

    fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.len() != self.time_strides.len() {
            return Err(Error::Config("VGG channels and strides must be non-empty and of equal length".into()));
        }
        if self.channels.iter().chain(&self.time_strides).any(|&v| v == 0) {
            return Err(Error::Config("VGG sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterInit {
    Gammatone,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterbankLayer {
    pub n_filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub trainable: bool,
    pub init: FilterInit,
    /// Gammatone design range; ignored for random init.
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for FilterbankLayer {
    fn default() -> Self {
        Self {
            n_filters: 128,
            kernel: 256,
            stride: 10,
            trainable: true,
            init: FilterInit::Random,
            f_min: 150.0,
            f_max: 7600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FirstLayer {
    StftMagnitude { window: usize, hop: usize, n_fft: usize },
    StftReIm { window: usize, hop: usize, n_fft: usize },
    Filterbank(FilterbankLayer),
}

impl FirstLayer {
    pub fn stride(&self) -> usize {
        match self {
            FirstLayer::StftMagnitude { hop, .. } | FirstLayer::StftReIm { hop, .. } => *hop,
            FirstLayer::Filterbank(f) => f.stride,
        }
    }

    /// Size of the feature axis the 2D stack operates on.
    pub fn feature_dim(&self) -> usize {
        match self {
            FirstLayer::StftMagnitude { n_fft, .. } | FirstLayer::StftReIm { n_fft, .. } => n_fft / 2 + 1,
            FirstLayer::Filterbank(f) => f.n_filters,
        }
    }

    pub fn stft_magnitude() -> Self {
        FirstLayer::StftMagnitude { window: 400, hop: 10, n_fft: 512 }
    }

    pub fn stft_re_im() -> Self {
        FirstLayer::StftReIm { window: 400, hop: 10, n_fft: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Generic2dConfig {
    pub first_layer: FirstLayer,
    pub n_2d_layers: usize,
    pub stride2_layers: usize,
    /// Output channels of each 2D layer; empty selects [`default_channel_plan`].
    pub channels: Vec<usize>,
    pub kernel: usize,
}

impl Default for Generic2dConfig {
    fn default() -> Self {
        Self {
            first_layer: FirstLayer::Filterbank(FilterbankLayer::default()),
            n_2d_layers: 6,
            stride2_layers: 6,
            channels: Vec::new(),
            kernel: 3,
        }
    }
}

/// 32 channels at both ends of the stack and 64 in between.
pub fn default_channel_plan(n_layers: usize) -> Vec<usize> {
    (0..n_layers)
        .map(|i| if i == 0 || i + 1 == n_layers { 32 } else { 64 })
        .collect()
}

impl Generic2dConfig {
    pub fn channel_plan(&self) -> Vec<usize> {
        if self.channels.is_empty() {
            default_channel_plan(self.n_2d_layers)
        } else {
            self.channels.clone()
        }
    }

    /// Time stride of each 2D layer: the stride-2 layers in order, with the
    /// stride-1 layers inserted after them round-robin.
    pub fn layer_strides(&self) -> Vec<usize> {
        let s = self.stride2_layers;
        let extra = self.n_2d_layers.saturating_sub(s);
        let slots = s.max(1);
        let mut after = vec![0usize; slots];
        for i in 0..extra {
            after[i % slots] += 1;
        }
        let mut out = Vec::with_capacity(self.n_2d_layers);
        if s == 0 {
            out.extend(std::iter::repeat(1).take(extra));
            return out;
        }
        for a in after {
            out.push(2);
            out.extend(std::iter::repeat(1).take(a));
        }
        out
    }

    pub fn output_channels(&self) -> usize {
        *self.channel_plan().last().unwrap_or(&1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_2d_layers == 0 || self.stride2_layers > self.n_2d_layers {
            return Err(Error::Config(format!(
                "need 1 <= stride-2 layers ({}) <= 2D layers ({})",
                self.stride2_layers, self.n_2d_layers
            )));
        }
        if self.channel_plan().len() != self.n_2d_layers || self.channel_plan().contains(&0) {
            return Err(Error::Config("one positive channel count per 2D layer required".into()));
        }
        if self.kernel == 0 {
            return Err(Error::Config("2D kernel must be positive".into()));
        }
        match &self.first_layer {
            FirstLayer::StftMagnitude { window, hop, n_fft } | FirstLayer::StftReIm { window, hop, n_fft } => {
                if *window == 0 || *hop == 0 || !n_fft.is_power_of_two() || n_fft < window {
                    return Err(Error::Config("STFT first layer needs window <= n_fft (power of two) and hop > 0".into()));
                }
            }
            FirstLayer::Filterbank(f) => {
                if f.n_filters == 0 || f.kernel == 0 || f.stride == 0 {
                    return Err(Error::Config("filterbank sizes must be positive".into()));
                }
            }
        }
        let total = self.first_layer.stride().checked_mul(1usize << self.stride2_layers.min(63));
        if total != Some(TARGET_STRIDE) {
            return Err(Error::Config(format!(
                "first-layer stride {} x 2^{} must equal {TARGET_STRIDE}",
                self.first_layer.stride(),
                self.stride2_layers
            )));
        }
        Ok(())
    }
}
