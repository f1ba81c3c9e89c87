use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use unifront::frontends::{
    FilterInit, FilterbankLayer, FirstLayer, FrontendConfig, Generic2dConfig, DEFAULT_MODEL_DIM,
};
use unifront::specaugment::MaskSpec;
use unifront::training::{toy_frontends, ToyTask, TrainOptions};

/// Everything a run depends on besides its input files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub model_dim: Option<usize>,
    pub frontend: Option<FrontendConfig>,
    pub mask: MaskSpec,
    pub train: TrainOptions,
    pub task: ToyTask,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn model_dim(&self) -> usize {
        self.model_dim.unwrap_or(DEFAULT_MODEL_DIM)
    }

    /// `--frontend` preset if given, else the config's front-end, else `fallback`.
    pub fn frontend(&self, preset_name: Option<&str>, fallback: &str) -> Result<FrontendConfig> {
        let cfg = match (preset_name, &self.frontend) {
            (Some(name), _) => preset(name)?,
            (None, Some(cfg)) => cfg.clone(),
            (None, None) => preset(fallback)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn generic2d_with(first_layer: FirstLayer) -> FrontendConfig {
    FrontendConfig::Generic2d(Generic2dConfig { first_layer, ..Default::default() })
}

pub const PRESETS: &[&str] = &[
    "log_mel",
    "scf",
    "wav2vec_fe",
    "generic2d",
    "generic2d_small",
    "generic2d_stft_magnitude",
    "generic2d_stft_re_im",
    "generic2d_gammatone",
    "toy_log_mel",
    "toy_scf",
    "toy_wav2vec_fe",
    "toy_generic2d",
];

pub fn preset(name: &str) -> Result<FrontendConfig> {
    let toy = toy_frontends();
    Ok(match name {
        "log_mel" => FrontendConfig::log_mel(),
        "scf" => FrontendConfig::scf(),
        "wav2vec_fe" => FrontendConfig::wav2vec_fe(),
        "generic2d" => FrontendConfig::generic2d(),
        "generic2d_small" => FrontendConfig::generic2d_small(),
        "generic2d_stft_magnitude" => generic2d_with(FirstLayer::stft_magnitude()),
        "generic2d_stft_re_im" => generic2d_with(FirstLayer::stft_re_im()),
        "generic2d_gammatone" => generic2d_with(FirstLayer::Filterbank(FilterbankLayer {
            n_filters: 80,
            init: FilterInit::Gammatone,
            trainable: false,
            ..Default::default()
        })),
        "toy_log_mel" => toy[0].clone(),
        "toy_scf" => toy[1].clone(),
        "toy_wav2vec_fe" => toy[2].clone(),
        "toy_generic2d" => toy[3].clone(),
        other => bail!("unknown front-end preset {other:?}; known presets: {}", PRESETS.join(", ")),
    })
}

/// Published parameter counts (millions, including the projection to 512).
pub fn reference_millions(name: &str) -> Option<f64> {
    match name {
        "log_mel" => Some(1.4),
        "scf" => Some(12.4),
        "wav2vec_fe" => Some(5.0),
        "generic2d" => Some(2.3),
        "generic2d_small" => Some(0.3),
        _ => None,
    }
}
