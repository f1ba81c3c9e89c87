//! Toy-scale CTC training of a front-end plus a small feed-forward encoder.

mod ctc;
mod model;
mod optim;
mod toy;

pub use ctc::{ctc_forward_backward, ctc_loss, edit_distance, greedy_decode, min_frames, BLANK};
pub use model::{ToyModel, BLANK_BIAS_INIT, ENCODER_LAYERS, ENCODER_NORM_GAIN, ENCODER_NORM_OFFSET, OUTPUT_BIAS, OUTPUT_WEIGHT};
pub use optim::{adamw_step, clip_grad_norm, global_norm, one_cycle_lr, AdamWConfig, Grads, OneCycle, OptimizerState};
pub use toy::{Example, ToyTask};

use serde::{Deserialize, Serialize};

use crate::dsp::resample_speed;
use crate::frontends::*;
use crate::specaugment::{apply_stft_masks, mask_grid, sample_masks, MaskSpec};
use crate::tensor::Tape;
use crate::{Error, RandomSource, Result};

/// Where SpecAugment masks are applied during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPlacement {
    #[default]
    Off,
    /// On the extractor output, before subsampling.
    Features,
    /// On the waveform's STFT, before any feature extraction.
    Stft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub model_dim: usize,
    pub schedule: OneCycle,
    pub adamw: AdamWConfig,
    pub max_grad_norm: f64,
    /// Speed factors drawn uniformly per example; `[1.0]` disables perturbation.
    pub speed_factors: Vec<f64>,
    pub mask_placement: MaskPlacement,
    pub mask: MaskSpec,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 4,
            model_dim: DEFAULT_MODEL_DIM,
            schedule: OneCycle::default(),
            adamw: AdamWConfig::default(),
            max_grad_norm: 1.0,
            speed_factors: vec![0.9, 1.0, 1.1],
            mask_placement: MaskPlacement::Off,
            mask: MaskSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_symbol_error_rate: f64,
    pub dev_accuracy: f64,
    pub last_lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub frontend: String,
    pub steps: usize,
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    /// Relative drop of the mean training loss from the first to the last epoch.
    pub fn loss_reduction(&self) -> f64 {
        match (self.epochs.first(), self.epochs.last()) {
            (Some(a), Some(b)) if a.mean_loss > 0.0 => 1.0 - b.mean_loss / a.mean_loss,
            _ => 0.0,
        }
    }

    pub fn final_dev_accuracy(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.dev_accuracy)
    }

    /// One JSON object per epoch.
    pub fn to_json_lines(&self) -> String {
        self.epochs
            .iter()
            .map(|e| {
                let mut v = serde_json::to_value(e).expect("epoch record serialises");
                v["frontend"] = self.frontend.clone().into();
                format!("{v}\n")
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub model: ToyModel,
}

/// Symbol error rate and accuracy of greedy decoding on `examples`.
pub fn evaluate(model: &ToyModel, examples: &[Example]) -> Result<(f64, f64)> {
    let (mut errors, mut total) = (0usize, 0usize);
    for ex in examples {
        let lp = model.infer(&ex.waveform)?;
        errors += edit_distance(&greedy_decode(&lp), &ex.target);
        total += ex.target.len();
    }
    let ser = if total == 0 { 0.0 } else { errors as f64 / total as f64 };
    Ok((ser, (1.0 - ser).max(0.0)))
}

fn example_loss(model: &ToyModel, ex: &Example, opts: &TrainOptions, rng: &mut RandomSource, grads: &mut Grads) -> Result<f64> {
    let factor = *rng.choose(&opts.speed_factors);
    let mut w = if factor == 1.0 { ex.waveform.clone() } else { resample_speed(&ex.waveform, factor)? };
    if opts.mask_placement == MaskPlacement::Stft {
        w = apply_stft_masks(&w, &opts.mask, rng)?;
    }
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let lp = if opts.mask_placement == MaskPlacement::Features {
        let mut f = model.frontend.extract(&mut tape, &bound, &w)?;
        let s = tape.shape(f).to_vec();
        let rects = sample_masks(&opts.mask, s[0], s[1], rng)?;
        f = tape.mul_const(f, mask_grid(s[0], s[1], &rects)?)?;
        model.head_forward(&mut tape, &bound, f)?
    } else {
        model.log_probs(&mut tape, &bound, &w, None)?
    };
    let loss = ctc_loss(&mut tape, lp, &ex.target)?;
    tape.backward(loss)?;
    for (name, var) in bound.iter() {
        if let Some(g) = tape.grad(var) {
            let acc = grads.entry(name.to_string()).or_insert_with(|| vec![0.0; g.len()]);
            acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
    }
    Ok(tape.value(loss).item())
}

/// Trains a fresh [`ToyModel`] on `task`. Every random choice (initialisation,
/// data order, speed factors, masks) comes from `rng`.
pub fn train_toy(cfg: &FrontendConfig, task: &ToyTask, opts: &TrainOptions, rng: &mut RandomSource) -> Result<TrainOutcome> {
    if opts.epochs == 0 || opts.batch_size == 0 || opts.speed_factors.is_empty() {
        return Err(Error::Config("epochs, batch size and speed factors must be non-empty".into()));
    }
    let (train, dev) = task.generate()?;
    if train.is_empty() {
        return Err(Error::Config("toy task has no training examples".into()));
    }
    let mut init_rng = rng.fork(1);
    let mut data_rng = rng.fork(2);
    let mut model = ToyModel::new(cfg.clone(), task.vocab_size(), opts.model_dim, task.sample_rate, &mut init_rng)?;
    let mut state = OptimizerState::new(opts.adamw, opts.schedule.start);
    let batches_per_epoch = train.len().div_ceil(opts.batch_size);
    let total_steps = batches_per_epoch * opts.epochs;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut records = Vec::with_capacity(opts.epochs);
    let mut step = 0;
    for epoch in 1..=opts.epochs {
        data_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(opts.batch_size) {
            let mut grads = Grads::new();
            let mut batch_loss = 0.0;
            for &i in batch {
                let l = example_loss(&model, &train[i], opts, &mut data_rng, &mut grads)?;
                if !l.is_finite() {
                    return Err(Error::Numeric(format!("non-finite loss at step {step}")));
                }
                batch_loss += l;
            }
            let inv = 1.0 / batch.len() as f64;
            grads.values_mut().flatten().for_each(|g| *g *= inv);
            clip_grad_norm(&mut grads, opts.max_grad_norm)
                .map_err(|e| Error::Numeric(format!("step {step}: {e}")))?;
            state.lr = opts.schedule.lr(step, total_steps);
            let mut params = model.params();
            adamw_step(&mut state, &mut params, &grads)?;
            model.load(&params)?;
            loss_sum += batch_loss;
            step += 1;
        }
        let (ser, acc) = evaluate(&model, &dev)?;
        records.push(EpochRecord {
            epoch,
            mean_loss: loss_sum / train.len() as f64,
            dev_symbol_error_rate: ser,
            dev_accuracy: acc,
            last_lr: state.lr,
        });
    }
    Ok(TrainOutcome { report: TrainReport { frontend: cfg.name().to_string(), steps: step, epochs: records }, model })
}

/// Reduced configurations of the four front-ends that train in seconds.
pub fn toy_frontends() -> Vec<FrontendConfig> {
    let vgg = VggConfig { channels: vec![4, 8, 8, 4], time_strides: vec![1, 2, 1, 2] };
    vec![
        FrontendConfig::LogMel(LogMelConfig { n_mels: 40, vgg: vgg.clone(), ..Default::default() }),
        FrontendConfig::Scf(ScfConfig { l1_filters: 16, l1_kernel: 128, l2_filters: 2, l2_kernel: 40, vgg, ..Default::default() }),
        FrontendConfig::Wav2vecFe(Wav2vecConfig { channels: 16, ..Default::default() }),
        toy_generic2d(),
    ]
}

/// generic2d with a 16 x 128 randomly initialised trainable filterbank and a
/// narrow six-layer 2D stack.
pub fn toy_generic2d() -> FrontendConfig {
    FrontendConfig::Generic2d(Generic2dConfig {
        first_layer: FirstLayer::Filterbank(FilterbankLayer { n_filters: 16, kernel: 128, ..Default::default() }),
        channels: vec![4, 8, 8, 8, 8, 4],
        ..Default::default()
    })
}
