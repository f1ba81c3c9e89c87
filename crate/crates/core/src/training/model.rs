use crate::dsp::Waveform;
use crate::frontends::{Bound, Frontend, FrontendConfig, ParamSet};
use crate::specaugment::{mask_grid, MaskRect};
use crate::tensor::{Activation, Tape, Tensor, Var};
use super::ctc::BLANK;
use crate::{RandomSource, Result};

pub const ENCODER_LAYERS: usize = 2;
pub const OUTPUT_WEIGHT: &str = "out.weight";
pub const OUTPUT_BIAS: &str = "out.bias";
pub const ENCODER_NORM_GAIN: &str = "enc.norm.gain";
pub const ENCODER_NORM_OFFSET: &str = "enc.norm.offset";
/// Small enough that the stack's tiny initial outputs are still normalised.
const NORM_EPS: f64 = 1e-12;

/// Initial output bias of the blank symbol. Starting with blank unlikely keeps
/// training out of the all-blank optimum that stationary tone segments invite.
pub const BLANK_BIAS_INIT: f64 = -3.0;

fn enc(i: usize, what: &str) -> String {
    format!("enc.{i}.{what}")
}

/// Front-end, projection, a stand-in encoder (layer norm followed by two
/// feed-forward ReLU layers) and a softmax output over the toy vocabulary.
#[derive(Debug, Clone)]
pub struct ToyModel {
    pub frontend: Frontend,
    pub head: ParamSet,
    vocab: usize,
}

impl ToyModel {
    pub fn new(cfg: FrontendConfig, vocab: usize, model_dim: usize, sample_rate: u32, rng: &mut RandomSource) -> Result<Self> {
        let frontend = Frontend::new(cfg, model_dim, sample_rate, rng)?;
        let d = model_dim;
        let mut head = ParamSet::new();
        head.add(ENCODER_NORM_GAIN, Tensor::full(&[d], 1.0), true);
        head.add(ENCODER_NORM_OFFSET, Tensor::zeros(&[d]), true);
        for i in 0..ENCODER_LAYERS {
            head.add(enc(i, "weight"), Tensor::kaiming_uniform(&[d, d], d, rng), true);
            head.add(enc(i, "bias"), Tensor::zeros(&[d]), true);
        }
        head.add(OUTPUT_WEIGHT, Tensor::kaiming_uniform(&[vocab, d], d, rng), true);
        let mut ob = Tensor::zeros(&[vocab]);
        ob.data_mut()[BLANK] = BLANK_BIAS_INIT;
        head.add(OUTPUT_BIAS, ob, true);
        Ok(Self { frontend, head, vocab })
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    /// All parameters, front-end first.
    pub fn params(&self) -> ParamSet {
        let mut all = self.frontend.params().clone();
        all.extend(self.head.clone());
        all
    }

    /// Loads values for every shared name into front-end and head.
    pub fn load(&mut self, params: &ParamSet) -> Result<()> {
        self.frontend.params_mut().load_values(params)?;
        self.head.load_values(params)
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        self.params().bind(tape)
    }

    /// `[frames, vocab]` log-probabilities. `feature_masks` are rectangles
    /// over the extractor output, applied before subsampling.
    pub fn log_probs(&self, tape: &mut Tape, bound: &Bound, w: &Waveform, feature_masks: Option<&[MaskRect]>) -> Result<Var> {
        let mut f = self.frontend.extract(tape, bound, w)?;
        if let Some(rects) = feature_masks {
            let s = tape.shape(f).to_vec();
            let m = mask_grid(s[0], s[1], rects)?;
            f = tape.mul_const(f, m)?;
        }
        self.head_forward(tape, bound, f)
    }

    /// Everything after the extractor: subsampling, projection, encoder and
    /// output layer.
    pub fn head_forward(&self, tape: &mut Tape, bound: &Bound, features: Var) -> Result<Var> {
        let fe = &self.frontend;
        let s = fe.subsample(tape, bound, features)?;
        let mut h = fe.project(tape, bound, s)?;
        h = tape.layer_norm(h, bound.get(ENCODER_NORM_GAIN)?, bound.get(ENCODER_NORM_OFFSET)?, NORM_EPS)?;
        for i in 0..ENCODER_LAYERS {
            let (w, b) = (bound.get(&enc(i, "weight"))?, bound.get(&enc(i, "bias"))?);
            h = tape.linear(h, w, Some(b))?;
            h = tape.activation(h, Activation::Relu)?;
        }
        let logits = tape.linear(h, bound.get(OUTPUT_WEIGHT)?, Some(bound.get(OUTPUT_BIAS)?))?;
        tape.log_softmax(logits)
    }

    /// Log-probabilities without gradient bookkeeping.
    pub fn infer(&self, w: &Waveform) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let lp = self.log_probs(&mut tape, &bound, w, None)?;
        Ok(tape.value(lp).clone().detached())
    }
}
