//! Time and feature masking, either on extracted features or on the complex
//! STFT of the waveform before any front-end sees it.

use serde::{Deserialize, Serialize};

use crate::dsp::{istft, stft, StftConfig, Waveform};
use crate::frontends::FeatureTensor;
use crate::{Error, RandomSource, Result};

/// Value written into masked cells.
pub const MASK_VALUE: f64 = 0.0;

/// Analysis parameters for STFT-domain masking.
pub const STFT_WINDOW: usize = 400;
pub const STFT_HOP: usize = 160;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskSpec {
    pub max_time_masks: usize,
    pub max_time_width: usize,
    pub max_feature_masks: usize,
    pub max_feature_width: usize,
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self { max_time_masks: 2, max_time_width: 20, max_feature_masks: 2, max_feature_width: 16 }
    }
}

impl MaskSpec {
    pub fn none() -> Self {
        Self { max_time_masks: 0, max_time_width: 0, max_feature_masks: 0, max_feature_width: 0 }
    }

    pub fn is_none(&self) -> bool {
        self.max_time_masks == 0 && self.max_feature_masks == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Time,
    Feature,
}

/// A band `[start, start + width)` along one axis, spanning the other fully.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRect {
    pub axis: Axis,
    pub start: usize,
    pub width: usize,
}

impl MaskRect {
    pub fn end(&self) -> usize {
        self.start + self.width
    }

    fn check(&self, frames: usize, dims: usize) -> Result<()> {
        let len = match self.axis {
            Axis::Time => frames,
            Axis::Feature => dims,
        };
        if self.end() > len {
            return Err(Error::Argument(format!(
                "{:?} mask [{}, {}) exceeds extent {len}",
                self.axis,
                self.start,
                self.end()
            )));
        }
        Ok(())
    }
}

fn sample_axis(axis: Axis, max_count: usize, max_width: usize, len: usize, rng: &mut RandomSource, out: &mut Vec<MaskRect>) {
    let n = rng.int_inclusive(max_count);
    for _ in 0..n {
        let width = rng.int_inclusive(max_width).min(len);
        let start = rng.int_inclusive(len - width);
        out.push(MaskRect { axis, start, width });
    }
}

/// Draws time masks then feature masks. Counts and widths are uniform on
/// `0..=max`; widths longer than the axis are clipped to it.
pub fn sample_masks(spec: &MaskSpec, frames: usize, dims: usize, rng: &mut RandomSource) -> Result<Vec<MaskRect>> {
    if frames == 0 || dims == 0 {
        return Err(Error::Argument(format!("cannot mask a {frames} x {dims} grid")));
    }
    let mut rects = Vec::new();
    sample_axis(Axis::Time, spec.max_time_masks, spec.max_time_width, frames, rng, &mut rects);
    sample_axis(Axis::Feature, spec.max_feature_masks, spec.max_feature_width, dims, rng, &mut rects);
    Ok(rects)
}

/// 0/1 multiplier over a `[frames, dims]` grid, 0 inside any rectangle.
pub fn mask_grid(frames: usize, dims: usize, rects: &[MaskRect]) -> Result<Vec<f64>> {
    let mut m = vec![1.0; frames * dims];
    for r in rects {
        r.check(frames, dims)?;
        match r.axis {
            Axis::Time => m[r.start * dims..r.end() * dims].fill(0.0),
            Axis::Feature => {
                for row in m.chunks_mut(dims) {
                    row[r.start..r.end()].fill(0.0);
                }
            }
        }
    }
    Ok(m)
}

/// Writes [`MASK_VALUE`] into every masked cell; other cells are untouched.
pub fn apply_feature_masks(f: &FeatureTensor, rects: &[MaskRect]) -> Result<FeatureTensor> {
    let (frames, dims) = (f.frames(), f.dim());
    let m = mask_grid(frames, dims, rects)?;
    let mut out = f.clone();
    for (v, k) in out.values_mut().data_mut().iter_mut().zip(&m) {
        if *k == 0.0 {
            *v = MASK_VALUE;
        }
    }
    Ok(out)
}

/// Zeroes STFT frames and bin bands, then resynthesises a waveform of the
/// original length. Rectangles index STFT frames (time) and one-sided bins
/// (feature).
pub fn apply_stft_rects(w: &Waveform, rects: &[MaskRect]) -> Result<Waveform> {
    let cfg = StftConfig::new(STFT_WINDOW, STFT_HOP);
    let mut s = stft(w, cfg)?;
    let (frames, bins) = (s.frames(), s.bins());
    for r in rects {
        r.check(frames, bins)?;
    }
    for t in 0..frames {
        let frame = s.frame_mut(t);
        for r in rects {
            match r.axis {
                Axis::Time if (r.start..r.end()).contains(&t) => frame.fill(MASK_VALUE.into()),
                Axis::Feature => frame[r.start..r.end()].fill(MASK_VALUE.into()),
                Axis::Time => {}
            }
        }
    }
    istft(&s, w.len(), w.sample_rate())
}

/// Samples masks over the waveform's STFT grid and applies them.
pub fn apply_stft_masks(w: &Waveform, spec: &MaskSpec, rng: &mut RandomSource) -> Result<Waveform> {
    let cfg = StftConfig::new(STFT_WINDOW, STFT_HOP);
    let frames = cfg.frames(w.len());
    if frames == 0 {
        return Err(Error::EmptyOutput(format!("waveform of {} samples is shorter than one STFT window", w.len())));
    }
    let rects = sample_masks(spec, frames, cfg.bins(), rng)?;
    apply_stft_rects(w, &rects)
}
