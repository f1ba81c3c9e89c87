use super::fft::{fft_real, next_power_of_two};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const ORDER: i32 = 4;
const BANDWIDTH_FACTOR: f64 = 1.019;

/// Equivalent rectangular bandwidth in Hz.
pub fn erb(f: f64) -> f64 {
    24.7 * (4.37 * f / 1000.0 + 1.0)
}

/// Number of ERBs below `f`.
pub fn erb_rate(f: f64) -> f64 {
    21.4 * (1.0 + 4.37 * f / 1000.0).log10()
}

pub fn erb_rate_to_hz(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) * 1000.0 / 4.37
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterOrigin {
    Gammatone,
    Random,
    MelMatrix,
    Learned,
}

/// A bank of FIR filters stored as `[n_filters, kernel_length]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    filters: Tensor,
    center_frequencies: Option<Vec<f64>>,
    origin: FilterOrigin,
}

impl FilterBank {
    pub fn new(filters: Tensor, center_frequencies: Option<Vec<f64>>, origin: FilterOrigin, sample_rate: u32) -> Result<Self> {
        if filters.rank() != 2 {
            return Err(Error::Shape(format!("filter bank must be rank 2, got {:?}", filters.shape())));
        }
        if let Some(cf) = &center_frequencies {
            let nyq = sample_rate as f64 / 2.0;
            if cf.len() != filters.shape()[0] {
                return Err(Error::Shape("one centre frequency per filter required".into()));
            }
            if cf.iter().any(|&f| !(f.is_finite() && f > 0.0 && f < nyq)) {
                return Err(Error::Argument(format!("centre frequencies must lie in (0, {nyq})")));
            }
        }
        Ok(Self { filters, center_frequencies, origin })
    }

    pub fn n_filters(&self) -> usize {
        self.filters.shape()[0]
    }

    pub fn kernel_length(&self) -> usize {
        self.filters.shape()[1]
    }

    pub fn filter(&self, i: usize) -> &[f64] {
        self.filters.row(i)
    }

    pub fn filters(&self) -> &Tensor {
        &self.filters
    }

    pub fn into_filters(self) -> Tensor {
        self.filters
    }

    pub fn center_frequencies(&self) -> Option<&[f64]> {
        self.center_frequencies.as_deref()
    }

    pub fn origin(&self) -> FilterOrigin {
        self.origin
    }

    /// Rows reordered so that row `i` of the result is row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<FilterBank> {
        let k = self.kernel_length();
        let mut data = Vec::with_capacity(self.filters.numel());
        for &p in perm {
            data.extend_from_slice(self.filter(p));
        }
        Ok(FilterBank {
            filters: Tensor::new(&[perm.len(), k], data)?,
            center_frequencies: self.center_frequencies.as_ref().map(|cf| perm.iter().map(|&p| cf[p]).collect()),
            origin: self.origin,
        })
    }
}

/// 4th-order gammatone impulse responses
/// `t^3 exp(-2 pi 1.019 ERB(fc) t) cos(2 pi fc t)` with centres equally
/// spaced on the ERB-rate scale over `[f_min, f_max]`. Each filter is scaled
/// to a peak magnitude response of one.
pub fn gammatone_filterbank(n_filters: usize, kernel_length: usize, sample_rate: u32, f_min: f64, f_max: f64) -> Result<FilterBank> {
    let nyq = sample_rate as f64 / 2.0;
    if n_filters == 0 || kernel_length < 2 {
        return Err(Error::Argument("need at least one filter of length >= 2".into()));
    }
    if !(f_min > 0.0 && f_min <= f_max) {
        return Err(Error::Argument(format!("need 0 < f_min <= f_max, got [{f_min}, {f_max}]")));
    }
    if f_max >= nyq {
        return Err(Error::Argument(format!("f_max {f_max} Hz must be below Nyquist {nyq} Hz")));
    }
    let (e_lo, e_hi) = (erb_rate(f_min), erb_rate(f_max));
    let centers: Vec<f64> = (0..n_filters)
        .map(|i| {
            if n_filters == 1 {
                f_min
            } else {
                erb_rate_to_hz(e_lo + (e_hi - e_lo) * i as f64 / (n_filters - 1) as f64)
            }
        })
        .collect();
    let sr = sample_rate as f64;
    let n_fft = next_power_of_two(16 * kernel_length).max(4096);
    let mut data = Vec::with_capacity(n_filters * kernel_length);
    for &fc in &centers {
        let b = BANDWIDTH_FACTOR * erb(fc);
        let mut h: Vec<f64> = (0..kernel_length)
            .map(|n| {
                let t = n as f64 / sr;
                t.powi(ORDER - 1) * (-2.0 * PI * b * t).exp() * (2.0 * PI * fc * t).cos()
            })
            .collect();
        let peak = fft_real(&h, n_fft)?.iter().map(|c| c.norm()).fold(0.0, f64::max);
        h.iter_mut().for_each(|v| *v /= peak);
        data.extend(h);
    }
    FilterBank::new(
        Tensor::new(&[n_filters, kernel_length], data)?,
        Some(centers),
        FilterOrigin::Gammatone,
        sample_rate,
    )
}
