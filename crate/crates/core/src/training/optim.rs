use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::frontends::ParamSet;
use crate::{Error, Result};

/// Per-parameter gradients keyed by parameter name.
pub type Grads = BTreeMap<String, Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub lr: f64,
    pub step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl OptimizerState {
    pub fn new(config: AdamWConfig, lr: f64) -> Self {
        Self { config, lr, step: 0, first: BTreeMap::new(), second: BTreeMap::new() }
    }

    pub fn first_moment(&self, name: &str) -> Option<&[f64]> {
        self.first.get(name).map(Vec::as_slice)
    }

    pub fn second_moment(&self, name: &str) -> Option<&[f64]> {
        self.second.get(name).map(Vec::as_slice)
    }
}

/// One AdamW step with decoupled weight decay. Trainable parameters without
/// an entry in `grads` are treated as having a zero gradient.
pub fn adamw_step(state: &mut OptimizerState, params: &mut ParamSet, grads: &Grads) -> Result<()> {
    state.step += 1;
    let c = state.config;
    let bc1 = 1.0 - c.beta1.powi(state.step as i32);
    let bc2 = 1.0 - c.beta2.powi(state.step as i32);
    let lr = state.lr;
    for p in params.iter_mut().filter(|p| p.trainable) {
        let n = p.value.numel();
        let g = grads.get(&p.name);
        if let Some(g) = g {
            if g.len() != n {
                return Err(Error::Shape(format!("gradient for {} has {} entries, expected {n}", p.name, g.len())));
            }
        }
        let m = state.first.entry(p.name.clone()).or_insert_with(|| vec![0.0; n]);
        let v = state.second.entry(p.name.clone()).or_insert_with(|| vec![0.0; n]);
        for (i, w) in p.value.data_mut().iter_mut().enumerate() {
            let gi = g.map_or(0.0, |g| g[i]);
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            *w -= lr * c.weight_decay * *w + lr * mhat / (vhat.sqrt() + c.eps);
        }
    }
    Ok(())
}

/// Global L2 norm of all gradients.
pub fn global_norm(grads: &Grads) -> f64 {
    grads.values().flatten().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales every gradient so the global norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm(grads: &mut Grads, max_norm: f64) -> Result<f64> {
    if let Some((name, _)) = grads.iter().find(|(_, g)| g.iter().any(|x| !x.is_finite())) {
        return Err(Error::Numeric(format!("non-finite gradient for {name}")));
    }
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        grads.values_mut().flatten().for_each(|g| *g *= s);
    }
    Ok(norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneCycle {
    pub start: f64,
    pub peak: f64,
    pub end: f64,
}

impl Default for OneCycle {
    fn default() -> Self {
        Self { start: 7e-6, peak: 7e-4, end: 7e-6 }
    }
}

impl OneCycle {
    /// Linear ramp to `peak` at the midpoint, then linear decay to `end`.
    pub fn lr(&self, step: usize, total_steps: usize) -> f64 {
        if total_steps == 0 {
            return self.peak;
        }
        let x = step.min(total_steps) as f64 / total_steps as f64;
        if x <= 0.5 {
            self.start + (self.peak - self.start) * (x / 0.5)
        } else {
            self.peak + (self.end - self.peak) * ((x - 0.5) / 0.5)
        }
    }
}

pub fn one_cycle_lr(step: usize, total_steps: usize, lr_start: f64, lr_peak: f64, lr_end: f64) -> f64 {
    OneCycle { start: lr_start, peak: lr_peak, end: lr_end }.lr(step, total_steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn one(name: &str, v: Vec<f64>) -> ParamSet {
        let mut p = ParamSet::new();
        let n = v.len();
        p.add(name, Tensor::new(&[n], v).unwrap(), true);
        p
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut p = one("w", vec![2.0, -4.0]);
        let mut st = OptimizerState::new(AdamWConfig::default(), 0.1);
        let g: Grads = [("w".to_string(), vec![0.0, 0.0])].into();
        adamw_step(&mut st, &mut p, &g).unwrap();
        let w = p.get("w").unwrap().value.data();
        assert_eq!(w, &[2.0 * (1.0 - 0.1 * 0.01), -4.0 * (1.0 - 0.1 * 0.01)]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = one("w", vec![0.0]);
        let mut st = OptimizerState::new(AdamWConfig::default(), 1e-3);
        let g: Grads = [("w".to_string(), vec![1.0])].into();
        adamw_step(&mut st, &mut p, &g).unwrap();
        let w = p.get("w").unwrap().value.data()[0];
        assert!((w + 1e-3).abs() < 1e-10, "{w}");
        assert_eq!(st.step, 1);
    }

    #[test]
    fn frozen_parameters_untouched() {
        let mut p = ParamSet::new();
        p.add("f", Tensor::new(&[1], vec![3.0]).unwrap(), false);
        let mut st = OptimizerState::new(AdamWConfig::default(), 1.0);
        adamw_step(&mut st, &mut p, &Grads::new()).unwrap();
        assert_eq!(p.get("f").unwrap().value.data(), &[3.0]);
    }

    #[test]
    fn clip_examples() {
        let mut g: Grads = [("a".to_string(), vec![3.0, 4.0])].into();
        assert_eq!(clip_grad_norm(&mut g, 1.0).unwrap(), 5.0);
        assert!((g["a"][0] - 0.6).abs() < 1e-15 && (g["a"][1] - 0.8).abs() < 1e-15);
        let mut g: Grads = [("a".to_string(), vec![0.3, 0.4])].into();
        clip_grad_norm(&mut g, 1.0).unwrap();
        assert_eq!(g["a"], vec![0.3, 0.4]);
        let mut g: Grads = [("a".to_string(), vec![f64::NAN])].into();
        assert!(matches!(clip_grad_norm(&mut g, 1.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn one_cycle_endpoints() {
        let s = OneCycle::default();
        assert_eq!(s.lr(0, 100), 7e-6);
        assert_eq!(s.lr(50, 100), 7e-4);
        assert!((s.lr(100, 100) - 7e-6).abs() < 1e-18);
        assert!((s.lr(25, 100) - (7e-6 + 7e-4) / 2.0).abs() < 1e-15);
    }
}
