//! Finite-difference gradient checks over every differentiable operation and
//! over complete front-ends at toy sizes.

use crate::dsp::Waveform;
use crate::frontends::{Frontend, FrontendConfig};
use crate::tensor::{grad_check_with, Activation, GradCheckOptions, GradCheckReport, Padding, Tape, Tensor, Var};
use crate::training::{ctc_loss, toy_frontends};
use crate::{Error, RandomSource, Result};

/// Operation names accepted by [`op_grad_check`].
pub const OP_SCOPES: &[&str] = &[
    "conv1d",
    "conv2d",
    "linear",
    "relu",
    "gelu",
    "abs",
    "magnitude_root",
    "log",
    "layer_norm",
    "group_norm",
    "log_softmax",
    "ctc",
];

/// Named outcome of one gradient comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub report: GradCheckReport,
}

/// Perturbs the first analytic coordinate; every check must then fail.
fn corrupt(g: &mut [f64]) {
    if let Some(v) = g.first_mut() {
        *v = *v * 1.5 + 1.0;
    }
}

fn random(shape: &[usize], rng: &mut RandomSource) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).expect("non-empty shape")
}

/// Uniform values with magnitude in `[0.1, 1]` and random sign, keeping
/// clear of the kinks of abs, relu and the magnitude root.
fn away_from_zero(shape: &[usize], rng: &mut RandomSource) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.uniform(0.1, 1.0);
            if rng.below(2) == 0 {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).expect("non-empty shape")
}

fn positive(shape: &[usize], rng: &mut RandomSource) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(0.1, 2.0)).collect()).expect("non-empty shape")
}

/// Weighted sum with fixed random weights, so no output cancels by symmetry.
fn project(tape: &mut Tape, y: Var, weights: &[f64]) -> Result<Var> {
    let y = tape.mul_const(y, weights.to_vec())?;
    tape.sum(y)
}

fn weights(n: usize, rng: &mut RandomSource) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(0.5, 1.5)).collect()
}

type Build<'a> = dyn Fn(&mut Tape, &[Var]) -> Result<Var> + 'a;

/// Checks `build` with respect to each input in turn, the others held fixed.
fn check_inputs(name: &str, inputs: &[(&str, Tensor)], build: &Build, opts: &GradCheckOptions, tampered: bool) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for (i, (label, x)) in inputs.iter().enumerate() {
        let f = |tape: &mut Tape, v: Var| {
            let vars: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(j, (_, t))| if j == i { v } else { tape.constant(t.clone()) })
                .collect();
            build(tape, &vars)
        };
        let report = if tampered { grad_check_with(f, x, opts, corrupt)? } else { grad_check_with(f, x, opts, |_| {})? };
        out.push(CheckResult { name: format!("{name}:{label}"), report });
    }
    Ok(out)
}

/// Gradient checks for one named operation on random inputs; `tampered`
/// corrupts the analytic gradient as a negative control.
pub fn op_grad_check(scope: &str, rng: &mut RandomSource, tampered: bool) -> Result<Vec<CheckResult>> {
    let opts = GradCheckOptions::default();
    let act = |kind: Activation, x: Tensor, rng: &mut RandomSource| -> Result<Vec<CheckResult>> {
        let w = weights(x.numel(), rng);
        check_inputs(scope, &[("x", x)], &|t, v| {
            let y = t.activation(v[0], kind)?;
            project(t, y, &w)
        }, &opts, tampered)
    };
    match scope {
        "conv1d" => {
            let (x, w, b) = (random(&[2, 11], rng), random(&[3, 2, 4], rng), random(&[3], rng));
            let c = weights(3 * 6, rng);
            check_inputs(scope, &[("x", x), ("w", w), ("b", b)], &|t, v| {
                let y = t.conv1d(v[0], v[1], Some(v[2]), 2, Padding::Same)?;
                let y = t.activation(y, Activation::Gelu)?;
                project(t, y, &c)
            }, &opts, tampered)
        }
        "conv2d" => {
            let (x, w, b) = (random(&[2, 7, 5], rng), random(&[3, 2, 3, 3], rng), random(&[3], rng));
            let c = weights(3 * 4 * 5, rng);
            check_inputs(scope, &[("x", x), ("w", w), ("b", b)], &|t, v| {
                let y = t.conv2d(v[0], v[1], Some(v[2]), 2, 1, Padding::Same)?;
                let y = t.activation(y, Activation::Gelu)?;
                project(t, y, &c)
            }, &opts, tampered)
        }
        "linear" => {
            let (x, w, b) = (random(&[4, 5], rng), random(&[3, 5], rng), random(&[3], rng));
            check_inputs(scope, &[("x", x), ("w", w), ("b", b)], &|t, v| {
                let y = t.linear(v[0], v[1], Some(v[2]))?;
                t.sum_squares(y)
            }, &opts, tampered)
        }
        "relu" => act(Activation::Relu, away_from_zero(&[3, 7], rng), rng),
        "gelu" => act(Activation::Gelu, away_from_zero(&[3, 7], rng), rng),
        "abs" => act(Activation::Abs, away_from_zero(&[3, 7], rng), rng),
        "magnitude_root" => act(Activation::MagnitudeRoot(2.5), away_from_zero(&[3, 7], rng), rng),
        "log" => act(Activation::LogEps(1e-3), positive(&[3, 7], rng), rng),
        "layer_norm" => {
            let (x, g, o) = (random(&[4, 6], rng), random(&[6], rng), random(&[6], rng));
            let c = weights(24, rng);
            check_inputs(scope, &[("x", x), ("gain", g), ("offset", o)], &|t, v| {
                let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
                let y = t.activation(y, Activation::Gelu)?;
                project(t, y, &c)
            }, &opts, tampered)
        }
        "group_norm" => {
            let (x, g, o) = (random(&[4, 7], rng), random(&[4], rng), random(&[4], rng));
            let c = weights(28, rng);
            check_inputs(scope, &[("x", x), ("gain", g), ("offset", o)], &|t, v| {
                let y = t.group_norm(v[0], 2, v[1], v[2], 1e-5)?;
                let y = t.activation(y, Activation::Gelu)?;
                project(t, y, &c)
            }, &opts, tampered)
        }
        "log_softmax" => {
            let x = random(&[3, 4], rng);
            let c = weights(12, rng);
            check_inputs(scope, &[("x", x)], &|t, v| {
                let y = t.log_softmax(v[0])?;
                project(t, y, &c)
            }, &opts, tampered)
        }
        "ctc" => {
            let x = random(&[6, 3], rng);
            check_inputs(scope, &[("logits", x)], &|t, v| {
                let lp = t.log_softmax(v[0])?;
                ctc_loss(t, lp, &[1, 2, 2])
            }, &opts, tampered)
        }
        other => Err(Error::Argument(format!("unknown gradient-check scope {other:?}; expected one of {OP_SCOPES:?}"))),
    }
}

/// Checks every trainable parameter of a full front-end (extractor,
/// subsampling and projection) at toy size. Parameters are redrawn from
/// `U(-0.5, 0.5)` so activations are of order one and no bias sits at zero.
pub fn frontend_grad_check(cfg: &FrontendConfig, rng: &mut RandomSource, tampered: bool, max_coords: usize) -> Result<Vec<CheckResult>> {
    let mut fe = Frontend::new(cfg.clone(), 4, 16000, rng)?;
    for p in fe.params_mut().iter_mut().filter(|p| p.trainable) {
        p.value.data_mut().iter_mut().for_each(|v| *v = rng.uniform(-0.5, 0.5));
    }
    let w = Waveform::new((0..1600).map(|_| rng.uniform(-0.5, 0.5)).collect(), 16000)?;
    let out_len = {
        let mut tape = Tape::new();
        let bound = fe.params().bind(&mut tape);
        let y = fe.forward(&mut tape, &bound, &w, None)?;
        tape.value(y).numel()
    };
    let c = weights(out_len, rng);
    let opts = GradCheckOptions { max_coords: Some(max_coords), floor: 1e-6, ..Default::default() };
    let mut results = Vec::new();
    let names: Vec<String> = fe.params().iter().filter(|p| p.trainable).map(|p| p.name.clone()).collect();
    for name in names {
        let x = fe.params().get(&name).expect("listed above").value.clone();
        let f = |tape: &mut Tape, v: Var| {
            let mut bound = fe.params().bind(tape);
            bound.insert(name.clone(), v);
            let y = fe.forward(tape, &bound, &w, None)?;
            project(tape, y, &c)
        };
        let report = if tampered { grad_check_with(f, &x, &opts, corrupt)? } else { grad_check_with(f, &x, &opts, |_| {})? };
        results.push(CheckResult { name: format!("{}:{name}", cfg.name()), report });
    }
    Ok(results)
}

/// The four front-ends at the sizes used by [`frontend_grad_check`].
pub fn toy_composites() -> Vec<FrontendConfig> {
    toy_frontends()
}
