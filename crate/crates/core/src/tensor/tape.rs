use super::kernels::{self, conv_out_len, Conv1dGeom, Conv2dGeom, Padding};
use super::Tensor;
use crate::error::{Error, Result};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    /// Exact form `x * Phi(x)` with the Gaussian CDF.
    Gelu,
    Abs,
    /// `|x|^(1/p)`, `p > 1`.
    MagnitudeRoot(f64),
    /// `ln(x + eps)`, `eps > 0`.
    LogEps(f64),
}

impl Activation {
    fn validate(self) -> Result<()> {
        match self {
            Activation::MagnitudeRoot(p) if !(p > 1.0) => {
                Err(Error::Argument(format!("root exponent must exceed 1, got {p}")))
            }
            Activation::LogEps(e) if !(e > 0.0) => {
                Err(Error::Argument(format!("log epsilon must be positive, got {e}")))
            }
            _ => Ok(()),
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Gelu => x * gauss_cdf(x),
            Activation::Abs => x.abs(),
            Activation::MagnitudeRoot(p) => x.abs().powf(1.0 / p),
            Activation::LogEps(e) => (x + e).ln(),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => gauss_cdf(x) + x * (-0.5 * x * x).exp() / (2.0 * PI).sqrt(),
            Activation::Abs => sign0(x),
            Activation::MagnitudeRoot(p) => {
                if x == 0.0 {
                    0.0
                } else {
                    sign0(x) * x.abs().powf(1.0 / p - 1.0) / p
                }
            }
            Activation::LogEps(e) => 1.0 / (x + e),
        }
    }
}

fn gauss_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Vec<f64>),
    Sum(Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Act(Var, Activation),
    Conv1d { x: Var, w: Var, b: Option<Var>, geom: Conv1dGeom },
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: Conv2dGeom },
    Linear { x: Var, w: Var, b: Option<Var>, n: usize, d_in: usize, d_out: usize },
    LayerNorm { x: Var, gain: Var, offset: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    GroupNorm { x: Var, gain: Var, offset: Var, groups: usize, xhat: Vec<f64>, rstd: Vec<f64> },
    LogSoftmax(Var),
    /// Loss node whose gradient w.r.t. the input was computed during forward.
    Precomputed(Var, Vec<f64>),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records operations for one forward pass and replays them backwards.
///
/// Gradients accumulate additively in each recorded tensor's grad slot,
/// including across repeated `backward` calls.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Its `requires_grad` flag is kept as given.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t.detached(), Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn zero_grad(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.value.zero_grad());
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad()
    }

    fn derived(&mut self, shape: &[usize], data: Vec<f64>, inputs: &[Var], op: Op) -> Result<Var> {
        let mut t = if shape.is_empty() {
            Tensor::scalar(data[0])
        } else {
            Tensor::new(shape, data)?
        };
        if inputs.iter().any(|&v| self.rg(v)) {
            t = t.with_grad();
        }
        Ok(self.push(t, op))
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "operand shapes differ: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        self.derived(&shape, data, &[a, b], Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        self.derived(&shape, data, &[a, b], Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let data = self.value(a).data().iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.derived(&shape, data, &[a], Op::Scale(a, c))
    }

    /// Elementwise product with a constant of the same size (e.g. a 0/1 mask).
    pub fn mul_const(&mut self, a: Var, m: Vec<f64>) -> Result<Var> {
        if m.len() != self.value(a).numel() {
            return Err(Error::Shape(format!(
                "constant of length {} does not match {:?}",
                m.len(),
                self.shape(a)
            )));
        }
        let data = self.value(a).data().iter().zip(&m).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        self.derived(&shape, data, &[a], Op::MulConst(a, m))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.derived(&[], vec![s], &[a], Op::Sum(a))
    }

    /// `sum(a * a)`, a common scalar probe in tests and checks.
    pub fn sum_squares(&mut self, a: Var) -> Result<Var> {
        let sq = self.mul(a, a)?;
        self.sum(sq)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(a).numel() {
            return Err(Error::Shape(format!("cannot reshape {:?} into {shape:?}", self.shape(a))));
        }
        let data = self.value(a).data().to_vec();
        self.derived(shape, data, &[a], Op::Reshape(a))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let in_shape = self.shape(a).to_vec();
        let rank = in_shape.len();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Argument(format!("{perm:?} is not a permutation of rank {rank}")));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
        let data = permute_data(self.value(a).data(), &in_shape, perm);
        self.derived(&out_shape, data, &[a], Op::Permute(a, perm.to_vec()))
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Result<Var> {
        kind.validate()?;
        let data = self.value(a).data().iter().map(|&x| kind.apply(x)).collect();
        let shape = self.shape(a).to_vec();
        self.derived(&shape, data, &[a], Op::Act(a, kind))
    }

    /// 1D cross-correlation. `x` is `[c_in, t]` or `[batch, c_in, t]`,
    /// `w` is `[c_out, c_in, k]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: Padding) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let (batch, c_in, len) = match xs.as_slice() {
            [c, t] => (1, *c, *t),
            [bt, c, t] => (*bt, *c, *t),
            _ => return Err(Error::Shape(format!("conv1d input must be rank 2 or 3, got {xs:?}"))),
        };
        let [c_out, wc, kernel] = ws.as_slice() else {
            return Err(Error::Shape(format!("conv1d weight must be rank 3, got {ws:?}")));
        };
        if *wc != c_in {
            return Err(Error::Shape(format!("input has {c_in} channels, weight expects {wc}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [*c_out] {
                return Err(Error::Shape(format!("bias shape {:?}, expected [{c_out}]", self.shape(b))));
            }
        }
        let (out, pad) = conv_out_len(len, *kernel, stride, padding)?;
        let geom = Conv1dGeom { batch, c_in, len, c_out: *c_out, kernel: *kernel, stride, pad, out };
        let data = kernels::conv1d_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let shape = if xs.len() == 2 { vec![*c_out, out] } else { vec![batch, *c_out, out] };
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.derived(&shape, data, &inputs, Op::Conv1d { x, w, b, geom })
    }

    /// 2D cross-correlation over `[c_in, time, feature]` with weight
    /// `[c_out, c_in, k_t, k_f]`.
    #[allow(clippy::too_many_arguments)]
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride_time: usize,
        stride_feature: usize,
        padding: Padding,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let [c_in, t, f] = xs.as_slice() else {
            return Err(Error::Shape(format!("conv2d input must be rank 3, got {xs:?}")));
        };
        let [c_out, wc, kt, kf] = ws.as_slice() else {
            return Err(Error::Shape(format!("conv2d weight must be rank 4, got {ws:?}")));
        };
        if wc != c_in {
            return Err(Error::Shape(format!("input has {c_in} channels, weight expects {wc}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [*c_out] {
                return Err(Error::Shape(format!("bias shape {:?}, expected [{c_out}]", self.shape(b))));
            }
        }
        let (ot, pt) = conv_out_len(*t, *kt, stride_time, padding)?;
        let (of, pf) = conv_out_len(*f, *kf, stride_feature, padding)?;
        let geom = Conv2dGeom {
            c_in: *c_in,
            t: *t,
            f: *f,
            c_out: *c_out,
            kt: *kt,
            kf: *kf,
            st: stride_time,
            sf: stride_feature,
            pt,
            pf,
            ot,
            of,
        };
        let data = kernels::conv2d_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.derived(&[*c_out, ot, of], data, &inputs, Op::Conv2d { x, w, b, geom })
    }

    /// Row-wise affine map: `[n, d_in] x [d_out, d_in]^T + [d_out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let [n, d_in] = xs.as_slice() else {
            return Err(Error::Shape(format!("linear input must be rank 2, got {xs:?}")));
        };
        let [d_out, wd] = ws.as_slice() else {
            return Err(Error::Shape(format!("linear weight must be rank 2, got {ws:?}")));
        };
        if wd != d_in {
            return Err(Error::Shape(format!("input width {d_in}, weight expects {wd}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [*d_out] {
                return Err(Error::Shape(format!("bias shape {:?}, expected [{d_out}]", self.shape(b))));
            }
        }
        let (n, d_in, d_out) = (*n, *d_in, *d_out);
        let xd = self.value(x).data();
        let wdta = self.value(w).data();
        let bd = b.map(|b| self.value(b).data());
        let mut out = vec![0.0; n * d_out];
        for i in 0..n {
            let xr = &xd[i * d_in..(i + 1) * d_in];
            for o in 0..d_out {
                let wr = &wdta[o * d_in..(o + 1) * d_in];
                let mut acc = bd.map_or(0.0, |b| b[o]);
                for (a, c) in xr.iter().zip(wr) {
                    acc += a * c;
                }
                out[i * d_out + o] = acc;
            }
        }
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.derived(&[n, d_out], out, &inputs, Op::Linear { x, w, b, n, d_in, d_out })
    }

    /// Normalises over the last axis, then applies `gain` and `offset`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, offset: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().ok_or_else(|| Error::Shape("layer_norm on a scalar".into()))?;
        if self.shape(gain) != [d] || self.shape(offset) != [d] {
            return Err(Error::Shape(format!("layer_norm affine parameters must have shape [{d}]")));
        }
        let xd = self.value(x).data();
        let g = self.value(gain).data();
        let o = self.value(offset).data();
        let rows = xd.len() / d;
        let mut xhat = vec![0.0; xd.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; xd.len()];
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let (mean, var) = mean_var(row);
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + o[j];
            }
        }
        self.derived(&shape, out, &[x, gain, offset], Op::LayerNorm { x, gain, offset, xhat, rstd })
    }

    /// Group normalisation of `[channels, time]`; statistics per group of
    /// `channels / groups` consecutive channels, affine per channel.
    pub fn group_norm(&mut self, x: Var, groups: usize, gain: Var, offset: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let [c, t] = shape.as_slice() else {
            return Err(Error::Shape(format!("group_norm input must be [channels, time], got {shape:?}")));
        };
        let (c, t) = (*c, *t);
        if groups == 0 || c % groups != 0 {
            return Err(Error::Argument(format!("{c} channels not divisible into {groups} groups")));
        }
        if self.shape(gain) != [c] || self.shape(offset) != [c] {
            return Err(Error::Shape(format!("group_norm affine parameters must have shape [{c}]")));
        }
        let per = c / groups * t;
        let cpg = c / groups;
        let xd = self.value(x).data();
        let g = self.value(gain).data();
        let o = self.value(offset).data();
        let mut xhat = vec![0.0; xd.len()];
        let mut rstd = vec![0.0; groups];
        let mut out = vec![0.0; xd.len()];
        for gi in 0..groups {
            let slice = &xd[gi * per..(gi + 1) * per];
            let (mean, var) = mean_var(slice);
            let rs = 1.0 / (var + eps).sqrt();
            rstd[gi] = rs;
            for (k, &v) in slice.iter().enumerate() {
                let ch = gi * cpg + k / t;
                let h = (v - mean) * rs;
                xhat[gi * per + k] = h;
                out[gi * per + k] = h * g[ch] + o[ch];
            }
        }
        self.derived(&shape, out, &[x, gain, offset], Op::GroupNorm { x, gain, offset, groups, xhat, rstd })
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().ok_or_else(|| Error::Shape("log_softmax on a scalar".into()))?;
        let xd = self.value(x).data();
        let mut out = vec![0.0; xd.len()];
        for (row, orow) in xd.chunks(d).zip(out.chunks_mut(d)) {
            let lse = log_sum_exp(row);
            for (o, v) in orow.iter_mut().zip(row) {
                *o = v - lse;
            }
        }
        self.derived(&shape, out, &[x], Op::LogSoftmax(x))
    }

    /// Records a scalar whose gradient with respect to `input` is already
    /// known (used by fused losses such as CTC).
    pub fn precomputed_scalar(&mut self, input: Var, value: f64, grad: Vec<f64>) -> Result<Var> {
        if grad.len() != self.value(input).numel() {
            return Err(Error::Shape("precomputed gradient size mismatch".into()));
        }
        self.derived(&[], vec![value], &[input], Op::Precomputed(input, grad))
    }

    /// Back-propagates from a scalar `loss`, adding `d loss / d v` into the
    /// grad slot of every recorded value that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].value.requires_grad() {
                continue;
            }
            self.propagate(i, &g, &mut grads)?;
            self.nodes[i].value.accumulate_grad(&g);
        }
        Ok(())
    }

    fn send(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.send(grads, *a, g.to_vec());
                self.send(grads, *b, g.to_vec());
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if self.rg(*a) {
                    self.send(grads, *a, g.iter().zip(bv).map(|(x, y)| x * y).collect());
                }
                if self.rg(*b) {
                    self.send(grads, *b, g.iter().zip(av).map(|(x, y)| x * y).collect());
                }
            }
            Op::Scale(a, c) => self.send(grads, *a, g.iter().map(|x| x * c).collect()),
            Op::MulConst(a, m) => self.send(grads, *a, g.iter().zip(m).map(|(x, y)| x * y).collect()),
            Op::Sum(a) => self.send(grads, *a, vec![g[0]; self.value(*a).numel()]),
            Op::Reshape(a) => self.send(grads, *a, g.to_vec()),
            Op::Permute(a, perm) => {
                let out_shape = self.nodes[i].value.shape().to_vec();
                let mut inv = vec![0; perm.len()];
                for (k, &p) in perm.iter().enumerate() {
                    inv[p] = k;
                }
                self.send(grads, *a, permute_data(g, &out_shape, &inv));
            }
            Op::Act(a, kind) => {
                let xv = self.value(*a).data();
                self.send(grads, *a, g.iter().zip(xv).map(|(gv, &x)| gv * kind.derivative(x)).collect());
            }
            Op::Conv1d { x, w, b, geom } => {
                let (gx, gw, gb) = kernels::conv1d_backward(
                    geom,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    g,
                    self.rg(*x),
                    self.rg(*w),
                );
                if let Some(gx) = gx {
                    self.send(grads, *x, gx);
                }
                if let Some(gw) = gw {
                    self.send(grads, *w, gw);
                }
                if let Some(b) = b {
                    self.send(grads, *b, gb);
                }
            }
            Op::Conv2d { x, w, b, geom } => {
                let (gx, gw, gb) = kernels::conv2d_backward(
                    geom,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    g,
                    self.rg(*x),
                    self.rg(*w),
                );
                if let Some(gx) = gx {
                    self.send(grads, *x, gx);
                }
                if let Some(gw) = gw {
                    self.send(grads, *w, gw);
                }
                if let Some(b) = b {
                    self.send(grads, *b, gb);
                }
            }
            Op::Linear { x, w, b, n, d_in, d_out } => {
                let (n, d_in, d_out) = (*n, *d_in, *d_out);
                let xd = self.value(*x).data();
                let wd = self.value(*w).data();
                if self.rg(*x) {
                    let mut gx = vec![0.0; n * d_in];
                    for r in 0..n {
                        let gxr = &mut gx[r * d_in..(r + 1) * d_in];
                        for o in 0..d_out {
                            let gv = g[r * d_out + o];
                            if gv == 0.0 {
                                continue;
                            }
                            for (a, wv) in gxr.iter_mut().zip(&wd[o * d_in..(o + 1) * d_in]) {
                                *a += gv * wv;
                            }
                        }
                    }
                    self.send(grads, *x, gx);
                }
                if self.rg(*w) {
                    let mut gw = vec![0.0; d_out * d_in];
                    for r in 0..n {
                        let xr = &xd[r * d_in..(r + 1) * d_in];
                        for o in 0..d_out {
                            let gv = g[r * d_out + o];
                            if gv == 0.0 {
                                continue;
                            }
                            for (a, xv) in gw[o * d_in..(o + 1) * d_in].iter_mut().zip(xr) {
                                *a += gv * xv;
                            }
                        }
                    }
                    self.send(grads, *w, gw);
                }
                if let Some(b) = b {
                    let mut gb = vec![0.0; d_out];
                    for r in 0..n {
                        for o in 0..d_out {
                            gb[o] += g[r * d_out + o];
                        }
                    }
                    self.send(grads, *b, gb);
                }
            }
            Op::LayerNorm { x, gain, offset, xhat, rstd } => {
                let d = self.shape(*gain)[0];
                let gd = self.value(*gain).data();
                let mut gx = vec![0.0; g.len()];
                let mut ggain = vec![0.0; d];
                let mut goff = vec![0.0; d];
                for (r, &rs) in rstd.iter().enumerate() {
                    let span = r * d..(r + 1) * d;
                    let gr = &g[span.clone()];
                    let hr = &xhat[span.clone()];
                    let gh: Vec<f64> = gr.iter().zip(gd).map(|(a, b)| a * b).collect();
                    let m1 = gh.iter().sum::<f64>() / d as f64;
                    let m2 = gh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for j in 0..d {
                        gx[r * d + j] = rs * (gh[j] - m1 - hr[j] * m2);
                        ggain[j] += gr[j] * hr[j];
                        goff[j] += gr[j];
                    }
                }
                self.send(grads, *x, gx);
                self.send(grads, *gain, ggain);
                self.send(grads, *offset, goff);
            }
            Op::GroupNorm { x, gain, offset, groups, xhat, rstd } => {
                let [c, t] = *self.shape(*x) else { unreachable!() };
                let cpg = c / groups;
                let per = cpg * t;
                let gd = self.value(*gain).data();
                let mut gx = vec![0.0; g.len()];
                let mut ggain = vec![0.0; c];
                let mut goff = vec![0.0; c];
                for gi in 0..*groups {
                    let base = gi * per;
                    let mut gh = vec![0.0; per];
                    for k in 0..per {
                        let ch = gi * cpg + k / t;
                        gh[k] = g[base + k] * gd[ch];
                        ggain[ch] += g[base + k] * xhat[base + k];
                        goff[ch] += g[base + k];
                    }
                    let m1 = gh.iter().sum::<f64>() / per as f64;
                    let m2 = gh.iter().zip(&xhat[base..base + per]).map(|(a, b)| a * b).sum::<f64>() / per as f64;
                    for k in 0..per {
                        gx[base + k] = rstd[gi] * (gh[k] - m1 - xhat[base + k] * m2);
                    }
                }
                self.send(grads, *x, gx);
                self.send(grads, *gain, ggain);
                self.send(grads, *offset, goff);
            }
            Op::LogSoftmax(a) => {
                let y = self.nodes[i].value.data();
                let d = *self.nodes[i].value.shape().last().unwrap();
                let mut gx = vec![0.0; g.len()];
                for ((gr, yr), out) in g.chunks(d).zip(y.chunks(d)).zip(gx.chunks_mut(d)) {
                    let s: f64 = gr.iter().sum();
                    for ((o, gv), yv) in out.iter_mut().zip(gr).zip(yr) {
                        *o = gv - yv.exp() * s;
                    }
                }
                self.send(grads, *a, gx);
            }
            Op::Precomputed(a, pg) => self.send(grads, *a, pg.iter().map(|v| v * g[0]).collect()),
        }
        Ok(())
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn permute_data(data: &[f64], in_shape: &[usize], perm: &[usize]) -> Vec<f64> {
    let rank = in_shape.len();
    let mut in_strides = vec![1; rank];
    for k in (0..rank.saturating_sub(1)).rev() {
        in_strides[k] = in_strides[k + 1] * in_shape[k + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; rank];
    for _ in 0..data.len() {
        let off: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        out.push(data[off]);
        for k in (0..rank).rev() {
            idx[k] += 1;
            if idx[k] < out_shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}
