//! Raw slice kernels behind the tape operations. Layouts are row-major.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
    Same,
}

/// Output length and left padding for one convolution axis.
///
/// `valid`: `floor((len - kernel) / stride) + 1`. `same`: `ceil(len / stride)`
/// with the total padding split left-biased-low (extra sample on the right).
pub fn conv_out_len(len: usize, kernel: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    if stride == 0 {
        return Err(Error::Argument("stride must be at least 1".into()));
    }
    if kernel == 0 {
        return Err(Error::Argument("kernel must be at least 1".into()));
    }
    match padding {
        Padding::Valid => {
            if kernel > len {
                return Err(Error::Dimension(format!(
                    "kernel {kernel} larger than input length {len}"
                )));
            }
            Ok(((len - kernel) / stride + 1, 0))
        }
        Padding::Same => {
            let out = len.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(len);
            Ok((out, total / 2))
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv1dGeom {
    pub batch: usize,
    pub c_in: usize,
    pub len: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out: usize,
}

impl Conv1dGeom {
    /// Range of kernel taps that land inside the input for output index `j`.
    #[inline]
    fn taps(&self, j: usize) -> (isize, usize, usize) {
        let start = (j * self.stride) as isize - self.pad as isize;
        let lo = if start < 0 { (-start) as usize } else { 0 };
        let hi = ((self.len as isize - start).max(0) as usize).min(self.kernel);
        (start, lo, hi)
    }
}

pub(crate) fn conv1d_forward(g: &Conv1dGeom, x: &[f64], w: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let mut out = vec![0.0; g.batch * g.c_out * g.out];
    for b in 0..g.batch {
        for o in 0..g.c_out {
            let orow = &mut out[(b * g.c_out + o) * g.out..(b * g.c_out + o + 1) * g.out];
            if let Some(bias) = bias {
                orow.iter_mut().for_each(|v| *v = bias[o]);
            }
            for c in 0..g.c_in {
                let xrow = &x[(b * g.c_in + c) * g.len..(b * g.c_in + c + 1) * g.len];
                let wrow = &w[(o * g.c_in + c) * g.kernel..(o * g.c_in + c + 1) * g.kernel];
                for (j, ov) in orow.iter_mut().enumerate() {
                    let (start, lo, hi) = g.taps(j);
                    let base = (start + lo as isize) as usize;
                    let mut acc = 0.0;
                    for (wk, xk) in wrow[lo..hi].iter().zip(&xrow[base..base + hi.saturating_sub(lo)]) {
                        acc += wk * xk;
                    }
                    *ov += acc;
                }
            }
        }
    }
    out
}

/// Returns (grad_x, grad_w, grad_bias).
pub(crate) fn conv1d_backward(
    g: &Conv1dGeom,
    x: &[f64],
    w: &[f64],
    gout: &[f64],
    need_x: bool,
    need_w: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>, Vec<f64>) {
    let mut gx = need_x.then(|| vec![0.0; x.len()]);
    let mut gw = need_w.then(|| vec![0.0; w.len()]);
    let mut gb = vec![0.0; g.c_out];
    for b in 0..g.batch {
        for o in 0..g.c_out {
            let grow = &gout[(b * g.c_out + o) * g.out..(b * g.c_out + o + 1) * g.out];
            gb[o] += grow.iter().sum::<f64>();
            for c in 0..g.c_in {
                let xoff = (b * g.c_in + c) * g.len;
                let woff = (o * g.c_in + c) * g.kernel;
                for (j, &gv) in grow.iter().enumerate() {
                    if gv == 0.0 {
                        continue;
                    }
                    let (start, lo, hi) = g.taps(j);
                    let base = (start + lo as isize) as usize;
                    let n = hi.saturating_sub(lo);
                    if let Some(gw) = gw.as_mut() {
                        for (gwk, xk) in gw[woff + lo..woff + hi].iter_mut().zip(&x[xoff + base..xoff + base + n]) {
                            *gwk += gv * xk;
                        }
                    }
                    if let Some(gx) = gx.as_mut() {
                        for (gxk, wk) in gx[xoff + base..xoff + base + n].iter_mut().zip(&w[woff + lo..woff + hi]) {
                            *gxk += gv * wk;
                        }
                    }
                }
            }
        }
    }
    (gx, gw, gb)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv2dGeom {
    pub c_in: usize,
    pub t: usize,
    pub f: usize,
    pub c_out: usize,
    pub kt: usize,
    pub kf: usize,
    pub st: usize,
    pub sf: usize,
    pub pt: usize,
    pub pf: usize,
    pub ot: usize,
    pub of: usize,
}

impl Conv2dGeom {
    #[inline]
    fn src(&self, o: usize, k: usize, stride: usize, pad: usize, len: usize) -> Option<usize> {
        let p = (o * stride + k) as isize - pad as isize;
        (p >= 0 && (p as usize) < len).then_some(p as usize)
    }

    /// Output-feature index range `[lo, hi)` for which tap `k` reads inside the input.
    #[inline]
    fn f_range(&self, k: usize) -> (usize, usize) {
        // need 0 <= o*sf + k - pf < f
        let lo = if self.pf > k { (self.pf - k).div_ceil(self.sf) } else { 0 };
        let lim = self.f + self.pf; // o*sf + k < lim
        let hi = if lim > k { ((lim - k - 1) / self.sf + 1).min(self.of) } else { 0 };
        (lo.min(hi), hi)
    }
}

pub(crate) fn conv2d_forward(g: &Conv2dGeom, x: &[f64], w: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let plane_out = g.ot * g.of;
    let plane_in = g.t * g.f;
    let mut out = vec![0.0; g.c_out * plane_out];
    for o in 0..g.c_out {
        let oplane = &mut out[o * plane_out..(o + 1) * plane_out];
        if let Some(bias) = bias {
            oplane.iter_mut().for_each(|v| *v = bias[o]);
        }
        for c in 0..g.c_in {
            let xplane = &x[c * plane_in..(c + 1) * plane_in];
            for a in 0..g.kt {
                for bk in 0..g.kf {
                    let wv = w[((o * g.c_in + c) * g.kt + a) * g.kf + bk];
                    if wv == 0.0 {
                        continue;
                    }
                    let (flo, fhi) = g.f_range(bk);
                    for ti in 0..g.ot {
                        let Some(src_t) = g.src(ti, a, g.st, g.pt, g.t) else { continue };
                        let xrow = &xplane[src_t * g.f..(src_t + 1) * g.f];
                        let orow = &mut oplane[ti * g.of..(ti + 1) * g.of];
                        if g.sf == 1 {
                            let off = (flo + bk) - g.pf;
                            for (ov, xv) in orow[flo..fhi].iter_mut().zip(&xrow[off..off + (fhi - flo)]) {
                                *ov += wv * xv;
                            }
                        } else {
                            for fo in flo..fhi {
                                orow[fo] += wv * xrow[fo * g.sf + bk - g.pf];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv2d_backward(
    g: &Conv2dGeom,
    x: &[f64],
    w: &[f64],
    gout: &[f64],
    need_x: bool,
    need_w: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>, Vec<f64>) {
    let plane_out = g.ot * g.of;
    let plane_in = g.t * g.f;
    let mut gx = need_x.then(|| vec![0.0; x.len()]);
    let mut gw = need_w.then(|| vec![0.0; w.len()]);
    let mut gb = vec![0.0; g.c_out];
    for o in 0..g.c_out {
        let gplane = &gout[o * plane_out..(o + 1) * plane_out];
        gb[o] = gplane.iter().sum();
        for c in 0..g.c_in {
            let xoff = c * plane_in;
            for a in 0..g.kt {
                for bk in 0..g.kf {
                    let widx = ((o * g.c_in + c) * g.kt + a) * g.kf + bk;
                    let wv = w[widx];
                    let (flo, fhi) = g.f_range(bk);
                    let mut acc_w = 0.0;
                    for ti in 0..g.ot {
                        let Some(src_t) = g.src(ti, a, g.st, g.pt, g.t) else { continue };
                        let grow = &gplane[ti * g.of..(ti + 1) * g.of];
                        let xrow_off = xoff + src_t * g.f;
                        for fo in flo..fhi {
                            let xi = xrow_off + fo * g.sf + bk - g.pf;
                            let gv = grow[fo];
                            acc_w += gv * x[xi];
                            if let Some(gx) = gx.as_mut() {
                                gx[xi] += gv * wv;
                            }
                        }
                    }
                    if let Some(gw) = gw.as_mut() {
                        gw[widx] += acc_w;
                    }
                }
            }
        }
    }
    (gx, gw, gb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_padding_halving_chain() {
        let mut t = 1575;
        let mut chain = vec![];
        for _ in 0..6 {
            t = conv_out_len(t, 3, 2, Padding::Same).unwrap().0;
            chain.push(t);
        }
        assert_eq!(chain, vec![788, 394, 197, 99, 50, 25]);
    }

    #[test]
    fn valid_length_formula() {
        assert_eq!(conv_out_len(16000, 10, 5, Padding::Valid).unwrap().0, 3199);
        assert!(matches!(conv_out_len(3, 4, 1, Padding::Valid), Err(Error::Dimension(_))));
        assert!(conv_out_len(3, 4, 0, Padding::Valid).is_err());
    }

    #[test]
    fn same_padding_accepts_kernel_longer_than_input() {
        let (out, pad) = conv_out_len(2, 5, 1, Padding::Same).unwrap();
        assert_eq!(out, 2);
        assert_eq!(pad, 2);
    }
}
