use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing backward gradients with central finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub checked: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tol
    }
}

/// Settings for [`grad_check_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub eps: f64,
    /// Largest accepted relative error.
    pub tol: f64,
    /// Check only this many evenly spaced coordinates.
    pub max_coords: Option<usize>,
    /// Lower bound of the relative-error denominator, so coordinates whose
    /// true gradient is zero are judged on absolute error.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { eps: 1e-6, tol: 1e-4, max_coords: None, floor: 1e-8 }
    }
}

/// Checks `d f / d x` for a scalar-valued `f` built on a fresh tape.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_with(f, x, &GradCheckOptions { eps, tol, ..Default::default() }, |_| {})
}

/// Like [`grad_check`] with explicit options and a hook that may alter the
/// analytic gradient before the comparison (negative controls).
pub fn grad_check_with<F, H>(f: F, x: &Tensor, opts: &GradCheckOptions, tamper: H) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
    H: Fn(&mut [f64]),
{
    let GradCheckOptions { eps, tol, max_coords, floor } = *opts;
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone().with_grad());
    let loss = f(&mut tape, xv)?;
    if !tape.value(loss).is_scalar() {
        return Err(Error::Shape("grad_check needs a scalar function".into()));
    }
    tape.backward(loss)?;
    let mut analytic = tape.grad(xv).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.numel()]);
    tamper(&mut analytic);

    let eval = |data: Vec<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::new(x.shape(), data)?);
        let out = f(&mut tape, v)?;
        Ok(tape.value(out).item())
    };

    let n = x.numel();
    let step = match max_coords {
        Some(m) if m > 0 && m < n => n.div_ceil(m),
        _ => 1,
    };
    let mut worst = 0.0f64;
    let mut worst_index = 0;
    let mut worst_pair = (0.0, 0.0);
    let mut checked = 0;
    for i in (0..n).step_by(step) {
        let mut plus = x.data().to_vec();
        plus[i] += eps;
        let mut minus = x.data().to_vec();
        minus[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(floor);
        let rel = (a - numeric).abs() / denom;
        if rel > worst || rel.is_nan() {
            worst = if rel.is_nan() { f64::INFINITY } else { rel };
            worst_index = i;
            worst_pair = (a, numeric);
        }
        checked += 1;
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        worst_index,
        analytic_at_worst: worst_pair.0,
        numeric_at_worst: worst_pair.1,
        checked,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Activation;

    #[test]
    fn sum_is_exact() {
        let x = Tensor::new(&[3], vec![0.3, -1.2, 5.0]).unwrap();
        let r = grad_check(|t, v| t.sum(v), &x, 1e-4, 1e-4).unwrap();
        assert!(r.max_rel_error < 1e-10, "{r:?}");
        assert!(r.passed());
    }

    #[test]
    fn tampered_gradient_fails() {
        let x = Tensor::new(&[3], vec![0.3, -1.2, 5.0]).unwrap();
        let opts = GradCheckOptions { eps: 1e-4, ..Default::default() };
        let r = grad_check_with(|t, v| t.sum_squares(v), &x, &opts, |g| g[1] *= 1.1).unwrap();
        assert!(!r.passed());
        assert_eq!(r.worst_index, 1);
    }

    #[test]
    fn gelu_away_from_zero() {
        let x = Tensor::new(&[4], vec![-2.0, -0.5, 0.7, 1.9]).unwrap();
        let r = grad_check(
            |t, v| {
                let y = t.activation(v, Activation::Gelu)?;
                t.sum(y)
            },
            &x,
            1e-4,
            1e-4,
        )
        .unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
