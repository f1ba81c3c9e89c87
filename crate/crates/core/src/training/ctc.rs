use crate::tensor::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Index of the blank symbol in every output distribution.
pub const BLANK: usize = 0;

fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Minimum number of frames that can carry `target`: one per label plus a
/// separating blank between equal neighbours.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|p| p[0] == p[1]).count()
}

/// Negative log-likelihood of `target` under `log_probs` (`[T, K+1]`,
/// row-normalised, blank at index 0), and its gradient with respect to
/// `log_probs`.
pub fn ctc_forward_backward(log_probs: &Tensor, target: &[usize]) -> Result<(f64, Vec<f64>)> {
    let [t_len, k] = log_probs.shape() else {
        return Err(Error::Shape(format!("log-probs must be [T, K+1], got {:?}", log_probs.shape())));
    };
    let (t_len, k) = (*t_len, *k);
    if let Some(&bad) = target.iter().find(|&&s| s == BLANK || s >= k) {
        return Err(Error::Argument(format!("target symbol {bad} outside 1..{k}")));
    }
    let need = min_frames(target);
    if t_len < need {
        return Err(Error::InfeasibleAlignment(format!("{t_len} frames cannot carry a target needing {need}")));
    }
    let lp = log_probs.data();
    let ext: Vec<usize> = std::iter::once(BLANK).chain(target.iter().flat_map(|&s| [s, BLANK])).collect();
    let s_len = ext.len();
    let ninf = f64::NEG_INFINITY;
    let skip = |s: usize| s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2];

    // alpha includes the emission at t, beta covers frames after t only
    let mut alpha = vec![ninf; t_len * s_len];
    alpha[0] = lp[ext[0]];
    if s_len > 1 {
        alpha[1] = lp[ext[1]];
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let prev = &alpha[(t - 1) * s_len..t * s_len];
            let mut a = prev[s];
            if s >= 1 {
                a = lse2(a, prev[s - 1]);
            }
            if skip(s) {
                a = lse2(a, prev[s - 2]);
            }
            alpha[t * s_len + s] = a + lp[t * k + ext[s]];
        }
    }
    let mut beta = vec![ninf; t_len * s_len];
    let last = (t_len - 1) * s_len;
    beta[last + s_len - 1] = 0.0;
    if s_len > 1 {
        beta[last + s_len - 2] = 0.0;
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let next = (t + 1) * s_len;
            let emit = |j: usize| beta[next + j] + lp[(t + 1) * k + ext[j]];
            let mut b = emit(s);
            if s + 1 < s_len {
                b = lse2(b, emit(s + 1));
            }
            if s + 2 < s_len && skip(s + 2) {
                b = lse2(b, emit(s + 2));
            }
            beta[t * s_len + s] = b;
        }
    }
    let log_p = lse2(alpha[last + s_len - 1], if s_len > 1 { alpha[last + s_len - 2] } else { ninf });
    if !log_p.is_finite() {
        return Err(Error::InfeasibleAlignment("no alignment has non-zero probability".into()));
    }
    let mut grad = vec![0.0; t_len * k];
    for t in 0..t_len {
        for s in 0..s_len {
            let occ = alpha[t * s_len + s] + beta[t * s_len + s] - log_p;
            if occ > ninf {
                grad[t * k + ext[s]] -= occ.exp();
            }
        }
    }
    Ok((-log_p, grad))
}

/// CTC loss as a differentiable tape node over `log_probs`.
pub fn ctc_loss(tape: &mut Tape, log_probs: Var, target: &[usize]) -> Result<Var> {
    let (loss, grad) = ctc_forward_backward(tape.value(log_probs), target)?;
    tape.precomputed_scalar(log_probs, loss, grad)
}

/// Argmax per frame, repeats collapsed, blanks dropped.
pub fn greedy_decode(log_probs: &Tensor) -> Vec<usize> {
    let k = log_probs.shape()[1];
    let mut out = Vec::new();
    let mut prev = BLANK;
    for row in log_probs.data().chunks(k) {
        let best = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
            .0;
        if best != BLANK && best != prev {
            out.push(best);
        }
        prev = best;
    }
    out
}

/// Levenshtein distance between two symbol sequences.
pub fn edit_distance(a: &[usize], b: &[usize]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = diag + usize::from(x != y);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(row[j + 1] + 1);
        }
    }
    row[b.len()]
}
