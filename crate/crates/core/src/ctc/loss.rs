use super::{collapse, log_add, CtcError, LabelSeq, LogitsMatrix, BLANK};
use crate::diffcore::{CustomOp, Real, Tape, Tensor, Var};

/// Largest path count [`brute_force_prob`] will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Loss with the log-space forward and backward tables over the
/// blank-interleaved label `l'` of length `2|l| + 1`.
#[derive(Clone, Debug)]
pub struct CtcOutcome {
    /// `−log p(l | y)`.
    pub loss: f64,
    /// `alpha[t][s]`: log-probability of all prefixes of length `t + 1`
    /// ending in `l'_s`, including frame `t`.
    pub alpha: Vec<Vec<f64>>,
    /// `beta[t][s]`: log-probability of completing the label from state `s`
    /// at frame `t`, excluding frame `t`.
    pub beta: Vec<Vec<f64>>,
}

fn interleave(l: &[usize]) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * l.len() + 1);
    ext.push(BLANK);
    for &k in l {
        ext.push(k);
        ext.push(BLANK);
    }
    ext
}

fn check_label(logp: &LogitsMatrix, l: &LabelSeq) -> Result<(), CtcError> {
    if l.is_empty() {
        return Err(CtcError::EmptyLabel);
    }
    if let Some(&index) = l.as_slice().iter().find(|&&k| k >= logp.classes() || k == BLANK) {
        return Err(CtcError::InvalidIndex {
            index,
            classes: logp.classes(),
        });
    }
    let needed = l.min_frames();
    if needed > logp.frames() {
        return Err(CtcError::LabelTooLong {
            needed,
            frames: logp.frames(),
        });
    }
    Ok(())
}

pub fn ctc_loss(logp: &LogitsMatrix, l: &LabelSeq) -> Result<CtcOutcome, CtcError> {
    check_label(logp, l)?;
    let ext = interleave(l.as_slice());
    let (t_max, s_max) = (logp.frames(), ext.len());
    let neg = f64::NEG_INFINITY;
    // s may jump from s−2 when l'_s is a symbol differing from l'_{s−2}
    let skip = |s: usize| s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2];

    let mut alpha = vec![vec![neg; s_max]; t_max];
    alpha[0][0] = logp.get(0, BLANK);
    alpha[0][1] = logp.get(0, ext[1]);
    for t in 1..t_max {
        for s in 0..s_max {
            let mut a = alpha[t - 1][s];
            if s >= 1 {
                a = log_add(a, alpha[t - 1][s - 1]);
            }
            if skip(s) {
                a = log_add(a, alpha[t - 1][s - 2]);
            }
            alpha[t][s] = if a == neg { neg } else { a + logp.get(t, ext[s]) };
        }
    }

    let mut beta = vec![vec![neg; s_max]; t_max];
    beta[t_max - 1][s_max - 1] = 0.0;
    beta[t_max - 1][s_max - 2] = 0.0;
    for t in (0..t_max - 1).rev() {
        for s in 0..s_max {
            let next = |r: usize| beta[t + 1][r] + logp.get(t + 1, ext[r]);
            let mut b = next(s);
            if s + 1 < s_max {
                b = log_add(b, next(s + 1));
            }
            if s + 2 < s_max && skip(s + 2) {
                b = log_add(b, next(s + 2));
            }
            beta[t][s] = b;
        }
    }

    let log_p = log_add(alpha[t_max - 1][s_max - 1], alpha[t_max - 1][s_max - 2]);
    if !log_p.is_finite() {
        return Err(CtcError::LabelTooLong {
            needed: l.min_frames(),
            frames: t_max,
        });
    }
    Ok(CtcOutcome {
        loss: -log_p,
        alpha,
        beta,
    })
}

/// Gradient of `−log p(l | y)` with respect to the pre-softmax scores whose
/// log-softmax is `logp`: `softmax − occupancy`, row-major `T × K`.
pub fn ctc_grad(logp: &LogitsMatrix, l: &LabelSeq) -> Result<(f64, Vec<f64>), CtcError> {
    let out = ctc_loss(logp, l)?;
    let ext = interleave(l.as_slice());
    let k = logp.classes();
    let mut grad: Vec<f64> = logp.data().iter().map(|v| v.exp()).collect();
    for t in 0..logp.frames() {
        for (s, &c) in ext.iter().enumerate() {
            let g = out.alpha[t][s] + out.beta[t][s] + out.loss;
            if g > f64::NEG_INFINITY {
                grad[t * k + c] -= g.exp();
            }
        }
    }
    Ok((out.loss, grad))
}

/// `p(l | y)` by summing every one of the `K^T` frame paths.
pub fn brute_force_prob(logp: &LogitsMatrix, l: &[usize]) -> Result<f64, CtcError> {
    let (t_max, k) = (logp.frames(), logp.classes());
    let count = (k as f64).powi(t_max as i32);
    if count > BRUTE_FORCE_LIMIT {
        return Err(CtcError::TooManyPaths(count));
    }
    let mut path = vec![0usize; t_max];
    let mut total = 0.0;
    loop {
        if collapse(&path) == l {
            total += path.iter().enumerate().map(|(t, &c)| logp.get(t, c)).sum::<f64>().exp();
        }
        // odometer increment
        let mut t = 0;
        loop {
            if t == t_max {
                return Ok(total);
            }
            path[t] += 1;
            if path[t] < k {
                break;
            }
            path[t] = 0;
            t += 1;
        }
    }
}

/// Records the CTC loss of raw `T × K` scores against `label` as a scalar
/// tape node. The forward-backward pass runs in 64-bit.
pub fn ctc_loss_node<T: Real>(tape: &mut Tape<T>, scores: Var, label: &LabelSeq) -> Result<Var, CtcError> {
    let value = tape.value(scores);
    let shape = value.shape().to_vec();
    if shape.len() != 2 {
        return Err(crate::diffcore::DiffError::Rank {
            op: "ctc_loss",
            expected: 2,
            shape,
        }
        .into());
    }
    let raw: Vec<f64> = value.data().iter().map(|v| v.to_f64()).collect();
    let logp = LogitsMatrix::from_scores(shape[0], shape[1], &raw)?;
    let (loss, grad) = ctc_grad(&logp, label)?;
    Ok(tape.custom(&[scores], Tensor::scalar(T::of(loss)), Box::new(CtcNode { grad }))?)
}

struct CtcNode {
    grad: Vec<f64>,
}

impl<T: Real> CustomOp<T> for CtcNode {
    fn name(&self) -> &'static str {
        "ctc_loss"
    }

    fn backward(&self, _inputs: &[&Tensor<T>], _output: &Tensor<T>, grad_output: &[T]) -> Vec<Option<Vec<T>>> {
        let g = grad_output[0].to_f64();
        vec![Some(self.grad.iter().map(|&v| T::of(g * v)).collect())]
    }
}
