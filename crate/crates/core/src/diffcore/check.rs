//! Central finite-difference gradient checking in 64-bit.

use super::{DiffError, Tape, Tensor, Var};

/// Outcome of [`gradient_check`].
#[derive(Clone, Debug)]
pub struct GradReport {
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` over all probed entries.
    pub rel_error: f64,
    pub probed: usize,
    pub analytic_norm: f64,
}

/// Compares tape gradients of the scalar built by `f` against central
/// differences with step `eps`.
///
/// `f` receives the inputs as trainable leaves. When `max_probes` is set, at
/// most that many evenly spaced entries per input are perturbed.
pub fn gradient_check<F>(
    inputs: &[Tensor<f64>],
    eps: f64,
    max_probes: Option<usize>,
    f: F,
) -> Result<GradReport, DiffError>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, DiffError>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<(f64, Vec<Tensor<f64>>), DiffError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let loss = tape.value(out).item().ok_or(DiffError::NonScalarRoot {
            shape: tape.shape(out).to_vec(),
        })?;
        let grads = tape.backward(out)?;
        Ok((loss, vars.iter().map(|&v| grads.get(v)).collect()))
    };
    let scalar = |values: &[Tensor<f64>]| -> Result<f64, DiffError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).data()[0])
    };

    let (_, analytic) = eval(inputs)?;
    let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
    let mut probed = 0;
    let mut work = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let len = input.len();
        let step = match max_probes {
            Some(p) if p > 0 && len > p => len / p,
            _ => 1,
        };
        for j in (0..len).step_by(step) {
            let base = input.data()[j];
            let mut probe = |delta: f64| -> Result<f64, DiffError> {
                let mut data = input.data().to_vec();
                data[j] = base + delta;
                work[i] = Tensor::new(input.shape(), data)?;
                scalar(&work)
            };
            let numeric = (probe(eps)? - probe(-eps)?) / (2.0 * eps);
            work[i] = input.clone();
            let a = analytic[i].data()[j];
            diff2 += (a - numeric).powi(2);
            a2 += a * a;
            n2 += numeric * numeric;
            probed += 1;
        }
    }
    let denom = a2.sqrt().max(n2.sqrt());
    Ok(GradReport {
        rel_error: if denom == 0.0 { 0.0 } else { diff2.sqrt() / denom },
        probed,
        analytic_norm: a2.sqrt(),
    })
}
