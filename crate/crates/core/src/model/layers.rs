//! Parameterized building blocks shared by the network stages.
//!
//! Each block has an `init_*` function that registers its tensors under a
//! name prefix and a forward function that looks the same names up.

use rand::Rng;

use crate::diffcore::{Bound, DiffError, Params, Real, Tape, Tensor, Var};

fn uniform<R: Rng>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor<f32> {
    Tensor::from_fn(shape, |_| rng.random_range(-bound..=bound) as f32)
}

/// `F×C×k×k` kernels (He-uniform) and a zero bias.
pub fn init_conv<R: Rng>(params: &mut Params<f32>, rng: &mut R, name: &str, cin: usize, cout: usize, k: usize) {
    let fan_in = (cin * k * k) as f64;
    params.insert(format!("{name}.w"), uniform(rng, &[cout, cin, k, k], (6.0 / fan_in).sqrt()));
    params.insert(format!("{name}.b"), Tensor::zeros(&[cout]));
}

pub fn conv<T: Real>(tape: &mut Tape<T>, p: &Bound, name: &str, x: Var, stride: usize) -> Result<Var, DiffError> {
    let w = p.var(&format!("{name}.w"));
    let k = tape.shape(w)[2];
    tape.conv2d(x, w, Some(p.var(&format!("{name}.b"))), stride, k / 2)
}

/// `in×out` weights (Glorot-uniform) and a zero bias. With `zero`, the
/// weights start at zero too.
pub fn init_linear<R: Rng>(params: &mut Params<f32>, rng: &mut R, name: &str, fan_in: usize, fan_out: usize, zero: bool) {
    let w = if zero {
        Tensor::zeros(&[fan_in, fan_out])
    } else {
        uniform(rng, &[fan_in, fan_out], (6.0 / (fan_in + fan_out) as f64).sqrt())
    };
    params.insert(format!("{name}.w"), w);
    params.insert(format!("{name}.b"), Tensor::zeros(&[fan_out]));
}

pub fn linear<T: Real>(tape: &mut Tape<T>, p: &Bound, name: &str, x: Var) -> Result<Var, DiffError> {
    tape.affine(x, p.var(&format!("{name}.w")), p.var(&format!("{name}.b")))
}

/// Residual pair: `a = relu(conv_s(x))`, `out = relu(a + conv(a))`.
pub fn init_residual<R: Rng>(params: &mut Params<f32>, rng: &mut R, name: &str, cin: usize, cout: usize) {
    init_conv(params, rng, &format!("{name}.a"), cin, cout, 3);
    init_conv(params, rng, &format!("{name}.b"), cout, cout, 3);
}

pub fn residual<T: Real>(tape: &mut Tape<T>, p: &Bound, name: &str, x: Var, stride: usize) -> Result<Var, DiffError> {
    let a = conv(tape, p, &format!("{name}.a"), x, stride)?;
    let a = tape.relu(a)?;
    let b = conv(tape, p, &format!("{name}.b"), a, 1)?;
    let s = tape.add(a, b)?;
    tape.relu(s)
}

/// One LSTM direction: input weights `in×4H`, recurrent weights `H×4H`, bias
/// `4H` with gate blocks ordered input, forget, cell, output. The forget
/// bias starts at 1.
pub fn init_lstm<R: Rng>(params: &mut Params<f32>, rng: &mut R, name: &str, input: usize, hidden: usize) {
    let bound = 1.0 / (hidden as f64).sqrt();
    params.insert(format!("{name}.wx"), uniform(rng, &[input, 4 * hidden], bound));
    params.insert(format!("{name}.wh"), uniform(rng, &[hidden, 4 * hidden], bound));
    let bias = (0..4 * hidden).map(|i| if (hidden..2 * hidden).contains(&i) { 1.0 } else { 0.0 }).collect();
    params.insert(format!("{name}.b"), Tensor::new(&[4 * hidden], bias).expect("bias length"));
}

/// Runs one direction over the rows of `x` (`T×in`), visiting rows in
/// reverse when `reverse` is set. Returns `T×H` in the original row order.
pub fn lstm<T: Real>(tape: &mut Tape<T>, p: &Bound, name: &str, x: Var, reverse: bool) -> Result<Var, DiffError> {
    let wh = p.var(&format!("{name}.wh"));
    let hidden = tape.shape(wh)[0];
    let steps = tape.shape(x)[0];
    let projected = tape.affine(x, p.var(&format!("{name}.wx")), p.var(&format!("{name}.b")))?;
    let mut h: Option<Var> = None;
    let mut c: Option<Var> = None;
    let mut outputs = vec![None; steps];
    let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
    for t in order {
        let mut gates = tape.slice(projected, 0, t, 1)?;
        if let Some(h) = h {
            let rec = tape.matmul(h, wh)?;
            gates = tape.add(gates, rec)?;
        }
        let i = tape.slice(gates, 1, 0, hidden)?;
        let f = tape.slice(gates, 1, hidden, hidden)?;
        let g = tape.slice(gates, 1, 2 * hidden, hidden)?;
        let o = tape.slice(gates, 1, 3 * hidden, hidden)?;
        let (i, g, o) = (tape.sigmoid(i)?, tape.tanh(g)?, tape.sigmoid(o)?);
        let ig = tape.mul(i, g)?;
        let cell = match c {
            Some(prev) => {
                let f = tape.sigmoid(f)?;
                let kept = tape.mul(f, prev)?;
                tape.add(kept, ig)?
            }
            None => ig,
        };
        let squashed = tape.tanh(cell)?;
        let out = tape.mul(o, squashed)?;
        outputs[t] = Some(out);
        h = Some(out);
        c = Some(cell);
    }
    let outputs: Vec<Var> = outputs.into_iter().map(|o| o.expect("every step ran")).collect();
    tape.concat(&outputs, 0)
}

pub fn init_bilstm<R: Rng>(params: &mut Params<f32>, rng: &mut R, name: &str, input: usize, hidden: usize) {
    init_lstm(params, rng, &format!("{name}.fwd"), input, hidden);
    init_lstm(params, rng, &format!("{name}.bwd"), input, hidden);
}

/// Forward and backward passes concatenated per row: `T×2H`.
pub fn bilstm<T: Real>(tape: &mut Tape<T>, p: &Bound, name: &str, x: Var) -> Result<Var, DiffError> {
    let f = lstm(tape, p, &format!("{name}.fwd"), x, false)?;
    let b = lstm(tape, p, &format!("{name}.bwd"), x, true)?;
    tape.concat(&[f, b], 1)
}
