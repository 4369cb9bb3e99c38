use super::kernels::{self, ConvGeom};
use super::{DiffError, Real, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise operation kinds accepted by [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise<T> {
    Add,
    Sub,
    Mul,
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Scale(T),
}

/// Backward rule for an op defined outside this module.
///
/// `backward` returns one entry per input: the gradient contribution with the
/// input's shape, or `None` when the input receives nothing.
pub trait CustomOp<T: Real> {
    fn name(&self) -> &'static str;
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad_output: &[T],
    ) -> Vec<Option<Vec<T>>>;
}

enum Op<T: Real> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    MatMul(Var, Var),
    Affine {
        x: Var,
        w: Var,
        b: Var,
    },
    Conv2d {
        input: Var,
        kernels: Var,
        bias: Option<Var>,
        geom: ConvGeom,
        cols: Vec<T>,
    },
    LogSoftmax(Var),
    Bilinear {
        image: Var,
        grid: Var,
    },
    Slice {
        input: Var,
        axis: usize,
        start: usize,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Reshape(Var),
    Permute {
        input: Var,
        source_index: Vec<usize>,
    },
    Upsample2x(Var),
    Sum(Var),
    Mean(Var),
    SumSquares(Var),
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp<T>>,
    },
}

impl<T: Real> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::MatMul(..) => "matmul",
            Op::Affine { .. } => "affine",
            Op::Conv2d { .. } => "conv2d",
            Op::LogSoftmax(_) => "log_softmax",
            Op::Bilinear { .. } => "bilinear_sample",
            Op::Slice { .. } => "slice",
            Op::Concat { .. } => "concat",
            Op::Reshape(_) => "reshape",
            Op::Permute { .. } => "permute",
            Op::Upsample2x(_) => "upsample2x",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SumSquares(_) => "sum_squares",
            Op::Custom { op, .. } => op.name(),
        }
    }
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Define-by-run record of one forward pass.
///
/// Nodes are appended in creation order, so every op's inputs precede it and
/// the node list is already a topological order of the graph.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<T: Real> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of `var`, zero-filled when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Tensor<T> {
        let shape = &self.shapes[var.0];
        match &self.grads[var.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn is_reached(&self, var: Var) -> bool {
        self.grads[var.0].is_some()
    }
}

fn same_shape<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<(), DiffError> {
    if a.shape() != b.shape() {
        return Err(DiffError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var, DiffError> {
        if !value.is_finite() {
            return Err(DiffError::NonFinite { op: op.name() });
        }
        let requires_grad = inputs.iter().any(|&v| self.needs(v));
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Applies a pointwise op. Binary kinds require equal shapes.
    pub fn elementwise(
        &mut self,
        kind: Elementwise<T>,
        a: Var,
        b: Option<Var>,
    ) -> Result<Var, DiffError> {
        let binary = matches!(kind, Elementwise::Add | Elementwise::Sub | Elementwise::Mul);
        if binary {
            let b = b.ok_or(DiffError::MissingOperand)?;
            let (va, vb) = (self.value(a), self.value(b));
            same_shape("elementwise", va, vb)?;
            let data: Vec<T> = match kind {
                Elementwise::Add => va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect(),
                Elementwise::Sub => va.data().iter().zip(vb.data()).map(|(&x, &y)| x - y).collect(),
                _ => va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect(),
            };
            let out = Tensor::new(va.shape(), data)?;
            let op = match kind {
                Elementwise::Add => Op::Add(a, b),
                Elementwise::Sub => Op::Sub(a, b),
                _ => Op::Mul(a, b),
            };
            return self.push(out, op, &[a, b]);
        }
        let va = self.value(a);
        let (out, op) = match kind {
            Elementwise::Relu => (va.map(|x| x.max(T::ZERO)), Op::Relu(a)),
            Elementwise::Sigmoid => (va.map(Real::sigmoid), Op::Sigmoid(a)),
            Elementwise::Tanh => (va.map(Real::tanh), Op::Tanh(a)),
            Elementwise::Exp => (va.map(Real::exp), Op::Exp(a)),
            Elementwise::Scale(s) => (va.map(|x| x * s), Op::Scale(a, s)),
            _ => unreachable!(),
        };
        self.push(out, op, &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.elementwise(Elementwise::Add, a, Some(b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.elementwise(Elementwise::Sub, a, Some(b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.elementwise(Elementwise::Mul, a, Some(b))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var, DiffError> {
        self.elementwise(Elementwise::Scale(s), a, None)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, DiffError> {
        self.elementwise(Elementwise::Relu, a, None)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, DiffError> {
        self.elementwise(Elementwise::Sigmoid, a, None)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, DiffError> {
        self.elementwise(Elementwise::Tanh, a, None)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, DiffError> {
        self.elementwise(Elementwise::Exp, a, None)
    }

    fn matrix_dims(&self, op: &'static str, var: Var) -> Result<(usize, usize), DiffError> {
        match *self.shape(var) {
            [r, c] => Ok((r, c)),
            _ => Err(DiffError::Rank {
                op,
                expected: 2,
                shape: self.shape(var).to_vec(),
            }),
        }
    }

    /// `a (m×k) · b (k×n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (m, k) = self.matrix_dims("matmul", a)?;
        let (k2, n) = self.matrix_dims("matmul", b)?;
        if k != k2 {
            return Err(DiffError::ShapeMismatch {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let mut out = vec![T::ZERO; m * n];
        T::gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k, 1),
            self.value(b).data(),
            (n, 1),
            T::ZERO,
            &mut out,
        );
        self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), &[a, b])
    }

    /// `x (m×k) · w (k×n)` plus the bias vector `b` (length n) on every row.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, DiffError> {
        let (m, k) = self.matrix_dims("affine", x)?;
        let (k2, n) = self.matrix_dims("affine", w)?;
        if k != k2 || self.value(b).len() != n {
            return Err(DiffError::ShapeMismatch {
                op: "affine",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let bias = self.value(b).data();
        let mut out: Vec<T> = (0..m).flat_map(|_| bias.iter().copied()).collect();
        T::gemm(
            m,
            k,
            n,
            self.value(x).data(),
            (k, 1),
            self.value(w).data(),
            (n, 1),
            T::ONE,
            &mut out,
        );
        self.push(Tensor::new(&[m, n], out)?, Op::Affine { x, w, b }, &[x, w, b])
    }

    /// 2-D cross-correlation of a C×H×W input with F×C×kh×kw kernels.
    ///
    /// Output extents are `(H + 2·pad − kh) / stride + 1` rounded down.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernels: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var, DiffError> {
        let (c, h, w) = match *self.shape(input) {
            [c, h, w] => (c, h, w),
            _ => {
                return Err(DiffError::Rank {
                    op: "conv2d",
                    expected: 3,
                    shape: self.shape(input).to_vec(),
                })
            }
        };
        let (f, kc, kh, kw) = match *self.shape(kernels) {
            [f, kc, kh, kw] => (f, kc, kh, kw),
            _ => {
                return Err(DiffError::Rank {
                    op: "conv2d",
                    expected: 4,
                    shape: self.shape(kernels).to_vec(),
                })
            }
        };
        if kc != c {
            return Err(DiffError::ShapeMismatch {
                op: "conv2d",
                left: self.shape(input).to_vec(),
                right: self.shape(kernels).to_vec(),
            });
        }
        if kh % 2 == 0 || kw % 2 == 0 || stride == 0 {
            return Err(DiffError::ConvGeometry {
                reason: format!("kernel {kh}x{kw} must be odd, stride {stride} positive"),
            });
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(DiffError::ConvGeometry {
                reason: format!("kernel {kh}x{kw} larger than padded input {h}x{w} (pad {pad})"),
            });
        }
        if let Some(b) = bias {
            if self.value(b).len() != f {
                return Err(DiffError::ShapeMismatch {
                    op: "conv2d bias",
                    left: vec![f],
                    right: self.shape(b).to_vec(),
                });
            }
        }
        let geom = ConvGeom {
            channels: c,
            height: h,
            width: w,
            kh,
            kw,
            stride,
            pad,
            out_h: (h + 2 * pad - kh) / stride + 1,
            out_w: (w + 2 * pad - kw) / stride + 1,
        };
        let cols = kernels::im2col(self.value(input).data(), &geom);
        let n = geom.col_cols();
        let mut out = match bias {
            Some(b) => self
                .value(b)
                .data()
                .iter()
                .flat_map(|&v| std::iter::repeat_n(v, n))
                .collect(),
            None => vec![T::ZERO; f * n],
        };
        let k = geom.col_rows();
        T::gemm(
            f,
            k,
            n,
            self.value(kernels).data(),
            (k, 1),
            &cols,
            (n, 1),
            if bias.is_some() { T::ONE } else { T::ZERO },
            &mut out,
        );
        let value = Tensor::new(&[f, geom.out_h, geom.out_w], out)?;
        let mut inputs = vec![input, kernels];
        inputs.extend(bias);
        // Patch matrices are only needed for the kernel gradient.
        let cols = if self.needs(kernels) { cols } else { Vec::new() };
        self.push(
            value,
            Op::Conv2d {
                input,
                kernels,
                bias,
                geom,
                cols,
            },
            &inputs,
        )
    }

    /// Row-wise log-softmax of a T×K matrix, stabilized by the row maximum.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var, DiffError> {
        let (rows, k) = self.matrix_dims("log_softmax", x)?;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(rows * k);
        for r in 0..rows {
            let row = &src[r * k..(r + 1) * k];
            let m = row.iter().copied().fold(row[0], Real::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
            out.extend(row.iter().map(|&v| v - lse));
        }
        self.push(Tensor::new(&[rows, k], out)?, Op::LogSoftmax(x), &[x])
    }

    /// Samples a C×H×W image at the continuous (x, y) source points of an
    /// H'×W'×2 grid; x indexes columns, y rows. Out-of-image taps read zero.
    pub fn bilinear_sample(&mut self, image: Var, grid: Var) -> Result<Var, DiffError> {
        let (c, h, w) = match *self.shape(image) {
            [c, h, w] => (c, h, w),
            _ => {
                return Err(DiffError::Rank {
                    op: "bilinear_sample",
                    expected: 3,
                    shape: self.shape(image).to_vec(),
                })
            }
        };
        let (gh, gw) = match *self.shape(grid) {
            [gh, gw, 2] => (gh, gw),
            _ => {
                return Err(DiffError::Rank {
                    op: "bilinear_sample grid",
                    expected: 3,
                    shape: self.shape(grid).to_vec(),
                })
            }
        };
        let out = kernels::bilinear_forward(self.value(image).data(), c, h, w, self.value(grid).data());
        self.push(
            Tensor::new(&[c, gh, gw], out)?,
            Op::Bilinear { image, grid },
            &[image, grid],
        )
    }

    /// `len` entries of `input` along `axis`, starting at `start`.
    pub fn slice(&mut self, input: Var, axis: usize, start: usize, len: usize) -> Result<Var, DiffError> {
        let shape = self.shape(input).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(DiffError::SliceBounds {
                shape,
                axis,
                start,
                len,
            });
        }
        let (outer, extent, inner) = kernels::axis_split(&shape, axis);
        let src = self.value(input).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        self.push(
            Tensor::new(&out_shape, out)?,
            Op::Slice { input, axis, start },
            &[input],
        )
    }

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, DiffError> {
        let first = inputs.first().ok_or(DiffError::MissingOperand)?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(DiffError::Rank {
                op: "concat",
                expected: axis + 1,
                shape: base,
            });
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(DiffError::ShapeMismatch {
                    op: "concat",
                    left: base,
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = kernels::axis_split(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let chunk = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut out_shape = base;
        out_shape[axis] = total;
        self.push(
            Tensor::new(&out_shape, out)?,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        )
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var, DiffError> {
        let value = self.value(input).reshaped(shape)?;
        self.push(value, Op::Reshape(input), &[input])
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, input: Var, axes: &[usize]) -> Result<Var, DiffError> {
        let shape = self.shape(input).to_vec();
        let mut seen = vec![false; shape.len()];
        let valid = axes.len() == shape.len()
            && axes.iter().all(|&a| a < shape.len() && !std::mem::replace(&mut seen[a], true));
        if !valid {
            return Err(DiffError::Permutation {
                shape,
                axes: axes.to_vec(),
            });
        }
        let source_index = kernels::permute_index(&shape, axes);
        let src = self.value(input).data();
        let out: Vec<T> = source_index.iter().map(|&i| src[i]).collect();
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        self.push(
            Tensor::new(&out_shape, out)?,
            Op::Permute {
                input,
                source_index,
            },
            &[input],
        )
    }

    /// Nearest-neighbour ×2 upsampling of a C×H×W map.
    pub fn upsample2x(&mut self, input: Var) -> Result<Var, DiffError> {
        let (c, h, w) = match *self.shape(input) {
            [c, h, w] => (c, h, w),
            _ => {
                return Err(DiffError::Rank {
                    op: "upsample2x",
                    expected: 3,
                    shape: self.shape(input).to_vec(),
                })
            }
        };
        let src = self.value(input).data();
        let (h2, w2) = (2 * h, 2 * w);
        let mut out = vec![T::ZERO; c * h2 * w2];
        for ch in 0..c {
            for y in 0..h2 {
                let s = &src[(ch * h + y / 2) * w..(ch * h + y / 2 + 1) * w];
                let d = &mut out[(ch * h2 + y) * w2..(ch * h2 + y + 1) * w2];
                for (x, v) in d.iter_mut().enumerate() {
                    *v = s[x / 2];
                }
            }
        }
        self.push(Tensor::new(&[c, h2, w2], out)?, Op::Upsample2x(input), &[input])
    }

    pub fn sum(&mut self, input: Var) -> Result<Var, DiffError> {
        let s: T = self.value(input).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(input), &[input])
    }

    pub fn mean(&mut self, input: Var) -> Result<Var, DiffError> {
        let t = self.value(input);
        let s: T = t.data().iter().copied().sum();
        let m = s / T::of(t.len() as f64);
        self.push(Tensor::scalar(m), Op::Mean(input), &[input])
    }

    pub fn sum_squares(&mut self, input: Var) -> Result<Var, DiffError> {
        let s: T = self.value(input).data().iter().map(|&v| v * v).sum();
        self.push(Tensor::scalar(s), Op::SumSquares(input), &[input])
    }

    /// Records an externally computed value with a caller-supplied backward rule.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        output: Tensor<T>,
        op: Box<dyn CustomOp<T>>,
    ) -> Result<Var, DiffError> {
        self.push(
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            inputs,
        )
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Every node created before `loss` is visited once, in reverse creation
    /// order; contributions to a node used several times accumulate.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, DiffError> {
        let root = &self.nodes[loss.0].value;
        if root.len() != 1 {
            return Err(DiffError::NonScalarRoot {
                shape: root.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::ONE]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.backward_node(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], var: Var, f: impl FnOnce(&mut [T])) {
        if !self.needs(var) {
            return;
        }
        let len = self.nodes[var.0].value.len();
        let slot = grads[var.0].get_or_insert_with(|| vec![T::ZERO; len]);
        f(slot);
    }

    fn backward_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(x, &d)| *x += d));
                self.accumulate(grads, *b, |gb| gb.iter_mut().zip(g).for_each(|(x, &d)| *x += d));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(x, &d)| *x += d));
                self.accumulate(grads, *b, |gb| gb.iter_mut().zip(g).for_each(|(x, &d)| *x -= d));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |ga| {
                    for ((x, &d), &y) in ga.iter_mut().zip(g).zip(vb) {
                        *x += d * y;
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for ((x, &d), &y) in gb.iter_mut().zip(g).zip(va) {
                        *x += d * y;
                    }
                });
            }
            Op::Scale(a, s) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(x, &d)| *x += d * *s));
            }
            Op::Relu(a) => {
                let va = self.value(*a).data();
                self.accumulate(grads, *a, |ga| {
                    for ((x, &d), &v) in ga.iter_mut().zip(g).zip(va) {
                        if v > T::ZERO {
                            *x += d;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => self.accumulate(grads, *a, |ga| {
                for ((x, &d), &y) in ga.iter_mut().zip(g).zip(out) {
                    *x += d * y * (T::ONE - y);
                }
            }),
            Op::Tanh(a) => self.accumulate(grads, *a, |ga| {
                for ((x, &d), &y) in ga.iter_mut().zip(g).zip(out) {
                    *x += d * (T::ONE - y * y);
                }
            }),
            Op::Exp(a) => self.accumulate(grads, *a, |ga| {
                for ((x, &d), &y) in ga.iter_mut().zip(g).zip(out) {
                    *x += d * y;
                }
            }),
            Op::MatMul(a, b) => self.matmul_backward(*a, *b, g, grads),
            Op::Affine { x, w, b } => {
                self.matmul_backward(*x, *w, g, grads);
                let n = self.value(*b).len();
                self.accumulate(grads, *b, |gb| {
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(x, &d)| *x += d);
                    }
                });
            }
            Op::Conv2d {
                input,
                kernels,
                bias,
                geom,
                cols,
            } => {
                let f = self.shape(*kernels)[0];
                let (k, n) = (geom.col_rows(), geom.col_cols());
                if let Some(b) = bias {
                    self.accumulate(grads, *b, |gb| {
                        for (x, row) in gb.iter_mut().zip(g.chunks(n)) {
                            *x += row.iter().copied().sum();
                        }
                    });
                }
                self.accumulate(grads, *kernels, |gk| {
                    // dK (f×k) += dOut (f×n) · colsᵀ (n×k)
                    T::gemm(f, n, k, g, (n, 1), cols, (1, n), T::ONE, gk);
                });
                if self.needs(*input) {
                    // dCols (k×n) = Kᵀ (k×f) · dOut (f×n)
                    let mut dcols = vec![T::ZERO; k * n];
                    T::gemm(k, f, n, self.value(*kernels).data(), (1, k), g, (n, 1), T::ZERO, &mut dcols);
                    self.accumulate(grads, *input, |gi| kernels::col2im_add(&dcols, geom, gi));
                }
            }
            Op::LogSoftmax(x) => {
                let k = self.shape(*x)[1];
                self.accumulate(grads, *x, |gx| {
                    for ((gr, dr), yr) in gx.chunks_mut(k).zip(g.chunks(k)).zip(out.chunks(k)) {
                        let total: T = dr.iter().copied().sum();
                        for ((x, &d), &y) in gr.iter_mut().zip(dr).zip(yr) {
                            *x += d - y.exp() * total;
                        }
                    }
                });
            }
            Op::Bilinear { image, grid } => {
                let (c, h, w) = {
                    let s = self.shape(*image);
                    (s[0], s[1], s[2])
                };
                let img = self.value(*image).data();
                let grd = self.value(*grid).data();
                let mut gi = self.needs(*image).then(|| vec![T::ZERO; img.len()]);
                let mut gg = self.needs(*grid).then(|| vec![T::ZERO; grd.len()]);
                kernels::bilinear_backward(img, c, h, w, grd, g, gi.as_deref_mut(), gg.as_deref_mut());
                if let Some(gi) = gi {
                    self.accumulate(grads, *image, |d| d.iter_mut().zip(&gi).for_each(|(x, &v)| *x += v));
                }
                if let Some(gg) = gg {
                    self.accumulate(grads, *grid, |d| d.iter_mut().zip(&gg).for_each(|(x, &v)| *x += v));
                }
            }
            Op::Slice { input, axis, start } => {
                let shape = self.shape(*input).to_vec();
                let (outer, extent, inner) = kernels::axis_split(&shape, *axis);
                let len = node.value.shape()[*axis];
                self.accumulate(grads, *input, |gi| {
                    for o in 0..outer {
                        let base = (o * extent + start) * inner;
                        let src = &g[o * len * inner..(o + 1) * len * inner];
                        gi[base..base + len * inner]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(x, &d)| *x += d);
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = kernels::axis_split(node.value.shape(), *axis);
                let mut offset = 0;
                for &v in inputs {
                    let extent = self.shape(v)[*axis];
                    let chunk = extent * inner;
                    self.accumulate(grads, v, |gi| {
                        for o in 0..outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset) * inner + chunk];
                            gi[o * chunk..(o + 1) * chunk]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(x, &d)| *x += d);
                        }
                    });
                    offset += extent;
                }
            }
            Op::Reshape(a) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(x, &d)| *x += d));
            }
            Op::Permute { input, source_index } => self.accumulate(grads, *input, |gi| {
                for (&src, &d) in source_index.iter().zip(g) {
                    gi[src] += d;
                }
            }),
            Op::Upsample2x(a) => {
                let s = self.shape(*a);
                let (c, h, w) = (s[0], s[1], s[2]);
                let (h2, w2) = (2 * h, 2 * w);
                self.accumulate(grads, *a, |ga| {
                    for ch in 0..c {
                        for y in 0..h2 {
                            for x in 0..w2 {
                                ga[(ch * h + y / 2) * w + x / 2] += g[(ch * h2 + y) * w2 + x];
                            }
                        }
                    }
                });
            }
            Op::Sum(a) => self.accumulate(grads, *a, |ga| ga.iter_mut().for_each(|x| *x += g[0])),
            Op::Mean(a) => {
                let n = T::of(self.value(*a).len() as f64);
                self.accumulate(grads, *a, |ga| ga.iter_mut().for_each(|x| *x += g[0] / n));
            }
            Op::SumSquares(a) => {
                let va = self.value(*a).data();
                let two = T::of(2.0);
                self.accumulate(grads, *a, |ga| {
                    for (x, &v) in ga.iter_mut().zip(va) {
                        *x += two * v * g[0];
                    }
                });
            }
            Op::Custom { inputs, op } => {
                let values: Vec<&Tensor<T>> = inputs.iter().map(|&v| self.value(v)).collect();
                let contributions = op.backward(&values, &node.value, g);
                for (&v, contribution) in inputs.iter().zip(contributions) {
                    if let Some(c) = contribution {
                        self.accumulate(grads, v, |gi| gi.iter_mut().zip(&c).for_each(|(x, &d)| *x += d));
                    }
                }
            }
        }
    }

    fn matmul_backward(&self, a: Var, b: Var, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
        let n = self.shape(b)[1];
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        // dA (m×k) += dC (m×n) · Bᵀ (n×k)
        self.accumulate(grads, a, |ga| T::gemm(m, n, k, g, (n, 1), vb, (1, n), T::ONE, ga));
        // dB (k×n) += Aᵀ (k×m) · dC (m×n)
        self.accumulate(grads, b, |gb| T::gemm(k, m, n, va, (1, k), g, (n, 1), T::ONE, gb));
    }
}
