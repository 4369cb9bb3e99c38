//! Reverse-mode differentiation over dense tensors.
//!
//! A [`Tape`] is rebuilt for every forward pass. Ops append nodes, and
//! [`Tape::backward`] sweeps them in reverse creation order. Every op rejects
//! non-finite outputs, so a NaN surfaces at the op that produced it.

mod adam;
pub mod check;
mod kernels;
mod params;
mod real;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use params::{Bound, Params};
pub use real::Real;
pub use tape::{CustomOp, Elementwise, Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("shape {shape:?} needs {} elements, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("binary op is missing its second operand")]
    MissingOperand,
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("conv2d: {reason}")]
    ConvGeometry { reason: String },
    #[error("slice [{start}, {start}+{len}) out of bounds on axis {axis} of {shape:?}")]
    SliceBounds {
        shape: Vec<usize>,
        axis: usize,
        start: usize,
        len: usize,
    },
    #[error("invalid permutation {axes:?} for shape {shape:?}")]
    Permutation { shape: Vec<usize>, axes: Vec<usize> },
    #[error("backward root must be a scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("{op}: {reason}")]
    Custom { op: &'static str, reason: String },
}
