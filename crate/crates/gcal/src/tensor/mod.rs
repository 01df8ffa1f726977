//! Dense f64 matrices, a reverse-mode differentiation tape, finite-difference
//! gradient checking, and a binary checkpoint format.

pub mod checkpoint;
pub mod gradcheck;
pub mod matrix;
pub mod params;
pub mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use matrix::{Axis, DenseMatrix};
pub use params::{ParamId, ParamSet, Parameter};
pub use tape::{Gradients, NodeId, Tape, LOSS_CLAMP};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("row index {index} out of bounds for matrix with {rows} rows")]
    RowOutOfBounds { index: usize, rows: usize },
    #[error("backward requires a 1x1 loss, got {shape:?}")]
    NonScalarLoss { shape: (usize, usize) },
}
