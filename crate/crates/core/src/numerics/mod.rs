//! Dense `f64` matrices, reverse-mode gradients, Adam, initialisers and a
//! finite-difference gradient checker.

mod adam;
mod checkpoint;
mod gradcheck;
mod init;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{ParamCheckpoint, TensorRecord};
pub use gradcheck::{finite_difference_check, GradCheckOptions, GradCheckReport};
pub use init::{gaussian_init, orthogonal_init};
pub use params::{ParamId, ParamRegistry};
pub use tape::{bce_value, sigmoid, ParamGrads, Tape, Var, PROB_CLIP};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("tensor data of length {len} does not fit shape {rows}x{cols}")]
    BadData { rows: usize, cols: usize, len: usize },
    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },
    #[error("row {row} out of range for {rows} rows")]
    RowOutOfRange { row: usize, rows: usize },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("loss must be a 1x1 tensor, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("parameter `{0}` registered twice")]
    DuplicateParam(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("parameter `{0}` has no gradient")]
    MissingGradient(String),
    #[error("gradient check: non-finite loss when perturbing `{param}`[{coord}]")]
    CheckNonFinite { param: String, coord: usize },
    #[error("gradient check: step must be positive, got {0}")]
    BadStep(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Matrix product of two tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    a.matmul(b)
}

/// Columnwise `ln sum_r exp(x[r, c])`, shifted by the column max.
pub fn logsumexp_rows(rows: &Tensor) -> Result<Tensor, NumericsError> {
    if rows.rows() == 0 {
        return Err(NumericsError::EmptyInput {
            op: "logsumexp_rows",
        });
    }
    let cols = rows.cols();
    let mut out = Vec::with_capacity(cols);
    for c in 0..cols {
        let max = (0..rows.rows())
            .map(|r| rows.get(r, c))
            .fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = (0..rows.rows()).map(|r| (rows.get(r, c) - max).exp()).sum();
        out.push(max + s.ln());
    }
    Ok(Tensor::row_vector(&out))
}

/// Softmax of every row, shifted by the row max.
pub fn row_softmax(scores: &Tensor) -> Tensor {
    let mut out = scores.clone();
    out.clear_grad();
    let cols = scores.cols();
    if cols == 0 {
        return out;
    }
    for row in out.data_mut().chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}
