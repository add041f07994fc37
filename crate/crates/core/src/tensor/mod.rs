//! Dense tensors with reverse-mode differentiation.
//!
//! [`Tensor`] is a flat row-major `f64` buffer plus a shape. [`Tape`] records
//! a computation as operations are applied and, on [`Tape::backward`], walks
//! the record once in reverse to produce exact analytic gradients for every
//! recorded value. The operator set is exactly what the network in
//! [`crate::bocf`] needs: convolution, pooling, dense layers, pointwise
//! nonlinearities, the fused bag-of-features pooling step, and the angular
//! loss.
//!
//! Gradient correctness is checkable against central finite differences via
//! [`gradcheck`].

pub mod gradcheck;
pub(crate) mod ops;
mod tape;

pub use tape::{Gradients, Tape, ValueId};

use thiserror::Error;

/// Errors raised when recording or differentiating tensor operations.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("data length {len} does not match shape {shape:?}")]
    LengthMismatch { len: usize, shape: Vec<usize> },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("tape was already consumed by a previous backward pass")]
    TapeConsumed,
}

/// Dense row-major tensor of `f64` values.
///
/// Construction validates that the buffer length matches the shape product
/// and that every element is finite; both properties are invariants
/// afterwards (no public mutation can break the length, and callers feeding
/// data through [`Tensor::data_mut`] are expected to keep values finite).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking length and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(TensorError::LengthMismatch {
                len: data.len(),
                shape,
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { index });
        }
        Ok(Self { shape, data })
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    /// Single-element tensor holding `value`.
    pub fn scalar(value: f64) -> Result<Self, TensorError> {
        Self::new(vec![1], vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable element access. Callers must keep values finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// True for the `[1]`-shaped tensors produced by reducing operations.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> Result<f64, TensorError> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(TensorError::NonScalarLoss {
                shape: self.shape.clone(),
            })
        }
    }

    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }
}
