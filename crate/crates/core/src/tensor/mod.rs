//! Dense row-major float tensors and the reverse-mode autodiff tape.
//!
//! Values are 32-bit floats; reductions (matmul, convolution, statistics)
//! accumulate in 64-bit to control drift. A scalar is represented as a
//! one-element tensor of shape `[1]`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

mod backward;
mod check;
mod codec;
mod nn;
mod tape;

pub use check::{gradient_check, gradient_check_masked};
pub use codec::{decode_tensor, encode_tensor, CodecError, DTYPE_F32};
pub use tape::{BatchStats, Tape, Var};

/// Errors produced by tensor construction and tape operations.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Flat data length does not match the product of the dimensions.
    LengthMismatch { shape: Vec<usize>, len: usize },
    /// Operand shapes are incompatible for the named operation.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A single operand has the wrong shape or rank for the operation.
    BadShape {
        op: &'static str,
        shape: Vec<usize>,
        detail: &'static str,
    },
    /// Input outside the operation's domain (e.g. `log` of a non-positive value).
    Domain { op: &'static str, detail: &'static str },
    /// An operation produced a NaN or infinity.
    NonFinite { op: &'static str },
    /// `backward` was called on a non-scalar output.
    NonScalarLoss { numel: usize },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::LengthMismatch { shape, len } => {
                write!(f, "data length {len} does not match shape {shape:?}")
            }
            TensorError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: incompatible shapes {lhs:?} and {rhs:?}")
            }
            TensorError::BadShape { op, shape, detail } => {
                write!(f, "{op}: bad shape {shape:?} ({detail})")
            }
            TensorError::Domain { op, detail } => write!(f, "{op}: domain violation ({detail})"),
            TensorError::NonFinite { op } => write!(f, "{op}: produced a non-finite value"),
            TensorError::NonScalarLoss { numel } => {
                write!(f, "backward requires a scalar loss, got {numel} elements")
            }
        }
    }
}

impl core::error::Error for TensorError {}

/// Dense n-dimensional array of `f32` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self, TensorError> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) || numel != data.len() {
            return Err(TensorError::LengthMismatch { shape, len: data.len() });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel] }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f32) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Tensor { shape, data: vec![value; numel] }
    }

    /// One-element tensor of shape `[1]`.
    pub fn scalar(value: f32) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> f32) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Tensor { shape, data: (0..numel).map(|i| f(i)).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> f32 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Interpret as `[B, C, H, W]`.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize), TensorError> {
        match self.shape.as_slice() {
            &[b, c, h, w] => Ok((b, c, h, w)),
            _ => Err(TensorError::BadShape {
                op: "dims4",
                shape: self.shape.clone(),
                detail: "expected a rank-4 tensor",
            }),
        }
    }

    /// Interpret as a square `[d, d]` matrix.
    pub fn dims_square(&self) -> Result<usize, TensorError> {
        match self.shape.as_slice() {
            &[r, c] if r == c => Ok(r),
            _ => Err(TensorError::BadShape {
                op: "dims_square",
                shape: self.shape.clone(),
                detail: "expected a square matrix",
            }),
        }
    }

    pub(crate) fn check_finite(&self, op: &'static str) -> Result<(), TensorError> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(TensorError::NonFinite { op })
        }
    }
}

/// Mean of all elements, accumulated in f64.
pub fn mean_f64(values: &[f32]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64
}

pub(crate) fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_length_mismatch() {
        let err = Tensor::new(vec![2, 3], vec![1.0; 5]).unwrap_err();
        assert!(matches!(err, TensorError::LengthMismatch { .. }));
    }

    #[test]
    fn new_rejects_zero_dims() {
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn strides_are_row_major() {
        assert_eq!(row_major_strides(&[2, 3, 4]), vec![12, 4, 1]);
    }
}
