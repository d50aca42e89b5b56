//! Batched 1D tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a dense `[batch, channels, length]` grid of `f64` values.
//! Differentiable computations are recorded on a [`Tape`]; calling
//! [`Tape::backward`] on a scalar node returns gradients for every leaf that
//! was registered with `requires_grad`.

mod conv;
mod tape;

pub use conv::ConvSpec;
pub use tape::{Gradients, Tape, TensorId};

use std::error::Error;
use std::fmt;

/// Shape of a batched 1D signal tensor: `[batch, channels, length]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub batch: usize,
    pub channels: usize,
    pub length: usize,
}

impl Shape {
    pub fn new(batch: usize, channels: usize, length: usize) -> Self {
        Shape { batch, channels, length }
    }

    pub fn numel(&self) -> usize {
        self.batch * self.channels * self.length
    }

    /// Row-major flat index in batch -> channel -> sample order.
    #[inline]
    pub fn index(&self, b: usize, c: usize, l: usize) -> usize {
        (b * self.channels + c) * self.length + l
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}]", self.batch, self.channels, self.length)
    }
}

/// Dense row-major `f64` tensor. Immutable once handed to a [`Tape`].
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor { shape, data: vec![0.0; shape.numel()] }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Tensor { shape, data: vec![value; shape.numel()] }
    }

    /// Wraps a scalar as a `[1, 1, 1]` tensor.
    pub fn scalar(value: f64) -> Self {
        Tensor { shape: Shape::new(1, 1, 1), data: vec![value] }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self, TensorError> {
        if data.len() != shape.numel() {
            return Err(TensorError::DataLength { expected: shape.numel(), got: data.len() });
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, l: usize) -> f64 {
        self.data[self.shape.index(b, c, l)]
    }

    /// Value of a single-element tensor.
    pub fn scalar_value(&self) -> f64 {
        debug_assert_eq!(self.shape.numel(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Errors raised by tensor construction and tape operations.
#[derive(Clone, Debug, PartialEq)]
pub enum TensorError {
    /// Data buffer does not match the declared shape.
    DataLength { expected: usize, got: usize },
    /// Two operands disagree on one dimension.
    DimensionMismatch { op: &'static str, dimension: &'static str, expected: usize, got: usize },
    /// An operand contains NaN or infinite values.
    NonFinite { op: &'static str },
    /// Backward was requested from a node that is not scalar-valued.
    NonScalarLoss { numel: usize },
    /// An operation argument is outside its valid range.
    InvalidArgument { op: &'static str, message: String },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::DataLength { expected, got } => {
                write!(f, "data length {got} does not match shape element count {expected}")
            }
            TensorError::DimensionMismatch { op, dimension, expected, got } => {
                write!(f, "{op}: {dimension} mismatch, expected {expected} but got {got}")
            }
            TensorError::NonFinite { op } => {
                write!(f, "{op}: input contains non-finite values")
            }
            TensorError::NonScalarLoss { numel } => {
                write!(f, "backward requires a scalar loss node, got {numel} elements")
            }
            TensorError::InvalidArgument { op, message } => write!(f, "{op}: {message}"),
        }
    }
}

impl Error for TensorError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_indexing_is_row_major() {
        let s = Shape::new(2, 3, 4);
        assert_eq!(s.numel(), 24);
        assert_eq!(s.index(0, 0, 0), 0);
        assert_eq!(s.index(0, 0, 3), 3);
        assert_eq!(s.index(0, 1, 0), 4);
        assert_eq!(s.index(1, 0, 0), 12);
        assert_eq!(s.index(1, 2, 3), 23);
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        let err = Tensor::from_vec(Shape::new(1, 1, 3), vec![1.0, 2.0]).unwrap_err();
        assert_eq!(err, TensorError::DataLength { expected: 3, got: 2 });
    }

    #[test]
    fn finiteness_check() {
        let mut t = Tensor::zeros(Shape::new(1, 1, 4));
        assert!(t.is_finite());
        t.data_mut()[2] = f64::NAN;
        assert!(!t.is_finite());
    }
}
