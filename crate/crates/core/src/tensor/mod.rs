//! Dense f64 arrays and the four differentiable primitives used by the mask
//! decoder: token-wise linear maps, stride-2 transposed convolution,
//! per-site channel LayerNorm and half-pixel bilinear resampling.
//!
//! Every forward op has a matching `*_vjp` that maps an upstream gradient
//! back onto the op's inputs.

mod deconv;
mod gradcheck;
mod linear;
mod norm;
mod upsample;

pub use deconv::{deconv2x_forward, deconv2x_vjp, DeconvGrads};
pub use gradcheck::{central_differences, grad_check};
pub use linear::{linear_forward, linear_vjp, LinearGrads};
pub use norm::{layernorm_forward, layernorm_vjp, LayerNormGrads, DEFAULT_LN_EPS};
pub use upsample::{bilinear_upsample, bilinear_vjp};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: dimension mismatch on {axis} (expected {expected}, got {got})")]
    Dimension {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{op}: empty {axis}")]
    Empty {
        op: &'static str,
        axis: &'static str,
    },
    #[error("non-finite value {value} at probe coordinate {index}")]
    NonFinite { index: usize, value: f64 },
}

pub(crate) fn check_dim(
    op: &'static str,
    axis: &'static str,
    expected: usize,
    got: usize,
) -> Result<(), TensorError> {
    if expected == got {
        Ok(())
    } else {
        Err(TensorError::Dimension {
            op,
            axis,
            expected,
            got,
        })
    }
}

/// Row-major 2-D array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        check_dim("Matrix::from_vec", "data length", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            check_dim("Matrix::from_rows", "row length", cols, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Channel-major rank-3 array: `data[(c * height + h) * width + w]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self, TensorError> {
        check_dim(
            "FeatureMap::from_vec",
            "data length",
            channels * height * width,
            data.len(),
        )?;
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn index(&self, c: usize, h: usize, w: usize) -> usize {
        (c * self.height + h) * self.width + w
    }

    #[inline]
    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(c, h, w)]
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
}

/// 2×2 transposed-convolution weights indexed `[in][out][kh][kw]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTensor {
    pub in_channels: usize,
    pub out_channels: usize,
    pub data: Vec<f64>,
}

impl KernelTensor {
    pub const K_H: usize = 2;
    pub const K_W: usize = 2;
    pub const TAPS: usize = Self::K_H * Self::K_W;

    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            data: vec![0.0; in_channels * out_channels * Self::TAPS],
        }
    }

    pub fn from_vec(
        in_channels: usize,
        out_channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, TensorError> {
        check_dim(
            "KernelTensor::from_vec",
            "data length",
            in_channels * out_channels * Self::TAPS,
            data.len(),
        )?;
        Ok(Self {
            in_channels,
            out_channels,
            data,
        })
    }

    #[inline]
    pub fn index(&self, ci: usize, co: usize, a: usize, b: usize) -> usize {
        ((ci * self.out_channels + co) * Self::K_H + a) * Self::K_W + b
    }

    #[inline]
    pub fn get(&self, ci: usize, co: usize, a: usize, b: usize) -> f64 {
        self.data[self.index(ci, co, a, b)]
    }
}
