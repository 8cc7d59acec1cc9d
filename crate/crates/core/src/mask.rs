//! Dense mask containers shared by the decoder, losses and evaluators.

use serde::{Deserialize, Serialize};

use crate::tensor::{check_dim, TensorError};

/// Pre-sigmoid mask scores, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskLogits {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl MaskLogits {
    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        check_dim(
            "MaskLogits::from_vec",
            "data length",
            height * width,
            data.len(),
        )?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Hard mask: a pixel is set iff `sigmoid(logit) >= threshold`.
    pub fn binarize(&self, threshold: f64) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|&z| u8::from(sigmoid(z) >= threshold))
                .collect(),
        }
    }
}

/// Row-major {0,1} grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<u8>) -> Result<Self, TensorError> {
        check_dim(
            "BinaryMask::from_vec",
            "data length",
            height * width,
            data.len(),
        )?;
        Ok(Self {
            height,
            width,
            data: data.into_iter().map(|v| u8::from(v != 0)).collect(),
        })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(u8::from(f(r, c)));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    /// Filled disk centered on the grid with the given pixel radius.
    pub fn centered_disk(height: usize, width: usize, radius: f64) -> Self {
        let cy = height as f64 / 2.0;
        let cx = width as f64 / 2.0;
        Self::from_fn(height, width, |r, c| {
            let dy = r as f64 + 0.5 - cy;
            let dx = c as f64 + 0.5 - cx;
            dx * dx + dy * dy <= radius * radius
        })
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.width + c] != 0
    }
}

/// Logistic function, evaluated without overflow for large `|z|`.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
