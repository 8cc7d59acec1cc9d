//! Segmentation supervision: soft dice plus mean pixel-wise binary cross
//! entropy on logits, each returning its exact gradient w.r.t. the logits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{sigmoid, BinaryMask, MaskLogits};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("shape mismatch: logits {logits:?} vs target {target:?}")]
    Shape {
        logits: (usize, usize),
        target: (usize, usize),
    },
    #[error("invalid loss config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub weight_dice: f64,
    pub weight_bce: f64,
    pub dice_smooth: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weight_dice: 1.0,
            weight_bce: 1.0,
            dice_smooth: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        let finite = [self.weight_dice, self.weight_bce, self.dice_smooth]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(LossError::Config("non-finite value".into()));
        }
        if self.weight_dice < 0.0 || self.weight_bce < 0.0 {
            return Err(LossError::Config("weights must be non-negative".into()));
        }
        if self.weight_dice + self.weight_bce <= 0.0 {
            return Err(LossError::Config("weights must not both be zero".into()));
        }
        if self.dice_smooth <= 0.0 {
            return Err(LossError::Config("dice_smooth must be positive".into()));
        }
        Ok(())
    }
}

/// Scalar loss and its gradient w.r.t. each logit.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
}

fn check_shapes(logits: &MaskLogits, target: &BinaryMask) -> Result<(), LossError> {
    if (logits.height, logits.width) != (target.height, target.width)
        || logits.data.len() != target.data.len()
    {
        return Err(LossError::Shape {
            logits: (logits.height, logits.width),
            target: (target.height, target.width),
        });
    }
    Ok(())
}

/// `(2 Σ p·t + smooth) / (Σ p + Σ t + smooth)` with `p = sigmoid(logits)`.
pub fn soft_dice(logits: &MaskLogits, target: &BinaryMask, smooth: f64) -> Result<f64, LossError> {
    check_shapes(logits, target)?;
    let (inter, sum_p, sum_t) = dice_sums(logits, target);
    Ok((2.0 * inter + smooth) / (sum_p + sum_t + smooth))
}

fn dice_sums(logits: &MaskLogits, target: &BinaryMask) -> (f64, f64, f64) {
    let mut inter = 0.0;
    let mut sum_p = 0.0;
    let mut sum_t = 0.0;
    for (&z, &t) in logits.data.iter().zip(&target.data) {
        let p = sigmoid(z);
        let t = f64::from(t);
        inter += p * t;
        sum_p += p;
        sum_t += t;
    }
    (inter, sum_p, sum_t)
}

pub fn dice_loss(
    logits: &MaskLogits,
    target: &BinaryMask,
    smooth: f64,
) -> Result<LossOutput, LossError> {
    check_shapes(logits, target)?;
    let (inter, sum_p, sum_t) = dice_sums(logits, target);
    let num = 2.0 * inter + smooth;
    let den = sum_p + sum_t + smooth;
    let loss = 1.0 - num / den;
    let den2 = den * den;
    let grad = logits
        .data
        .iter()
        .zip(&target.data)
        .map(|(&z, &t)| {
            let p = sigmoid(z);
            let d_num = 2.0 * f64::from(t);
            // d(loss)/dp = -(d_num * den - num) / den^2, then chain through sigmoid.
            -(d_num * den - num) / den2 * p * (1.0 - p)
        })
        .collect();
    Ok(LossOutput { loss, grad })
}

pub fn bce_loss(logits: &MaskLogits, target: &BinaryMask) -> Result<LossOutput, LossError> {
    check_shapes(logits, target)?;
    let n = logits.data.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(logits.data.len());
    for (&z, &t) in logits.data.iter().zip(&target.data) {
        let t = f64::from(t);
        total += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid(z) - t) / n);
    }
    Ok(LossOutput {
        loss: total / n,
        grad,
    })
}

pub fn combined_seg_loss(
    logits: &MaskLogits,
    target: &BinaryMask,
    cfg: &LossConfig,
) -> Result<LossOutput, LossError> {
    cfg.validate()?;
    let dice = dice_loss(logits, target, cfg.dice_smooth)?;
    let bce = bce_loss(logits, target)?;
    let grad = dice
        .grad
        .iter()
        .zip(&bce.grad)
        .map(|(d, b)| cfg.weight_dice * d + cfg.weight_bce * b)
        .collect();
    Ok(LossOutput {
        loss: cfg.weight_dice * dice.loss + cfg.weight_bce * bce.loss,
        grad,
    })
}
