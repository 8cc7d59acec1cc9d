//! Capacity probe: fit the decoder (parameters and both feature matrices)
//! to a single target mask with plain gradient descent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{decode_mask_backward, decode_mask_traced, DecoderConfig, DecoderError, DecoderParams};
use crate::losses::{combined_seg_loss, soft_dice, LossConfig};
use crate::mask::BinaryMask;
use crate::tensor::Matrix;

pub const PROBE_INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeStep {
    pub step: usize,
    pub loss: f64,
    pub dice: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeOutcome {
    /// Loss and soft dice before each update.
    pub trajectory: Vec<ProbeStep>,
    /// Soft dice after the last update.
    pub final_dice: f64,
}

fn normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect::<Vec<f64>>();
    Matrix { rows, cols, data }
}

/// Probe geometry: `D = 32`, an 8×8 grid, 64×64 output, `C = 32`, `N = 8`.
pub fn probe_config() -> DecoderConfig {
    DecoderConfig::new(32, 8, 8, 64, 64).with_channels(32, 8)
}

/// Centered disk with radius a quarter of the output height.
pub fn disk_target(cfg: &DecoderConfig) -> BinaryMask {
    BinaryMask::centered_disk(cfg.h_out, cfg.w_out, cfg.h_out as f64 / 4.0)
}

/// Draws `(f_img, f_q)` as `scale · N(0, 1)`, image features first.
pub fn random_inputs<R: Rng + ?Sized>(
    cfg: &DecoderConfig,
    rng: &mut R,
    scale: f64,
) -> (Matrix, Matrix) {
    let f_img = normal_matrix(rng, cfg.visual_tokens(), cfg.d_llm, scale);
    let f_q = normal_matrix(rng, cfg.n_query, cfg.d_llm, scale);
    (f_img, f_q)
}

fn descend(values: &mut [f64], grads: &[f64], lr: f64) {
    for (v, g) in values.iter_mut().zip(grads) {
        *v -= lr * g;
    }
}

pub fn overfit_probe(
    target: &BinaryMask,
    cfg: &DecoderConfig,
    loss_cfg: &LossConfig,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<ProbeOutcome, DecoderError> {
    cfg.validate()?;
    loss_cfg.validate()?;
    if steps == 0 {
        return Err(DecoderError::Precondition(
            "probe needs at least one step".into(),
        ));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(DecoderError::Precondition(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if (target.height, target.width) != (cfg.h_out, cfg.w_out) {
        return Err(DecoderError::Precondition(format!(
            "target is {}x{}, config output is {}x{}",
            target.height, target.width, cfg.h_out, cfg.w_out
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = DecoderParams::random(cfg, &mut rng, PROBE_INIT_SCALE);
    let (mut f_img, mut f_q) = random_inputs(cfg, &mut rng, PROBE_INIT_SCALE);

    let mut trajectory = Vec::with_capacity(steps);
    for step in 0..steps {
        let trace = decode_mask_traced(&f_img, &f_q, &params, cfg)?;
        let loss = combined_seg_loss(&trace.logits, target, loss_cfg)?;
        if !loss.loss.is_finite() {
            return Err(DecoderError::Divergence {
                step,
                loss: loss.loss,
            });
        }
        let dice = soft_dice(&trace.logits, target, loss_cfg.dice_smooth)?;
        trajectory.push(ProbeStep {
            step,
            loss: loss.loss,
            dice,
        });

        let grads = decode_mask_backward(&trace, &f_img, &f_q, &params, cfg, &loss.grad)?;
        let mut flat = params.to_flat();
        descend(&mut flat, &grads.params.to_flat(), lr);
        params = DecoderParams::from_flat(cfg, &flat)?;
        descend(&mut f_img.data, &grads.f_img.data, lr);
        descend(&mut f_q.data, &grads.f_q.data, lr);
    }

    let logits = decode_mask_traced(&f_img, &f_q, &params, cfg)?.logits;
    if logits.data.iter().any(|v| !v.is_finite()) {
        return Err(DecoderError::Divergence {
            step: steps,
            loss: f64::NAN,
        });
    }
    let final_dice = soft_dice(&logits, target, loss_cfg.dice_smooth)?;
    Ok(ProbeOutcome {
        trajectory,
        final_dice,
    })
}
