//! Dynamic-convolution mask decoding for vision-language grounding.
//!
//! - [`tensor`]: dense f64 primitives with vector-Jacobian products
//! - [`decoder`]: the query-conditioned mask decoder and its gradients
//! - [`losses`]: dice + BCE segmentation loss
//! - [`codec`]: grounding-token text ⇄ typed spatial primitives
//! - [`eval`]: segmentation, detection, keypoint and diagnosis metrics

pub mod codec;
pub mod decoder;
pub mod eval;
pub mod gradsuite;
pub mod losses;
pub mod mask;
pub mod tensor;

pub use decoder::{
    assemble_kernels, binarize, decode_mask, decode_mask_vjp, overfit_probe, DecoderConfig,
    DecoderError, DecoderGrads, DecoderParams, KernelStage,
};
pub use losses::{bce_loss, combined_seg_loss, dice_loss, LossConfig, LossOutput};
pub use mask::{BinaryMask, MaskLogits};
