//! Dynamic-convolution mask decoder.
//!
//! Image tokens are projected to `C` channels and laid out on the visual
//! grid. The `N` query features are projected chunk-by-chunk into the
//! weights of two 2× transposed convolutions (`C→C`, then `C→1`) with a
//! channel LayerNorm in between; the single-channel result is bilinearly
//! resampled to the requested mask size.
//!
//! Gradients flow back to the parameters and to both feature matrices.
//! The query features only reach the output through the generated kernels,
//! so the kernel branch of each deconvolution vjp is part of the chain.

mod params;
mod probe;

pub use params::{
    read_params, write_params, DecoderParams, Linear, ParamField, ParamHeader, PARAMS_MAGIC,
};
pub use probe::{
    disk_target, overfit_probe, probe_config, random_inputs, ProbeOutcome, ProbeStep,
    PROBE_INIT_SCALE,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{BinaryMask, MaskLogits};
use crate::tensor::{
    bilinear_upsample, bilinear_vjp, deconv2x_forward, deconv2x_vjp, layernorm_forward,
    layernorm_vjp, linear_forward, linear_vjp, FeatureMap, KernelTensor, Matrix, TensorError,
    DEFAULT_LN_EPS,
};

#[derive(Debug, Error)]
pub enum DecoderError {
    #[error("invalid decoder config: {0}")]
    Config(String),
    #[error("expected {expected} query rows, got {got}")]
    QueryCount { expected: usize, got: usize },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: TensorError,
    },
    #[error("loss: {0}")]
    Loss(#[from] crate::losses::LossError),
    #[error("diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },
    #[error("{0}")]
    Precondition(String),
    #[error("parameter file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T, DecoderError>;
}

impl<T> StageContext<T> for Result<T, TensorError> {
    fn stage(self, stage: &'static str) -> Result<T, DecoderError> {
        self.map_err(|source| DecoderError::Stage { stage, source })
    }
}

fn default_c_dec() -> usize {
    128
}

fn default_n_query() -> usize {
    16
}

fn default_eps() -> f64 {
    DEFAULT_LN_EPS
}

/// Decoder geometry. `c_dec` and `n_query` default to 128 and 16.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub d_llm: usize,
    #[serde(default = "default_c_dec")]
    pub c_dec: usize,
    #[serde(default = "default_n_query")]
    pub n_query: usize,
    pub h_vis: usize,
    pub w_vis: usize,
    pub h_out: usize,
    pub w_out: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

/// Which transposed convolution a kernel feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelStage {
    /// `C → C` channels.
    First,
    /// `C → 1` channel.
    Second,
}

impl DecoderConfig {
    /// Config with the default channel width and query count.
    pub fn new(d_llm: usize, h_vis: usize, w_vis: usize, h_out: usize, w_out: usize) -> Self {
        Self {
            d_llm,
            c_dec: default_c_dec(),
            n_query: default_n_query(),
            h_vis,
            w_vis,
            h_out,
            w_out,
            eps: DEFAULT_LN_EPS,
        }
    }

    pub fn with_channels(mut self, c_dec: usize, n_query: usize) -> Self {
        self.c_dec = c_dec;
        self.n_query = n_query;
        self
    }

    pub fn visual_tokens(&self) -> usize {
        self.h_vis * self.w_vis
    }

    /// Flat kernel length for a stage.
    pub fn kernel_len(&self, stage: KernelStage) -> usize {
        match stage {
            KernelStage::First => self.c_dec * self.c_dec * KernelTensor::TAPS,
            KernelStage::Second => self.c_dec * KernelTensor::TAPS,
        }
    }

    /// Width of the per-query chunk each query row is projected to.
    pub fn chunk_len(&self, stage: KernelStage) -> usize {
        self.kernel_len(stage) / self.n_query
    }

    pub fn validate(&self) -> Result<(), DecoderError> {
        let counts = [
            ("d_llm", self.d_llm),
            ("c_dec", self.c_dec),
            ("n_query", self.n_query),
            ("h_vis", self.h_vis),
            ("w_vis", self.w_vis),
            ("h_out", self.h_out),
            ("w_out", self.w_out),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(DecoderError::Config(format!("{name} must be at least 1")));
        }
        for stage in [KernelStage::First, KernelStage::Second] {
            let len = self.kernel_len(stage);
            if !len.is_multiple_of(self.n_query) {
                return Err(DecoderError::Config(format!(
                    "kernel length {len} is not divisible by n_query = {}",
                    self.n_query
                )));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(DecoderError::Config("eps must be positive".into()));
        }
        Ok(())
    }
}

/// Projects each query row to its chunk and concatenates the chunks in row
/// order into a `[in][out][kh][kw]` kernel.
pub fn assemble_kernels(
    f_q: &Matrix,
    params: &DecoderParams,
    stage: KernelStage,
    cfg: &DecoderConfig,
) -> Result<KernelTensor, DecoderError> {
    cfg.validate()?;
    if f_q.rows != cfg.n_query {
        return Err(DecoderError::QueryCount {
            expected: cfg.n_query,
            got: f_q.rows,
        });
    }
    let (proj, out_channels, name) = match stage {
        KernelStage::First => (&params.proj_ker1, cfg.c_dec, "kernel projection 1"),
        KernelStage::Second => (&params.proj_ker2, 1, "kernel projection 2"),
    };
    let chunks = linear_forward(f_q, &proj.weight, &proj.bias).stage(name)?;
    KernelTensor::from_vec(cfg.c_dec, out_channels, chunks.data).stage(name)
}

/// Every intermediate of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct DecoderTrace {
    pub projected: Matrix,
    pub h0: FeatureMap,
    pub k1: KernelTensor,
    pub k2: KernelTensor,
    pub h1: FeatureMap,
    pub h1_norm: FeatureMap,
    pub h2: FeatureMap,
    pub logits: MaskLogits,
}

/// Gradients of a scalar objective w.r.t. every decoder input.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderGrads {
    pub f_img: Matrix,
    pub f_q: Matrix,
    pub params: DecoderParams,
}

impl DecoderGrads {
    /// Parameters first, then `f_img`, then `f_q`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = self.params.to_flat();
        flat.extend_from_slice(&self.f_img.data);
        flat.extend_from_slice(&self.f_q.data);
        flat
    }
}

fn check_inputs(f_img: &Matrix, f_q: &Matrix, cfg: &DecoderConfig) -> Result<(), DecoderError> {
    cfg.validate()?;
    let ctx = |axis, expected, got| DecoderError::Stage {
        stage: "input",
        source: TensorError::Dimension {
            op: "decode_mask",
            axis,
            expected,
            got,
        },
    };
    if f_img.rows != cfg.visual_tokens() {
        return Err(ctx(
            "image token count (h_vis * w_vis)",
            cfg.visual_tokens(),
            f_img.rows,
        ));
    }
    if f_img.cols != cfg.d_llm {
        return Err(ctx("image feature width (d_llm)", cfg.d_llm, f_img.cols));
    }
    if f_q.rows != cfg.n_query {
        return Err(DecoderError::QueryCount {
            expected: cfg.n_query,
            got: f_q.rows,
        });
    }
    if f_q.cols != cfg.d_llm {
        return Err(ctx("query feature width (d_llm)", cfg.d_llm, f_q.cols));
    }
    Ok(())
}

/// `[L × C]` token rows (row-major over the grid) to a `[C × h × w]` map.
fn tokens_to_map(tokens: &Matrix, h: usize, w: usize) -> FeatureMap {
    let c = tokens.cols;
    let mut map = FeatureMap::zeros(c, h, w);
    let stride = h * w;
    for (l, row) in tokens.data.chunks_exact(c).enumerate() {
        for (ch, &v) in row.iter().enumerate() {
            map.data[ch * stride + l] = v;
        }
    }
    map
}

fn map_to_tokens(map: &FeatureMap) -> Matrix {
    let stride = map.height * map.width;
    let mut tokens = Matrix::zeros(stride, map.channels);
    for ch in 0..map.channels {
        for l in 0..stride {
            tokens.data[l * map.channels + ch] = map.data[ch * stride + l];
        }
    }
    tokens
}

pub fn decode_mask_traced(
    f_img: &Matrix,
    f_q: &Matrix,
    params: &DecoderParams,
    cfg: &DecoderConfig,
) -> Result<DecoderTrace, DecoderError> {
    check_inputs(f_img, f_q, cfg)?;
    params.check_shapes(cfg)?;
    let projected = linear_forward(f_img, &params.proj_img.weight, &params.proj_img.bias)
        .stage("image projection")?;
    let h0 = tokens_to_map(&projected, cfg.h_vis, cfg.w_vis);
    let k1 = assemble_kernels(f_q, params, KernelStage::First, cfg)?;
    let k2 = assemble_kernels(f_q, params, KernelStage::Second, cfg)?;
    let h1 = deconv2x_forward(&h0, &k1).stage("first deconvolution")?;
    let h1_norm =
        layernorm_forward(&h1, &params.ln_gamma, &params.ln_beta, cfg.eps).stage("layernorm")?;
    let h2 = deconv2x_forward(&h1_norm, &k2).stage("second deconvolution")?;
    let up = bilinear_upsample(&h2, cfg.h_out, cfg.w_out).stage("upsample")?;
    let logits = MaskLogits {
        height: up.height,
        width: up.width,
        data: up.data,
    };
    Ok(DecoderTrace {
        projected,
        h0,
        k1,
        k2,
        h1,
        h1_norm,
        h2,
        logits,
    })
}

pub fn decode_mask(
    f_img: &Matrix,
    f_q: &Matrix,
    params: &DecoderParams,
    cfg: &DecoderConfig,
) -> Result<MaskLogits, DecoderError> {
    Ok(decode_mask_traced(f_img, f_q, params, cfg)?.logits)
}

/// Backward pass over a recorded trace.
pub fn decode_mask_backward(
    trace: &DecoderTrace,
    f_img: &Matrix,
    f_q: &Matrix,
    params: &DecoderParams,
    cfg: &DecoderConfig,
    upstream: &[f64],
) -> Result<DecoderGrads, DecoderError> {
    if upstream.len() != cfg.h_out * cfg.w_out {
        return Err(DecoderError::Stage {
            stage: "upstream gradient",
            source: TensorError::Dimension {
                op: "decode_mask_vjp",
                axis: "h_out * w_out",
                expected: cfg.h_out * cfg.w_out,
                got: upstream.len(),
            },
        });
    }
    let d_up = FeatureMap {
        channels: 1,
        height: cfg.h_out,
        width: cfg.w_out,
        data: upstream.to_vec(),
    };
    let d_h2 = bilinear_vjp(trace.h2.shape(), &d_up).stage("upsample")?;
    let second = deconv2x_vjp(&trace.h1_norm, &trace.k2, &d_h2).stage("second deconvolution")?;
    let ln =
        layernorm_vjp(&trace.h1, &params.ln_gamma, cfg.eps, &second.input).stage("layernorm")?;
    let first = deconv2x_vjp(&trace.h0, &trace.k1, &ln.x).stage("first deconvolution")?;

    let d_projected = map_to_tokens(&first.input);
    let img = linear_vjp(f_img, &params.proj_img.weight, &d_projected).stage("image projection")?;

    let chunk_grads = |kernel: KernelTensor, stage: KernelStage| {
        Matrix::from_vec(cfg.n_query, cfg.chunk_len(stage), kernel.data)
    };
    let d_k1 = chunk_grads(first.kernel, KernelStage::First).stage("kernel projection 1")?;
    let d_k2 = chunk_grads(second.kernel, KernelStage::Second).stage("kernel projection 2")?;
    let ker1 = linear_vjp(f_q, &params.proj_ker1.weight, &d_k1).stage("kernel projection 1")?;
    let ker2 = linear_vjp(f_q, &params.proj_ker2.weight, &d_k2).stage("kernel projection 2")?;

    let mut d_fq = ker1.x;
    for (a, b) in d_fq.data.iter_mut().zip(&ker2.x.data) {
        *a += b;
    }
    Ok(DecoderGrads {
        f_img: img.x,
        f_q: d_fq,
        params: DecoderParams {
            proj_img: Linear {
                weight: img.w,
                bias: img.b,
            },
            proj_ker1: Linear {
                weight: ker1.w,
                bias: ker1.b,
            },
            proj_ker2: Linear {
                weight: ker2.w,
                bias: ker2.b,
            },
            ln_gamma: ln.gamma,
            ln_beta: ln.beta,
        },
    })
}

/// Reverse-mode gradient of [`decode_mask`] for `upstream = dL/d(logits)`.
pub fn decode_mask_vjp(
    f_img: &Matrix,
    f_q: &Matrix,
    params: &DecoderParams,
    cfg: &DecoderConfig,
    upstream: &[f64],
) -> Result<DecoderGrads, DecoderError> {
    let trace = decode_mask_traced(f_img, f_q, params, cfg)?;
    decode_mask_backward(&trace, f_img, f_q, params, cfg, upstream)
}

/// Hard mask at `threshold` on the sigmoid scale (0.5 ⇔ logit ≥ 0).
pub fn binarize(logits: &MaskLogits, threshold: f64) -> BinaryMask {
    logits.binarize(threshold)
}
