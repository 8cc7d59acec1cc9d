//! Randomized finite-difference checks over the primitives and the full
//! decoder + loss chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::decoder::{decode_mask, decode_mask_vjp, DecoderConfig, DecoderError, DecoderParams};
use crate::losses::{combined_seg_loss, LossConfig};
use crate::mask::BinaryMask;
use crate::tensor::{
    bilinear_upsample, bilinear_vjp, deconv2x_forward, deconv2x_vjp, grad_check, layernorm_forward,
    layernorm_vjp, linear_forward, linear_vjp, FeatureMap, KernelTensor, Matrix, TensorError,
    DEFAULT_LN_EPS,
};

pub const FD_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub coordinates: usize,
    pub max_rel_error: f64,
}

/// Random decoder geometry: `d_llm, c_dec ∈ [4, 16]`, `n_query ∈ {2, 4, 8}`,
/// grid sides in `[1, 6]`, output sides in `[1, 24]`.
pub fn random_decoder_config<R: Rng + ?Sized>(rng: &mut R) -> DecoderConfig {
    loop {
        let n_query = [2, 4, 8][rng.random_range(0..3)];
        let cfg = DecoderConfig {
            d_llm: rng.random_range(4..=16),
            c_dec: rng.random_range(4..=16),
            n_query,
            h_vis: rng.random_range(1..=6),
            w_vis: rng.random_range(1..=6),
            h_out: rng.random_range(1..=24),
            w_out: rng.random_range(1..=24),
            eps: DEFAULT_LN_EPS,
        };
        if cfg.validate().is_ok() {
            return cfg;
        }
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect::<Vec<f64>>()
}

/// Decoder inputs flattened as `params ++ f_img ++ f_q`.
struct FlatProblem {
    cfg: DecoderConfig,
    n_params: usize,
    n_img: usize,
}

impl FlatProblem {
    fn split(&self, flat: &[f64]) -> Result<(DecoderParams, Matrix, Matrix), DecoderError> {
        let cfg = &self.cfg;
        let params = DecoderParams::from_flat(cfg, &flat[..self.n_params])?;
        let img = &flat[self.n_params..self.n_params + self.n_img];
        let q = &flat[self.n_params + self.n_img..];
        let f_img =
            Matrix::from_vec(cfg.visual_tokens(), cfg.d_llm, img.to_vec()).map_err(|source| {
                DecoderError::Stage {
                    stage: "input",
                    source,
                }
            })?;
        let f_q = Matrix::from_vec(cfg.n_query, cfg.d_llm, q.to_vec()).map_err(|source| {
            DecoderError::Stage {
                stage: "input",
                source,
            }
        })?;
        Ok((params, f_img, f_q))
    }
}

/// Max relative error of the end-to-end decoder + combined-loss gradient
/// against central differences, over every parameter and both inputs.
pub fn decoder_gradient_error(cfg: &DecoderConfig, seed: u64) -> Result<CheckResult, DecoderError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_params = DecoderParams::num_values(cfg);
    let n_img = cfg.visual_tokens() * cfg.d_llm;
    let n_q = cfg.n_query * cfg.d_llm;
    let problem = FlatProblem {
        cfg: *cfg,
        n_params,
        n_img,
    };
    let mut x0 = normal_vec(&mut rng, n_params, 0.3);
    // LayerNorm gamma around 1 so the normalized branch carries signal.
    let params0 = DecoderParams::from_flat(cfg, &x0)?;
    let gamma_start = n_params - 2 * cfg.c_dec;
    for (i, g) in params0.ln_gamma.iter().enumerate() {
        x0[gamma_start + i] = 1.0 + g;
    }
    x0.extend(normal_vec(&mut rng, n_img + n_q, 0.5));
    let bits: Vec<u8> = (0..cfg.h_out * cfg.w_out)
        .map(|_| u8::from(rng.random_bool(0.4)))
        .collect();
    let target =
        BinaryMask::from_vec(cfg.h_out, cfg.w_out, bits).map_err(|source| DecoderError::Stage {
            stage: "target",
            source,
        })?;
    let loss_cfg = LossConfig::default();

    let (params, f_img, f_q) = problem.split(&x0)?;
    let logits = decode_mask(&f_img, &f_q, &params, cfg)?;
    let loss = combined_seg_loss(&logits, &target, &loss_cfg)?;
    let analytic = decode_mask_vjp(&f_img, &f_q, &params, cfg, &loss.grad)?.to_flat();

    let f = |x: &[f64]| -> f64 {
        let (p, img, q) = problem.split(x).expect("flat layout");
        let logits = decode_mask(&img, &q, &p, cfg).expect("valid decoder inputs");
        combined_seg_loss(&logits, &target, &loss_cfg)
            .expect("matching shapes")
            .loss
    };
    let max_rel_error =
        grad_check(f, &analytic, &x0, FD_EPS).map_err(|source| DecoderError::Stage {
            stage: "grad_check",
            source,
        })?;
    Ok(CheckResult {
        name: format!(
            "decoder D={} C={} N={} grid={}x{} out={}x{}",
            cfg.d_llm, cfg.c_dec, cfg.n_query, cfg.h_vis, cfg.w_vis, cfg.h_out, cfg.w_out
        ),
        coordinates: x0.len(),
        max_rel_error,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Checks each primitive's vjp on random shapes with `C, H, W ∈ [1, 6]`.
/// The scalar objective is `<op(x), u>` for a random cotangent `u`.
pub fn primitive_gradient_errors(seed: u64) -> Result<Vec<CheckResult>, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = || {
        (
            rng.random_range(1..=6usize),
            rng.random_range(1..=6usize),
            rng.random_range(1..=6usize),
        )
    };
    let (c, h, w) = dims();
    let (c_out, h_out, w_out) = dims();
    let (rows, d_in, d_out) = dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut results = Vec::new();

    // linear
    {
        let x = normal_vec(&mut rng, rows * d_in, 1.0);
        let wt = normal_vec(&mut rng, d_in * d_out, 1.0);
        let b = normal_vec(&mut rng, d_out, 1.0);
        let u = Matrix::from_vec(rows, d_out, normal_vec(&mut rng, rows * d_out, 1.0))?;
        let (nx, nw) = (x.len(), wt.len());
        let f = |v: &[f64]| {
            let xm = Matrix::from_vec(rows, d_in, v[..nx].to_vec()).expect("shape");
            let wm = Matrix::from_vec(d_in, d_out, v[nx..nx + nw].to_vec()).expect("shape");
            dot(
                &linear_forward(&xm, &wm, &v[nx + nw..]).expect("shape").data,
                &u.data,
            )
        };
        let g = linear_vjp(
            &Matrix::from_vec(rows, d_in, x.clone())?,
            &Matrix::from_vec(d_in, d_out, wt.clone())?,
            &u,
        )?;
        let analytic = [g.x.data, g.w.data, g.b].concat();
        let x0 = [x, wt, b].concat();
        results.push(CheckResult {
            name: format!("linear {rows}x{d_in} -> {d_out}"),
            coordinates: x0.len(),
            max_rel_error: grad_check(f, &analytic, &x0, FD_EPS)?,
        });
    }

    // deconv2x
    {
        let x = normal_vec(&mut rng, c * h * w, 1.0);
        let k = normal_vec(&mut rng, c * c_out * 4, 1.0);
        let u = FeatureMap::from_vec(
            c_out,
            2 * h,
            2 * w,
            normal_vec(&mut rng, c_out * 4 * h * w, 1.0),
        )?;
        let nx = x.len();
        let f = |v: &[f64]| {
            let xm = FeatureMap::from_vec(c, h, w, v[..nx].to_vec()).expect("shape");
            let km = KernelTensor::from_vec(c, c_out, v[nx..].to_vec()).expect("shape");
            dot(&deconv2x_forward(&xm, &km).expect("shape").data, &u.data)
        };
        let g = deconv2x_vjp(
            &FeatureMap::from_vec(c, h, w, x.clone())?,
            &KernelTensor::from_vec(c, c_out, k.clone())?,
            &u,
        )?;
        let analytic = [g.input.data, g.kernel.data].concat();
        let x0 = [x, k].concat();
        results.push(CheckResult {
            name: format!("deconv2x {c}x{h}x{w} -> {c_out}"),
            coordinates: x0.len(),
            max_rel_error: grad_check(f, &analytic, &x0, FD_EPS)?,
        });
    }

    // layernorm
    {
        let x = normal_vec(&mut rng, c * h * w, 1.0);
        let gamma: Vec<f64> = normal_vec(&mut rng, c, 0.3)
            .iter()
            .map(|v| 1.0 + v)
            .collect();
        let beta = normal_vec(&mut rng, c, 0.3);
        let u = FeatureMap::from_vec(c, h, w, normal_vec(&mut rng, c * h * w, 1.0))?;
        let nx = x.len();
        let f = |v: &[f64]| {
            let xm = FeatureMap::from_vec(c, h, w, v[..nx].to_vec()).expect("shape");
            let out = layernorm_forward(&xm, &v[nx..nx + c], &v[nx + c..], DEFAULT_LN_EPS)
                .expect("shape");
            dot(&out.data, &u.data)
        };
        let g = layernorm_vjp(
            &FeatureMap::from_vec(c, h, w, x.clone())?,
            &gamma,
            DEFAULT_LN_EPS,
            &u,
        )?;
        let analytic = [g.x.data, g.gamma, g.beta].concat();
        let x0 = [x, gamma, beta].concat();
        results.push(CheckResult {
            name: format!("layernorm {c}x{h}x{w}"),
            coordinates: x0.len(),
            max_rel_error: grad_check(f, &analytic, &x0, FD_EPS)?,
        });
    }

    // bilinear
    {
        let x = normal_vec(&mut rng, c * h * w, 1.0);
        let u = FeatureMap::from_vec(
            c,
            h_out,
            w_out,
            normal_vec(&mut rng, c * h_out * w_out, 1.0),
        )?;
        let f = |v: &[f64]| {
            let xm = FeatureMap::from_vec(c, h, w, v.to_vec()).expect("shape");
            dot(
                &bilinear_upsample(&xm, h_out, w_out).expect("shape").data,
                &u.data,
            )
        };
        let analytic = bilinear_vjp((c, h, w), &u)?.data;
        results.push(CheckResult {
            name: format!("bilinear {c}x{h}x{w} -> {h_out}x{w_out}"),
            coordinates: x.len(),
            max_rel_error: grad_check(f, &analytic, &x, FD_EPS)?,
        });
    }
    Ok(results)
}
