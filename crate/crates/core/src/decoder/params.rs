//! Decoder parameters and their on-disk form: a flat little-endian f64
//! stream plus a JSON header listing every field's name, shape and byte
//! range.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DecoderConfig, DecoderError, KernelStage};
use crate::tensor::Matrix;

pub const PARAMS_MAGIC: &str = "UMVL-DEC-1";

/// Token-wise affine map `x · weight + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(d_in, d_out),
            bias: vec![0.0; d_out],
        }
    }
}

/// Three projections and the LayerNorm affine pair; nothing else is learned.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub proj_img: Linear,
    pub proj_ker1: Linear,
    pub proj_ker2: Linear,
    pub ln_gamma: Vec<f64>,
    pub ln_beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamField {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the data stream.
    pub offset: usize,
    /// Byte length.
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamHeader {
    pub magic: String,
    /// Data file, relative to the header's directory.
    pub data: String,
    pub config: DecoderConfig,
    pub fields: Vec<ParamField>,
    pub total_bytes: usize,
}

fn field_shapes(cfg: &DecoderConfig) -> Vec<(&'static str, Vec<usize>)> {
    let k1 = cfg.chunk_len(KernelStage::First);
    let k2 = cfg.chunk_len(KernelStage::Second);
    vec![
        ("proj_img.weight", vec![cfg.d_llm, cfg.c_dec]),
        ("proj_img.bias", vec![cfg.c_dec]),
        ("proj_ker1.weight", vec![cfg.d_llm, k1]),
        ("proj_ker1.bias", vec![k1]),
        ("proj_ker2.weight", vec![cfg.d_llm, k2]),
        ("proj_ker2.bias", vec![k2]),
        ("ln.gamma", vec![cfg.c_dec]),
        ("ln.beta", vec![cfg.c_dec]),
    ]
}

impl DecoderParams {
    pub fn zeros(cfg: &DecoderConfig) -> Self {
        Self {
            proj_img: Linear::zeros(cfg.d_llm, cfg.c_dec),
            proj_ker1: Linear::zeros(cfg.d_llm, cfg.chunk_len(KernelStage::First)),
            proj_ker2: Linear::zeros(cfg.d_llm, cfg.chunk_len(KernelStage::Second)),
            ln_gamma: vec![0.0; cfg.c_dec],
            ln_beta: vec![0.0; cfg.c_dec],
        }
    }

    /// Projections drawn from `scale · N(0, 1)`; LayerNorm starts at the
    /// identity affine (`gamma = 1`, `beta = 0`).
    pub fn random<R: Rng + ?Sized>(cfg: &DecoderConfig, rng: &mut R, scale: f64) -> Self {
        let mut params = Self::zeros(cfg);
        for lin in [
            &mut params.proj_img,
            &mut params.proj_ker1,
            &mut params.proj_ker2,
        ] {
            for v in lin.weight.data.iter_mut().chain(lin.bias.iter_mut()) {
                *v = scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        params.ln_gamma.fill(1.0);
        params
    }

    /// Field layout for `cfg`, in serialization order.
    pub fn fields(cfg: &DecoderConfig) -> Vec<ParamField> {
        let mut offset = 0;
        field_shapes(cfg)
            .into_iter()
            .map(|(name, shape)| {
                let length = shape.iter().product::<usize>() * 8;
                let field = ParamField {
                    name: name.to_string(),
                    shape,
                    offset,
                    length,
                };
                offset += length;
                field
            })
            .collect()
    }

    pub fn num_values(cfg: &DecoderConfig) -> usize {
        field_shapes(cfg)
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    fn slices(&self) -> [&[f64]; 8] {
        [
            &self.proj_img.weight.data,
            &self.proj_img.bias,
            &self.proj_ker1.weight.data,
            &self.proj_ker1.bias,
            &self.proj_ker2.weight.data,
            &self.proj_ker2.bias,
            &self.ln_gamma,
            &self.ln_beta,
        ]
    }

    fn slices_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.proj_img.weight.data,
            &mut self.proj_img.bias,
            &mut self.proj_ker1.weight.data,
            &mut self.proj_ker1.bias,
            &mut self.proj_ker2.weight.data,
            &mut self.proj_ker2.bias,
            &mut self.ln_gamma,
            &mut self.ln_beta,
        ]
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn from_flat(cfg: &DecoderConfig, flat: &[f64]) -> Result<Self, DecoderError> {
        let expected = Self::num_values(cfg);
        if flat.len() != expected {
            return Err(DecoderError::Format(format!(
                "expected {expected} parameter values, got {}",
                flat.len()
            )));
        }
        let mut params = Self::zeros(cfg);
        let mut rest = flat;
        for dst in params.slices_mut() {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
        Ok(params)
    }

    pub fn check_shapes(&self, cfg: &DecoderConfig) -> Result<(), DecoderError> {
        let linears = [
            ("proj_img", &self.proj_img),
            ("proj_ker1", &self.proj_ker1),
            ("proj_ker2", &self.proj_ker2),
        ];
        let shapes = field_shapes(cfg);
        for (i, (name, lin)) in linears.iter().enumerate() {
            let want = &shapes[2 * i].1;
            if [lin.weight.rows, lin.weight.cols] != want[..]
                || lin.weight.data.len() != want[0] * want[1]
                || lin.bias.len() != want[1]
            {
                return Err(DecoderError::Config(format!(
                    "{name} has shape {}x{} (+{} bias), expected {}x{}",
                    lin.weight.rows,
                    lin.weight.cols,
                    lin.bias.len(),
                    want[0],
                    want[1]
                )));
            }
        }
        if self.ln_gamma.len() != cfg.c_dec || self.ln_beta.len() != cfg.c_dec {
            return Err(DecoderError::Config(format!(
                "layernorm affine length must be c_dec = {}",
                cfg.c_dec
            )));
        }
        Ok(())
    }

    /// Little-endian f64 stream in field order.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .flat_map(|v| v.to_le_bytes())
            .collect()
    }

    pub fn header(&self, cfg: &DecoderConfig, data_file: &str) -> ParamHeader {
        let fields = Self::fields(cfg);
        let total_bytes = fields.iter().map(|f| f.length).sum();
        ParamHeader {
            magic: PARAMS_MAGIC.to_string(),
            data: data_file.to_string(),
            config: *cfg,
            fields,
            total_bytes,
        }
    }

    /// Rebuilds parameters from a header and its data stream, checking the
    /// magic string and that the field table matches the header's config.
    pub fn from_bytes(header: &ParamHeader, bytes: &[u8]) -> Result<Self, DecoderError> {
        if header.magic != PARAMS_MAGIC {
            return Err(DecoderError::Format(format!(
                "bad magic {:?}, expected {PARAMS_MAGIC:?}",
                header.magic
            )));
        }
        header.config.validate()?;
        let expected = Self::fields(&header.config);
        if header.fields != expected {
            return Err(DecoderError::Format(
                "field table does not match the header config".into(),
            ));
        }
        if bytes.len() != header.total_bytes
            || header.total_bytes != Self::num_values(&header.config) * 8
        {
            return Err(DecoderError::Format(format!(
                "data stream has {} bytes, header declares {}",
                bytes.len(),
                header.total_bytes
            )));
        }
        let flat: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Self::from_flat(&header.config, &flat)
    }
}

fn data_path_for(header_path: &Path) -> PathBuf {
    header_path.with_extension("bin")
}

/// Writes the JSON header to `header_path` and the data stream next to it
/// with a `.bin` extension.
pub fn write_params(
    params: &DecoderParams,
    cfg: &DecoderConfig,
    header_path: &Path,
) -> Result<(), DecoderError> {
    params.check_shapes(cfg)?;
    let data_path = data_path_for(header_path);
    let data_name = data_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| DecoderError::Format("header path has no file name".into()))?;
    let header = params.header(cfg, data_name);
    let json =
        serde_json::to_string_pretty(&header).map_err(|e| DecoderError::Format(e.to_string()))?;
    fs::write(header_path, json + "\n")?;
    fs::write(&data_path, params.to_bytes())?;
    Ok(())
}

pub fn read_params(header_path: &Path) -> Result<(DecoderConfig, DecoderParams), DecoderError> {
    let text = fs::read_to_string(header_path)?;
    let header: ParamHeader =
        serde_json::from_str(&text).map_err(|e| DecoderError::Format(e.to_string()))?;
    let dir = header_path.parent().unwrap_or_else(|| Path::new("."));
    let bytes = fs::read(dir.join(&header.data))?;
    let params = DecoderParams::from_bytes(&header, &bytes)?;
    Ok((header.config, params))
}
