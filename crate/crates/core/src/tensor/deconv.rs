//! Stride-2, 2×2, unpadded transposed convolution. Each output pixel
//! `(2i + a, 2j + b)` receives exactly one tap from input pixel `(i, j)`.

use super::{check_dim, FeatureMap, KernelTensor, TensorError};

const OP: &str = "deconv2x";

#[derive(Debug, Clone, PartialEq)]
pub struct DeconvGrads {
    pub input: FeatureMap,
    pub kernel: KernelTensor,
}

pub fn deconv2x_forward(
    input: &FeatureMap,
    kernel: &KernelTensor,
) -> Result<FeatureMap, TensorError> {
    check_dim(OP, "input channels", kernel.in_channels, input.channels)?;
    let (h, w) = (input.height, input.width);
    let mut out = FeatureMap::zeros(kernel.out_channels, 2 * h, 2 * w);
    let out_w = out.width;
    for ci in 0..input.channels {
        let plane = input.plane(ci);
        for co in 0..kernel.out_channels {
            let taps = [
                kernel.get(ci, co, 0, 0),
                kernel.get(ci, co, 0, 1),
                kernel.get(ci, co, 1, 0),
                kernel.get(ci, co, 1, 1),
            ];
            let base = co * out.height * out_w;
            for i in 0..h {
                for j in 0..w {
                    let v = plane[i * w + j];
                    let top = base + (2 * i) * out_w + 2 * j;
                    let bottom = top + out_w;
                    out.data[top] += v * taps[0];
                    out.data[top + 1] += v * taps[1];
                    out.data[bottom] += v * taps[2];
                    out.data[bottom + 1] += v * taps[3];
                }
            }
        }
    }
    Ok(out)
}

pub fn deconv2x_vjp(
    input: &FeatureMap,
    kernel: &KernelTensor,
    upstream: &FeatureMap,
) -> Result<DeconvGrads, TensorError> {
    check_dim(OP, "input channels", kernel.in_channels, input.channels)?;
    check_dim(
        OP,
        "upstream channels",
        kernel.out_channels,
        upstream.channels,
    )?;
    check_dim(OP, "upstream height", 2 * input.height, upstream.height)?;
    check_dim(OP, "upstream width", 2 * input.width, upstream.width)?;
    let (h, w) = (input.height, input.width);
    let up_w = upstream.width;
    let mut g_in = FeatureMap::zeros(input.channels, h, w);
    let mut g_k = KernelTensor::zeros(kernel.in_channels, kernel.out_channels);

    for ci in 0..input.channels {
        let plane = input.plane(ci);
        for co in 0..kernel.out_channels {
            let taps = [
                kernel.get(ci, co, 0, 0),
                kernel.get(ci, co, 0, 1),
                kernel.get(ci, co, 1, 0),
                kernel.get(ci, co, 1, 1),
            ];
            let up = upstream.plane(co);
            let mut gk = [0.0; 4];
            for i in 0..h {
                for j in 0..w {
                    let top = (2 * i) * up_w + 2 * j;
                    let bottom = top + up_w;
                    let g = [up[top], up[top + 1], up[bottom], up[bottom + 1]];
                    let v = plane[i * w + j];
                    let gi = &mut g_in.data[(ci * h + i) * w + j];
                    for t in 0..4 {
                        *gi += g[t] * taps[t];
                        gk[t] += g[t] * v;
                    }
                }
            }
            let k0 = g_k.index(ci, co, 0, 0);
            g_k.data[k0..k0 + 4].copy_from_slice(&gk);
        }
    }
    Ok(DeconvGrads {
        input: g_in,
        kernel: g_k,
    })
}
