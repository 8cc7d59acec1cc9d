use super::{check_dim, FeatureMap, TensorError};

const OP: &str = "layernorm";

pub const DEFAULT_LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormGrads {
    pub x: FeatureMap,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

fn check(x: &FeatureMap, gamma: &[f64], beta: &[f64]) -> Result<(), TensorError> {
    if x.channels == 0 {
        return Err(TensorError::Empty {
            op: OP,
            axis: "channels",
        });
    }
    check_dim(OP, "gamma length", x.channels, gamma.len())?;
    check_dim(OP, "beta length", x.channels, beta.len())
}

/// Mean and inverse standard deviation over channels at one spatial site.
fn site_stats(x: &FeatureMap, site: usize, eps: f64) -> (f64, f64) {
    let stride = x.height * x.width;
    let c = x.channels as f64;
    let mean = (0..x.channels)
        .map(|ch| x.data[ch * stride + site])
        .sum::<f64>()
        / c;
    let var = (0..x.channels)
        .map(|ch| {
            let d = x.data[ch * stride + site] - mean;
            d * d
        })
        .sum::<f64>()
        / c;
    (mean, 1.0 / (var + eps).sqrt())
}

/// Normalizes across channels independently at every `(h, w)` site.
pub fn layernorm_forward(
    x: &FeatureMap,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<FeatureMap, TensorError> {
    check(x, gamma, beta)?;
    let stride = x.height * x.width;
    let mut out = FeatureMap::zeros(x.channels, x.height, x.width);
    for site in 0..stride {
        let (mean, inv_std) = site_stats(x, site, eps);
        for ch in 0..x.channels {
            let idx = ch * stride + site;
            out.data[idx] = gamma[ch] * (x.data[idx] - mean) * inv_std + beta[ch];
        }
    }
    Ok(out)
}

pub fn layernorm_vjp(
    x: &FeatureMap,
    gamma: &[f64],
    eps: f64,
    upstream: &FeatureMap,
) -> Result<LayerNormGrads, TensorError> {
    check(x, gamma, gamma)?;
    check_dim(OP, "upstream shape", x.data.len(), upstream.data.len())?;
    let stride = x.height * x.width;
    let c = x.channels as f64;
    let mut gx = FeatureMap::zeros(x.channels, x.height, x.width);
    let mut g_gamma = vec![0.0; x.channels];
    let mut g_beta = vec![0.0; x.channels];
    let mut xhat = vec![0.0; x.channels];
    let mut dxhat = vec![0.0; x.channels];

    for site in 0..stride {
        let (mean, inv_std) = site_stats(x, site, eps);
        for ch in 0..x.channels {
            let idx = ch * stride + site;
            let dy = upstream.data[idx];
            xhat[ch] = (x.data[idx] - mean) * inv_std;
            dxhat[ch] = dy * gamma[ch];
            g_gamma[ch] += dy * xhat[ch];
            g_beta[ch] += dy;
        }
        let mean_d = dxhat.iter().sum::<f64>() / c;
        let mean_dx = dxhat.iter().zip(&xhat).map(|(d, h)| d * h).sum::<f64>() / c;
        for ch in 0..x.channels {
            gx.data[ch * stride + site] = inv_std * (dxhat[ch] - mean_d - xhat[ch] * mean_dx);
        }
    }
    Ok(LayerNormGrads {
        x: gx,
        gamma: g_gamma,
        beta: g_beta,
    })
}
