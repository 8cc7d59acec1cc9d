//! Half-pixel-center bilinear resampling:
//! `src = (dst + 0.5) * (in / out) - 0.5`, clamped to `[0, in - 1]`.

use super::{check_dim, FeatureMap, TensorError};

const OP: &str = "bilinear_upsample";

/// Source taps along one axis: `(lo, hi, weight_hi)` per output index.
fn axis_taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    let max = (in_len - 1) as f64;
    (0..out_len)
        .map(|dst| {
            let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

// Exact when both ends agree, so constant maps stay bit-identical.
#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn check(x: &FeatureMap, h_out: usize, w_out: usize) -> Result<(), TensorError> {
    if x.channels == 0 || x.height == 0 || x.width == 0 {
        return Err(TensorError::Empty {
            op: OP,
            axis: "input map",
        });
    }
    if h_out == 0 {
        return Err(TensorError::Empty {
            op: OP,
            axis: "output height",
        });
    }
    if w_out == 0 {
        return Err(TensorError::Empty {
            op: OP,
            axis: "output width",
        });
    }
    Ok(())
}

pub fn bilinear_upsample(
    x: &FeatureMap,
    h_out: usize,
    w_out: usize,
) -> Result<FeatureMap, TensorError> {
    check(x, h_out, w_out)?;
    let rows = axis_taps(x.height, h_out);
    let cols = axis_taps(x.width, w_out);
    let mut out = FeatureMap::zeros(x.channels, h_out, w_out);
    for c in 0..x.channels {
        let plane = x.plane(c);
        let w = x.width;
        for (i, &(r0, r1, fy)) in rows.iter().enumerate() {
            for (j, &(c0, c1, fx)) in cols.iter().enumerate() {
                let top = lerp(plane[r0 * w + c0], plane[r0 * w + c1], fx);
                let bottom = lerp(plane[r1 * w + c0], plane[r1 * w + c1], fx);
                out.data[(c * h_out + i) * w_out + j] = lerp(top, bottom, fy);
            }
        }
    }
    Ok(out)
}

/// Transpose of the resampling map: scatters `upstream` back onto the
/// `(channels, height, width)` input grid.
pub fn bilinear_vjp(
    input_shape: (usize, usize, usize),
    upstream: &FeatureMap,
) -> Result<FeatureMap, TensorError> {
    let (channels, height, width) = input_shape;
    let probe = FeatureMap {
        channels,
        height,
        width,
        data: Vec::new(),
    };
    check(&probe, upstream.height, upstream.width)?;
    check_dim(OP, "upstream channels", channels, upstream.channels)?;
    let (h_out, w_out) = (upstream.height, upstream.width);
    let rows = axis_taps(height, h_out);
    let cols = axis_taps(width, w_out);
    let mut g = FeatureMap::zeros(channels, height, width);
    for c in 0..channels {
        let base = c * height * width;
        for (i, &(r0, r1, fy)) in rows.iter().enumerate() {
            for (j, &(c0, c1, fx)) in cols.iter().enumerate() {
                let u = upstream.data[(c * h_out + i) * w_out + j];
                let top = u * (1.0 - fy);
                let bottom = u * fy;
                g.data[base + r0 * width + c0] += top * (1.0 - fx);
                g.data[base + r0 * width + c1] += top * fx;
                g.data[base + r1 * width + c0] += bottom * (1.0 - fx);
                g.data[base + r1 * width + c1] += bottom * fx;
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_map_stays_constant() {
        let x = FeatureMap::filled(2, 3, 5, 7.0);
        for &(h, w) in &[(1, 1), (4, 9), (13, 2), (3, 5)] {
            let out = bilinear_upsample(&x, h, w).unwrap();
            assert!(out.data.iter().all(|&v| v == 7.0), "{h}x{w}");
        }
    }

    #[test]
    fn same_size_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = FeatureMap::from_vec(
            2,
            3,
            4,
            (0..24).map(|_| rng.random_range(-5.0..5.0)).collect(),
        )
        .unwrap();
        assert_eq!(bilinear_upsample(&x, 3, 4).unwrap(), x);
    }

    #[test]
    fn two_by_two_to_four_by_four_hand_values() {
        // Per-axis source coordinates are -0.25, 0.25, 0.75, 1.25 clamped to
        // [0, 1], i.e. blend weights 0, 0.25, 0.75, 1. With [[0,1],[2,3]] the
        // value at (i, j) is w_j + 2 * w_i.
        let x = FeatureMap::from_vec(1, 2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let out = bilinear_upsample(&x, 4, 4).unwrap();
        #[rustfmt::skip]
        let expected = [
            0.0,  0.25, 0.75, 1.0,
            0.5,  0.75, 1.25, 1.5,
            1.5,  1.75, 2.25, 2.5,
            2.0,  2.25, 2.75, 3.0,
        ];
        for (k, (&got, &want)) in out.data.iter().zip(&expected).enumerate() {
            assert!((got - want).abs() < 1e-15, "site {k}: {got} vs {want}");
        }
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(bilinear_upsample(&FeatureMap::zeros(1, 0, 3), 2, 2).is_err());
        assert!(bilinear_upsample(&FeatureMap::zeros(1, 2, 2), 0, 2).is_err());
    }

    #[test]
    fn vjp_is_the_adjoint() {
        // <A x, u> == <x, A^T u> for the linear resampling map A.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for &(h, w, ho, wo) in &[(3, 4, 7, 5), (2, 2, 4, 4), (5, 3, 2, 9), (1, 1, 3, 3)] {
            let x = FeatureMap::from_vec(
                2,
                h,
                w,
                (0..2 * h * w)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
            )
            .unwrap();
            let u = FeatureMap::from_vec(
                2,
                ho,
                wo,
                (0..2 * ho * wo)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
            )
            .unwrap();
            let ax = bilinear_upsample(&x, ho, wo).unwrap();
            let atu = bilinear_vjp((2, h, w), &u).unwrap();
            let lhs: f64 = ax.data.iter().zip(&u.data).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.data.iter().zip(&atu.data).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
