use super::{check_dim, Matrix, TensorError};

const OP: &str = "linear";

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub x: Matrix,
    pub w: Matrix,
    pub b: Vec<f64>,
}

fn check_shapes(x: &Matrix, w: &Matrix, b: &[f64]) -> Result<(), TensorError> {
    check_dim(OP, "inner (x.cols vs w.rows)", w.rows, x.cols)?;
    check_dim(OP, "bias length (w.cols)", w.cols, b.len())
}

/// `out = x · w + b`, with `b` broadcast over rows.
pub fn linear_forward(x: &Matrix, w: &Matrix, b: &[f64]) -> Result<Matrix, TensorError> {
    check_shapes(x, w, b)?;
    let (rows, inner, cols) = (x.rows, x.cols, w.cols);
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let start = out.len();
        out.extend_from_slice(b);
        let acc = &mut out[start..start + cols];
        for k in 0..inner {
            let xik = x.data[i * inner + k];
            if xik == 0.0 {
                continue;
            }
            let w_row = &w.data[k * cols..(k + 1) * cols];
            for (o, &wkj) in acc.iter_mut().zip(w_row) {
                *o += xik * wkj;
            }
        }
    }
    Ok(Matrix {
        rows,
        cols,
        data: out,
    })
}

/// Gradients of `linear_forward` given `upstream = dL/d(out)`.
pub fn linear_vjp(x: &Matrix, w: &Matrix, upstream: &Matrix) -> Result<LinearGrads, TensorError> {
    check_dim(OP, "inner (x.cols vs w.rows)", w.rows, x.cols)?;
    check_dim(OP, "upstream rows", x.rows, upstream.rows)?;
    check_dim(OP, "upstream cols", w.cols, upstream.cols)?;
    let (rows, inner, cols) = (x.rows, x.cols, w.cols);

    let mut gx = Matrix::zeros(rows, inner);
    let mut gw = Matrix::zeros(inner, cols);
    let mut gb = vec![0.0; cols];
    for i in 0..rows {
        let g_row = upstream.row(i);
        for (acc, &g) in gb.iter_mut().zip(g_row) {
            *acc += g;
        }
        for k in 0..inner {
            let w_row = &w.data[k * cols..(k + 1) * cols];
            gx.data[i * inner + k] = w_row.iter().zip(g_row).map(|(a, b)| a * b).sum();
            let xik = x.data[i * inner + k];
            if xik != 0.0 {
                let gw_row = &mut gw.data[k * cols..(k + 1) * cols];
                for (acc, &g) in gw_row.iter_mut().zip(g_row) {
                    *acc += xik * g;
                }
            }
        }
    }
    Ok(LinearGrads {
        x: gx,
        w: gw,
        b: gb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_times_identity() {
        let out = linear_forward(&Matrix::identity(2), &Matrix::identity(2), &[0.0, 0.0]).unwrap();
        assert_eq!(out, Matrix::identity(2));
    }

    #[test]
    fn zero_input_yields_bias_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_matrix(&mut rng, 4, 2);
        let out = linear_forward(&Matrix::zeros(3, 4), &w, &[1.0, 2.0]).unwrap();
        for r in 0..3 {
            assert_eq!(out.row(r), &[1.0, 2.0]);
        }
    }

    #[test]
    fn shape_errors_name_the_axis() {
        let err =
            linear_forward(&Matrix::zeros(2, 3), &Matrix::zeros(4, 2), &[0.0; 2]).unwrap_err();
        assert!(err.to_string().contains("inner"), "{err}");
        let err =
            linear_forward(&Matrix::zeros(2, 4), &Matrix::zeros(4, 2), &[0.0; 3]).unwrap_err();
        assert!(err.to_string().contains("bias"), "{err}");
    }

    #[test]
    fn vjp_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_matrix(&mut rng, 2, 3);
        let w = random_matrix(&mut rng, 3, 2);
        let b: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let up = random_matrix(&mut rng, 2, 2);
        let loss = |x: &Matrix, w: &Matrix, b: &[f64]| -> f64 {
            let out = linear_forward(x, w, b).unwrap();
            out.data.iter().zip(&up.data).map(|(o, u)| o * u).sum()
        };
        let g = linear_vjp(&x, &w, &up).unwrap();
        let eps = 1e-6;
        let rel = |a: f64, n: f64| (a - n).abs() / 1f64.max(a.abs()).max(n.abs());

        for i in 0..x.data.len() {
            let (mut p, mut m) = (x.clone(), x.clone());
            p.data[i] += eps;
            m.data[i] -= eps;
            let num = (loss(&p, &w, &b) - loss(&m, &w, &b)) / (2.0 * eps);
            assert!(rel(g.x.data[i], num) < 1e-6);
        }
        for i in 0..w.data.len() {
            let (mut p, mut m) = (w.clone(), w.clone());
            p.data[i] += eps;
            m.data[i] -= eps;
            let num = (loss(&x, &p, &b) - loss(&x, &m, &b)) / (2.0 * eps);
            assert!(rel(g.w.data[i], num) < 1e-6);
        }
        for i in 0..b.len() {
            let (mut p, mut m) = (b.clone(), b.clone());
            p[i] += eps;
            m[i] -= eps;
            let num = (loss(&x, &w, &p) - loss(&x, &w, &m)) / (2.0 * eps);
            assert!(rel(g.b[i], num) < 1e-6);
        }
    }
}
