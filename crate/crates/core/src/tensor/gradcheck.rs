use super::{check_dim, TensorError};

/// Central differences `(f(x + eps e_i) - f(x - eps e_i)) / 2eps` for every
/// coordinate. Fails on the first non-finite probe.
pub fn central_differences<F>(f: F, x0: &[f64], eps: f64) -> Result<Vec<f64>, TensorError>
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(x0.len());
    for i in 0..x0.len() {
        x[i] = x0[i] + eps;
        let plus = f(&x);
        x[i] = x0[i] - eps;
        let minus = f(&x);
        x[i] = x0[i];
        for value in [plus, minus] {
            if !value.is_finite() {
                return Err(TensorError::NonFinite { index: i, value });
            }
        }
        out.push((plus - minus) / (2.0 * eps));
    }
    Ok(out)
}

/// Largest per-coordinate relative error between `analytic` and central
/// differences of `f` at `x0`, using `max(1, |analytic|, |numeric|)` as the
/// denominator.
pub fn grad_check<F>(f: F, analytic: &[f64], x0: &[f64], eps: f64) -> Result<f64, TensorError>
where
    F: Fn(&[f64]) -> f64,
{
    check_dim("grad_check", "gradient length", x0.len(), analytic.len())?;
    let numeric = central_differences(f, x0, eps)?;
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| (a - n).abs() / 1f64.max(a.abs()).max(n.abs()))
        .fold(0.0, f64::max))
}
