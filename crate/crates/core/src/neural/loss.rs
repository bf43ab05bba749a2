use crate::error::{check_len, Error, Result};

/// Floor applied to `beta` inside the logarithm of the surrogate.
pub const LOG_FLOOR: f64 = 1e-8;

/// Weighted Poisson surrogate `sum_j w_j (a_j log beta_j - beta_j)` and its
/// gradient in `beta`. Pixels with `w_j = 0` are skipped.
pub fn loss_q(alpha_hat: &[f64], beta: &[f64], w: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len("surrogate target", beta.len(), alpha_hat.len())?;
    check_len("surrogate weight", beta.len(), w.len())?;
    if alpha_hat.iter().chain(beta).chain(w).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("surrogate inputs"));
    }
    let mut value = 0.0;
    let grad = alpha_hat
        .iter()
        .zip(beta)
        .zip(w)
        .map(|((&a, &b), &wj)| {
            if wj == 0.0 {
                return 0.0;
            }
            if b > LOG_FLOOR {
                value += wj * (a * b.ln() - b);
                wj * (a / b - 1.0)
            } else {
                value += wj * (a * LOG_FLOOR.ln() - b);
                -wj
            }
        })
        .collect();
    Ok((value, grad))
}

/// `|beta - target|^2` and its gradient `2 (beta - target)`.
pub fn loss_mse(target: &[f64], beta: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len("regression target", beta.len(), target.len())?;
    let grad: Vec<f64> = beta.iter().zip(target).map(|(b, t)| 2.0 * (b - t)).collect();
    let value = beta.iter().zip(target).map(|(b, t)| (b - t) * (b - t)).sum::<f64>();
    if !value.is_finite() {
        return Err(Error::NonFinite("regression loss"));
    }
    Ok((value, grad))
}
