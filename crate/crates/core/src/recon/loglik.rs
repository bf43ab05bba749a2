use crate::error::{check_len, Error, Result};
use crate::scalar::Real;

/// Poisson log-likelihood `sum_i y_i log ybar_i - ybar_i` without the
/// `log y_i!` constant; `0 log 0 = 0`.
pub fn log_likelihood<T: Real>(y: &[T], ybar: &[T]) -> Result<T> {
    check_len("log-likelihood expectation", y.len(), ybar.len())?;
    let mut acc = T::zero();
    for (i, (&yi, &bi)) in y.iter().zip(ybar).enumerate() {
        if bi > T::zero() {
            if yi != T::zero() {
                acc += yi * bi.ln();
            }
            acc -= bi;
        } else if yi != T::zero() {
            return Err(Error::ZeroExpectation { bin: i, counts: yi.as_f64() });
        } else if bi < T::zero() {
            return Err(Error::InvalidParameter(format!("negative expectation in bin {i}")));
        }
    }
    if !acc.is_finite() {
        return Err(Error::NonFinite("log-likelihood"));
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hand_values() {
        assert_eq!(log_likelihood(&[0.0], &[0.0]).unwrap(), 0.0);
        assert_relative_eq!(
            log_likelihood(&[2.0], &[2.0]).unwrap(),
            2.0 * 2f64.ln() - 2.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(log_likelihood(&[2.0], &[2.0]).unwrap(), -0.6137056388801094, epsilon = 1e-12);
    }

    #[test]
    fn counts_without_expectation_is_an_error() {
        assert!(matches!(
            log_likelihood(&[1.0, 3.0], &[1.0, 0.0]),
            Err(Error::ZeroExpectation { bin: 1, .. })
        ));
    }

    #[test]
    fn maximized_at_data_by_grid_search() {
        for y in [1.0, 3.0, 7.5] {
            let (best, _) = (1..=2000)
                .map(|k| k as f64 * 0.01)
                .map(|b| (b, log_likelihood(&[y], &[b]).unwrap()))
                .fold((0.0, f64::NEG_INFINITY), |acc, (b, l)| if l > acc.1 { (b, l) } else { acc });
            assert!((best - y).abs() <= 0.01 + 1e-12, "{best} vs {y}");
        }
    }
}
