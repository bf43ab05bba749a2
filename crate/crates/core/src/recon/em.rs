use std::time::Instant;

use super::{ForwardModel, IterRecord, ReconOutput, ReconState, RunOptions};
use crate::error::{check_len, Error, Result};
use crate::scalar::Real;
use crate::tomo::SparseMatrix;

/// Ratio `y / ybar`, zero where both vanish.
pub(crate) fn data_ratio<T: Real>(y: &[T], ybar: &[T]) -> Result<Vec<T>> {
    y.iter()
        .zip(ybar)
        .enumerate()
        .map(|(i, (&yi, &bi))| {
            if bi > T::zero() {
                Ok(yi / bi)
            } else if yi == T::zero() {
                Ok(T::zero())
            } else {
                Err(Error::ZeroExpectation { bin: i, counts: yi.as_f64() })
            }
        })
        .collect()
}

/// `a / w * bp`, holding pixels with `w = 0` at zero.
pub(crate) fn multiplicative_update<T: Real>(a: &[T], w: &[T], bp: &[T]) -> Vec<T> {
    a.iter()
        .zip(w)
        .zip(bp)
        .map(|((&aj, &wj), &bj)| if wj > T::zero() { aj / wj * bj } else { T::zero() })
        .collect()
}

/// One ML-EM update `x / s * P^T (y / (P x + r))`.
pub fn em_step<T: Real>(p: &SparseMatrix<T>, y: &[T], r: &[T], x: &[T], s: &[T]) -> Result<Vec<T>> {
    kernel_update(p, None, y, r, x, s)
}

/// One KEM update `alpha / w * K^T P^T (y / (P K alpha + r))`.
pub fn kem_step<T: Real>(
    p: &SparseMatrix<T>,
    k: &SparseMatrix<T>,
    y: &[T],
    r: &[T],
    alpha: &[T],
    w: &[T],
) -> Result<Vec<T>> {
    kernel_update(p, Some(k), y, r, alpha, w)
}

pub(crate) fn kernel_update<T: Real>(
    p: &SparseMatrix<T>,
    k: Option<&SparseMatrix<T>>,
    y: &[T],
    r: &[T],
    alpha: &[T],
    w: &[T],
) -> Result<Vec<T>> {
    check_len("measured sinogram", p.n_rows(), y.len())?;
    check_len("background sinogram", p.n_rows(), r.len())?;
    check_len("weight image", p.n_cols(), w.len())?;
    let x = match k {
        Some(k) => k.matvec(alpha)?,
        None => {
            check_len("image", p.n_cols(), alpha.len())?;
            alpha.to_vec()
        }
    };
    let mut ybar = p.matvec(&x)?;
    ybar.iter_mut().zip(r).for_each(|(b, &ri)| *b += ri);
    let ratio = data_ratio(y, &ybar)?;
    let mut bp = p.matvec_t(&ratio)?;
    if let Some(k) = k {
        bp = k.matvec_t(&bp)?;
    }
    Ok(multiplicative_update(alpha, w, &bp))
}

/// ML-EM (`kernel = None`) or KEM from a uniform start on the support.
pub fn run_em<T: Real>(model: &ForwardModel<T>, y: &[T], opts: &RunOptions<T>) -> Result<ReconOutput<T>> {
    if opts.outer_iters == 0 {
        return Err(Error::InvalidParameter("outer_iters must be at least 1".into()));
    }
    let mut alpha = model.initial_coefficients(opts.init.as_deref())?;
    let mut trace = Vec::with_capacity(opts.outer_iters);
    let mut snapshots = Vec::new();
    let mut loglik = T::nan();
    for n in 1..=opts.outer_iters {
        let t0 = Instant::now();
        alpha = model.em_update(y, &alpha)?;
        loglik = model.log_likelihood(y, &alpha)?;
        trace.push(IterRecord::plain(n, loglik.as_f64(), t0.elapsed()));
        if opts.wants_snapshot(n) {
            snapshots.push((n, model.image(&alpha)?));
        }
    }
    let x = model.image(&alpha)?;
    Ok(ReconOutput {
        state: ReconState { iter: opts.outer_iters, alpha, x, loglik: loglik.as_f64() },
        trace,
        snapshots,
    })
}

pub fn run_mlem<T: Real>(
    p: &SparseMatrix<T>,
    y: &[T],
    r: &[T],
    opts: &RunOptions<T>,
) -> Result<ReconOutput<T>> {
    run_em(&ForwardModel::new(p, None, r)?, y, opts)
}

pub fn run_kem<T: Real>(
    p: &SparseMatrix<T>,
    k: &SparseMatrix<T>,
    y: &[T],
    r: &[T],
    opts: &RunOptions<T>,
) -> Result<ReconOutput<T>> {
    run_em(&ForwardModel::new(p, Some(k), r)?, y, opts)
}
