//! Reconstruction engines: ML-EM, KEM, neural KEM, DIP by optimization
//! transfer, and DIP by ADMM.

mod admm;
mod em;
mod loglik;
mod neural_kem;

use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use admm::{admm_closed_form, admm_subproblem, run_dip_admm, AdmmOptions};
pub use em::{em_step, kem_step, run_em, run_kem, run_mlem};
pub use loglik::log_likelihood;
pub use neural_kem::{
    check_surrogate, run_dip_ot, run_neural_kem, surrogate_along, surrogate_q, NeuralKemOptions, SurrogateGaps,
};

use crate::error::{check_len, Error, Result};
use crate::scalar::Real;
use crate::tomo::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mlem,
    Kem,
    DipOt,
    NeuralKem,
    DipAdmm,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Mlem, Method::Kem, Method::DipAdmm, Method::DipOt, Method::NeuralKem];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mlem => "mlem",
            Method::Kem => "kem",
            Method::DipOt => "dip-ot",
            Method::NeuralKem => "neural-kem",
            Method::DipAdmm => "dip-admm",
        }
    }

    pub fn uses_kernel(self) -> bool {
        matches!(self, Method::Kem | Method::NeuralKem)
    }

    pub fn uses_network(self) -> bool {
        matches!(self, Method::DipOt | Method::NeuralKem | Method::DipAdmm)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s || m.name().replace('-', "_") == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown reconstruction method '{s}'")))
    }
}

/// Options shared by every engine.
#[derive(Debug, Clone)]
pub struct RunOptions<T> {
    pub outer_iters: usize,
    /// Record `x` every this many iterations (0: never).
    pub snapshot_every: usize,
    /// Further iterations at which `x` is recorded.
    pub checkpoints: Vec<usize>,
    /// Initial coefficient image; uniform 1 on the support when absent.
    pub init: Option<Vec<T>>,
}

impl<T> RunOptions<T> {
    pub fn iterations(outer_iters: usize) -> Self {
        RunOptions { outer_iters, snapshot_every: 0, checkpoints: Vec::new(), init: None }
    }

    pub fn with_snapshots(mut self, every: usize) -> Self {
        self.snapshot_every = every;
        self
    }

    pub fn with_checkpoints(mut self, iters: Vec<usize>) -> Self {
        self.checkpoints = iters;
        self
    }

    fn wants_snapshot(&self, n: usize) -> bool {
        (self.snapshot_every > 0 && n.is_multiple_of(self.snapshot_every)) || self.checkpoints.contains(&n)
    }
}

impl<T> Default for RunOptions<T> {
    fn default() -> Self {
        Self::iterations(60)
    }
}

/// One row of the reconstruction trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub loglik: f64,
    /// Surrogate at the current iterate; NaN for engines without one.
    pub q_before: f64,
    /// Surrogate at the best trained iterate; NaN for engines without one.
    pub q_after: f64,
    pub guard_retries: usize,
    /// The monotonicity guard kept the previous parameters.
    pub rejected: bool,
    pub wall_ms: f64,
}

impl IterRecord {
    fn plain(iter: usize, loglik: f64, elapsed: Duration) -> Self {
        IterRecord {
            iter,
            loglik,
            q_before: f64::NAN,
            q_after: f64::NAN,
            guard_retries: 0,
            rejected: false,
            wall_ms: elapsed.as_secs_f64() * 1e3,
        }
    }
}

/// Snapshot of an engine after iteration `iter`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconState<T> {
    pub iter: usize,
    pub alpha: Vec<T>,
    /// `K alpha`, or `alpha` without a kernel.
    pub x: Vec<T>,
    pub loglik: f64,
}

#[derive(Debug, Clone)]
pub struct ReconOutput<T> {
    pub state: ReconState<T>,
    pub trace: Vec<IterRecord>,
    /// `(iteration, x)` pairs.
    pub snapshots: Vec<(usize, Vec<T>)>,
}

impl<T> ReconOutput<T> {
    pub fn rejected_iterations(&self) -> usize {
        self.trace.iter().filter(|r| r.rejected).count()
    }
}

/// Writes `iter,loglik,Q_before,Q_after,guard_retries,wall_ms`.
pub fn write_trace_csv<W: Write>(trace: &[IterRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let fmt = |v: f64| if v.is_nan() { String::new() } else { format!("{v:.17e}") };
    let io = |e: csv::Error| Error::Io(e.into());
    out.write_record(["iter", "loglik", "Q_before", "Q_after", "guard_retries", "wall_ms"]).map_err(io)?;
    for r in trace {
        out.write_record([
            r.iter.to_string(),
            fmt(r.loglik),
            fmt(r.q_before),
            fmt(r.q_after),
            r.guard_retries.to_string(),
            format!("{:.3}", r.wall_ms),
        ])
        .map_err(io)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_trace_csv(trace: &[IterRecord], path: impl AsRef<Path>) -> Result<()> {
    write_trace_csv(trace, std::fs::File::create(path)?)
}

/// `ybar = P K alpha + r` with the derived weight `w = K^T P^T 1`.
///
/// With no kernel this is the plain image-domain model and `w` is the
/// sensitivity image.
#[derive(Debug, Clone)]
pub struct ForwardModel<'a, T> {
    p: &'a SparseMatrix<T>,
    kernel: Option<&'a SparseMatrix<T>>,
    background: &'a [T],
    weight: Vec<T>,
}

impl<'a, T: Real> ForwardModel<'a, T> {
    pub fn new(p: &'a SparseMatrix<T>, kernel: Option<&'a SparseMatrix<T>>, background: &'a [T]) -> Result<Self> {
        check_len("background sinogram", p.n_rows(), background.len())?;
        if background.iter().any(|v| !(v.is_finite() && *v >= T::zero())) {
            return Err(Error::InvalidParameter("background must be finite and nonnegative".into()));
        }
        let s = crate::tomo::sensitivity(p);
        let weight = match kernel {
            Some(k) => {
                if k.n_rows() != p.n_cols() || k.n_cols() != p.n_cols() {
                    return Err(Error::DimensionMismatch {
                        what: "kernel matrix",
                        expected: p.n_cols(),
                        got: k.n_rows(),
                    });
                }
                k.matvec_t(&s)?
            }
            None => s,
        };
        Ok(ForwardModel { p, kernel, background, weight })
    }

    pub fn system_matrix(&self) -> &SparseMatrix<T> {
        self.p
    }

    pub fn kernel(&self) -> Option<&SparseMatrix<T>> {
        self.kernel
    }

    pub fn background(&self) -> &[T] {
        self.background
    }

    pub fn n_pixels(&self) -> usize {
        self.p.n_cols()
    }

    pub fn n_bins(&self) -> usize {
        self.p.n_rows()
    }

    pub fn weight(&self) -> &[T] {
        &self.weight
    }

    pub fn support(&self) -> Vec<bool> {
        self.weight.iter().map(|&w| w > T::zero()).collect()
    }

    /// Zeroes coefficients outside the support.
    pub fn mask(&self, alpha: &mut [T]) {
        alpha.iter_mut().zip(&self.weight).for_each(|(a, &w)| {
            if !(w > T::zero()) {
                *a = T::zero()
            }
        });
    }

    pub fn initial_coefficients(&self, init: Option<&[T]>) -> Result<Vec<T>> {
        match init {
            Some(v) => {
                check_len("initial image", self.n_pixels(), v.len())?;
                if v.iter().any(|a| !(a.is_finite() && *a >= T::zero())) {
                    return Err(Error::InvalidParameter("initial image must be finite and nonnegative".into()));
                }
                let mut a = v.to_vec();
                self.mask(&mut a);
                Ok(a)
            }
            None => Ok(self.weight.iter().map(|&w| if w > T::zero() { T::one() } else { T::zero() }).collect()),
        }
    }

    /// `x = K alpha`.
    pub fn image(&self, alpha: &[T]) -> Result<Vec<T>> {
        match self.kernel {
            Some(k) => k.matvec(alpha),
            None => {
                check_len("coefficients", self.n_pixels(), alpha.len())?;
                Ok(alpha.to_vec())
            }
        }
    }

    pub fn expectation(&self, alpha: &[T]) -> Result<Vec<T>> {
        let mut ybar = self.p.matvec(&self.image(alpha)?)?;
        ybar.iter_mut().zip(self.background).for_each(|(b, &r)| *b += r);
        Ok(ybar)
    }

    pub fn log_likelihood(&self, y: &[T], alpha: &[T]) -> Result<T> {
        log_likelihood(y, &self.expectation(alpha)?)
    }

    /// One (kernel) EM update from `alpha`.
    pub fn em_update(&self, y: &[T], alpha: &[T]) -> Result<Vec<T>> {
        em::kernel_update(self.p, self.kernel, y, self.background, alpha, &self.weight)
    }

    /// `K^T P^T v`, the adjoint of `alpha -> P K alpha`.
    pub fn adjoint(&self, v: &[T]) -> Result<Vec<T>> {
        let bp = self.p.matvec_t(v)?;
        match self.kernel {
            Some(k) => k.matvec_t(&bp),
            None => Ok(bp),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("sart".parse::<Method>().is_err());
    }

    #[test]
    fn trace_csv_schema() {
        let rec = IterRecord {
            iter: 1,
            loglik: -3.5,
            q_before: 1.0,
            q_after: 2.0,
            guard_retries: 1,
            rejected: false,
            wall_ms: 12.5,
        };
        let mut buf = Vec::new();
        write_trace_csv(&[rec, IterRecord { q_before: f64::NAN, ..rec }], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iter,loglik,Q_before,Q_after,guard_retries,wall_ms");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 6);
        assert_eq!(first[0].parse::<usize>().unwrap(), 1);
        assert_eq!(first[1].parse::<f64>().unwrap(), -3.5);
        assert_eq!(lines.next().unwrap().split(',').nth(2).unwrap(), "");
    }

    #[test]
    fn forward_model_checks_dimensions() {
        let p = SparseMatrix::from_dense(2, 2, &[1.0, 0.0, 0.5, 0.5]).unwrap();
        assert!(ForwardModel::new(&p, None, &[0.0]).is_err());
        let k = SparseMatrix::<f64>::identity(3);
        assert!(ForwardModel::new(&p, Some(&k), &[0.0, 0.0]).is_err());
        let m = ForwardModel::new(&p, None, &[0.0, 0.0]).unwrap();
        assert_eq!(m.weight(), &[1.5, 0.5]);
        assert_eq!(m.initial_coefficients(None).unwrap(), vec![1.0, 1.0]);
    }
}
