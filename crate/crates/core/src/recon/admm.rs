use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::em::em_step;
use super::neural_kem::support_mean;
use super::{ForwardModel, IterRecord, ReconOutput, ReconState, RunOptions};
use crate::error::{check_len, Error, Result};
use crate::neural::{train_to_target, AdamConfig, AdamState, LossKind, Tensor, TrainTarget, UNet};
use crate::scalar::Real;
use crate::tomo::{sensitivity, SparseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdmmOptions {
    pub rho: f64,
    /// EM steps on the penalized image subproblem per outer iteration.
    pub recon_subiters: usize,
    /// Adam steps fitting the network per outer iteration.
    pub train_subiters: usize,
    /// Fixed multiplier on the network output; defaults to the mean of the
    /// first EM update over the support.
    pub output_scale: Option<f64>,
    pub adam: AdamConfig,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        AdmmOptions { rho: 0.05, recon_subiters: 4, train_subiters: 50, output_scale: None, adam: AdamConfig::default() }
    }
}

/// Positive root of `rho x^2 + (s - rho t) x - s x_em = 0`, the maximizer of
/// the EM surrogate plus `-rho/2 (x - t)^2`. Pixels with `s = 0` are zero.
pub fn admm_closed_form(x_em: &[f64], s: &[f64], t: &[f64], rho: f64) -> Result<Vec<f64>> {
    check_len("EM image", s.len(), x_em.len())?;
    check_len("penalty centre", s.len(), t.len())?;
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    Ok(x_em
        .iter()
        .zip(s)
        .zip(t)
        .map(|((&xe, &sj), &tj)| {
            if !(sj > 0.0) {
                return 0.0;
            }
            let b = rho * tj - sj;
            let c = sj * xe;
            let d = (b * b + 4.0 * rho * c).sqrt();
            // both forms equal the same root; pick the one free of cancellation
            if b >= 0.0 {
                (b + d) / (2.0 * rho)
            } else {
                2.0 * c / (d - b)
            }
        })
        .collect())
}

/// `n_inner` EM-plus-penalty steps on the image subproblem from `x`.
#[allow(clippy::too_many_arguments)]
pub fn admm_subproblem(
    p: &SparseMatrix<f64>,
    y: &[f64],
    r: &[f64],
    s: &[f64],
    x: &[f64],
    t: &[f64],
    rho: f64,
    n_inner: usize,
) -> Result<Vec<f64>> {
    let mut x = x.to_vec();
    for _ in 0..n_inner {
        let x_em = em_step(p, y, r, &x, s)?;
        x = admm_closed_form(&x_em, s, t, rho)?;
    }
    Ok(x)
}

/// Deep image prior by ADMM: alternate the penalized image update, a
/// squared-error fit of the network to `x + mu`, and the multiplier update.
/// The reported image is the network output.
pub fn run_dip_admm<T: Real>(
    p: &SparseMatrix<f64>,
    y: &[f64],
    r: &[f64],
    net: &mut UNet<T>,
    z: &Tensor<T>,
    opts: &RunOptions<f64>,
    admm: &AdmmOptions,
) -> Result<ReconOutput<f64>> {
    if opts.outer_iters == 0 {
        return Err(Error::InvalidParameter("outer_iters must be at least 1".into()));
    }
    if !(admm.rho > 0.0) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {}", admm.rho)));
    }
    let model = ForwardModel::new(p, None, r)?;
    let s = sensitivity(p);
    let mut x = model.initial_coefficients(opts.init.as_deref())?;
    let scale = match admm.output_scale {
        Some(v) => v,
        None => support_mean(&em_step(p, y, r, &x, &s)?, &s),
    };
    let mut beta: Vec<f64> = net.forward(z)?.iter().map(|&v| v.as_f64() * scale).collect();
    model.mask(&mut beta);
    let mut mu = vec![0.0; x.len()];
    let mut adam = AdamState::new(net.params(), admm.adam);
    let mut trace = Vec::with_capacity(opts.outer_iters);
    let mut snapshots = Vec::new();
    let mut loglik = f64::NEG_INFINITY;
    for n in 1..=opts.outer_iters {
        let t0 = Instant::now();
        let t: Vec<f64> = beta.iter().zip(&mu).map(|(b, m)| b - m).collect();
        x = admm_subproblem(p, y, r, &s, &x, &t, admm.rho, admm.recon_subiters)?;
        let target: Vec<f64> = x.iter().zip(&mu).map(|(a, m)| a + m).collect();
        let goal = TrainTarget { kind: LossKind::Mse, target: &target, weight: &[], scale };
        beta = train_to_target(net, &mut adam, z, &goal, admm.train_subiters)?.best_output;
        model.mask(&mut beta);
        mu.iter_mut().zip(x.iter().zip(&beta)).for_each(|(m, (a, b))| *m += a - b);
        loglik = model.log_likelihood(y, &beta).unwrap_or(f64::NEG_INFINITY);
        trace.push(IterRecord::plain(n, loglik, t0.elapsed()));
        if opts.wants_snapshot(n) {
            snapshots.push((n, beta.clone()));
        }
    }
    Ok(ReconOutput {
        state: ReconState { iter: opts.outer_iters, alpha: beta.clone(), x: beta, loglik },
        trace,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::NetDescriptor;
    use crate::rng;
    use crate::tomo::{Grid, ProjGeometry};
    use rand::Rng;

    #[test]
    fn closed_form_solves_the_quadratic() {
        let mut g = rng::seeded(1);
        let n = 500;
        let xe: Vec<f64> = (0..n).map(|_| g.random::<f64>() * 50.0).collect();
        let s: Vec<f64> = (0..n).map(|_| g.random::<f64>() * 10.0 + 1e-3).collect();
        let t: Vec<f64> = (0..n).map(|_| (g.random::<f64>() - 0.3) * 80.0).collect();
        for rho in [1e-6, 0.05, 3.0] {
            let x = admm_closed_form(&xe, &s, &t, rho).unwrap();
            for j in 0..n {
                assert!(x[j] >= 0.0);
                let terms = [rho * x[j] * x[j], (s[j] - rho * t[j]) * x[j], s[j] * xe[j]];
                let res = terms[0] + terms[1] - terms[2];
                let mag = terms.iter().map(|v| v.abs()).fold(0.0, f64::max);
                assert!(res.abs() <= 1e-10 * mag.max(1e-300), "rho {rho} residual {res}");
            }
        }
    }

    #[test]
    fn tiny_rho_reduces_to_em() {
        let grid = Grid::new(8, 8, 4.0).unwrap();
        let geom = ProjGeometry::covering(&grid, 10);
        let p: SparseMatrix<f64> = crate::tomo::build_system_matrix(&grid, &geom).unwrap();
        let mut g = rng::seeded(2);
        let y: Vec<f64> = (0..p.n_rows()).map(|_| g.random_range(0..20) as f64).collect();
        let r = vec![0.5; p.n_rows()];
        let s = sensitivity(&p);
        let x = vec![1.0; 64];
        let t: Vec<f64> = (0..64).map(|_| g.random::<f64>() * 5.0).collect();
        let em = em_step(&p, &y, &r, &x, &s).unwrap();
        let sub = admm_subproblem(&p, &y, &r, &s, &x, &t, 1e-6, 1).unwrap();
        let err: f64 = em.iter().zip(&sub).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = em.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err / norm <= 1e-3);
    }

    #[test]
    fn admm_runs_and_stays_nonnegative() {
        let grid = Grid::new(8, 8, 4.0).unwrap();
        let geom = ProjGeometry::covering(&grid, 10);
        let p: SparseMatrix<f64> = crate::tomo::build_system_matrix(&grid, &geom).unwrap();
        let mut g = rng::seeded(3);
        let y: Vec<f64> = (0..p.n_rows()).map(|_| g.random_range(0..20) as f64).collect();
        let r = vec![0.5; p.n_rows()];
        let desc = NetDescriptor { in_channels: 1, base_channels: 2, scales: 2, ..Default::default() };
        let mut net = UNet::<f64>::new(&desc, 8, 8, 1).unwrap();
        let z = Tensor::new([1, 8, 8], (0..64).map(|j| (j % 8) as f64 / 8.0).collect()).unwrap();
        let admm = AdmmOptions { train_subiters: 5, ..Default::default() };
        let out = run_dip_admm(&p, &y, &r, &mut net, &z, &RunOptions::iterations(3), &admm).unwrap();
        assert_eq!(out.trace.len(), 3);
        assert!(out.state.x.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!(admm_closed_form(&[1.0], &[1.0], &[1.0], 0.0).is_err());
    }
}
