use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{ForwardModel, IterRecord, ReconOutput, ReconState, RunOptions};
use crate::error::{Error, Result};
use crate::neural::{loss_q, train_to_target, AdamConfig, AdamState, LossKind, NetParams, Tensor, TrainTarget, UNet};
use crate::scalar::Real;
use crate::tomo::SparseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeuralKemOptions {
    /// Adam steps per outer iteration.
    pub subiters: usize,
    /// Guard retries, each doubling the step budget.
    pub max_retries: usize,
    /// Learning rate multiplier of each retry. Retries restart from the
    /// current parameters; the rate of the last attempt carries over to later
    /// iterations. `1.0` keeps the rate fixed.
    pub retry_lr_factor: f64,
    /// Start each outer iteration with fresh Adam moments.
    pub reset_adam: bool,
    /// Relative slack of the guard's acceptance test.
    pub q_slack: f64,
    /// Fixed multiplier on the network output. When absent it is set to the
    /// mean of the first KEM update over the support.
    pub output_scale: Option<f64>,
    pub adam: AdamConfig,
}

impl Default for NeuralKemOptions {
    fn default() -> Self {
        NeuralKemOptions {
            subiters: 150,
            max_retries: 3,
            retry_lr_factor: 0.5,
            reset_adam: true,
            q_slack: 1e-9,
            output_scale: None,
            adam: AdamConfig::default(),
        }
    }
}

/// Surrogate `Q(beta) = sum_j w_j (alpha_hat_j log beta_j - beta_j)`.
pub fn surrogate_q(alpha_hat: &[f64], beta: &[f64], w: &[f64]) -> Result<f64> {
    Ok(loss_q(alpha_hat, beta, w)?.0)
}

pub(crate) fn support_mean(v: &[f64], w: &[f64]) -> f64 {
    let (sum, n) = v.iter().zip(w).filter(|(_, &wj)| wj > 0.0).fold((0.0, 0usize), |(s, n), (&x, _)| (s + x, n + 1));
    if n > 0 && sum > 0.0 {
        sum / n as f64
    } else {
        1.0
    }
}

fn network_image<T: Real>(net: &UNet<T>, z: &Tensor<T>, scale: f64) -> Result<Vec<f64>> {
    Ok(net.forward(z)?.iter().map(|&v| v.as_f64() * scale).collect())
}

/// Neural KEM: alternate one KEM update of the coefficients with fitting the
/// network to it under the surrogate, guarded so the likelihood never drops.
///
/// The network is updated in place and holds the final parameters.
pub fn run_neural_kem<T: Real>(
    model: &ForwardModel<f64>,
    y: &[f64],
    net: &mut UNet<T>,
    z: &Tensor<T>,
    opts: &RunOptions<f64>,
    nk: &NeuralKemOptions,
) -> Result<ReconOutput<f64>> {
    if opts.outer_iters == 0 {
        return Err(Error::InvalidParameter("outer_iters must be at least 1".into()));
    }
    let (h, w) = net.dims();
    if h * w != model.n_pixels() {
        return Err(Error::DimensionMismatch { what: "network output", expected: model.n_pixels(), got: h * w });
    }
    let weight = model.weight().to_vec();
    let mut alpha = model.initial_coefficients(opts.init.as_deref())?;
    if !(nk.retry_lr_factor > 0.0 && nk.retry_lr_factor <= 1.0) {
        return Err(Error::InvalidParameter(format!("retry_lr_factor must be in (0, 1], got {}", nk.retry_lr_factor)));
    }
    let mut adam = AdamState::new(net.params(), nk.adam);
    let mut lr = nk.adam.lr;
    let mut scale = nk.output_scale;
    let mut trace = Vec::with_capacity(opts.outer_iters);
    let mut snapshots = Vec::new();
    let mut loglik = model.log_likelihood(y, &alpha)?;

    for n in 1..=opts.outer_iters {
        let t0 = Instant::now();
        let alpha_hat = model.em_update(y, &alpha)?;
        let s = *scale.get_or_insert_with(|| support_mean(&alpha_hat, &weight));
        let q_before = surrogate_q(&alpha_hat, &alpha, &weight)?;
        let floor = q_before - nk.q_slack * q_before.abs();
        let target = TrainTarget { kind: LossKind::Q, target: &alpha_hat, weight: &weight, scale: s };

        if nk.reset_adam {
            adam = AdamState::new(net.params(), AdamConfig { lr, ..nk.adam });
        }
        let saved: (NetParams<T>, AdamState<T>) = (net.params().clone(), adam.clone());
        let report = train_to_target(net, &mut adam, z, &target, nk.subiters)?;
        let mut best = (report.best, report.best_params, report.best_output, adam.clone());
        let mut retries = 0;
        while best.0 < floor && retries < nk.max_retries {
            retries += 1;
            lr *= nk.retry_lr_factor;
            if nk.retry_lr_factor != 1.0 {
                net.set_params(saved.0.clone())?;
                adam = saved.1.clone();
            }
            adam.config.lr = lr;
            let report = train_to_target(net, &mut adam, z, &target, nk.subiters << retries)?;
            if report.best > best.0 {
                best = (report.best, report.best_params, report.best_output, adam.clone());
            }
        }
        let rejected = best.0 < floor;
        let q_after = best.0;
        if rejected {
            net.set_params(saved.0)?;
            adam = saved.1;
            // a repeat at the same rate would fail the same way
            lr *= nk.retry_lr_factor;
            adam.config.lr = lr;
            log::info!("neural KEM iteration {n}: surrogate did not increase, keeping previous parameters");
        } else {
            net.set_params(best.1)?;
            adam = best.3;
            adam.config.lr = lr;
            alpha = best.2;
            model.mask(&mut alpha);
            loglik = model.log_likelihood(y, &alpha)?;
        }
        if !loglik.is_finite() {
            return Err(Error::NonFinite("log-likelihood"));
        }
        trace.push(IterRecord {
            iter: n,
            loglik,
            q_before,
            q_after,
            guard_retries: retries,
            rejected,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        });
        if opts.wants_snapshot(n) {
            snapshots.push((n, model.image(&alpha)?));
        }
    }
    let x = model.image(&alpha)?;
    Ok(ReconOutput { state: ReconState { iter: opts.outer_iters, alpha, x, loglik }, trace, snapshots })
}

/// Deep image prior by optimization transfer: neural KEM with `K = I`.
pub fn run_dip_ot<T: Real>(
    p: &SparseMatrix<f64>,
    y: &[f64],
    r: &[f64],
    net: &mut UNet<T>,
    z: &Tensor<T>,
    opts: &RunOptions<f64>,
    nk: &NeuralKemOptions,
) -> Result<ReconOutput<f64>> {
    run_neural_kem(&ForwardModel::new(p, None, r)?, y, net, z, opts, nk)
}

/// Differences `Q(theta) - Q(theta_n)` and `L(theta) - L(theta_n)`, where the
/// surrogate is built at `alpha_n = beta(theta_n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateGaps {
    pub q_gap: f64,
    pub l_gap: f64,
}

/// Evaluates both objectives at the network state `net` (`theta_n`) and at
/// `theta`, for the output scale `scale`.
pub fn check_surrogate<T: Real>(
    model: &ForwardModel<f64>,
    y: &[f64],
    net: &UNet<T>,
    z: &Tensor<T>,
    scale: f64,
    theta: &NetParams<T>,
) -> Result<SurrogateGaps> {
    let mut alpha_n = network_image(net, z, scale)?;
    model.mask(&mut alpha_n);
    let alpha_hat = model.em_update(y, &alpha_n)?;
    let mut other = net.clone();
    other.set_params(theta.clone())?;
    let mut beta = network_image(&other, z, scale)?;
    model.mask(&mut beta);
    let w = model.weight();
    Ok(SurrogateGaps {
        q_gap: surrogate_q(&alpha_hat, &beta, w)? - surrogate_q(&alpha_hat, &alpha_n, w)?,
        l_gap: model.log_likelihood(y, &beta)? - model.log_likelihood(y, &alpha_n)?,
    })
}

/// `(Q, L)` along `theta_n + t * dir`, used for directional derivatives.
pub fn surrogate_along<T: Real>(
    model: &ForwardModel<f64>,
    y: &[f64],
    net: &UNet<T>,
    z: &Tensor<T>,
    scale: f64,
    dir: &NetParams<T>,
    t: f64,
) -> Result<(f64, f64)> {
    let mut alpha_n = network_image(net, z, scale)?;
    model.mask(&mut alpha_n);
    let alpha_hat = model.em_update(y, &alpha_n)?;
    let mut theta = net.params().clone();
    theta.axpy(T::lit(t), dir)?;
    let mut other = net.clone();
    other.set_params(theta)?;
    let mut beta = network_image(&other, z, scale)?;
    model.mask(&mut beta);
    Ok((surrogate_q(&alpha_hat, &beta, model.weight())?, model.log_likelihood(y, &beta)?))
}
