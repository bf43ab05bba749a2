use serde::{Deserialize, Serialize};

use super::{loss_mse, loss_q, AdamState, NetParams, Tensor, UNet};
use crate::error::{Error, Result};
use crate::scalar::{convert, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Maximize the weighted Poisson surrogate.
    Q,
    /// Minimize the squared error.
    Mse,
}

/// What the network output `beta = scale * net(z)` is fitted to.
#[derive(Debug, Clone, Copy)]
pub struct TrainTarget<'a> {
    pub kind: LossKind,
    pub target: &'a [f64],
    /// Pixel weights of the surrogate; ignored for MSE.
    pub weight: &'a [f64],
    pub scale: f64,
}

impl TrainTarget<'_> {
    /// Objective to maximize (`Q`, or `-MSE`) and its gradient in `beta`.
    pub fn objective(&self, beta: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self.kind {
            LossKind::Q => loss_q(self.target, beta, self.weight),
            LossKind::Mse => {
                let (v, mut g) = loss_mse(self.target, beta)?;
                g.iter_mut().for_each(|x| *x = -*x);
                Ok((-v, g))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    /// Objective at the starting parameters.
    pub initial: f64,
    /// Best objective among the trained iterates.
    pub best: f64,
    /// Adam step after which the best iterate was reached (1-based).
    pub best_step: usize,
    /// Objective after each step.
    pub trace: Vec<f64>,
    pub best_params: NetParams<T>,
    /// `beta` at the best iterate.
    pub best_output: Vec<f64>,
}

/// Runs `subiters` full-image Adam steps and leaves the network at the best
/// iterate among steps `1..=subiters`.
pub fn train_to_target<T: Real>(
    net: &mut UNet<T>,
    adam: &mut AdamState<T>,
    z: &Tensor<T>,
    target: &TrainTarget,
    subiters: usize,
) -> Result<TrainReport<T>> {
    if subiters == 0 {
        return Err(Error::InvalidParameter("training needs at least one subiteration".into()));
    }
    if !(target.scale > 0.0 && target.scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("output scale must be positive, got {}", target.scale)));
    }
    let scale = T::lit(target.scale);
    let mut initial = f64::NAN;
    let mut best: Option<(f64, usize, NetParams<T>, Vec<f64>)> = None;
    let mut trace = Vec::with_capacity(subiters);
    for k in 0..=subiters {
        let out = net.forward_train(z)?;
        let beta: Vec<f64> = out.iter().map(|&v| (v * scale).as_f64()).collect();
        let (value, grad) = target.objective(&beta)?;
        if !value.is_finite() {
            return Err(Error::NonFinite("training objective"));
        }
        if k == 0 {
            initial = value;
        } else {
            trace.push(value);
            if best.as_ref().is_none_or(|b| value > b.0) {
                best = Some((value, k, net.params().clone(), beta));
            }
        }
        if k < subiters {
            // descend on -objective; chain rule through the fixed scale
            let upstream: Vec<T> = convert::<f64, T>(&grad).into_iter().map(|g| -g * scale).collect();
            let grads = net.backward(&upstream)?;
            adam.step(net.params_mut(), &grads)?;
        }
    }
    let (best, best_step, best_params, best_output) = best.expect("at least one step");
    net.set_params(best_params.clone())?;
    Ok(TrainReport { initial, best, best_step, trace, best_params, best_output })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{AdamConfig, NetDescriptor};

    fn toy(n: usize) -> (Tensor<f64>, Vec<f64>) {
        let z: Vec<f64> = (0..n * n).map(|j| ((j % n) as f64 / n as f64) + 0.2).collect();
        let target: Vec<f64> = (0..n * n).map(|j| 0.5 + ((j / n) as f64 / n as f64)).collect();
        (Tensor::new([1, n, n], z).unwrap(), target)
    }

    #[test]
    fn single_step_and_zero_steps() {
        let (z, t) = toy(8);
        let mut net = UNet::<f64>::new(&NetDescriptor::bypass(1), 8, 8, 0).unwrap();
        let mut adam = AdamState::new(net.params(), AdamConfig::default());
        let target = TrainTarget { kind: LossKind::Mse, target: &t, weight: &[], scale: 1.0 };
        assert!(train_to_target(&mut net, &mut adam, &z, &target, 0).is_err());
        let r = train_to_target(&mut net, &mut adam, &z, &target, 1).unwrap();
        assert_eq!(adam.step, 1);
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.best_step, 1);
    }

    #[test]
    fn mse_fit_improves_on_reachable_target() {
        let (z, t) = toy(32);
        let mut net = UNet::<f64>::new(&NetDescriptor::bypass(1), 32, 32, 0).unwrap();
        let mut adam = AdamState::new(net.params(), AdamConfig::default());
        let target = TrainTarget { kind: LossKind::Mse, target: &t, weight: &[], scale: 1.0 };
        let r = train_to_target(&mut net, &mut adam, &z, &target, 150).unwrap();
        assert!(r.best > r.initial);
        let mut best_so_far = f64::NEG_INFINITY;
        for &v in &r.trace {
            best_so_far = best_so_far.max(v);
        }
        assert_eq!(best_so_far, r.best);
        let beta = net.forward(&z).unwrap();
        assert_eq!(beta, r.best_output);
    }

    #[test]
    fn q_fit_of_bypass_reaches_per_pixel_maximizer() {
        let n = 16;
        let z = Tensor::new([1, n, n], vec![1.0; n * n]).unwrap();
        let a: Vec<f64> = (0..n * n).map(|j| 0.8 + 0.4 * ((j * 7 % 11) as f64 / 10.0)).collect();
        let w: Vec<f64> = (0..n * n).map(|j| 1.0 + (j % 3) as f64).collect();
        let mut net = UNet::<f64>::new(&NetDescriptor::bypass(1), n, n, 0).unwrap();
        let mut adam = AdamState::new(net.params(), AdamConfig::default());
        let target = TrainTarget { kind: LossKind::Q, target: &a, weight: &w, scale: 1.0 };
        let r = train_to_target(&mut net, &mut adam, &z, &target, 500).unwrap();
        let err: f64 = r.best_output.iter().zip(&a).map(|(b, t)| (b - t).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = a.iter().map(|t| t * t).sum::<f64>().sqrt();
        assert!(err / norm <= 1e-2, "relative error {}", err / norm);
    }

    #[test]
    fn training_is_deterministic() {
        let (z, t) = toy(8);
        let desc = NetDescriptor { in_channels: 1, base_channels: 2, scales: 2, ..Default::default() };
        let run = || {
            let mut net = UNet::<f64>::new(&desc, 8, 8, 5).unwrap();
            let mut adam = AdamState::new(net.params(), AdamConfig::default());
            let target = TrainTarget { kind: LossKind::Mse, target: &t, weight: &[], scale: 1.0 };
            train_to_target(&mut net, &mut adam, &z, &target, 5).unwrap();
            net.params().clone()
        };
        assert_eq!(run(), run());
    }
}
