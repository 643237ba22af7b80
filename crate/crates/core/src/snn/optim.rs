//! SGD with momentum and the cosine learning-rate schedule.

use super::params::NetworkParams;
use super::real::Real;

/// `0.5·lr_max·(1 + cos(π·epoch/total))`, clamped at zero.
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr_max: f64) -> f64 {
    assert!(total_epochs >= 1, "total_epochs must be at least 1");
    let frac = epoch.min(total_epochs) as f64 / total_epochs as f64;
    (0.5 * lr_max * (1.0 + (std::f64::consts::PI * frac).cos())).max(0.0)
}

/// Heavy-ball SGD: `v ← μv + g + λw`, `w ← w − lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd<F> {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<F>>,
}

impl<F: Real> Sgd<F> {
    pub fn new(params: &NetworkParams<F>, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: params
                .tensors
                .iter()
                .map(|t| vec![F::zero(); t.data.len()])
                .collect(),
        }
    }

    pub fn step(&mut self, params: &mut NetworkParams<F>, grads: &NetworkParams<F>, lr: f64) {
        let (mu, wd, lr) = (
            F::from_f64_lossy(self.momentum),
            F::from_f64_lossy(self.weight_decay),
            F::from_f64_lossy(lr),
        );
        for ((p, g), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.velocity)
        {
            for ((w, &gv), vv) in p.data.iter_mut().zip(&g.data).zip(v.iter_mut()) {
                *vv = mu * *vv + gv + wd * *w;
                *w -= lr * *vv;
            }
        }
    }
}
