//! Mini-batch training and evaluation loops.

use serde::{Deserialize, Serialize};

use super::config::Plan;
use super::loss::{argmax, softmax_cross_entropy};
use super::network::{backward, forward};
use super::neuron::SpikeFn;
use super::optim::Sgd;
use super::params::NetworkParams;
use crate::events::SpikeTensor;
use crate::{Error, Result};

fn d_epochs() -> usize {
    50
}
fn d_batch() -> usize {
    16
}
fn d_lr() -> f64 {
    0.01
}
fn d_momentum() -> f64 {
    0.9
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    /// Peak learning rate of the cosine schedule.
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: d_epochs(),
            batch_size: d_batch(),
            lr: d_lr(),
            momentum: d_momentum(),
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config("lr must be a non-negative number".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
}

/// One pass over `order`, updating `params` after every mini-batch.
/// `fold` and `epoch` only label a divergence error.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    plan: &Plan,
    params: &mut NetworkParams<f32>,
    opt: &mut Sgd<f32>,
    samples: &[(SpikeTensor, usize)],
    order: &[usize],
    batch_size: usize,
    lr: f64,
    (fold, epoch): (usize, usize),
) -> Result<EpochStats> {
    let (mut loss_sum, mut correct) = (0.0, 0usize);
    for chunk in order.chunks(batch_size) {
        let inputs: Vec<&SpikeTensor> = chunk.iter().map(|&i| &samples[i].0).collect();
        let labels: Vec<usize> = chunk.iter().map(|&i| samples[i].1).collect();
        let trace = forward(plan, params, &inputs, SpikeFn::Heaviside)?;
        let (loss, grad) = softmax_cross_entropy(&trace.logits, plan.classes, &labels);
        if !loss.is_finite() {
            return Err(Error::Divergence {
                fold,
                epoch,
                detail: format!("non-finite loss {loss}"),
            });
        }
        for (b, &l) in labels.iter().enumerate() {
            correct += usize::from(argmax(trace.logit_row(b)) == l);
        }
        loss_sum += loss * chunk.len() as f64;
        let grads = backward(plan, params, &trace, &grad);
        opt.step(params, &grads, lr);
        if !params.is_finite() {
            return Err(Error::Divergence {
                fold,
                epoch,
                detail: "non-finite parameter after optimizer step".into(),
            });
        }
    }
    let n = order.len().max(1) as f64;
    Ok(EpochStats {
        loss: loss_sum / n,
        accuracy: correct as f64 / n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
    pub predictions: Vec<usize>,
}

/// Top-1 accuracy and mean loss in inference (Heaviside) mode.
pub fn evaluate(
    plan: &Plan,
    params: &NetworkParams<f32>,
    samples: &[(SpikeTensor, usize)],
    batch_size: usize,
) -> Result<Evaluation> {
    let mut predictions = Vec::with_capacity(samples.len());
    let mut loss_sum = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let inputs: Vec<&SpikeTensor> = chunk.iter().map(|s| &s.0).collect();
        let labels: Vec<usize> = chunk.iter().map(|s| s.1).collect();
        let trace = forward(plan, params, &inputs, SpikeFn::Heaviside)?;
        let (loss, _) = softmax_cross_entropy(&trace.logits, plan.classes, &labels);
        loss_sum += loss * chunk.len() as f64;
        predictions.extend((0..chunk.len()).map(|b| argmax(trace.logit_row(b))));
    }
    let correct = predictions
        .iter()
        .zip(samples)
        .filter(|(p, s)| **p == s.1)
        .count();
    let n = samples.len().max(1) as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        loss: loss_sum / n,
        predictions,
    })
}
