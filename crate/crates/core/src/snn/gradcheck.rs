//! Central-difference check of the BPTT gradients in relaxed spike mode.

use super::config::Plan;
use super::loss::softmax_cross_entropy;
use super::network::{backward, forward};
use super::neuron::SpikeFn;
use super::params::NetworkParams;
use crate::events::SpikeTensor;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// `max |analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    /// Parameter with the worst error.
    pub worst: String,
    pub checked: usize,
}

fn loss(
    plan: &Plan,
    params: &NetworkParams<f64>,
    inputs: &[&SpikeTensor],
    labels: &[usize],
) -> Result<f64> {
    let tr = forward(plan, params, inputs, SpikeFn::Relaxed)?;
    Ok(softmax_cross_entropy(&tr.logits, plan.classes, labels).0)
}

/// Compares every analytic gradient entry against `(L(w+h) − L(w−h)) / 2h`.
/// The spiking model runs in [`SpikeFn::Relaxed`] so the loss is smooth;
/// the dense model is smooth away from ReLU kinks.
pub fn check_gradients(
    plan: &Plan,
    params: &NetworkParams<f64>,
    inputs: &[&SpikeTensor],
    labels: &[usize],
    step: f64,
    floor: f64,
) -> Result<GradCheck> {
    let tr = forward(plan, params, inputs, SpikeFn::Relaxed)?;
    let (_, gl) = softmax_cross_entropy(&tr.logits, plan.classes, labels);
    let analytic = backward(plan, params, &tr, &gl);
    let mut probe = params.clone();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    for (ti, t) in params.tensors.iter().enumerate() {
        for i in 0..t.data.len() {
            let w = t.data[i];
            probe.tensors[ti].data[i] = w + step;
            let up = loss(plan, &probe, inputs, labels)?;
            probe.tensors[ti].data[i] = w - step;
            let down = loss(plan, &probe, inputs, labels)?;
            probe.tensors[ti].data[i] = w;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.tensors[ti].data[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if rel > out.max_rel_error {
                out.max_rel_error = rel;
                out.worst = format!("{}[{i}] analytic {a:e} numeric {numeric:e}", t.name);
            }
            out.checked += 1;
        }
    }
    Ok(out)
}
