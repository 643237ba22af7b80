//! Integrate-and-fire dynamics and the arctangent surrogate gradient.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::real::Real;
use super::tensor::Tensor;

/// Surrogate spike function `σ(x) = arctan(πx)/π + 1/2`.
pub fn surrogate(x: f64) -> f64 {
    (PI * x).atan() / PI + 0.5
}

/// `σ'(x) = 1 / (1 + π²x²)`, used in place of the Heaviside derivative.
pub fn surrogate_grad(x: f64) -> f64 {
    1.0 / (1.0 + PI * PI * x * x)
}

fn surrogate_r<F: Real>(x: F) -> F {
    let pi = F::from_f64_lossy(PI);
    (pi * x).atan() / pi + F::from_f64_lossy(0.5)
}

fn surrogate_grad_r<F: Real>(x: F) -> F {
    let pi = F::from_f64_lossy(PI);
    F::one() / (F::one() + pi * pi * x * x)
}

/// What happens to the membrane potential after a spike.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetMode {
    /// Subtract the threshold: `U = V - θ·S`.
    #[default]
    Soft,
    /// Zero the potential: `U = V·(1 - S)`.
    Hard,
}

/// Which presynaptic step drives the potential at step `t`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputTiming {
    /// `V_t = U_{t-1} + W·X_t`.
    #[default]
    SameStep,
    /// `V_t = U_{t-1} + W·X_{t-1}` with zero input at the first step.
    Delayed,
}

/// Spike nonlinearity used in the forward pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SpikeFn {
    /// Binary Heaviside spikes with surrogate gradients.
    #[default]
    Heaviside,
    /// Spikes replaced by `σ(V - θ)` in forward and backward, making the
    /// whole network smooth. Diagnostic only.
    Relaxed,
}

/// One IF update: `V = U_prev + input`, spike when `V >= θ`, then reset.
pub fn if_step(u_prev: f64, input: f64, threshold: f64, reset: ResetMode) -> (bool, f64) {
    let v = u_prev + input;
    let spike = v >= threshold;
    let u = match (reset, spike) {
        (_, false) => v,
        (ResetMode::Soft, true) => v - threshold,
        (ResetMode::Hard, true) => 0.0,
    };
    (spike, u)
}

#[derive(Debug, Clone, Copy)]
pub struct IfParams<F> {
    pub threshold: F,
    pub reset: ResetMode,
    pub timing: InputTiming,
    pub spike_fn: SpikeFn,
}

/// Runs an IF layer over all steps. `input` holds the synaptic currents
/// `W·X` in `[C, steps·batch, H, W]` layout. Returns the pre-reset
/// potentials `V` and the spikes. Potentials start at zero.
#[allow(clippy::needless_range_loop)]
pub fn if_forward<F: Real>(
    input: &Tensor<F>,
    steps: usize,
    p: &IfParams<F>,
) -> (Tensor<F>, Tensor<F>) {
    let batch = input.n / steps;
    let inner = batch * input.hw();
    let mut v = Tensor::zeros(input.c, input.n, input.h, input.w);
    let mut s = Tensor::zeros(input.c, input.n, input.h, input.w);
    let mut u = vec![F::zero(); inner];
    let theta = p.threshold;
    for c in 0..input.c {
        u.iter_mut().for_each(|x| *x = F::zero());
        for t in 0..steps {
            let off = (c * input.n + t * batch) * input.hw();
            let src = match p.timing {
                InputTiming::SameStep => Some(off),
                InputTiming::Delayed if t > 0 => Some(off - inner),
                InputTiming::Delayed => None,
            };
            for j in 0..inner {
                let x = src.map_or(F::zero(), |o| input.data[o + j]);
                let vv = u[j] + x;
                let sp = match p.spike_fn {
                    SpikeFn::Heaviside => {
                        if vv >= theta {
                            F::one()
                        } else {
                            F::zero()
                        }
                    }
                    SpikeFn::Relaxed => surrogate_r(vv - theta),
                };
                u[j] = match p.reset {
                    ResetMode::Soft => vv - theta * sp,
                    ResetMode::Hard => vv * (F::one() - sp),
                };
                v.data[off + j] = vv;
                s.data[off + j] = sp;
            }
        }
    }
    (v, s)
}

/// Backpropagates through [`if_forward`]. Every Heaviside site uses
/// `σ'(V - θ)`; gradients also flow through the membrane carry and through
/// the reset term.
#[allow(clippy::needless_range_loop)]
pub fn if_backward<F: Real>(
    v: &Tensor<F>,
    s: &Tensor<F>,
    grad_s: &Tensor<F>,
    steps: usize,
    p: &IfParams<F>,
) -> Tensor<F> {
    let batch = v.n / steps;
    let inner = batch * v.hw();
    let mut gi = Tensor::zeros(v.c, v.n, v.h, v.w);
    let mut du = vec![F::zero(); inner];
    let theta = p.threshold;
    for c in 0..v.c {
        du.iter_mut().for_each(|x| *x = F::zero());
        for t in (0..steps).rev() {
            let off = (c * v.n + t * batch) * v.hw();
            for j in 0..inner {
                let vv = v.data[off + j];
                let sg = surrogate_grad_r(vv - theta);
                let (ds, dv_carry) = match p.reset {
                    ResetMode::Soft => (grad_s.data[off + j] - theta * du[j], du[j]),
                    ResetMode::Hard => (
                        grad_s.data[off + j] - vv * du[j],
                        du[j] * (F::one() - s.data[off + j]),
                    ),
                };
                du[j] = ds * sg + dv_carry;
            }
            match p.timing {
                InputTiming::SameStep => gi.data[off..off + inner].copy_from_slice(&du),
                InputTiming::Delayed if t > 0 => gi.data[off - inner..off].copy_from_slice(&du),
                InputTiming::Delayed => {}
            }
        }
    }
    gi
}

pub fn relu_forward<F: Real>(input: &Tensor<F>) -> Tensor<F> {
    let mut out = input.clone();
    out.data.iter_mut().for_each(|x| *x = x.max(F::zero()));
    out
}

pub fn relu_backward<F: Real>(input: &Tensor<F>, grad_out: &Tensor<F>) -> Tensor<F> {
    let mut g = grad_out.clone();
    for (gv, &x) in g.data.iter_mut().zip(&input.data) {
        if x <= F::zero() {
            *gv = F::zero();
        }
    }
    g
}
