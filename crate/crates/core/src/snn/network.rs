//! Batched forward pass, trace recording and BPTT backward pass.

use serde::{Deserialize, Serialize};

use super::config::{ModelKind, Plan, SewFunction, Stage};
use super::conv::{
    avg_pool_backward, avg_pool_forward, conv_backward, conv_forward, global_pool_backward,
    global_pool_forward, ConvGeom,
};
use super::neuron::{if_backward, if_forward, relu_backward, relu_forward, IfParams, SpikeFn};
use super::params::NetworkParams;
use super::real::{matmul, Layout, Real};
use super::tensor::Tensor;
use crate::events::{SpikeTensor, POLARITY_CHANNELS};
use crate::{Error, Result};

/// Geometry of a layer with synapses, as needed for operation counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynapseShape {
    Conv {
        kernel: usize,
        out_h: usize,
        out_w: usize,
        c_in: usize,
        c_out: usize,
    },
    Linear {
        c_in: usize,
        c_out: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynapseRole {
    Encoder,
    Accumulator,
    Classifier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynapticLayer {
    pub name: String,
    pub role: SynapseRole,
    pub shape: SynapseShape,
}

fn conv_shape(g: &ConvGeom) -> SynapseShape {
    SynapseShape::Conv {
        kernel: g.kernel,
        out_h: g.h_out,
        out_w: g.w_out,
        c_in: g.c_in,
        c_out: g.c_out,
    }
}

impl Plan {
    /// Conv and linear layers in execution order.
    pub fn synaptic_layers(&self) -> Vec<SynapticLayer> {
        let mut out = Vec::new();
        for st in &self.stages {
            match st {
                Stage::Conv { name, geom } => out.push(SynapticLayer {
                    name: name.clone(),
                    role: SynapseRole::Encoder,
                    shape: conv_shape(geom),
                }),
                Stage::Sew {
                    name, conv1, conv2, ..
                } => {
                    for (suffix, g) in [("conv1", conv1), ("conv2", conv2)] {
                        out.push(SynapticLayer {
                            name: format!("{name}.{suffix}"),
                            role: SynapseRole::Encoder,
                            shape: conv_shape(g),
                        });
                    }
                }
                _ => {}
            }
        }
        out.push(SynapticLayer {
            name: "accumulator".into(),
            role: SynapseRole::Accumulator,
            shape: SynapseShape::Linear {
                c_in: self.feature_len,
                c_out: self.acc_dim,
            },
        });
        out.push(SynapticLayer {
            name: "classifier".into(),
            role: SynapseRole::Classifier,
            shape: SynapseShape::Linear {
                c_in: self.acc_dim,
                c_out: self.classes,
            },
        });
        out
    }

    /// Packs voxelized samples into the network input tensor. The spiking
    /// model sees `[2, T·B, H, W]`; the dense model sees `[2T, B, H, W]`
    /// with channel `t·2 + polarity`.
    pub fn pack_input<F: Real>(&self, inputs: &[&SpikeTensor]) -> Result<Tensor<F>> {
        if inputs.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        let (t_bins, h, w) = (self.time_bins, self.height, self.width);
        for (i, x) in inputs.iter().enumerate() {
            if x.dims() != [t_bins, POLARITY_CHANNELS, h, w] {
                return Err(Error::Shape(format!(
                    "sample {i} has shape {:?}, network expects {:?}",
                    x.dims(),
                    [t_bins, POLARITY_CHANNELS, h, w]
                )));
            }
        }
        let b = inputs.len();
        let hw = h * w;
        let mut out = Tensor::zeros(self.in_channels, self.steps * b, h, w);
        for (bi, x) in inputs.iter().enumerate() {
            let raw = x.as_slice();
            for t in 0..t_bins {
                for ch in 0..POLARITY_CHANNELS {
                    let src = &raw[(t * POLARITY_CHANNELS + ch) * hw..][..hw];
                    let (c, n) = match self.kind {
                        ModelKind::Spiking => (ch, t * b + bi),
                        ModelKind::Dense => (t * POLARITY_CHANNELS + ch, bi),
                    };
                    let dst = &mut out.data[(c * out.n + n) * hw..][..hw];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = if s != 0 { F::one() } else { F::zero() };
                    }
                }
            }
        }
        Ok(out)
    }

    fn if_params<F: Real>(&self, threshold: f64, spike_fn: SpikeFn) -> IfParams<F> {
        IfParams {
            threshold: F::from_f64_lossy(threshold),
            reset: self.reset,
            timing: self.input_timing,
            spike_fn,
        }
    }
}

enum ActCache<F> {
    Spike { v: Tensor<F>, s: Tensor<F> },
    Relu { pre: Tensor<F>, out: Tensor<F> },
}

impl<F: Real> ActCache<F> {
    fn output(&self) -> &Tensor<F> {
        match self {
            ActCache::Spike { s, .. } => s,
            ActCache::Relu { out, .. } => out,
        }
    }
}

enum Cache<F> {
    Conv {
        input: Tensor<F>,
    },
    Act(ActCache<F>),
    Sew {
        input: Tensor<F>,
        a1: ActCache<F>,
        a2: ActCache<F>,
    },
    Pool,
}

/// Spikes emitted by one IF layer, summed over steps and space per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeCount {
    pub name: String,
    /// Neurons per time step (`C·H·W`).
    pub neurons: usize,
    pub per_sample: Vec<f64>,
}

/// Activity entering and leaving one synaptic layer, summed over steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynapseActivity {
    pub layer: SynapticLayer,
    pub input_neurons: usize,
    pub input_per_sample: Vec<f64>,
    /// Spikes of the IF layer directly fed by this layer, when there is one.
    pub output_neurons: usize,
    pub output_per_sample: Option<Vec<f64>>,
}

/// Everything the backward pass and the energy estimator need from a
/// forward pass over one batch.
pub struct ForwardTrace<F> {
    pub batch: usize,
    pub kind: ModelKind,
    pub spike_fn: SpikeFn,
    caches: Vec<Cache<F>>,
    encoder_out: Tensor<F>,
    /// `Σ_t F_t`, `[batch, feature_len]`.
    pub summed_features: Vec<F>,
    /// `𝓕`, `[batch, acc_dim]`.
    pub accumulated: Vec<F>,
    /// `[batch, classes]`.
    pub logits: Vec<F>,
    pub spikes: Vec<SpikeCount>,
    pub synapses: Vec<SynapseActivity>,
}

impl<F: Real> ForwardTrace<F> {
    pub fn logit_row(&self, b: usize) -> &[F] {
        let c = self.logits.len() / self.batch;
        &self.logits[b * c..(b + 1) * c]
    }

    /// Stored IF output tensors, in the order of [`Self::spikes`].
    pub fn spike_tensors(&self) -> Vec<&Tensor<F>> {
        let mut out = Vec::new();
        for c in &self.caches {
            match c {
                Cache::Act(a @ ActCache::Spike { .. }) => out.push(a.output()),
                Cache::Sew { a1, a2, .. } => {
                    for a in [a1, a2] {
                        if let ActCache::Spike { s, .. } = a {
                            out.push(s);
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Per-step encoder features `F_t` of sample `b`.
    pub fn step_features(&self, b: usize) -> Vec<Vec<F>> {
        let e = &self.encoder_out;
        let steps = e.n / self.batch;
        let hw = e.hw();
        (0..steps)
            .map(|t| {
                let n = t * self.batch + b;
                (0..e.c)
                    .flat_map(|c| e.data[(c * e.n + n) * hw..][..hw].iter().copied())
                    .collect()
            })
            .collect()
    }
}

fn act_forward<F: Real>(
    plan: &Plan,
    x: Tensor<F>,
    threshold: f64,
    spike_fn: SpikeFn,
) -> ActCache<F> {
    match plan.kind {
        ModelKind::Spiking => {
            let (v, s) = if_forward(&x, plan.steps, &plan.if_params(threshold, spike_fn));
            ActCache::Spike { v, s }
        }
        ModelKind::Dense => ActCache::Relu {
            out: relu_forward(&x),
            pre: x,
        },
    }
}

fn act_backward<F: Real>(
    plan: &Plan,
    cache: &ActCache<F>,
    grad: &Tensor<F>,
    threshold: f64,
    spike_fn: SpikeFn,
) -> Tensor<F> {
    match cache {
        ActCache::Spike { v, s } => {
            if_backward(v, s, grad, plan.steps, &plan.if_params(threshold, spike_fn))
        }
        ActCache::Relu { pre, .. } => relu_backward(pre, grad),
    }
}

fn record_spikes<F: Real>(out: &mut Vec<SpikeCount>, name: String, a: &ActCache<F>, batch: usize) {
    if let ActCache::Spike { s, .. } = a {
        out.push(SpikeCount {
            name,
            neurons: s.c * s.hw(),
            per_sample: s.sample_sums(batch),
        });
    }
}

fn activity<F: Real>(
    layer: SynapticLayer,
    input: &Tensor<F>,
    output: Option<&ActCache<F>>,
    batch: usize,
) -> SynapseActivity {
    let (output_neurons, output_per_sample) = match output {
        Some(ActCache::Spike { s, .. }) => (s.c * s.hw(), Some(s.sample_sums(batch))),
        _ => (0, None),
    };
    SynapseActivity {
        layer,
        input_neurons: input.c * input.hw(),
        input_per_sample: input.sample_sums(batch),
        output_neurons,
        output_per_sample,
    }
}

fn junction<F: Real>(f: SewFunction, r: &Tensor<F>, x: &Tensor<F>) -> Tensor<F> {
    let data = r
        .data
        .iter()
        .zip(&x.data)
        .map(|(&r, &x)| match f {
            SewFunction::Add => r + x,
            SewFunction::And => r * x,
            SewFunction::Iand => (F::one() - r) * x,
        })
        .collect();
    Tensor::from_vec(x.c, x.n, x.h, x.w, data)
}

/// Runs the network on a batch. Membrane potentials start at zero for every
/// sample; shapes are checked before any compute.
pub fn forward<F: Real>(
    plan: &Plan,
    params: &NetworkParams<F>,
    inputs: &[&SpikeTensor],
    spike_fn: SpikeFn,
) -> Result<ForwardTrace<F>> {
    params.check(plan)?;
    let x = plan.pack_input(inputs)?;
    Ok(forward_tensor(plan, params, x, inputs.len(), spike_fn))
}

/// [`forward`] on an already packed input tensor.
pub fn forward_tensor<F: Real>(
    plan: &Plan,
    params: &NetworkParams<F>,
    input: Tensor<F>,
    batch: usize,
    spike_fn: SpikeFn,
) -> ForwardTrace<F> {
    let layers = plan.synaptic_layers();
    let mut layer_it = layers.into_iter();
    let p = &params.tensors;
    let mut pi = 0;
    let mut caches = Vec::with_capacity(plan.stages.len());
    let mut spikes = Vec::new();
    let mut synapses = Vec::new();
    let mut x = input;
    let mut pending: Option<(SynapticLayer, Tensor<F>)> = None;
    for (si, st) in plan.stages.iter().enumerate() {
        match st {
            Stage::Conv { geom, .. } => {
                let y = conv_forward(&x, &p[pi].data, &p[pi + 1].data, geom);
                pi += 2;
                let layer = layer_it.next().expect("synaptic layer");
                // the activity record waits for the IF layer this conv feeds
                if let Some((l, inp)) = pending.take() {
                    synapses.push(activity(l, &inp, None, batch));
                }
                let input = std::mem::replace(&mut x, y);
                pending = Some((layer, input.clone()));
                caches.push(Cache::Conv { input });
            }
            Stage::Act { name, threshold } => {
                let a = act_forward(
                    plan,
                    std::mem::replace(&mut x, Tensor::zeros(0, 0, 0, 0)),
                    *threshold,
                    spike_fn,
                );
                if let Some((l, inp)) = pending.take() {
                    synapses.push(activity(l, &inp, Some(&a), batch));
                }
                record_spikes(&mut spikes, name.clone(), &a, batch);
                x = a.output().clone();
                caches.push(Cache::Act(a));
            }
            Stage::Sew {
                name,
                conv1,
                conv2,
                function,
                threshold,
            } => {
                if let Some((l, inp)) = pending.take() {
                    synapses.push(activity(l, &inp, None, batch));
                }
                let y1 = conv_forward(&x, &p[pi].data, &p[pi + 1].data, conv1);
                let a1 = act_forward(plan, y1, *threshold, spike_fn);
                let y2 = conv_forward(a1.output(), &p[pi + 2].data, &p[pi + 3].data, conv2);
                let a2 = act_forward(plan, y2, *threshold, spike_fn);
                pi += 4;
                synapses.push(activity(
                    layer_it.next().expect("sew conv1"),
                    &x,
                    Some(&a1),
                    batch,
                ));
                synapses.push(activity(
                    layer_it.next().expect("sew conv2"),
                    a1.output(),
                    Some(&a2),
                    batch,
                ));
                record_spikes(&mut spikes, format!("{name}.if1"), &a1, batch);
                record_spikes(&mut spikes, format!("{name}.if2"), &a2, batch);
                let out = junction(*function, a2.output(), &x);
                let input = std::mem::replace(&mut x, out);
                caches.push(Cache::Sew { input, a1, a2 });
            }
            Stage::AvgPool { window, .. } => {
                x = avg_pool_forward(&x, *window);
                caches.push(Cache::Pool);
            }
            Stage::GlobalPool { .. } => {
                x = global_pool_forward(&x);
                caches.push(Cache::Pool);
            }
        }
        debug_assert_eq!(caches.len(), si + 1);
    }
    if let Some((l, inp)) = pending.take() {
        synapses.push(activity(l, &inp, None, batch));
    }

    // head: S = Σ_t F_t, 𝓕 = W_acc S, logits = W_cls 𝓕 + b
    let (fl, d, classes) = (plan.feature_len, plan.acc_dim, plan.classes);
    let hw = x.hw();
    let mut summed = vec![F::zero(); batch * fl];
    for c in 0..x.c {
        for n in 0..x.n {
            let b = n % batch;
            let src = &x.data[(c * x.n + n) * hw..][..hw];
            let dst = &mut summed[b * fl + c * hw..][..hw];
            for (dv, &sv) in dst.iter_mut().zip(src) {
                *dv += sv;
            }
        }
    }
    let w_acc = &p[pi].data;
    let (w_cls, b_cls) = (&p[pi + 1].data, &p[pi + 2].data);
    let mut accumulated = vec![F::zero(); batch * d];
    matmul(
        batch,
        fl,
        d,
        &summed,
        Layout::Normal,
        w_acc,
        Layout::Transposed,
        &mut accumulated,
        false,
    );
    let mut logits = vec![F::zero(); batch * classes];
    matmul(
        batch,
        d,
        classes,
        &accumulated,
        Layout::Normal,
        w_cls,
        Layout::Transposed,
        &mut logits,
        false,
    );
    for row in logits.chunks_mut(classes) {
        for (v, &b) in row.iter_mut().zip(b_cls) {
            *v += b;
        }
    }
    let feat_neurons = fl;
    let steps_sum: Vec<f64> = summed
        .chunks(fl)
        .map(|r| r.iter().map(|v| v.as_f64()).sum())
        .collect();
    synapses.push(SynapseActivity {
        layer: layer_it.next().expect("accumulator"),
        input_neurons: feat_neurons,
        input_per_sample: steps_sum,
        output_neurons: 0,
        output_per_sample: None,
    });
    let acc_sum: Vec<f64> = accumulated
        .chunks(d)
        .map(|r| r.iter().map(|v| v.as_f64()).sum())
        .collect();
    synapses.push(SynapseActivity {
        layer: layer_it.next().expect("classifier"),
        input_neurons: d,
        input_per_sample: acc_sum,
        output_neurons: 0,
        output_per_sample: None,
    });

    ForwardTrace {
        batch,
        kind: plan.kind,
        spike_fn,
        caches,
        encoder_out: x,
        summed_features: summed,
        accumulated,
        logits,
        spikes,
        synapses,
    }
}

fn wb_mut<F>(g: &mut NetworkParams<F>, i: usize) -> (&mut [F], &mut [F]) {
    let (a, b) = g.tensors.split_at_mut(i + 1);
    (&mut a[i].data, &mut b[0].data)
}

/// Gradients of all parameters given `∂L/∂logits` (`[batch, classes]`).
/// Shares the parameter layout of `params`.
pub fn backward<F: Real>(
    plan: &Plan,
    params: &NetworkParams<F>,
    trace: &ForwardTrace<F>,
    grad_logits: &[F],
) -> NetworkParams<F> {
    let batch = trace.batch;
    let (fl, d, classes) = (plan.feature_len, plan.acc_dim, plan.classes);
    assert_eq!(grad_logits.len(), batch * classes, "logit gradient shape");
    let mut grads = NetworkParams::zeros(plan);
    let n_params = params.tensors.len();
    let (ia, ic) = (n_params - 3, n_params - 2);
    let p = &params.tensors;

    // classifier
    matmul(
        classes,
        batch,
        d,
        grad_logits,
        Layout::Transposed,
        &trace.accumulated,
        Layout::Normal,
        &mut grads.tensors[ic].data,
        false,
    );
    for row in grad_logits.chunks(classes) {
        for (g, &v) in grads.tensors[ic + 1].data.iter_mut().zip(row) {
            *g += v;
        }
    }
    let mut d_acc = vec![F::zero(); batch * d];
    matmul(
        batch,
        classes,
        d,
        grad_logits,
        Layout::Normal,
        &p[ic].data,
        Layout::Normal,
        &mut d_acc,
        false,
    );
    // accumulator
    matmul(
        d,
        batch,
        fl,
        &d_acc,
        Layout::Transposed,
        &trace.summed_features,
        Layout::Normal,
        &mut grads.tensors[ia].data,
        false,
    );
    let mut d_sum = vec![F::zero(); batch * fl];
    matmul(
        batch,
        d,
        fl,
        &d_acc,
        Layout::Normal,
        &p[ia].data,
        Layout::Normal,
        &mut d_sum,
        false,
    );

    // every step's feature receives the gradient of the time sum
    let e = &trace.encoder_out;
    let hw = e.hw();
    let mut g = Tensor::zeros(e.c, e.n, e.h, e.w);
    for c in 0..e.c {
        for n in 0..e.n {
            let b = n % batch;
            g.data[(c * e.n + n) * hw..][..hw].copy_from_slice(&d_sum[b * fl + c * hw..][..hw]);
        }
    }

    let mut pi = ia;
    for (si, st) in plan.stages.iter().enumerate().rev() {
        let cache = &trace.caches[si];
        g = match (st, cache) {
            (Stage::Conv { geom, .. }, Cache::Conv { input }) => {
                pi -= 2;
                let (gw, gb) = wb_mut(&mut grads, pi);
                match conv_backward(input, &g, &p[pi].data, geom, gw, gb, si > 0) {
                    Some(dx) => dx,
                    None => break,
                }
            }
            (Stage::Act { threshold, .. }, Cache::Act(a)) => {
                act_backward(plan, a, &g, *threshold, trace.spike_fn)
            }
            (
                Stage::Sew {
                    conv1,
                    conv2,
                    function,
                    threshold,
                    ..
                },
                Cache::Sew { input, a1, a2 },
            ) => {
                pi -= 4;
                let r = a2.output();
                let mut dr = Tensor::zeros(g.c, g.n, g.h, g.w);
                let mut dx = Tensor::zeros(g.c, g.n, g.h, g.w);
                for i in 0..g.data.len() {
                    let (gv, rv, xv) = (g.data[i], r.data[i], input.data[i]);
                    (dr.data[i], dx.data[i]) = match function {
                        SewFunction::Add => (gv, gv),
                        SewFunction::And => (gv * xv, gv * rv),
                        SewFunction::Iand => (-gv * xv, gv * (F::one() - rv)),
                    };
                }
                let dy2 = act_backward(plan, a2, &dr, *threshold, trace.spike_fn);
                let (gw, gb) = wb_mut(&mut grads, pi + 2);
                let da1 = conv_backward(a1.output(), &dy2, &p[pi + 2].data, conv2, gw, gb, true)
                    .expect("input gradient requested");
                let dy1 = act_backward(plan, a1, &da1, *threshold, trace.spike_fn);
                let (gw, gb) = wb_mut(&mut grads, pi);
                let dxc = conv_backward(input, &dy1, &p[pi].data, conv1, gw, gb, true)
                    .expect("input gradient requested");
                for (a, b) in dx.data.iter_mut().zip(&dxc.data) {
                    *a += *b;
                }
                dx
            }
            (Stage::AvgPool { window, h_in, w_in }, Cache::Pool) => {
                avg_pool_backward(&g, *window, *h_in, *w_in)
            }
            (Stage::GlobalPool { h_in, w_in }, Cache::Pool) => {
                global_pool_backward(&g, *h_in, *w_in)
            }
            _ => unreachable!("trace does not match plan"),
        };
    }
    grads
}
