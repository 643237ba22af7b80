//! Spike-rate / operation-count energy estimate for 45 nm CMOS.
//!
//! Every synaptic layer of the spiking network is charged
//! `FLOPs_ANN(l) · Rs(l)` accumulate operations, where `Rs` is the spike
//! rate of the layer's input (or, selectably, its output). The dense
//! reference network is charged one multiply-accumulate per FLOP.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::snn::{ForwardTrace, Plan, Real, SynapseRole, SynapseShape, SynapticLayer};
use crate::{Error, Result};

/// Energy per operation in picojoules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConstants {
    pub e_mult: f64,
    pub e_add: f64,
    pub e_mac: f64,
    pub e_ac: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        EnergyConstants::CMOS_45NM
    }
}

impl EnergyConstants {
    pub const CMOS_45NM: EnergyConstants = EnergyConstants {
        e_mult: 3.7,
        e_add: 0.9,
        e_mac: 4.6,
        e_ac: 0.9,
    };

    /// A MAC must cost exactly one multiplication plus one addition.
    pub fn check(&self) -> Result<()> {
        let all = [self.e_mult, self.e_add, self.e_mac, self.e_ac];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(
                "energy constants must be non-negative".into(),
            ));
        }
        if (self.e_mac - (self.e_mult + self.e_add)).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "E_MAC {} != E_MULT {} + E_ADD {}",
                self.e_mac, self.e_mult, self.e_add
            )));
        }
        Ok(())
    }

    pub fn table(&self) -> String {
        format!(
            "Operation  Energy (pJ)\nMULT       {}\nADD        {}\nMAC        {}\nAC         {}\n",
            self.e_mult, self.e_add, self.e_mac, self.e_ac
        )
    }
}

/// `Rs = spikes / neurons`; exceeds 1 when neurons fire on several steps.
pub fn spike_rate(spikes: f64, neurons: usize) -> Result<f64> {
    if neurons == 0 {
        return Err(Error::InvalidArgument(
            "spike rate of a layer with zero neurons".into(),
        ));
    }
    if !(spikes.is_finite() && spikes >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "invalid spike count {spikes}"
        )));
    }
    Ok(spikes / neurons as f64)
}

/// `k²·O_h·O_w·C_in·C_out` for convolutions, `C_in·C_out` for linear layers.
pub fn flops_ann(shape: &SynapseShape) -> u64 {
    match *shape {
        SynapseShape::Conv {
            kernel,
            out_h,
            out_w,
            c_in,
            c_out,
        } => (kernel * kernel * out_h * out_w * c_in * c_out) as u64,
        SynapseShape::Linear { c_in, c_out } => (c_in * c_out) as u64,
    }
}

pub fn flops_snn(flops_ann: u64, rate: f64) -> f64 {
    flops_ann as f64 * rate
}

/// Which spike tensor supplies a layer's `Rs`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Charging {
    /// Spikes arriving at the layer trigger its accumulations.
    #[default]
    Input,
    /// Spikes of the IF layer the synapses feed.
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Ac,
    Mac,
}

/// Where a layer's rate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    Input,
    Output,
    /// Output charging requested but the layer feeds no IF layer.
    InputFallback,
    /// Charged as one dense pass; the rate is informational.
    Dense,
}

/// One spiking-network layer with its measured or assumed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RatedLayer {
    pub layer: SynapticLayer,
    pub rate: f64,
    pub source: RateSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEnergy {
    pub name: String,
    pub shape: SynapseShape,
    pub flops_ann: u64,
    pub rate: f64,
    pub rate_source: RateSource,
    pub flops_snn: f64,
    pub operation: Operation,
    pub energy_pj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayerEnergy {
    pub name: String,
    pub shape: SynapseShape,
    pub flops: u64,
    pub energy_pj: f64,
}

/// Reported efficiency band of the full-scale network.
pub const REFERENCE_RATIO_BAND: (f64, f64) = (47.42, 65.39);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub constants: EnergyConstants,
    pub charging: Charging,
    pub samples: usize,
    pub layers: Vec<LayerEnergy>,
    pub dense_layers: Vec<DenseLayerEnergy>,
    pub e_ann_pj: f64,
    pub e_snn_pj: f64,
    pub e_ann_mj: f64,
    pub e_snn_mj: f64,
    /// `E_ANN / E_SNN`; `None` when `E_SNN = 0`.
    pub ratio: Option<f64>,
    pub ratio_infinite: bool,
    pub notes: Vec<String>,
}

const PJ_PER_MJ: f64 = 1e9;

/// Energy of a spiking layer: accumulate-only layers pay `FLOPs·Rs·E_AC`,
/// MAC-charged layers pay `FLOPs·E_MAC` regardless of the rate.
pub fn layer_energy(l: &RatedLayer, c: &EnergyConstants) -> LayerEnergy {
    let fa = flops_ann(&l.layer.shape);
    let (operation, flops, e) = if l.source == RateSource::Dense {
        (Operation::Mac, fa as f64, c.e_mac)
    } else {
        (Operation::Ac, flops_snn(fa, l.rate), c.e_ac)
    };
    LayerEnergy {
        name: l.layer.name.clone(),
        shape: l.layer.shape,
        flops_ann: fa,
        rate: l.rate,
        rate_source: l.source,
        flops_snn: flops,
        operation,
        energy_pj: flops * e,
    }
}

/// Builds the report from already-rated spiking layers and the dense
/// network's layers. Totals are plain sums of the per-layer entries.
pub fn assemble(
    rated: &[RatedLayer],
    dense: &[SynapticLayer],
    constants: EnergyConstants,
    charging: Charging,
    samples: usize,
) -> Result<EnergyReport> {
    constants.check()?;
    if samples == 0 {
        return Err(Error::InvalidArgument(
            "energy estimate over an empty sample set".into(),
        ));
    }
    let layers: Vec<LayerEnergy> = rated.iter().map(|l| layer_energy(l, &constants)).collect();
    let dense_layers: Vec<DenseLayerEnergy> = dense
        .iter()
        .map(|l| {
            let flops = flops_ann(&l.shape);
            DenseLayerEnergy {
                name: l.name.clone(),
                shape: l.shape,
                flops,
                energy_pj: flops as f64 * constants.e_mac,
            }
        })
        .collect();
    let e_snn_pj: f64 = layers.iter().map(|l| l.energy_pj).sum();
    let e_ann_pj: f64 = dense_layers.iter().map(|l| l.energy_pj).sum();
    let ratio = (e_snn_pj > 0.0).then(|| e_ann_pj / e_snn_pj);
    let mut notes = Vec::new();
    if ratio.is_none() {
        notes.push(
            "no spikes reached any accumulate-charged layer: E_SNN = 0, ratio infinite".into(),
        );
    }
    if rated.iter().any(|l| l.source == RateSource::Dense) {
        notes.push(
            "classifier on real-valued accumulated features charged as one dense MAC pass".into(),
        );
    }
    if rated.iter().any(|l| l.source == RateSource::InputFallback) {
        notes.push("layers feeding no IF layer fall back to input-rate charging".into());
    }
    let non_square = rated
        .iter()
        .map(|l| &l.layer)
        .chain(dense)
        .any(|l| matches!(l.shape, SynapseShape::Conv { out_h, out_w, .. } if out_h != out_w));
    if non_square {
        notes.push("non-square feature maps counted as k²·O_h·O_w·C_in·C_out".into());
    }
    Ok(EnergyReport {
        constants,
        charging,
        samples,
        layers,
        dense_layers,
        e_ann_mj: e_ann_pj / PJ_PER_MJ,
        e_snn_mj: e_snn_pj / PJ_PER_MJ,
        e_ann_pj,
        e_snn_pj,
        ratio,
        ratio_infinite: ratio.is_none(),
        notes,
    })
}

/// Mean per-sample energy of the spiking network over `traces`, against the
/// trace-independent cost of the dense network `dense_plan`.
pub fn estimate<F: Real>(
    plan: &Plan,
    dense_plan: &Plan,
    traces: &[ForwardTrace<F>],
    charging: Charging,
    constants: EnergyConstants,
) -> Result<EnergyReport> {
    let samples: usize = traces.iter().map(|t| t.batch).sum();
    if samples == 0 {
        return Err(Error::InvalidArgument(
            "energy estimate over an empty sample set".into(),
        ));
    }
    let layers = plan.synaptic_layers();
    let mut rated = Vec::with_capacity(layers.len());
    for (i, layer) in layers.into_iter().enumerate() {
        // the classifier reads real-valued features and is charged as one
        // dense pass; its input carries no spike rate
        if layer.role == SynapseRole::Classifier {
            rated.push(RatedLayer {
                layer,
                rate: 1.0,
                source: RateSource::Dense,
            });
            continue;
        }
        let mut sum = 0.0;
        let mut source = RateSource::Input;
        for tr in traces {
            let act = tr
                .synapses
                .get(i)
                .ok_or_else(|| Error::Shape("trace does not match the plan".into()))?;
            if act.layer != layer {
                return Err(Error::Shape(format!(
                    "trace layer `{}` is not `{}`",
                    act.layer.name, layer.name
                )));
            }
            let (per_sample, neurons) = match (charging, &act.output_per_sample) {
                (Charging::Output, Some(out)) => {
                    source = RateSource::Output;
                    (out, act.output_neurons)
                }
                (Charging::Output, None) => {
                    source = RateSource::InputFallback;
                    (&act.input_per_sample, act.input_neurons)
                }
                (Charging::Input, _) => (&act.input_per_sample, act.input_neurons),
            };
            for &s in per_sample {
                sum += spike_rate(s, neurons)?;
            }
        }
        rated.push(RatedLayer {
            layer,
            rate: sum / samples as f64,
            source,
        });
    }
    assemble(
        &rated,
        &dense_plan.synaptic_layers(),
        constants,
        charging,
        samples,
    )
}

impl EnergyReport {
    /// Where the measured ratio sits relative to [`REFERENCE_RATIO_BAND`].
    pub fn band_position(&self) -> &'static str {
        let (lo, hi) = REFERENCE_RATIO_BAND;
        match self.ratio {
            None => "above (infinite)",
            Some(r) if r < lo => "below",
            Some(r) if r > hi => "above",
            Some(_) => "within",
        }
    }

    /// Aligned plain-text rendering: constants, per-layer table, totals.
    pub fn to_text(&self) -> String {
        let mut s = self.constants.table();
        let charging = match self.charging {
            Charging::Input => "input spike rate",
            Charging::Output => "output spike rate",
        };
        let _ = writeln!(
            s,
            "\ncharging: {charging}; samples averaged: {}",
            self.samples
        );
        let _ = writeln!(
            s,
            "\n{:<16} {:>14} {:>9} {:>16} {:>4} {:>16}",
            "layer", "FLOPs_ANN", "Rs", "FLOPs_SNN", "op", "E_SNN (pJ)"
        );
        for l in &self.layers {
            let _ = writeln!(
                s,
                "{:<16} {:>14} {:>9.4} {:>16.1} {:>4} {:>16.1}",
                l.name,
                l.flops_ann,
                l.rate,
                l.flops_snn,
                match l.operation {
                    Operation::Ac => "AC",
                    Operation::Mac => "MAC",
                },
                l.energy_pj
            );
        }
        let _ = writeln!(
            s,
            "\n{:<16} {:>14} {:>16}",
            "dense layer", "FLOPs", "E_ANN (pJ)"
        );
        for l in &self.dense_layers {
            let _ = writeln!(s, "{:<16} {:>14} {:>16.1}", l.name, l.flops, l.energy_pj);
        }
        let ratio = match self.ratio {
            Some(r) => format!("{r:.2}x"),
            None => "inf".into(),
        };
        let _ = writeln!(
            s,
            "\n{:>14} {:>14} {:>10}\n{:>14.6} {:>14.6} {:>10}",
            "E_ANN (mJ)", "E_SNN (mJ)", "ratio", self.e_ann_mj, self.e_snn_mj, ratio
        );
        let (lo, hi) = REFERENCE_RATIO_BAND;
        let _ = writeln!(
            s,
            "ratio is {} the {lo}x-{hi}x band reported at full scale (informational)",
            self.band_position()
        );
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}
