//! Network architecture description and its shape-checked execution plan.

use serde::{Deserialize, Serialize};

use super::conv::ConvGeom;
use super::neuron::{InputTiming, ResetMode};
use crate::events::POLARITY_CHANNELS;
use crate::{Error, Result};

fn one() -> usize {
    1
}

fn three() -> usize {
    3
}

fn unit() -> f64 {
    1.0
}

fn default_gain() -> f64 {
    DEFAULT_INIT_GAIN
}

fn default_dense_gain() -> f64 {
    std::f64::consts::SQRT_2
}

/// Multiplier on the uniform bound `sqrt(3 / fan_in)` for spiking encoder
/// convolutions. Without normalization layers, binary sparse inputs need a
/// larger scale than ReLU networks for the first IF layers to fire at all.
pub const DEFAULT_INIT_GAIN: f64 = 2.5;

/// Element-wise function joining a SEW block's residual branch `r` with its
/// input `x`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SewFunction {
    /// `r + x`; junction values may reach 2.
    #[default]
    Add,
    /// `r · x`.
    And,
    /// `(1 - r) · x`.
    Iand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv2d {
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
        /// Checked against the incoming channel count when given.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        in_channels: Option<usize>,
    },
    IfActivation {
        /// Defaults to the network threshold.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
    },
    /// `conv → IF → conv → IF`, joined to the block input by `function`.
    /// Both convolutions keep the channel count and spatial size.
    SewBlock {
        #[serde(default)]
        function: SewFunction,
        #[serde(default = "three")]
        kernel: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
    },
    AvgPool {
        window: usize,
    },
    GlobalPool,
    /// Biasless `d × d` layer summed over time steps.
    Accumulator {
        dim: usize,
    },
    Classifier {
        classes: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputGeometry {
    pub time_bins: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input: InputGeometry,
    pub layers: Vec<LayerSpec>,
    #[serde(default = "unit")]
    pub threshold: f64,
    #[serde(default)]
    pub reset: ResetMode,
    #[serde(default)]
    pub input_timing: InputTiming,
    /// Encoder weight scale of the spiking model.
    #[serde(default = "default_gain")]
    pub init_gain: f64,
    /// Encoder weight scale of the dense model (Kaiming-uniform by default).
    #[serde(default = "default_dense_gain")]
    pub dense_init_gain: f64,
}

/// Spiking network, or the dense reference network built from the same
/// description (IF replaced by ReLU, time bins stacked as channels).
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Spiking,
    Dense,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Spiking => "spiking",
            ModelKind::Dense => "dense",
        }
    }
}

fn conv(out_channels: usize, kernel: usize, stride: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        out_channels,
        kernel,
        stride,
        padding: kernel / 2,
        in_channels: None,
    }
}

fn fire() -> LayerSpec {
    LayerSpec::IfActivation { threshold: None }
}

fn sew() -> LayerSpec {
    LayerSpec::SewBlock {
        function: SewFunction::Add,
        kernel: 3,
        threshold: None,
    }
}

impl NetworkConfig {
    fn with_layers(time_bins: usize, height: usize, width: usize, layers: Vec<LayerSpec>) -> Self {
        NetworkConfig {
            input: InputGeometry {
                time_bins,
                height,
                width,
            },
            layers,
            threshold: 1.0,
            reset: ResetMode::Soft,
            input_timing: InputTiming::SameStep,
            init_gain: DEFAULT_INIT_GAIN,
            dense_init_gain: default_dense_gain(),
        }
    }

    /// Desk-scale encoder: stem, three SEW blocks over 16/32/64 channels,
    /// global pooling and a binary 64-dim feature per step.
    pub fn sew_tiny(classes: usize, time_bins: usize, height: usize, width: usize) -> Self {
        Self::with_layers(
            time_bins,
            height,
            width,
            vec![
                conv(16, 3, 2),
                fire(),
                conv(16, 3, 2),
                fire(),
                sew(),
                conv(32, 3, 2),
                fire(),
                sew(),
                conv(64, 3, 2),
                fire(),
                sew(),
                LayerSpec::GlobalPool,
                fire(),
                LayerSpec::Accumulator { dim: 64 },
                LayerSpec::Classifier { classes },
            ],
        )
    }

    /// An 18-layer-style residual encoder with 512-dim features.
    pub fn sew18(classes: usize, time_bins: usize, height: usize, width: usize) -> Self {
        let mut layers = vec![
            conv(64, 7, 2),
            fire(),
            LayerSpec::AvgPool { window: 2 },
            sew(),
            sew(),
        ];
        for ch in [128, 256, 512] {
            layers.extend([conv(ch, 3, 2), fire(), sew()]);
        }
        layers.extend([
            LayerSpec::GlobalPool,
            fire(),
            LayerSpec::Accumulator { dim: 512 },
            LayerSpec::Classifier { classes },
        ]);
        Self::with_layers(time_bins, height, width, layers)
    }

    /// No encoder: the flattened input frame is the per-step feature, so
    /// `d = 2·H·W`.
    pub fn passthrough(classes: usize, time_bins: usize, height: usize, width: usize) -> Self {
        Self::with_layers(
            time_bins,
            height,
            width,
            vec![
                LayerSpec::Accumulator {
                    dim: POLARITY_CHANNELS * height * width,
                },
                LayerSpec::Classifier { classes },
            ],
        )
    }

    pub fn preset(
        name: &str,
        classes: usize,
        time_bins: usize,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        match name {
            "sew-tiny" | "sew_tiny" => Ok(Self::sew_tiny(classes, time_bins, height, width)),
            "sew18" => Ok(Self::sew18(classes, time_bins, height, width)),
            "passthrough" => Ok(Self::passthrough(classes, time_bins, height, width)),
            other => Err(Error::Config(format!(
                "unknown network preset `{other}` (expected sew-tiny, sew18 or passthrough)"
            ))),
        }
    }

    pub fn classes(&self) -> Option<usize> {
        match self.layers.last() {
            Some(LayerSpec::Classifier { classes }) => Some(*classes),
            _ => None,
        }
    }

    pub fn check(&self) -> Result<()> {
        Plan::new(self, ModelKind::Spiking)?;
        Plan::new(self, ModelKind::Dense).map(|_| ())
    }
}

/// A resolved encoder stage with concrete geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    Conv {
        name: String,
        geom: ConvGeom,
    },
    /// IF in the spiking model, ReLU in the dense one.
    Act {
        name: String,
        threshold: f64,
    },
    Sew {
        name: String,
        conv1: ConvGeom,
        conv2: ConvGeom,
        function: SewFunction,
        threshold: f64,
    },
    AvgPool {
        window: usize,
        h_in: usize,
        w_in: usize,
    },
    GlobalPool {
        h_in: usize,
        w_in: usize,
    },
}

/// Shape of a parameter tensor as created by [`Plan::param_specs`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// Inputs feeding one output unit; zero for biases.
    pub fan_in: usize,
    /// Multiplier on the uniform bound `sqrt(3 / fan_in)`.
    pub gain: f64,
}

/// Validated, shape-resolved form of a [`NetworkConfig`] for one model kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub kind: ModelKind,
    /// Time steps simulated: `T` for the spiking model, 1 for the dense one.
    pub steps: usize,
    pub time_bins: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub stages: Vec<Stage>,
    /// Flattened encoder output size per step.
    pub feature_len: usize,
    pub acc_dim: usize,
    pub classes: usize,
    pub reset: ResetMode,
    pub input_timing: InputTiming,
    /// Encoder weight scale for this model kind; head layers use 1.
    pub init_gain: f64,
}

impl Plan {
    /// Resolves and checks every layer shape before any compute happens.
    pub fn new(cfg: &NetworkConfig, kind: ModelKind) -> Result<Self> {
        let g = &cfg.input;
        if g.time_bins == 0 || g.height == 0 || g.width == 0 {
            return Err(Error::Config(format!(
                "input geometry must be positive, got T={} H={} W={}",
                g.time_bins, g.height, g.width
            )));
        }
        check_threshold(cfg.threshold, "network")?;
        for (g, what) in [
            (cfg.init_gain, "init_gain"),
            (cfg.dense_init_gain, "dense_init_gain"),
        ] {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::Config(format!("{what} must be positive")));
            }
        }
        let n = cfg.layers.len();
        if n < 2 {
            return Err(Error::Config(
                "a network needs an accumulator and a classifier".into(),
            ));
        }
        let (acc_dim, classes) = match (&cfg.layers[n - 2], &cfg.layers[n - 1]) {
            (LayerSpec::Accumulator { dim }, LayerSpec::Classifier { classes }) => (*dim, *classes),
            _ => {
                return Err(Error::Config(
                    "the last two layers must be an accumulator followed by a classifier".into(),
                ))
            }
        };
        if acc_dim == 0 || classes == 0 {
            return Err(Error::Config(
                "accumulator dim and class count must be positive".into(),
            ));
        }
        let (steps, in_channels) = match kind {
            ModelKind::Spiking => (g.time_bins, POLARITY_CHANNELS),
            ModelKind::Dense => (1, POLARITY_CHANNELS * g.time_bins),
        };
        let (mut c, mut h, mut w) = (in_channels, g.height, g.width);
        let mut stages = Vec::new();
        let (mut n_conv, mut n_act, mut n_sew) = (0, 0, 0);
        for (i, layer) in cfg.layers[..n - 2].iter().enumerate() {
            let at = |msg: String| Error::Config(format!("layer {i}: {msg}"));
            match layer {
                LayerSpec::Conv2d {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    in_channels: declared,
                } => {
                    // the dense model's first conv takes the stacked time bins
                    let expected = match (kind, stages.is_empty()) {
                        (ModelKind::Dense, true) => POLARITY_CHANNELS,
                        _ => c,
                    };
                    if let Some(d) = declared {
                        if *d != expected {
                            return Err(at(format!(
                                "declares {d} input channels but receives {expected}"
                            )));
                        }
                    }
                    if *out_channels == 0 {
                        return Err(at("out_channels must be positive".into()));
                    }
                    let geom = ConvGeom::new(c, *out_channels, *kernel, *stride, *padding, h, w)
                        .ok_or_else(|| {
                            at(format!(
                                "kernel {kernel}/stride {stride} does not fit a {h}x{w} map"
                            ))
                        })?;
                    stages.push(Stage::Conv {
                        name: format!("conv{n_conv}"),
                        geom,
                    });
                    n_conv += 1;
                    (c, h, w) = (geom.c_out, geom.h_out, geom.w_out);
                }
                LayerSpec::IfActivation { threshold } => {
                    let th = threshold.unwrap_or(cfg.threshold);
                    check_threshold(th, &format!("layer {i}"))?;
                    stages.push(Stage::Act {
                        name: format!("if{n_act}"),
                        threshold: th,
                    });
                    n_act += 1;
                }
                LayerSpec::SewBlock {
                    function,
                    kernel,
                    threshold,
                } => {
                    if kernel % 2 == 0 {
                        return Err(at("SEW kernels must be odd to preserve the map size".into()));
                    }
                    let th = threshold.unwrap_or(cfg.threshold);
                    check_threshold(th, &format!("layer {i}"))?;
                    let geom = ConvGeom::new(c, c, *kernel, 1, kernel / 2, h, w)
                        .ok_or_else(|| at(format!("kernel {kernel} does not fit a {h}x{w} map")))?;
                    stages.push(Stage::Sew {
                        name: format!("sew{n_sew}"),
                        conv1: geom,
                        conv2: geom,
                        function: *function,
                        threshold: th,
                    });
                    n_sew += 1;
                }
                LayerSpec::AvgPool { window } => {
                    if *window == 0 || *window > h || *window > w {
                        return Err(at(format!(
                            "pool window {window} does not fit a {h}x{w} map"
                        )));
                    }
                    stages.push(Stage::AvgPool {
                        window: *window,
                        h_in: h,
                        w_in: w,
                    });
                    (h, w) = (h / window, w / window);
                }
                LayerSpec::GlobalPool => {
                    stages.push(Stage::GlobalPool { h_in: h, w_in: w });
                    (h, w) = (1, 1);
                }
                LayerSpec::Accumulator { .. } | LayerSpec::Classifier { .. } => {
                    return Err(at(
                        "accumulator and classifier may only close the network".into()
                    ));
                }
            }
        }
        let feature_len = c * h * w;
        if kind == ModelKind::Spiking && feature_len != acc_dim {
            return Err(Error::Config(format!(
                "accumulator dim {acc_dim} does not match the encoder output size {feature_len} ({c}x{h}x{w})"
            )));
        }
        Ok(Plan {
            kind,
            steps,
            time_bins: g.time_bins,
            in_channels,
            height: g.height,
            width: g.width,
            stages,
            feature_len,
            acc_dim,
            classes,
            reset: cfg.reset,
            input_timing: cfg.input_timing,
            init_gain: match kind {
                ModelKind::Spiking => cfg.init_gain,
                ModelKind::Dense => cfg.dense_init_gain,
            },
        })
    }

    /// Every trainable tensor in canonical order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        let conv = |name: String, g: &ConvGeom, out: &mut Vec<ParamSpec>| {
            out.push(ParamSpec {
                name: format!("{name}.weight"),
                shape: vec![g.c_out, g.c_in, g.kernel, g.kernel],
                fan_in: g.patch_len(),
                gain: self.init_gain,
            });
            out.push(ParamSpec {
                name: format!("{name}.bias"),
                shape: vec![g.c_out],
                fan_in: 0,
                gain: 0.0,
            });
        };
        for st in &self.stages {
            match st {
                Stage::Conv { name, geom } => conv(name.clone(), geom, &mut out),
                Stage::Sew {
                    name, conv1, conv2, ..
                } => {
                    conv(format!("{name}.conv1"), conv1, &mut out);
                    conv(format!("{name}.conv2"), conv2, &mut out);
                }
                _ => {}
            }
        }
        out.push(ParamSpec {
            name: "accumulator.weight".into(),
            shape: vec![self.acc_dim, self.feature_len],
            fan_in: self.feature_len,
            gain: 1.0,
        });
        out.push(ParamSpec {
            name: "classifier.weight".into(),
            shape: vec![self.classes, self.acc_dim],
            fan_in: self.acc_dim,
            gain: 1.0,
        });
        out.push(ParamSpec {
            name: "classifier.bias".into(),
            shape: vec![self.classes],
            fan_in: 0,
            gain: 0.0,
        });
        out
    }
}

fn check_threshold(th: f64, what: &str) -> Result<()> {
    if th.is_finite() && th > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what}: threshold must be positive, got {th}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sew_tiny_shapes() {
        let cfg = NetworkConfig::sew_tiny(4, 6, 64, 64);
        let p = Plan::new(&cfg, ModelKind::Spiking).unwrap();
        assert_eq!(p.feature_len, 64);
        assert_eq!(p.steps, 6);
        let d = Plan::new(&cfg, ModelKind::Dense).unwrap();
        assert_eq!(d.in_channels, 12);
        assert_eq!(d.steps, 1);
        match &d.stages[0] {
            Stage::Conv { geom, .. } => assert_eq!(geom.c_in, 12),
            s => panic!("unexpected first stage {s:?}"),
        }
    }

    #[test]
    fn presets_validate() {
        NetworkConfig::sew18(7, 6, 128, 128).check().unwrap();
        NetworkConfig::passthrough(3, 6, 2, 2).check().unwrap();
        assert!(NetworkConfig::preset("resnet", 2, 6, 8, 8).is_err());
    }

    #[test]
    fn rejects_bad_compositions() {
        let mut cfg = NetworkConfig::sew_tiny(4, 6, 64, 64);
        cfg.layers.insert(13, LayerSpec::Accumulator { dim: 64 });
        assert!(cfg.check().is_err());

        let mut cfg = NetworkConfig::sew_tiny(4, 6, 64, 64);
        cfg.layers[13] = LayerSpec::Accumulator { dim: 32 };
        assert!(matches!(cfg.check(), Err(Error::Config(m)) if m.contains("does not match")));

        let mut cfg = NetworkConfig::sew_tiny(4, 6, 64, 64);
        cfg.threshold = 0.0;
        assert!(cfg.check().is_err());

        let mut cfg = NetworkConfig::sew_tiny(4, 6, 64, 64);
        cfg.layers[0] = LayerSpec::Conv2d {
            out_channels: 16,
            kernel: 3,
            stride: 2,
            padding: 1,
            in_channels: Some(3),
        };
        assert!(cfg.check().is_err());

        let mut cfg = NetworkConfig::sew_tiny(4, 6, 2, 2);
        cfg.layers[0] = LayerSpec::Conv2d {
            out_channels: 16,
            kernel: 5,
            stride: 1,
            padding: 0,
            in_channels: None,
        };
        assert!(cfg.check().is_err());
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let cfg = NetworkConfig::sew_tiny(4, 6, 64, 64);
        let s = serde_json::to_string(&cfg).unwrap();
        let back: NetworkConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(cfg, back);
        let bad = s.replacen("\"kernel\":3", "\"kernel\":3,\"dilation\":2", 1);
        assert!(serde_json::from_str::<NetworkConfig>(&bad).is_err());
    }
}
