//! Event data augmentations and the seeded pipeline that composes them.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::events::EventStream;
use crate::rng;
use crate::{Error, Result};

mod transforms;

pub use transforms::{
    apply_drop, crop, crop_to, draw_crop_window, draw_drop_strategy, eventdrop, hflip, mirror,
    mirror_side, noise_ba, polflip, reverse, reverse_with_polarity, DropParams, DropStrategy, Side,
    Window, MIN_DROP_RATIO,
};

pub const DEFAULT_PROBABILITY: f64 = 0.5;
pub const DEFAULT_CROP_MIN_SCALE: f64 = 0.6;
pub const DEFAULT_NOISE_RATIO: f64 = 0.1;

/// One augmentation with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Eda {
    Crop {
        #[serde(default = "default_min_scale")]
        min_scale: f64,
    },
    #[serde(rename = "hflip")]
    HFlip,
    Noise {
        #[serde(default = "default_noise_ratio")]
        ratio: f64,
    },
    #[serde(rename = "polflip")]
    PolFlip,
    Reverse {
        #[serde(default)]
        flip_polarity: bool,
    },
    #[serde(rename = "eventdrop")]
    EventDrop {
        #[serde(default = "default_max_time_ratio")]
        max_time_ratio: f64,
        #[serde(default = "default_max_area_ratio")]
        max_area_ratio: f64,
        #[serde(default = "default_max_drop_prob")]
        max_drop_prob: f64,
    },
    Mirror,
}

fn default_min_scale() -> f64 {
    DEFAULT_CROP_MIN_SCALE
}

fn default_noise_ratio() -> f64 {
    DEFAULT_NOISE_RATIO
}

fn default_max_time_ratio() -> f64 {
    DropParams::default().max_time_ratio
}

fn default_max_area_ratio() -> f64 {
    DropParams::default().max_area_ratio
}

fn default_max_drop_prob() -> f64 {
    DropParams::default().max_drop_prob
}

impl Eda {
    pub fn eventdrop(params: DropParams) -> Self {
        Eda::EventDrop {
            max_time_ratio: params.max_time_ratio,
            max_area_ratio: params.max_area_ratio,
            max_drop_prob: params.max_drop_prob,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Eda::Crop { .. } => "Crop",
            Eda::HFlip => "HFlip",
            Eda::Noise { .. } => "Noise",
            Eda::PolFlip => "PolFlip",
            Eda::Reverse { .. } => "Reverse",
            Eda::EventDrop { .. } => "EventDrop",
            Eda::Mirror => "Mirror",
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self {
            Eda::Crop { min_scale } if !(*min_scale > 0.0 && *min_scale <= 1.0) => {
                bad(format!("crop min_scale {min_scale} outside (0, 1]"))
            }
            Eda::Noise { ratio } if !(*ratio >= 0.0 && ratio.is_finite()) => {
                bad(format!("noise ratio {ratio} must be finite and >= 0"))
            }
            Eda::EventDrop {
                max_time_ratio,
                max_area_ratio,
                max_drop_prob,
            } => {
                for (name, v) in [
                    ("max_time_ratio", *max_time_ratio),
                    ("max_area_ratio", *max_area_ratio),
                    ("max_drop_prob", *max_drop_prob),
                ] {
                    if !(0.0..=1.0).contains(&v) {
                        return bad(format!("eventdrop {name} {v} outside [0, 1]"));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Applies the transform unconditionally.
    pub fn apply(&self, stream: &EventStream, rng: &mut rng::Rng) -> EventStream {
        match self {
            Eda::Crop { min_scale } => crop(stream, rng, *min_scale),
            Eda::HFlip => hflip(stream),
            Eda::Noise { ratio } => noise_ba(stream, rng, *ratio),
            Eda::PolFlip => polflip(stream),
            Eda::Reverse {
                flip_polarity: false,
            } => reverse(stream),
            Eda::Reverse {
                flip_polarity: true,
            } => reverse_with_polarity(stream),
            Eda::EventDrop {
                max_time_ratio,
                max_area_ratio,
                max_drop_prob,
            } => {
                let params = DropParams {
                    max_time_ratio: *max_time_ratio,
                    max_area_ratio: *max_area_ratio,
                    max_drop_prob: *max_drop_prob,
                };
                eventdrop(stream, rng, &params)
            }
            Eda::Mirror => mirror(stream, rng),
        }
    }
}

/// A transform and the probability that it fires for a given sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentStep {
    pub eda: Eda,
    #[serde(default = "default_probability")]
    pub probability: f64,
}

fn default_probability() -> f64 {
    DEFAULT_PROBABILITY
}

impl AugmentStep {
    pub fn new(eda: Eda) -> Self {
        AugmentStep {
            eda,
            probability: DEFAULT_PROBABILITY,
        }
    }

    pub fn always(eda: Eda) -> Self {
        AugmentStep {
            eda,
            probability: 1.0,
        }
    }
}

/// Ordered augmentation pipeline. Steps run in list order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSpec {
    #[serde(default)]
    pub steps: Vec<AugmentStep>,
    #[serde(default)]
    pub seed: u64,
}

impl AugmentSpec {
    pub fn new(steps: Vec<AugmentStep>, seed: u64) -> Self {
        AugmentSpec { steps, seed }
    }

    pub fn check(&self) -> Result<()> {
        for (i, s) in self.steps.iter().enumerate() {
            if !(0.0..=1.0).contains(&s.probability) {
                return Err(Error::Config(format!(
                    "step {i} ({}): probability {} outside [0, 1]",
                    s.eda.name(),
                    s.probability
                )));
            }
            s.eda.check()?;
        }
        Ok(())
    }

    /// Names of the steps in application order.
    pub fn names(&self) -> Vec<&'static str> {
        self.steps.iter().map(|s| s.eda.name()).collect()
    }

    /// Same steps, different seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        AugmentSpec {
            steps: self.steps.clone(),
            seed,
        }
    }
}

/// Applies `spec` to `stream`. Step `i` draws from the generator keyed by
/// `(spec.seed, sample_index, i)`, so the output depends only on these
/// values and not on which other samples were processed.
pub fn apply_pipeline(
    stream: &EventStream,
    spec: &AugmentSpec,
    sample_index: u64,
) -> Result<EventStream> {
    spec.check()?;
    stream.ensure_valid()?;
    let mut cur = stream.clone();
    for (i, step) in spec.steps.iter().enumerate() {
        let mut rng = rng::stream(spec.seed, &[sample_index, i as u64]);
        let fire = step.probability >= 1.0 || rng.random::<f64>() < step.probability;
        if fire {
            cur = step.eda.apply(&cur, &mut rng);
        }
    }
    Ok(cur)
}

/// The five stream-agnostic augmentations swept combinatorially, in bitmask
/// order: bit 0 = Crop, 1 = HFlip, 2 = Noise, 3 = PolFlip, 4 = Reverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommonEda {
    Crop,
    HFlip,
    Noise,
    PolFlip,
    Reverse,
}

impl CommonEda {
    pub const ALL: [CommonEda; 5] = [
        CommonEda::Crop,
        CommonEda::HFlip,
        CommonEda::Noise,
        CommonEda::PolFlip,
        CommonEda::Reverse,
    ];

    pub fn bit(self) -> u8 {
        1 << (self as u8)
    }

    pub fn name(self) -> &'static str {
        match self {
            CommonEda::Crop => "Crop",
            CommonEda::HFlip => "HFlip",
            CommonEda::Noise => "Noise",
            CommonEda::PolFlip => "PolFlip",
            CommonEda::Reverse => "Reverse",
        }
    }

    pub fn default_eda(self) -> Eda {
        match self {
            CommonEda::Crop => Eda::Crop {
                min_scale: DEFAULT_CROP_MIN_SCALE,
            },
            CommonEda::HFlip => Eda::HFlip,
            CommonEda::Noise => Eda::Noise {
                ratio: DEFAULT_NOISE_RATIO,
            },
            CommonEda::PolFlip => Eda::PolFlip,
            CommonEda::Reverse => Eda::Reverse {
                flip_polarity: false,
            },
        }
    }

    /// Members of a combination bitmask, in bit order.
    pub fn members(mask: u8) -> Vec<CommonEda> {
        Self::ALL
            .into_iter()
            .filter(|e| mask & e.bit() != 0)
            .collect()
    }

    pub fn mask_label(mask: u8) -> String {
        let names: Vec<&str> = Self::members(mask).into_iter().map(Self::name).collect();
        if names.is_empty() {
            "none".into()
        } else {
            names.join("+")
        }
    }

    /// Pipeline steps for a combination, each firing with `probability`.
    pub fn steps(mask: u8, probability: f64) -> Vec<AugmentStep> {
        Self::members(mask)
            .into_iter()
            .map(|e| AugmentStep {
                eda: e.default_eda(),
                probability,
            })
            .collect()
    }
}
