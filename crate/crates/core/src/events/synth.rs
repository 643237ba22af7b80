//! Synthetic labeled event streams built from moving spatio-temporal
//! templates. Every class draws the same number of events, so classes can
//! only be told apart by where and when events occur.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

use super::{Event, EventStream, Polarity};

/// Motion pattern of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Template {
    /// Bright ring whose radius grows over the interval.
    ExpandingRing,
    /// Bright ring whose radius shrinks over the interval.
    ContractingRing,
    /// Straight bar sweeping across the sensor in direction `angle_deg`
    /// (0 = towards +x, 90 = towards +y).
    TranslatingBar { angle_deg: f64 },
    /// Two flickering blobs stacked vertically; the first one is active
    /// during the first half of the interval, the other one afterwards.
    SequentialPair { top_first: bool },
    /// A flickering disc at the sensor center.
    Static,
}

impl Template {
    pub fn name(&self) -> String {
        match self {
            Template::ExpandingRing => "expanding_ring".into(),
            Template::ContractingRing => "contracting_ring".into(),
            Template::TranslatingBar { angle_deg } => format!("bar_{angle_deg}deg"),
            Template::SequentialPair { top_first: true } => "pair_top_first".into(),
            Template::SequentialPair { top_first: false } => "pair_bottom_first".into(),
            Template::Static => "static_disc".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub width: u16,
    pub height: u16,
    pub duration_us: u64,
    /// Mean number of events per sample, noise included.
    pub events_per_sample: u32,
    /// Relative half-width of the uniform jitter on the event count.
    pub count_jitter: f64,
    /// Fraction of events that are uniform background noise.
    pub noise_ratio: f64,
    /// Maximum template center offset in pixels.
    pub position_jitter: f64,
    /// Thickness of moving edges in pixels.
    pub edge_width: f64,
    /// One template per class.
    pub templates: Vec<Template>,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            width: 64,
            height: 64,
            duration_us: 600_000,
            events_per_sample: 3000,
            count_jitter: 0.1,
            noise_ratio: 0.05,
            position_jitter: 4.0,
            edge_width: 2.0,
            templates: vec![
                Template::ExpandingRing,
                Template::ContractingRing,
                Template::SequentialPair { top_first: true },
                Template::SequentialPair { top_first: false },
            ],
        }
    }
}

impl SynthParams {
    pub fn classes(&self) -> usize {
        self.templates.len()
    }

    pub fn class_names(&self) -> Vec<String> {
        self.templates.iter().map(Template::name).collect()
    }

    pub fn check(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument(format!(
                "invalid geometry {}x{}",
                self.width, self.height
            )));
        }
        if self.duration_us == 0 {
            return Err(Error::InvalidArgument("duration must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_ratio) {
            return Err(Error::InvalidArgument(
                "noise_ratio must lie in [0, 1]".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.count_jitter) {
            return Err(Error::InvalidArgument(
                "count_jitter must lie in [0, 1)".into(),
            ));
        }
        if self.position_jitter < 0.0 || self.edge_width <= 0.0 {
            return Err(Error::InvalidArgument(
                "position_jitter must be >= 0 and edge_width > 0".into(),
            ));
        }
        if self.templates.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one template is required".into(),
            ));
        }
        Ok(())
    }
}

struct Scene {
    cx: f64,
    cy: f64,
    size: f64,
    speed: f64,
}

/// Generates one labeled stream of class `class_id`. Deterministic in
/// `(class_id, params, seed)`.
pub fn synth_generate(class_id: usize, params: &SynthParams, seed: u64) -> Result<EventStream> {
    params.check()?;
    let template = params.templates.get(class_id).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "unknown class {class_id} (have {} templates)",
            params.templates.len()
        ))
    })?;
    let mut rng = rng::stream(seed, &[class_id as u64]);
    let (w, h) = (params.width as f64, params.height as f64);
    let j = params.position_jitter;
    let scene = Scene {
        cx: (w - 1.0) / 2.0
            + if j > 0.0 {
                rng.random_range(-j..=j)
            } else {
                0.0
            },
        cy: (h - 1.0) / 2.0
            + if j > 0.0 {
                rng.random_range(-j..=j)
            } else {
                0.0
            },
        size: w.min(h),
        speed: rng.random_range(0.85..=1.15),
    };
    let jitter = params.count_jitter;
    let scale = if jitter > 0.0 {
        1.0 + rng.random_range(-jitter..=jitter)
    } else {
        1.0
    };
    let total = (params.events_per_sample as f64 * scale).round() as usize;
    let noise = (total as f64 * params.noise_ratio).round() as usize;
    let signal = total - noise;

    let dur = params.duration_us;
    let mut events = Vec::with_capacity(total);
    for _ in 0..signal {
        let tau: f64 = rng.random();
        let (x, y, p) = sample_template(template, &scene, params, tau, &mut rng);
        let t = ((tau * dur as f64) as u64).min(dur - 1);
        events.push(Event::new(x, y, t, p));
    }
    for _ in 0..noise {
        let x = rng.random_range(0..params.width);
        let y = rng.random_range(0..params.height);
        let t = rng.random_range(0..dur);
        let p = if rng.random::<bool>() {
            Polarity::Positive
        } else {
            Polarity::Negative
        };
        events.push(Event::new(x, y, t, p));
    }
    let mut s = EventStream::empty(params.width, params.height, 0, dur)
        .with_events(events)
        .with_label(Some(class_id as u32));
    s.sort_by_time();
    Ok(s)
}

fn clamp_pixel(v: f64, len: u16) -> u16 {
    (v.round().max(0.0) as u64).min(len as u64 - 1) as u16
}

fn sample_template(
    template: &Template,
    scene: &Scene,
    params: &SynthParams,
    tau: f64,
    rng: &mut rng::Rng,
) -> (u16, u16, Polarity) {
    let ew = params.edge_width;
    let s = scene.size;
    // rejection sampling keeps events on the template support
    for _ in 0..64 {
        let (fx, fy, p) = match template {
            Template::ExpandingRing | Template::ContractingRing => {
                let expanding = matches!(template, Template::ExpandingRing);
                let prog = (tau * scene.speed).min(1.0);
                let f = if expanding { prog } else { 1.0 - prog };
                let r = s * (0.08 + 0.30 * f);
                let leading = rng.random::<bool>();
                // the leading edge brightens, the trailing edge darkens
                let outward = leading == expanding;
                let edge = if outward {
                    r + ew / 2.0
                } else {
                    (r - ew / 2.0).max(0.0)
                };
                let radius = edge + rng.random_range(-0.5..=0.5) * ew;
                let phi = rng.random_range(0.0..2.0 * PI);
                let p = if leading {
                    Polarity::Positive
                } else {
                    Polarity::Negative
                };
                (
                    scene.cx + radius * phi.cos(),
                    scene.cy + radius * phi.sin(),
                    p,
                )
            }
            Template::TranslatingBar { angle_deg } => {
                let a = angle_deg.to_radians();
                let (dx, dy) = (a.cos(), a.sin());
                let along = s * (-0.35 + 0.7 * (tau * scene.speed).min(1.0));
                let leading = rng.random::<bool>();
                let edge = along + if leading { ew / 2.0 } else { -ew / 2.0 };
                let off = edge + rng.random_range(-0.5..=0.5) * ew;
                let across = rng.random_range(-0.4 * s..=0.4 * s);
                let p = if leading {
                    Polarity::Positive
                } else {
                    Polarity::Negative
                };
                (
                    scene.cx + off * dx - across * dy,
                    scene.cy + off * dy + across * dx,
                    p,
                )
            }
            Template::SequentialPair { top_first } => {
                let top = (tau < 0.5) == *top_first;
                let by = scene.cy + if top { -0.25 * s } else { 0.25 * s };
                let (fx, fy) = disc_point(scene.cx, by, 0.12 * s, rng);
                (fx, fy, flicker_polarity(tau))
            }
            Template::Static => {
                let (fx, fy) = disc_point(scene.cx, scene.cy, 0.2 * s, rng);
                (fx, fy, flicker_polarity(tau))
            }
        };
        if fx > -0.5
            && fy > -0.5
            && fx < params.width as f64 - 0.5
            && fy < params.height as f64 - 0.5
        {
            return (
                clamp_pixel(fx, params.width),
                clamp_pixel(fy, params.height),
                p,
            );
        }
    }
    (
        clamp_pixel(scene.cx, params.width),
        clamp_pixel(scene.cy, params.height),
        Polarity::Positive,
    )
}

fn disc_point(cx: f64, cy: f64, radius: f64, rng: &mut rng::Rng) -> (f64, f64) {
    let r = radius * rng.random::<f64>().sqrt();
    let phi = rng.random_range(0.0..2.0 * PI);
    (cx + r * phi.cos(), cy + r * phi.sin())
}

// Six brightening / darkening half-cycles over the interval.
fn flicker_polarity(tau: f64) -> Polarity {
    if ((tau * 6.0) as u64).is_multiple_of(2) {
        Polarity::Positive
    } else {
        Polarity::Negative
    }
}

/// `samples_per_class` streams per class, class-major order.
pub fn synth_dataset(
    params: &SynthParams,
    samples_per_class: usize,
    seed: u64,
) -> Result<Vec<EventStream>> {
    params.check()?;
    let mut out = Vec::with_capacity(params.classes() * samples_per_class);
    for c in 0..params.classes() {
        for i in 0..samples_per_class {
            out.push(synth_generate(
                c,
                params,
                rng::derive_seed(seed, &[c as u64, i as u64]),
            )?);
        }
    }
    Ok(out)
}
