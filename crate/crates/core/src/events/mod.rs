//! Events, event streams and their binary frame encoding.

use std::fmt;

use serde::{Deserialize, Serialize};

mod io;
mod manifest;
mod synth;
mod voxel;

pub use io::{decode_events, encode_events, load_events, save_events, MAGIC};
pub use manifest::{DatasetManifest, ManifestEntry, MANIFEST_FILE};
pub use synth::{synth_dataset, synth_generate, SynthParams, Template};
pub use voxel::{devoxelize_counts, time_bin, voxelize, SpikeTensor, POLARITY_CHANNELS};

/// Sign of a brightness change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn from_sign(p: i8) -> Option<Self> {
        match p {
            1 => Some(Polarity::Positive),
            -1 => Some(Polarity::Negative),
            _ => None,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }

    /// Frame channel: 0 for positive, 1 for negative events.
    pub fn channel(self) -> usize {
        match self {
            Polarity::Positive => 0,
            Polarity::Negative => 1,
        }
    }
}

/// One event: pixel column `x`, pixel row `y`, timestamp `t` in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub t: u64,
    pub p: Polarity,
}

impl Event {
    pub fn new(x: u16, y: u16, t: u64, p: Polarity) -> Self {
        Event { x, y, t, p }
    }
}

/// A time-sorted set of events recorded on a `width`×`height` sensor over
/// the half-open interval `[t_start, t_end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub events: Vec<Event>,
    pub width: u16,
    pub height: u16,
    pub t_start: u64,
    pub t_end: u64,
    pub label: Option<u32>,
}

impl EventStream {
    pub fn empty(width: u16, height: u16, t_start: u64, t_end: u64) -> Self {
        EventStream {
            events: Vec::new(),
            width,
            height,
            t_start,
            t_end,
            label: None,
        }
    }

    pub fn with_events(mut self, events: Vec<Event>) -> Self {
        self.events = events;
        self
    }

    pub fn with_label(mut self, label: Option<u32>) -> Self {
        self.label = label;
        self
    }

    /// Interval length Δ_T in microseconds.
    pub fn duration(&self) -> u64 {
        self.t_end.saturating_sub(self.t_start)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Same geometry, interval and label, different events.
    pub fn replace_events(&self, events: Vec<Event>) -> Self {
        EventStream {
            events,
            width: self.width,
            height: self.height,
            t_start: self.t_start,
            t_end: self.t_end,
            label: self.label,
        }
    }

    /// Stable sort by timestamp.
    pub fn sort_by_time(&mut self) {
        self.events.sort_by_key(|e| e.t);
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    pub fn ensure_valid(&self) -> crate::Result<()> {
        let v = validate(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(crate::Error::InvalidStream(v))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Rule {
    EmptyInterval,
    EmptyGeometry,
    XOutOfBounds,
    YOutOfBounds,
    TimestampOutOfInterval,
    Unsorted,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::EmptyInterval => "empty time interval",
            Rule::EmptyGeometry => "zero sensor width or height",
            Rule::XOutOfBounds => "x out of bounds",
            Rule::YOutOfBounds => "y out of bounds",
            Rule::TimestampOutOfInterval => "timestamp out of interval",
            Rule::Unsorted => "unsorted",
        })
    }
}

/// One broken invariant. `index` is `None` for stream-level rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub index: Option<usize>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "event {i}: {}", self.rule),
            None => write!(f, "stream: {}", self.rule),
        }
    }
}

/// Lists every invariant violation of `stream`; an empty list means valid.
pub fn validate(stream: &EventStream) -> Vec<Violation> {
    let mut out = Vec::new();
    if stream.t_end <= stream.t_start {
        out.push(Violation {
            index: None,
            rule: Rule::EmptyInterval,
        });
    }
    if stream.width == 0 || stream.height == 0 {
        out.push(Violation {
            index: None,
            rule: Rule::EmptyGeometry,
        });
    }
    let mut prev_t: Option<u64> = None;
    for (i, e) in stream.events.iter().enumerate() {
        if e.x >= stream.width {
            out.push(Violation {
                index: Some(i),
                rule: Rule::XOutOfBounds,
            });
        }
        if e.y >= stream.height {
            out.push(Violation {
                index: Some(i),
                rule: Rule::YOutOfBounds,
            });
        }
        if e.t < stream.t_start || e.t >= stream.t_end {
            out.push(Violation {
                index: Some(i),
                rule: Rule::TimestampOutOfInterval,
            });
        }
        if let Some(p) = prev_t {
            if e.t < p {
                out.push(Violation {
                    index: Some(i),
                    rule: Rule::Unsorted,
                });
            }
        }
        prev_t = Some(e.t);
    }
    out
}
