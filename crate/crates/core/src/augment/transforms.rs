//! The individual stream transforms. Each returns a fresh, valid stream and
//! never mutates its input.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::events::{Event, EventStream, Polarity};
use crate::rng::Rng;

/// Horizontal flip: `x -> W - 1 - x`.
pub fn hflip(stream: &EventStream) -> EventStream {
    let w = stream.width;
    stream.replace_events(
        stream
            .events
            .iter()
            .map(|e| Event {
                x: w - 1 - e.x,
                ..*e
            })
            .collect(),
    )
}

/// Negates every polarity.
pub fn polflip(stream: &EventStream) -> EventStream {
    stream.replace_events(
        stream
            .events
            .iter()
            .map(|e| Event {
                p: e.p.flipped(),
                ..*e
            })
            .collect(),
    )
}

/// Mirrors time inside `[t_start, t_end)`: `t -> t_start + (t_end - 1 - t)`.
/// The event list is reversed so the result stays sorted.
pub fn reverse(stream: &EventStream) -> EventStream {
    let (t0, t1) = (stream.t_start, stream.t_end);
    stream.replace_events(
        stream
            .events
            .iter()
            .rev()
            .map(|e| Event {
                t: t0 + (t1 - 1 - e.t),
                ..*e
            })
            .collect(),
    )
}

/// [`reverse`] followed by a polarity flip, i.e. a physically reversed
/// recording where brightening becomes darkening.
pub fn reverse_with_polarity(stream: &EventStream) -> EventStream {
    polflip(&reverse(stream))
}

/// Crop window in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub x0: u16,
    pub y0: u16,
    pub width: u16,
    pub height: u16,
}

impl Window {
    pub fn contains(&self, x: u16, y: u16) -> bool {
        x >= self.x0 && y >= self.y0 && (x - self.x0) < self.width && (y - self.y0) < self.height
    }
}

/// Window covering area fraction `scale` of the sensor at a random corner.
pub fn draw_crop_window(stream: &EventStream, rng: &mut Rng, min_scale: f64) -> Window {
    let s = if min_scale < 1.0 {
        rng.random_range(min_scale..=1.0)
    } else {
        1.0
    };
    crop_window_for_scale(stream, rng, s)
}

fn side_len(full: u16, scale: f64) -> u16 {
    ((full as f64 * scale.sqrt()).round() as u16).clamp(1, full)
}

fn crop_window_for_scale(stream: &EventStream, rng: &mut Rng, scale: f64) -> Window {
    let w = side_len(stream.width, scale);
    let h = side_len(stream.height, scale);
    Window {
        x0: rng.random_range(0..=stream.width - w),
        y0: rng.random_range(0..=stream.height - h),
        width: w,
        height: h,
    }
}

/// Keeps events inside `window` and stretches the window back to the full
/// sensor: `x' = floor((x - x0) * W / w)`.
pub fn crop_to(stream: &EventStream, window: Window) -> EventStream {
    let (fw, fh) = (stream.width as u32, stream.height as u32);
    let (ww, wh) = (window.width as u32, window.height as u32);
    stream.replace_events(
        stream
            .events
            .iter()
            .filter(|e| window.contains(e.x, e.y))
            .map(|e| Event {
                x: ((e.x - window.x0) as u32 * fw / ww) as u16,
                y: ((e.y - window.y0) as u32 * fh / wh) as u16,
                ..*e
            })
            .collect(),
    )
}

/// Random-scale spatial crop applied to the whole sequence.
pub fn crop(stream: &EventStream, rng: &mut Rng, min_scale: f64) -> EventStream {
    let window = draw_crop_window(stream, rng, min_scale);
    crop_to(stream, window)
}

/// Adds `floor(ratio * N)` uniformly distributed background-activity events.
pub fn noise_ba(stream: &EventStream, rng: &mut Rng, ratio: f64) -> EventStream {
    let n = (ratio.max(0.0) * stream.len() as f64).floor() as usize;
    if n == 0 {
        return stream.clone();
    }
    let mut events = stream.events.clone();
    events.reserve(n);
    for _ in 0..n {
        events.push(Event {
            x: rng.random_range(0..stream.width),
            y: rng.random_range(0..stream.height),
            t: rng.random_range(stream.t_start..stream.t_end),
            p: if rng.random::<bool>() {
                Polarity::Positive
            } else {
                Polarity::Negative
            },
        });
    }
    let mut out = stream.replace_events(events);
    out.sort_by_time();
    out
}

/// Upper bounds of the ratios drawn by [`eventdrop`]. Each ratio is drawn
/// uniformly from `[0.05, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DropParams {
    pub max_time_ratio: f64,
    pub max_area_ratio: f64,
    pub max_drop_prob: f64,
}

impl Default for DropParams {
    fn default() -> Self {
        DropParams {
            max_time_ratio: 0.3,
            max_area_ratio: 0.3,
            max_drop_prob: 0.5,
        }
    }
}

pub const MIN_DROP_RATIO: f64 = 0.05;

/// One resolved EventDrop strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DropStrategy {
    Identity,
    /// Deletes events with `start <= t < start + len`.
    Time {
        start: u64,
        len: u64,
    },
    /// Deletes events inside the rectangle.
    Area(Window),
    /// Deletes each event independently with probability `prob`.
    Random {
        prob: f64,
    },
}

fn ratio(rng: &mut Rng, max: f64) -> f64 {
    if max > MIN_DROP_RATIO {
        rng.random_range(MIN_DROP_RATIO..=max)
    } else {
        max
    }
}

/// Picks one of the four strategies uniformly and draws its parameters.
pub fn draw_drop_strategy(
    stream: &EventStream,
    rng: &mut Rng,
    params: &DropParams,
) -> DropStrategy {
    match rng.random_range(0..4u8) {
        0 => DropStrategy::Identity,
        1 => {
            let dur = stream.duration();
            let len = ((ratio(rng, params.max_time_ratio) * dur as f64).round() as u64).min(dur);
            let start = stream.t_start + rng.random_range(0..=dur - len);
            DropStrategy::Time { start, len }
        }
        2 => {
            let r = ratio(rng, params.max_area_ratio);
            DropStrategy::Area(crop_window_for_scale(stream, rng, r))
        }
        _ => DropStrategy::Random {
            prob: ratio(rng, params.max_drop_prob),
        },
    }
}

pub fn apply_drop(stream: &EventStream, strategy: DropStrategy, rng: &mut Rng) -> EventStream {
    let events = match strategy {
        DropStrategy::Identity => return stream.clone(),
        DropStrategy::Time { start, len } => stream
            .events
            .iter()
            .filter(|e| e.t < start || e.t - start >= len)
            .copied()
            .collect(),
        DropStrategy::Area(w) => stream
            .events
            .iter()
            .filter(|e| !w.contains(e.x, e.y))
            .copied()
            .collect(),
        DropStrategy::Random { prob } => stream
            .events
            .iter()
            .filter(|_| rng.random::<f64>() >= prob)
            .copied()
            .collect(),
    };
    stream.replace_events(events)
}

/// EventDrop: drops events globally, in a time slice or in a rectangle.
pub fn eventdrop(stream: &EventStream, rng: &mut Rng, params: &DropParams) -> EventStream {
    let strategy = draw_drop_strategy(stream, rng, params);
    apply_drop(stream, strategy, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Whether column `x` belongs to this side. For odd widths the center
    /// column belongs to both sides.
    pub fn contains(self, x: u16, width: u16) -> bool {
        let c = width / 2;
        match self {
            Side::Left if width.is_multiple_of(2) => x < c,
            Side::Left => x <= c,
            Side::Right => x >= c,
        }
    }
}

/// Keeps the `source` half, drops the other one, and adds the reflection
/// `x -> W - 1 - x` of every kept event.
pub fn mirror_side(stream: &EventStream, source: Side) -> EventStream {
    let w = stream.width;
    let mut events = Vec::with_capacity(stream.len() * 2);
    for e in stream.events.iter().filter(|e| source.contains(e.x, w)) {
        events.push(*e);
        let rx = w - 1 - e.x;
        if rx != e.x {
            events.push(Event { x: rx, ..*e });
        }
    }
    stream.replace_events(events)
}

/// Mirror with a uniformly drawn source side.
pub fn mirror(stream: &EventStream, rng: &mut Rng) -> EventStream {
    let side = if rng.random::<bool>() {
        Side::Left
    } else {
        Side::Right
    };
    mirror_side(stream, side)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn ev(x: u16, y: u16, t: u64, pos: bool) -> Event {
        Event::new(
            x,
            y,
            t,
            if pos {
                Polarity::Positive
            } else {
                Polarity::Negative
            },
        )
    }

    fn sample() -> EventStream {
        EventStream::empty(8, 4, 0, 100).with_events(vec![
            ev(0, 0, 0, true),
            ev(3, 1, 10, false),
            ev(5, 2, 10, true),
            ev(7, 3, 99, false),
        ])
    }

    #[test]
    fn hflip_reflects_x() {
        let s = sample();
        let f = hflip(&s);
        assert_eq!(f.events[0].x, 7);
        assert_eq!(f.events[3].x, 0);
        assert_eq!(hflip(&f), s);
    }

    #[test]
    fn polflip_negates() {
        let s = sample();
        let f = polflip(&s);
        assert_eq!(f.events[0].p, Polarity::Negative);
        assert_eq!(polflip(&f), s);
    }

    #[test]
    fn reverse_mirrors_time_and_stays_sorted() {
        let s = sample();
        let r = reverse(&s);
        assert_eq!(r.events[0].t, 0);
        assert_eq!(r.events[3].t, 99);
        assert!(r.validate().is_empty());
        assert_eq!(reverse(&r), s);
        let rp = reverse_with_polarity(&s);
        assert_eq!(rp.events[3].p, Polarity::Negative);
    }

    #[test]
    fn full_scale_crop_at_origin_is_identity() {
        let s = sample();
        let w = Window {
            x0: 0,
            y0: 0,
            width: 8,
            height: 4,
        };
        assert_eq!(crop_to(&s, w), s);
    }

    #[test]
    fn crop_drops_outside_and_rescales() {
        let s = sample();
        let w = Window {
            x0: 2,
            y0: 1,
            width: 4,
            height: 2,
        };
        let c = crop_to(&s, w);
        // (3,1) -> (2,0); (5,2) -> (6,2)
        assert_eq!(c.events, vec![ev(2, 0, 10, false), ev(6, 2, 10, true)]);
    }

    #[test]
    fn noise_counts() {
        let s = sample();
        let mut r = rng::stream(1, &[]);
        assert_eq!(noise_ba(&s, &mut r, 0.0), s);
        let n = noise_ba(&s, &mut r, 1.0);
        assert_eq!(n.len(), 8);
        assert!(n.validate().is_empty());
        assert!(s.events.iter().all(|e| n.events.contains(e)));
    }

    #[test]
    fn drop_limits() {
        let s = sample();
        let mut r = rng::stream(2, &[]);
        assert_eq!(apply_drop(&s, DropStrategy::Identity, &mut r), s);
        assert!(apply_drop(&s, DropStrategy::Random { prob: 1.0 }, &mut r).is_empty());
        let t = apply_drop(&s, DropStrategy::Time { start: 10, len: 1 }, &mut r);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn mirror_even_width() {
        let s = EventStream::empty(8, 2, 0, 10)
            .with_events(vec![ev(1, 0, 1, true), ev(3, 1, 2, false)]);
        let m = mirror_side(&s, Side::Left);
        assert_eq!(m.len(), 4);
        assert_eq!(m.events[1].x, 6);
        assert_eq!(m.events[3].x, 4);
        assert!(mirror_side(&s, Side::Right).is_empty());
    }

    #[test]
    fn mirror_odd_width_keeps_center_once() {
        let s =
            EventStream::empty(5, 1, 0, 10).with_events(vec![ev(2, 0, 1, true), ev(4, 0, 2, true)]);
        let left = mirror_side(&s, Side::Left);
        assert_eq!(left.events, vec![ev(2, 0, 1, true)]);
        let right = mirror_side(&s, Side::Right);
        assert_eq!(
            right.events,
            vec![ev(2, 0, 1, true), ev(4, 0, 2, true), ev(0, 0, 2, true)]
        );
    }
}
