#![allow(dead_code)]

use evsnn::events::{Event, EventStream, Polarity, SpikeTensor};
use evsnn::snn::{LayerSpec, NetworkConfig, SewFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A valid stream with random geometry, interval and events (sorted by
/// time, ties allowed).
pub fn random_stream(rng: &mut ChaCha8Rng) -> EventStream {
    let w = rng.random_range(1..=24u16);
    let h = rng.random_range(1..=24u16);
    let t0 = rng.random_range(0..1_000u64);
    let dur = rng.random_range(1..=5_000u64);
    stream_with(rng, w, h, t0, dur)
}

pub fn stream_with(rng: &mut ChaCha8Rng, w: u16, h: u16, t0: u64, dur: u64) -> EventStream {
    let n = rng.random_range(0..200usize);
    let mut events: Vec<Event> = (0..n)
        .map(|_| {
            let p = if rng.random_bool(0.5) {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            Event::new(
                rng.random_range(0..w),
                rng.random_range(0..h),
                t0 + rng.random_range(0..dur),
                p,
            )
        })
        .collect();
    events.sort_by_key(|e| e.t);
    EventStream::empty(w, h, t0, t0 + dur).with_events(events)
}

pub fn random_input(
    rng: &mut ChaCha8Rng,
    t: usize,
    h: usize,
    w: usize,
    density: f64,
) -> SpikeTensor {
    let mut x = SpikeTensor::zeros(t, h, w);
    for b in 0..t {
        for c in 0..2 {
            for y in 0..h {
                for xx in 0..w {
                    if rng.random_bool(density) {
                        x.set(b, c, y, xx);
                    }
                }
            }
        }
    }
    x
}

/// Two convolutions, one SEW block and the accumulator head on a
/// `T = 4`, `2 × 8 × 8` input.
pub fn small_net(function: SewFunction) -> NetworkConfig {
    let mut cfg = NetworkConfig::sew_tiny(3, 4, 8, 8);
    cfg.layers = vec![
        LayerSpec::Conv2d {
            out_channels: 4,
            kernel: 3,
            stride: 1,
            padding: 1,
            in_channels: Some(2),
        },
        LayerSpec::IfActivation { threshold: None },
        LayerSpec::Conv2d {
            out_channels: 4,
            kernel: 3,
            stride: 2,
            padding: 1,
            in_channels: None,
        },
        LayerSpec::IfActivation { threshold: None },
        LayerSpec::SewBlock {
            function,
            kernel: 3,
            threshold: None,
        },
        LayerSpec::GlobalPool,
        LayerSpec::IfActivation {
            threshold: Some(0.5),
        },
        LayerSpec::Accumulator { dim: 4 },
        LayerSpec::Classifier { classes: 3 },
    ];
    cfg
}
