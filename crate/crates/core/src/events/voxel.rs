use crate::{Error, Result};

use super::EventStream;

/// Number of polarity channels in a frame: positive then negative.
pub const POLARITY_CHANNELS: usize = 2;

/// Binary event frames of shape `T × 2 × H × W`, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpikeTensor {
    bins: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl SpikeTensor {
    pub fn zeros(bins: usize, height: usize, width: usize) -> Self {
        SpikeTensor {
            bins,
            height,
            width,
            data: vec![0; bins * POLARITY_CHANNELS * height * width],
        }
    }

    /// Builds a tensor from raw values; every value must be 0 or 1.
    pub fn from_raw(bins: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != bins * POLARITY_CHANNELS * height * width {
            return Err(Error::Shape(format!(
                "expected {} values for {bins}x2x{height}x{width}, got {}",
                bins * POLARITY_CHANNELS * height * width,
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument(
                "spike tensor values must be 0 or 1".into(),
            ));
        }
        Ok(SpikeTensor {
            bins,
            height,
            width,
            data,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.bins, POLARITY_CHANNELS, self.height, self.width]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    fn index(&self, bin: usize, ch: usize, y: usize, x: usize) -> usize {
        ((bin * POLARITY_CHANNELS + ch) * self.height + y) * self.width + x
    }

    pub fn get(&self, bin: usize, ch: usize, y: usize, x: usize) -> u8 {
        self.data[self.index(bin, ch, y, x)]
    }

    pub fn set(&mut self, bin: usize, ch: usize, y: usize, x: usize) {
        let i = self.index(bin, ch, y, x);
        self.data[i] = 1;
    }

    /// All `2 × H × W` values of one time bin.
    pub fn bin(&self, bin: usize) -> &[u8] {
        let n = POLARITY_CHANNELS * self.height * self.width;
        &self.data[bin * n..(bin + 1) * n]
    }

    /// Number of active cells.
    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    /// Fraction of active cells.
    pub fn density(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.count_ones() as f64 / self.data.len() as f64
        }
    }

    /// Reorders time bins: output bin `i` is input bin `order[i]`.
    pub fn permute_bins(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.bins];
        if order.len() != self.bins
            || order
                .iter()
                .any(|&b| b >= self.bins || std::mem::replace(&mut seen[b], true))
        {
            return Err(Error::InvalidArgument(format!(
                "{order:?} is not a permutation of {} bins",
                self.bins
            )));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for &b in order {
            data.extend_from_slice(self.bin(b));
        }
        Ok(SpikeTensor {
            data,
            ..self.clone()
        })
    }
}

/// Time bin of timestamp `t`: `floor((t - t_start) * bins / duration)`,
/// clamped to `bins - 1`. Integer arithmetic throughout.
pub fn time_bin(t: u64, t_start: u64, duration: u64, bins: usize) -> usize {
    debug_assert!(duration > 0 && bins > 0);
    let rel = t.saturating_sub(t_start) as u128;
    let b = rel * bins as u128 / duration as u128;
    (b as usize).min(bins - 1)
}

fn check(stream: &EventStream, bins: usize) -> Result<()> {
    if bins == 0 {
        return Err(Error::InvalidArgument(
            "number of time bins must be >= 1".into(),
        ));
    }
    stream.ensure_valid()
}

/// Accumulates events into `bins` binary frames.
pub fn voxelize(stream: &EventStream, bins: usize) -> Result<SpikeTensor> {
    check(stream, bins)?;
    let mut out = SpikeTensor::zeros(bins, stream.height as usize, stream.width as usize);
    let dur = stream.duration();
    for e in &stream.events {
        let b = time_bin(e.t, stream.t_start, dur, bins);
        out.set(b, e.p.channel(), e.y as usize, e.x as usize);
    }
    Ok(out)
}

/// Raw event count per time bin, using the same bin rule as [`voxelize`].
pub fn devoxelize_counts(stream: &EventStream, bins: usize) -> Result<Vec<u64>> {
    check(stream, bins)?;
    let mut counts = vec![0u64; bins];
    let dur = stream.duration();
    for e in &stream.events {
        counts[time_bin(e.t, stream.t_start, dur, bins)] += 1;
    }
    Ok(counts)
}
