use super::real::Real;

/// Activation tensor in channel-major `[C, N, H, W]` layout, where
/// `N = steps × batch` and sample `b` at step `t` sits at `n = t·batch + b`.
/// For a fixed channel and step, the `batch × H × W` values are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub c: usize,
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(c: usize, n: usize, h: usize, w: usize) -> Self {
        Tensor {
            c,
            n,
            h,
            w,
            data: vec![F::zero(); c * n * h * w],
        }
    }

    pub fn from_vec(c: usize, n: usize, h: usize, w: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), c * n * h * w, "tensor data length");
        Tensor { c, n, h, w, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.c, self.n, self.h, self.w]
    }

    pub fn hw(&self) -> usize {
        self.h * self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Sum of values belonging to sample `b`, over channels, steps and space.
    pub fn sample_sums(&self, batch: usize) -> Vec<f64> {
        let mut out = vec![0.0; batch];
        let hw = self.hw();
        for c in 0..self.c {
            for n in 0..self.n {
                let off = (c * self.n + n) * hw;
                let s: f64 = self.data[off..off + hw].iter().map(|v| v.as_f64()).sum();
                out[n % batch] += s;
            }
        }
        out
    }
}
