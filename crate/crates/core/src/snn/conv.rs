//! Convolution via im2col + GEMM, and pooling, on `[C, N, H, W]` tensors.

use super::real::{matmul, Layout, Real};
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub h_in: usize,
    pub w_in: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeom {
    /// `None` when the kernel does not fit the padded input.
    pub fn new(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        h_in: usize,
        w_in: usize,
    ) -> Option<Self> {
        if kernel == 0 || stride == 0 || h_in + 2 * padding < kernel || w_in + 2 * padding < kernel
        {
            return None;
        }
        Some(ConvGeom {
            c_in,
            c_out,
            kernel,
            stride,
            padding,
            h_in,
            w_in,
            h_out: (h_in + 2 * padding - kernel) / stride + 1,
            w_out: (w_in + 2 * padding - kernel) / stride + 1,
        })
    }

    /// Rows of the im2col matrix: `C_in · k²`.
    pub fn patch_len(&self) -> usize {
        self.c_in * self.kernel * self.kernel
    }

    pub fn weight_len(&self) -> usize {
        self.c_out * self.patch_len()
    }
}

/// `cols[(c·k + ki)·k + kj, (n·H_out + oh)·W_out + ow] = x[c, n, oh·s + ki - p, ow·s + kj - p]`
fn im2col<F: Real>(x: &Tensor<F>, g: &ConvGeom) -> Vec<F> {
    let (k, s, p) = (g.kernel, g.stride, g.padding as isize);
    let ncols = x.n * g.h_out * g.w_out;
    let mut cols = vec![F::zero(); g.patch_len() * ncols];
    for c in 0..g.c_in {
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst_row = &mut cols[row * ncols..(row + 1) * ncols];
                for n in 0..x.n {
                    let src = &x.data[(c * x.n + n) * g.h_in * g.w_in..][..g.h_in * g.w_in];
                    for oh in 0..g.h_out {
                        let ih = (oh * s) as isize + ki as isize - p;
                        if ih < 0 || ih >= g.h_in as isize {
                            continue;
                        }
                        let src_row = &src[ih as usize * g.w_in..][..g.w_in];
                        let dst = &mut dst_row[(n * g.h_out + oh) * g.w_out..][..g.w_out];
                        for (ow, d) in dst.iter_mut().enumerate() {
                            let iw = (ow * s) as isize + kj as isize - p;
                            if iw >= 0 && iw < g.w_in as isize {
                                *d = src_row[iw as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<F: Real>(cols: &[F], g: &ConvGeom, n_total: usize) -> Tensor<F> {
    let (k, s, p) = (g.kernel, g.stride, g.padding as isize);
    let ncols = n_total * g.h_out * g.w_out;
    let mut dx = Tensor::zeros(g.c_in, n_total, g.h_in, g.w_in);
    for c in 0..g.c_in {
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src_row = &cols[row * ncols..(row + 1) * ncols];
                for n in 0..n_total {
                    let base = (c * n_total + n) * g.h_in * g.w_in;
                    for oh in 0..g.h_out {
                        let ih = (oh * s) as isize + ki as isize - p;
                        if ih < 0 || ih >= g.h_in as isize {
                            continue;
                        }
                        let dst = &mut dx.data[base + ih as usize * g.w_in..][..g.w_in];
                        let src = &src_row[(n * g.h_out + oh) * g.w_out..][..g.w_out];
                        for (ow, &v) in src.iter().enumerate() {
                            let iw = (ow * s) as isize + kj as isize - p;
                            if iw >= 0 && iw < g.w_in as isize {
                                dst[iw as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// `weight` is `[C_out, C_in, k, k]` row-major, `bias` is `[C_out]`.
pub fn conv_forward<F: Real>(x: &Tensor<F>, weight: &[F], bias: &[F], g: &ConvGeom) -> Tensor<F> {
    debug_assert_eq!(x.c, g.c_in);
    debug_assert_eq!((x.h, x.w), (g.h_in, g.w_in));
    let cols = im2col(x, g);
    let ncols = x.n * g.h_out * g.w_out;
    let mut out = Tensor::zeros(g.c_out, x.n, g.h_out, g.w_out);
    matmul(
        g.c_out,
        g.patch_len(),
        ncols,
        weight,
        Layout::Normal,
        &cols,
        Layout::Normal,
        &mut out.data,
        false,
    );
    for (co, &b) in bias.iter().enumerate() {
        if b != F::zero() {
            out.data[co * ncols..(co + 1) * ncols]
                .iter_mut()
                .for_each(|v| *v += b);
        }
    }
    out
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// `need_input_grad` is set.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<F: Real>(
    x: &Tensor<F>,
    grad_out: &Tensor<F>,
    weight: &[F],
    g: &ConvGeom,
    grad_w: &mut [F],
    grad_b: &mut [F],
    need_input_grad: bool,
) -> Option<Tensor<F>> {
    let cols = im2col(x, g);
    let ncols = x.n * g.h_out * g.w_out;
    let kk = g.patch_len();
    // dW += dY · colsᵀ
    matmul(
        g.c_out,
        ncols,
        kk,
        &grad_out.data,
        Layout::Normal,
        &cols,
        Layout::Transposed,
        grad_w,
        true,
    );
    for (co, gb) in grad_b.iter_mut().enumerate() {
        *gb += grad_out.data[co * ncols..(co + 1) * ncols]
            .iter()
            .copied()
            .sum();
    }
    if !need_input_grad {
        return None;
    }
    // dcols = Wᵀ · dY
    let mut dcols = cols;
    matmul(
        kk,
        g.c_out,
        ncols,
        weight,
        Layout::Transposed,
        &grad_out.data,
        Layout::Normal,
        &mut dcols,
        false,
    );
    Some(col2im(&dcols, g, x.n))
}

/// Non-overlapping average pooling with a square window; trailing rows and
/// columns that do not fill a window are dropped.
pub fn avg_pool_forward<F: Real>(x: &Tensor<F>, window: usize) -> Tensor<F> {
    let (ho, wo) = (x.h / window, x.w / window);
    let mut out = Tensor::zeros(x.c, x.n, ho, wo);
    let scale = F::one() / F::from_usize(window * window).unwrap();
    for cn in 0..x.c * x.n {
        let src = &x.data[cn * x.h * x.w..][..x.h * x.w];
        let dst = &mut out.data[cn * ho * wo..][..ho * wo];
        for oh in 0..ho {
            for ow in 0..wo {
                let mut acc = F::zero();
                for i in 0..window {
                    for j in 0..window {
                        acc += src[(oh * window + i) * x.w + ow * window + j];
                    }
                }
                dst[oh * wo + ow] = acc * scale;
            }
        }
    }
    out
}

pub fn avg_pool_backward<F: Real>(
    grad_out: &Tensor<F>,
    window: usize,
    h: usize,
    w: usize,
) -> Tensor<F> {
    let (ho, wo) = (grad_out.h, grad_out.w);
    let mut dx = Tensor::zeros(grad_out.c, grad_out.n, h, w);
    let scale = F::one() / F::from_usize(window * window).unwrap();
    for cn in 0..grad_out.c * grad_out.n {
        let src = &grad_out.data[cn * ho * wo..][..ho * wo];
        let dst = &mut dx.data[cn * h * w..][..h * w];
        for oh in 0..ho {
            for ow in 0..wo {
                let gv = src[oh * wo + ow] * scale;
                for i in 0..window {
                    for j in 0..window {
                        dst[(oh * window + i) * w + ow * window + j] = gv;
                    }
                }
            }
        }
    }
    dx
}

pub fn global_pool_forward<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    let hw = x.hw();
    let scale = F::one() / F::from_usize(hw).unwrap();
    let data = (0..x.c * x.n)
        .map(|cn| x.data[cn * hw..(cn + 1) * hw].iter().copied().sum::<F>() * scale)
        .collect();
    Tensor::from_vec(x.c, x.n, 1, 1, data)
}

pub fn global_pool_backward<F: Real>(grad_out: &Tensor<F>, h: usize, w: usize) -> Tensor<F> {
    let scale = F::one() / F::from_usize(h * w).unwrap();
    let mut dx = Tensor::zeros(grad_out.c, grad_out.n, h, w);
    for (cn, &g) in grad_out.data.iter().enumerate() {
        dx.data[cn * h * w..(cn + 1) * h * w]
            .iter_mut()
            .for_each(|v| *v = g * scale);
    }
    dx
}
