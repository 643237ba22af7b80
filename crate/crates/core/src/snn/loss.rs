//! Output accumulator, cross-entropy and prediction helpers.

use super::real::Real;

/// `𝓕 = Σ_t W·F_t` with `W` stored row-major as `dim × F_t.len()`.
pub fn accumulate<F: Real>(features: &[Vec<F>], w: &[F], dim: usize) -> Vec<F> {
    let mut out = vec![F::zero(); dim];
    for f in features {
        let n = f.len();
        assert_eq!(w.len(), dim * n, "accumulator weight shape");
        for (i, o) in out.iter_mut().enumerate() {
            let row = &w[i * n..(i + 1) * n];
            let mut acc = F::zero();
            for (a, &b) in row.iter().zip(f) {
                acc += *a * b;
            }
            *o += acc;
        }
    }
    out
}

/// Numerically stable `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    assert!(label < logits.len(), "label {label} out of range");
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Mean cross-entropy over a `[batch, classes]` logit block and its gradient
/// with respect to the logits (already divided by the batch size).
pub fn softmax_cross_entropy<F: Real>(
    logits: &[F],
    classes: usize,
    labels: &[usize],
) -> (f64, Vec<F>) {
    let batch = labels.len();
    assert_eq!(logits.len(), batch * classes, "logit block shape");
    let mut grad = vec![F::zero(); logits.len()];
    let mut total = 0.0;
    let inv_b = 1.0 / batch as f64;
    for (b, &label) in labels.iter().enumerate() {
        let row: Vec<f64> = logits[b * classes..(b + 1) * classes]
            .iter()
            .map(|v| v.as_f64())
            .collect();
        total += cross_entropy(&row, label);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|&z| (z - m).exp()).collect();
        let z: f64 = e.iter().sum();
        for (c, g) in grad[b * classes..(b + 1) * classes].iter_mut().enumerate() {
            let onehot = if c == label { 1.0 } else { 0.0 };
            *g = F::from_f64_lossy((e[c] / z - onehot) * inv_b);
        }
    }
    (total * inv_b, grad)
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax<F: Real>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}
