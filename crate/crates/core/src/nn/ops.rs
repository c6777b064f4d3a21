//! Position-wise and statistics-based operations. All commute with node
//! permutations: they act per position or through statistics pooled over
//! every position.

use super::tensor::NodeTensor;
use crate::scalar::Scalar;

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

pub fn relu<T: Scalar>(x: &NodeTensor<T>) -> NodeTensor<T> {
    NodeTensor {
        data: x.data.iter().map(|&v| v.max(T::zero())).collect(),
        ..*x
    }
}

/// Gradient of `relu` at input `x`; zero at the kink.
pub fn relu_backward<T: Scalar>(x: &NodeTensor<T>, gout: &NodeTensor<T>) -> NodeTensor<T> {
    NodeTensor {
        data: x
            .data
            .iter()
            .zip(&gout.data)
            .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
            .collect(),
        ..*x
    }
}

/// Numerically stable softmax of one row.
pub fn softmax_row<T: Scalar>(row: &[T]) -> Vec<T> {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax over the channel (category) axis at every position.
pub fn softmax<T: Scalar>(x: &NodeTensor<T>) -> NodeTensor<T> {
    let mut out = x.clone();
    for pos in 0..x.positions() {
        out.at_mut(pos).copy_from_slice(&softmax_row(x.at(pos)));
    }
    out
}

/// Backward of [`softmax`] given its output `probs`.
pub fn softmax_backward<T: Scalar>(probs: &NodeTensor<T>, gout: &NodeTensor<T>) -> NodeTensor<T> {
    let mut out = probs.clone();
    for pos in 0..probs.positions() {
        let p = probs.at(pos);
        let g = gout.at(pos);
        let dot: T = p.iter().zip(g).map(|(&a, &b)| a * b).sum();
        for ((o, &pv), &gv) in out.at_mut(pos).iter_mut().zip(p).zip(g) {
            *o = pv * (gv - dot);
        }
    }
    out
}

/// `-log softmax(logits)[target]` and its gradient `softmax(logits) - onehot`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], target: usize) -> (T, Vec<T>) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    let mut grad = softmax_row(logits);
    grad[target] -= T::one();
    (lse - logits[target], grad)
}

/// Per-channel statistics of an instance normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceNormCache<T> {
    pub mean: Vec<T>,
    pub inv_std: Vec<T>,
}

/// Normalizes each channel over all node positions:
/// `(x - mean) / sqrt(var + eps)` with the population variance.
pub fn instance_norm<T: Scalar>(x: &NodeTensor<T>) -> (NodeTensor<T>, InstanceNormCache<T>) {
    let (c, npos) = (x.channels, x.positions());
    let count = T::from_usize_lossy(npos);
    let mut mean = vec![T::zero(); c];
    for pos in 0..npos {
        for (m, &v) in mean.iter_mut().zip(x.at(pos)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![T::zero(); c];
    for pos in 0..npos {
        for ((s, &v), &m) in var.iter_mut().zip(x.at(pos)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let eps = T::lit(INSTANCE_NORM_EPS);
    let inv_std: Vec<T> = var.iter().map(|&s| (s / count + eps).sqrt().recip()).collect();
    let mut y = x.clone();
    for pos in 0..npos {
        for (ch, v) in y.at_mut(pos).iter_mut().enumerate() {
            *v = (*v - mean[ch]) * inv_std[ch];
        }
    }
    (y, InstanceNormCache { mean, inv_std })
}

/// Backward of [`instance_norm`] given its output `y`.
pub fn instance_norm_backward<T: Scalar>(
    y: &NodeTensor<T>,
    cache: &InstanceNormCache<T>,
    gout: &NodeTensor<T>,
) -> NodeTensor<T> {
    let (c, npos) = (y.channels, y.positions());
    let count = T::from_usize_lossy(npos);
    let mut mean_g = vec![T::zero(); c];
    let mut mean_gy = vec![T::zero(); c];
    for pos in 0..npos {
        for ch in 0..c {
            let g = gout.at(pos)[ch];
            mean_g[ch] += g;
            mean_gy[ch] += g * y.at(pos)[ch];
        }
    }
    let mut gx = y.clone();
    for pos in 0..npos {
        for ch in 0..c {
            let g = gout.at(pos)[ch];
            let yv = y.at(pos)[ch];
            gx.at_mut(pos)[ch] = cache.inv_std[ch] * (g - mean_g[ch] / count - yv * mean_gy[ch] / count);
        }
    }
    gx
}
