use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::group::Permutation;
use crate::scalar::Scalar;

/// Largest node count supported by the dense layers.
pub const MAX_NODES: usize = 12;

/// Dense tensor with `order` node axes of size `n` and a trailing channel
/// axis. Layout is position-major: entry `(i, j, c)` of an order-2 tensor
/// sits at `(i * n + j) * channels + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NodeTensor<T> {
    pub order: usize,
    pub n: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> NodeTensor<T> {
    pub fn zeros(order: usize, n: usize, channels: usize) -> Self {
        Self {
            order,
            n,
            channels,
            data: vec![T::zero(); n.pow(order as u32) * channels],
        }
    }

    pub fn from_vec(order: usize, n: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if order > 2 {
            return Err(Error::Unsupported(format!("node tensors of order {order}")));
        }
        check_dim("node tensor buffer", n.pow(order as u32) * channels, data.len())?;
        Ok(Self {
            order,
            n,
            channels,
            data,
        })
    }

    #[inline]
    pub fn positions(&self) -> usize {
        self.n.pow(self.order as u32)
    }

    #[inline]
    pub fn at(&self, pos: usize) -> &[T] {
        &self.data[pos * self.channels..(pos + 1) * self.channels]
    }

    #[inline]
    pub fn at_mut(&mut self, pos: usize) -> &mut [T] {
        &mut self.data[pos * self.channels..(pos + 1) * self.channels]
    }

    /// Acts on every node axis.
    pub fn permuted(&self, p: &Permutation) -> Result<Self> {
        check_dim("node tensor permutation", self.n, p.len())?;
        let data = match self.order {
            0 => self.data.clone(),
            1 => p.apply_rows(&self.data, self.channels)?,
            _ => p.conjugate(&self.data, self.channels)?,
        };
        Ok(Self { data, ..*self })
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.order == other.order && self.n == other.n && self.channels == other.channels
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    /// Stacks channels of `a` then `b` at every position.
    pub fn concat_channels(a: &Self, b: &Self) -> Result<Self> {
        if a.order != b.order || a.n != b.n {
            return Err(Error::Input("channel concatenation of differently shaped tensors".into()));
        }
        let channels = a.channels + b.channels;
        let mut data = Vec::with_capacity(a.positions() * channels);
        for pos in 0..a.positions() {
            data.extend_from_slice(a.at(pos));
            data.extend_from_slice(b.at(pos));
        }
        Ok(Self {
            order: a.order,
            n: a.n,
            channels,
            data,
        })
    }

    /// Inverse of [`NodeTensor::concat_channels`].
    pub fn split_channels(&self, first: usize) -> (Self, Self) {
        let rest = self.channels - first;
        let mut a = Self::zeros(self.order, self.n, first);
        let mut b = Self::zeros(self.order, self.n, rest);
        for pos in 0..self.positions() {
            let src = self.at(pos);
            a.at_mut(pos).copy_from_slice(&src[..first]);
            b.at_mut(pos).copy_from_slice(&src[first..]);
        }
        (a, b)
    }

    /// Adds the transpose over the two node axes: `x + xᵀ`.
    pub fn symmetrized(&self) -> Self {
        assert_eq!(self.order, 2, "symmetrization needs an order-2 tensor");
        let (n, c) = (self.n, self.channels);
        let mut out = self.clone();
        for i in 0..n {
            for j in 0..n {
                for ch in 0..c {
                    out.data[(i * n + j) * c + ch] = self.data[(i * n + j) * c + ch] + self.data[(j * n + i) * c + ch];
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_split_round_trip() {
        let a = NodeTensor::from_vec(1, 2, 1, vec![1.0, 2.0]).unwrap();
        let b = NodeTensor::from_vec(1, 2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let ab = NodeTensor::concat_channels(&a, &b).unwrap();
        assert_eq!(ab.data, vec![1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        assert_eq!(ab.split_channels(1), (a, b));
    }

    #[test]
    fn symmetrized_is_symmetric() {
        let x = NodeTensor::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(x.symmetrized().data, vec![2.0, 5.0, 5.0, 8.0]);
    }
}
