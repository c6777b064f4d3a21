use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::basis::basis_table;
use super::tensor::NodeTensor;
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

/// Linear permutation-equivariant map from order-`k` to order-`l` node
/// tensors: a weighted sum of the `b(k + l)` basis elements per channel
/// pair, plus a bias spanned by the `b(l)` partitions of the output order.
/// Each basis element enters divided by its fan-in, so it averages the
/// entries it aggregates instead of summing them; the spanned space is the
/// same and gradient scales stay independent of `n`.
///
/// `weights[(p * d_in + i) * d_out + o]` is the coefficient of basis element
/// `p` from input channel `i` to output channel `o`; `bias[q * d_out + o]`
/// is added at every output position whose index pattern is `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EquivariantLayer<T> {
    pub k: usize,
    pub l: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Gradients with the same layout as the layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

pub(crate) fn bell_of(m: usize) -> usize {
    super::partition::bell(m)
}

impl<T: Scalar> EquivariantLayer<T> {
    pub fn zeros(k: usize, l: usize, d_in: usize, d_out: usize) -> Result<Self> {
        if k > 2 || l > 2 || k + l == 0 || k + l > 4 {
            return Err(Error::Unsupported(format!("equivariant layer of orders ({k}, {l})")));
        }
        Ok(Self {
            k,
            l,
            d_in,
            d_out,
            weights: vec![T::zero(); bell_of(k + l) * d_in * d_out],
            bias: vec![T::zero(); bell_of(l) * d_out],
        })
    }

    /// Gaussian weights with variance `1 / (d_in · b(k+l))`. `n` only
    /// checks that the basis exists at that size. Bias starts at zero.
    pub fn init<R: Rng + ?Sized>(k: usize, l: usize, d_in: usize, d_out: usize, n: usize, rng: &mut R) -> Result<Self> {
        let mut layer = Self::zeros(k, l, d_in, d_out)?;
        basis_table(k, l, n)?;
        let std = (1.0 / (d_in * bell_of(k + l)) as f64).sqrt();
        for w in &mut layer.weights {
            *w = T::lit(std * rng.sample::<f64, _>(StandardNormal));
        }
        Ok(layer)
    }

    /// Weights with every basis block divided by its fan-in at this `n`.
    fn effective_weights(&self, fan_in: &[usize]) -> Vec<T> {
        let block = self.d_in * self.d_out;
        let mut w = self.weights.clone();
        for (p, &f) in fan_in.iter().enumerate() {
            let scale = T::from_usize_lossy(f.max(1)).recip();
            w[p * block..(p + 1) * block].iter_mut().for_each(|v| *v *= scale);
        }
        w
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn check_input(&self, x: &NodeTensor<T>) -> Result<()> {
        check_dim("layer input order", self.k, x.order)?;
        check_dim("layer input channels", self.d_in, x.channels)
    }

    pub fn forward(&self, x: &NodeTensor<T>) -> Result<NodeTensor<T>> {
        self.check_input(x)?;
        let table = basis_table(self.k, self.l, x.n)?;
        let (di, dout) = (self.d_in, self.d_out);
        let weights = self.effective_weights(&table.fan_in);
        let mut out = NodeTensor::zeros(self.l, x.n, dout);
        for &(ip, op, p) in &table.entries {
            let src = x.at(ip as usize);
            let w = &weights[p as usize * di * dout..(p as usize + 1) * di * dout];
            let dst = out.at_mut(op as usize);
            for (i, &xv) in src.iter().enumerate() {
                if xv == T::zero() {
                    continue;
                }
                for (o, &wv) in dst.iter_mut().zip(&w[i * dout..(i + 1) * dout]) {
                    *o += xv * wv;
                }
            }
        }
        for (op, &q) in table.out_pattern.iter().enumerate() {
            let b = &self.bias[q as usize * dout..(q as usize + 1) * dout];
            for (o, &bv) in out.at_mut(op).iter_mut().zip(b) {
                *o += bv;
            }
        }
        Ok(out)
    }

    /// Parameter gradients and the input gradient for upstream `gout`.
    pub fn backward(&self, x: &NodeTensor<T>, gout: &NodeTensor<T>) -> Result<(LayerGrad<T>, NodeTensor<T>)> {
        self.check_input(x)?;
        check_dim("layer output gradient channels", self.d_out, gout.channels)?;
        let table = basis_table(self.k, self.l, x.n)?;
        let (di, dout) = (self.d_in, self.d_out);
        let weights = self.effective_weights(&table.fan_in);
        let mut gw = vec![T::zero(); self.weights.len()];
        let mut gb = vec![T::zero(); self.bias.len()];
        let mut gx = NodeTensor::zeros(self.k, x.n, di);
        for &(ip, op, p) in &table.entries {
            let (ip, op, p) = (ip as usize, op as usize, p as usize);
            let g = gout.at(op);
            let xs = x.at(ip);
            let base = p * di * dout;
            let gxs = gx.at_mut(ip);
            for i in 0..di {
                let w = &weights[base + i * dout..base + (i + 1) * dout];
                let gwi = &mut gw[base + i * dout..base + (i + 1) * dout];
                let xv = xs[i];
                let mut acc = T::zero();
                for o in 0..dout {
                    gwi[o] += xv * g[o];
                    acc += w[o] * g[o];
                }
                gxs[i] += acc;
            }
        }
        for (p, &f) in table.fan_in.iter().enumerate() {
            let scale = T::from_usize_lossy(f.max(1)).recip();
            gw[p * di * dout..(p + 1) * di * dout].iter_mut().for_each(|v| *v *= scale);
        }
        for (op, &q) in table.out_pattern.iter().enumerate() {
            for (b, &g) in gb[q as usize * dout..(q as usize + 1) * dout].iter_mut().zip(gout.at(op)) {
                *b += g;
            }
        }
        Ok((LayerGrad { weights: gw, bias: gb }, gx))
    }

    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.weights.iter().chain(&self.bias)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

impl<T: Scalar> LayerGrad<T> {
    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.weights.iter().chain(&self.bias)
    }
}

/// Channel-wise concatenation of a node-to-edge layer and an edge-to-edge
/// layer applied to the node and edge features of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct HybridLayer<T> {
    pub from_nodes: EquivariantLayer<T>,
    pub from_edges: EquivariantLayer<T>,
}

impl<T: Scalar> HybridLayer<T> {
    pub fn new(from_nodes: EquivariantLayer<T>, from_edges: EquivariantLayer<T>) -> Result<Self> {
        if from_nodes.k != 1 || from_edges.k != 2 || from_nodes.l != from_edges.l {
            return Err(Error::Input("hybrid layer needs node (k=1) and edge (k=2) parts of equal output order".into()));
        }
        Ok(Self { from_nodes, from_edges })
    }

    pub fn d_out(&self) -> usize {
        self.from_nodes.d_out + self.from_edges.d_out
    }

    pub fn forward(&self, v: &NodeTensor<T>, e: &NodeTensor<T>) -> Result<NodeTensor<T>> {
        NodeTensor::concat_channels(&self.from_nodes.forward(v)?, &self.from_edges.forward(e)?)
    }

    /// Returns node-part and edge-part gradients (inputs are constants of
    /// the graph, so input gradients are dropped).
    pub fn backward(
        &self,
        v: &NodeTensor<T>,
        e: &NodeTensor<T>,
        gout: &NodeTensor<T>,
    ) -> Result<(LayerGrad<T>, LayerGrad<T>)> {
        let (gv, ge) = gout.split_channels(self.from_nodes.d_out);
        let (a, _) = self.from_nodes.backward(v, &gv)?;
        let (b, _) = self.from_edges.backward(e, &ge)?;
        Ok((a, b))
    }
}

/// Per-position linear map across channels (1x1 convolution) with bias.
/// `weights[i * d_out + o]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ChannelMix<T> {
    pub d_in: usize,
    pub d_out: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ChannelMix<T> {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            d_in,
            d_out,
            weights: vec![T::zero(); d_in * d_out],
            bias: vec![T::zero(); d_out],
        }
    }

    pub fn init<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(d_in, d_out);
        let std = (1.0 / d_in as f64).sqrt();
        for w in &mut m.weights {
            *w = T::lit(std * rng.sample::<f64, _>(StandardNormal));
        }
        m
    }

    pub fn forward(&self, x: &NodeTensor<T>) -> Result<NodeTensor<T>> {
        check_dim("channel mix input", self.d_in, x.channels)?;
        let mut out = NodeTensor::zeros(x.order, x.n, self.d_out);
        for pos in 0..x.positions() {
            let dst = out.at_mut(pos);
            dst.copy_from_slice(&self.bias);
            for (i, &xv) in x.at(pos).iter().enumerate() {
                for (o, &w) in dst.iter_mut().zip(&self.weights[i * self.d_out..(i + 1) * self.d_out]) {
                    *o += xv * w;
                }
            }
        }
        Ok(out)
    }

    pub fn backward(&self, x: &NodeTensor<T>, gout: &NodeTensor<T>) -> Result<(LayerGrad<T>, NodeTensor<T>)> {
        check_dim("channel mix input", self.d_in, x.channels)?;
        let mut gw = vec![T::zero(); self.weights.len()];
        let mut gb = vec![T::zero(); self.d_out];
        let mut gx = NodeTensor::zeros(x.order, x.n, self.d_in);
        for pos in 0..x.positions() {
            let g = gout.at(pos);
            for (b, &gv) in gb.iter_mut().zip(g) {
                *b += gv;
            }
            let xs = x.at(pos);
            let gxs = gx.at_mut(pos);
            for i in 0..self.d_in {
                let row = i * self.d_out..(i + 1) * self.d_out;
                let mut acc = T::zero();
                for ((gwv, &w), &gv) in gw[row.clone()].iter_mut().zip(&self.weights[row]).zip(g) {
                    *gwv += xs[i] * gv;
                    acc += w * gv;
                }
                gxs[i] = acc;
            }
        }
        Ok((LayerGrad { weights: gw, bias: gb }, gx))
    }
}
