//! Encoder / decoder stacks of the permutation-equivariant graph VAE.
//!
//! Every linear layer except the heads is followed by a block of
//! `relu → 1x1 channel mix → relu → instance norm`.
//!
//! Encoder: hybrid (nodes ⊕ edges → matrix) → two matrix→matrix layers →
//! matrix→vector head with two channels, `μ` and `log σ²` (one latent
//! channel per node).
//!
//! Decoder: vector→matrix → two matrix→matrix layers → edge head
//! (matrix→matrix, symmetrized by adding its transpose) and node head
//! (matrix→vector). Heads emit logits; softmax is applied downstream.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::group::Graph;
use crate::nn::ops::{instance_norm, instance_norm_backward, relu, relu_backward, InstanceNormCache};
use crate::nn::{ChannelMix, EquivariantLayer, HybridLayer, LayerGrad, NodeTensor};
use crate::scalar::Scalar;

pub const PARAMS_FORMAT: &str = "equilens-vae/1";
pub const LOGVAR_MIN: f64 = -20.0;
pub const LOGVAR_MAX: f64 = 20.0;
/// Initial bias of the log-variance head (σ ≈ 0.14), so early training
/// does not drown the per-node codes in noise.
pub const LOGVAR_INIT_BIAS: f64 = -4.0;

/// Shape of the graphs and hidden width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaeShape {
    pub n: usize,
    pub d_a: usize,
    pub d_e: usize,
    pub hidden: usize,
}

impl Default for VaeShape {
    fn default() -> Self {
        Self {
            n: 6,
            d_a: 4,
            d_e: 3,
            hidden: 8,
        }
    }
}

/// Linear layer followed by its nonlinear block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Stage<T> {
    pub linear: EquivariantLayer<T>,
    pub mix: ChannelMix<T>,
}

/// All weights of the encoder (φ) and decoder (θ).
///
/// Snapshot layout: each layer stores its weights flattened as
/// `[(partition * d_in + in_channel) * d_out + out_channel]` with partitions
/// of `k + l` in restricted-growth-string order, and biases as
/// `[partition_of_l * d_out + out_channel]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct VaeParams<T> {
    pub format: String,
    pub shape: VaeShape,
    pub enc_in: HybridLayer<T>,
    pub enc_in_mix: ChannelMix<T>,
    pub enc_hidden: Vec<Stage<T>>,
    pub enc_head: EquivariantLayer<T>,
    pub dec_in: Stage<T>,
    pub dec_hidden: Vec<Stage<T>>,
    pub dec_edge: EquivariantLayer<T>,
    pub dec_node: EquivariantLayer<T>,
}

fn hidden_stages<T: Scalar>(h: usize, n: usize, rng: Option<&mut dyn rand::RngCore>) -> Result<Vec<Stage<T>>> {
    let mut rng = rng;
    (0..2)
        .map(|_| {
            Ok(match rng.as_deref_mut() {
                Some(r) => Stage {
                    linear: EquivariantLayer::init(2, 2, h, h, n, r)?,
                    mix: ChannelMix::init(h, h, r),
                },
                None => Stage {
                    linear: EquivariantLayer::zeros(2, 2, h, h)?,
                    mix: ChannelMix::zeros(h, h),
                },
            })
        })
        .collect()
}

impl<T: Scalar> VaeParams<T> {
    /// All-zero parameters.
    pub fn zeros(shape: VaeShape) -> Result<Self> {
        Self::validate_shape(shape)?;
        let VaeShape { d_a, d_e, hidden: h, n } = shape;
        Ok(Self {
            format: PARAMS_FORMAT.into(),
            shape,
            enc_in: HybridLayer::new(EquivariantLayer::zeros(1, 2, d_a, h)?, EquivariantLayer::zeros(2, 2, d_e, h)?)?,
            enc_in_mix: ChannelMix::zeros(2 * h, h),
            enc_hidden: hidden_stages(h, n, None)?,
            enc_head: EquivariantLayer::zeros(2, 1, h, 2)?,
            dec_in: Stage {
                linear: EquivariantLayer::zeros(1, 2, 1, h)?,
                mix: ChannelMix::zeros(h, h),
            },
            dec_hidden: hidden_stages(h, n, None)?,
            dec_edge: EquivariantLayer::zeros(2, 2, h, d_e)?,
            dec_node: EquivariantLayer::zeros(2, 1, h, d_a)?,
        })
    }

    /// Random initialization; see [`EquivariantLayer::init`] for the scale.
    /// The log-variance head starts at [`LOGVAR_INIT_BIAS`].
    pub fn init<R: Rng>(shape: VaeShape, rng: &mut R) -> Result<Self> {
        Self::validate_shape(shape)?;
        let VaeShape { n, d_a, d_e, hidden: h } = shape;
        let enc_in = HybridLayer::new(
            EquivariantLayer::init(1, 2, d_a, h, n, rng)?,
            EquivariantLayer::init(2, 2, d_e, h, n, rng)?,
        )?;
        let enc_in_mix = ChannelMix::init(2 * h, h, rng);
        let enc_hidden = hidden_stages(h, n, Some(rng))?;
        let mut enc_head = EquivariantLayer::init(2, 1, h, 2, n, rng)?;
        enc_head.bias[1] = T::lit(LOGVAR_INIT_BIAS);
        let dec_in = Stage {
            linear: EquivariantLayer::init(1, 2, 1, h, n, rng)?,
            mix: ChannelMix::init(h, h, rng),
        };
        let dec_hidden = hidden_stages(h, n, Some(rng))?;
        let dec_edge = EquivariantLayer::init(2, 2, h, d_e, n, rng)?;
        let dec_node = EquivariantLayer::init(2, 1, h, d_a, n, rng)?;
        Ok(Self {
            format: PARAMS_FORMAT.into(),
            shape,
            enc_in,
            enc_in_mix,
            enc_hidden,
            enc_head,
            dec_in,
            dec_hidden,
            dec_edge,
            dec_node,
        })
    }

    fn validate_shape(shape: VaeShape) -> Result<()> {
        if shape.n < 4 || shape.n > crate::nn::MAX_NODES {
            return Err(Error::Input(format!(
                "VAE node count {} outside 4..={}",
                shape.n,
                crate::nn::MAX_NODES
            )));
        }
        if shape.d_a < 2 || shape.d_e < 2 || shape.hidden == 0 {
            return Err(Error::Input("VAE needs d_A, d_E >= 2 and hidden >= 1".into()));
        }
        Ok(())
    }

    /// Checks a loaded snapshot.
    pub fn validate(&self) -> Result<()> {
        if self.format != PARAMS_FORMAT {
            return Err(Error::Input(format!(
                "unknown parameter format '{}' (expected '{PARAMS_FORMAT}')",
                self.format
            )));
        }
        let reference = Self::zeros(self.shape)?;
        let shapes = |p: &Self| p.tensors().iter().map(|t| t.len()).collect::<Vec<_>>();
        if shapes(self) != shapes(&reference) {
            return Err(Error::Input("parameter arrays do not match the declared shape".into()));
        }
        Ok(())
    }

    /// Every parameter array in canonical order.
    pub fn tensors(&self) -> Vec<&Vec<T>> {
        let mut out = vec![
            &self.enc_in.from_nodes.weights,
            &self.enc_in.from_nodes.bias,
            &self.enc_in.from_edges.weights,
            &self.enc_in.from_edges.bias,
            &self.enc_in_mix.weights,
            &self.enc_in_mix.bias,
        ];
        for s in &self.enc_hidden {
            out.extend([&s.linear.weights, &s.linear.bias, &s.mix.weights, &s.mix.bias]);
        }
        out.extend([&self.enc_head.weights, &self.enc_head.bias]);
        out.extend([
            &self.dec_in.linear.weights,
            &self.dec_in.linear.bias,
            &self.dec_in.mix.weights,
            &self.dec_in.mix.bias,
        ]);
        for s in &self.dec_hidden {
            out.extend([&s.linear.weights, &s.linear.bias, &s.mix.weights, &s.mix.bias]);
        }
        out.extend([&self.dec_edge.weights, &self.dec_edge.bias, &self.dec_node.weights, &self.dec_node.bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = vec![
            &mut self.enc_in.from_nodes.weights,
            &mut self.enc_in.from_nodes.bias,
            &mut self.enc_in.from_edges.weights,
            &mut self.enc_in.from_edges.bias,
            &mut self.enc_in_mix.weights,
            &mut self.enc_in_mix.bias,
        ];
        for s in &mut self.enc_hidden {
            out.extend([&mut s.linear.weights, &mut s.linear.bias, &mut s.mix.weights, &mut s.mix.bias]);
        }
        out.extend([&mut self.enc_head.weights, &mut self.enc_head.bias]);
        out.extend([
            &mut self.dec_in.linear.weights,
            &mut self.dec_in.linear.bias,
            &mut self.dec_in.mix.weights,
            &mut self.dec_in.mix.bias,
        ]);
        for s in &mut self.dec_hidden {
            out.extend([&mut s.linear.weights, &mut s.linear.bias, &mut s.mix.weights, &mut s.mix.bias]);
        }
        out.extend([
            &mut self.dec_edge.weights,
            &mut self.dec_edge.bias,
            &mut self.dec_node.weights,
            &mut self.dec_node.bias,
        ]);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flat(&self) -> Vec<T> {
        self.tensors().into_iter().flatten().copied().collect()
    }

    pub fn set_flat(&mut self, values: &[T]) -> Result<()> {
        check_dim("flat parameter vector", self.num_params(), values.len())?;
        let mut at = 0;
        for t in self.tensors_mut() {
            let len = t.len();
            t.copy_from_slice(&values[at..at + len]);
            at += len;
        }
        Ok(())
    }

    /// Zero-valued structure with the same shapes, used for gradients.
    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        for t in g.tensors_mut() {
            t.iter_mut().for_each(|v| *v = T::zero());
        }
        g
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }
}

/// Intermediate values of `relu → mix → relu → norm`.
#[derive(Debug, Clone)]
struct BlockCache<T> {
    pre: NodeTensor<T>,
    act: NodeTensor<T>,
    mixed: NodeTensor<T>,
    out: NodeTensor<T>,
    norm: InstanceNormCache<T>,
}

fn block_forward<T: Scalar>(mix: &ChannelMix<T>, pre: NodeTensor<T>) -> Result<BlockCache<T>> {
    let act = relu(&pre);
    let mixed = mix.forward(&act)?;
    let (out, norm) = instance_norm(&relu(&mixed));
    Ok(BlockCache {
        pre,
        act,
        mixed,
        out,
        norm,
    })
}

/// Returns the mix gradient and the gradient w.r.t. the block input.
fn block_backward<T: Scalar>(
    mix: &ChannelMix<T>,
    cache: &BlockCache<T>,
    gout: &NodeTensor<T>,
) -> Result<(LayerGrad<T>, NodeTensor<T>)> {
    let g_relu2 = instance_norm_backward(&cache.out, &cache.norm, gout);
    let g_mixed = relu_backward(&cache.mixed, &g_relu2);
    let (gmix, g_act) = mix.backward(&cache.act, &g_mixed)?;
    Ok((gmix, relu_backward(&cache.pre, &g_act)))
}

fn copy_grad<T: Scalar>(layer: &mut EquivariantLayer<T>, g: LayerGrad<T>) {
    layer.weights = g.weights;
    layer.bias = g.bias;
}

fn copy_mix_grad<T: Scalar>(mix: &mut ChannelMix<T>, g: LayerGrad<T>) {
    mix.weights = g.weights;
    mix.bias = g.bias;
}

/// Posterior parameters of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior<T> {
    pub mu: Vec<T>,
    pub logvar: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    v: NodeTensor<T>,
    e: NodeTensor<T>,
    blocks: Vec<BlockCache<T>>,
    /// Unclamped log-variance head output.
    raw_logvar: Vec<T>,
}

/// Decoder logits: node logits `n x d_A`, symmetric edge logits `n x n x d_E`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<T> {
    pub nodes: NodeTensor<T>,
    pub edges: NodeTensor<T>,
}

#[derive(Debug, Clone)]
pub struct DecoderCache<T> {
    z: NodeTensor<T>,
    blocks: Vec<BlockCache<T>>,
}

impl<T: Scalar> VaeParams<T> {
    fn check_graph(&self, g: &Graph) -> Result<()> {
        check_dim("graph node count", self.shape.n, g.n())?;
        check_dim("graph node categories", self.shape.d_a, g.d_a())?;
        check_dim("graph edge categories", self.shape.d_e, g.d_e())
    }

    pub fn encode_with_cache(&self, g: &Graph) -> Result<(Posterior<T>, EncoderCache<T>)> {
        self.check_graph(g)?;
        let VaeShape { n, d_a, d_e, .. } = self.shape;
        let v = NodeTensor::from_vec(1, n, d_a, g.node_onehot())?;
        let e = NodeTensor::from_vec(2, n, d_e, g.edge_onehot())?;
        let mut blocks = Vec::with_capacity(3);
        blocks.push(block_forward(&self.enc_in_mix, self.enc_in.forward(&v, &e)?)?);
        for stage in &self.enc_hidden {
            let pre = stage.linear.forward(&blocks.last().unwrap().out)?;
            blocks.push(block_forward(&stage.mix, pre)?);
        }
        let head = self.enc_head.forward(&blocks.last().unwrap().out)?;
        let (lo, hi) = (T::lit(LOGVAR_MIN), T::lit(LOGVAR_MAX));
        let mu: Vec<T> = (0..n).map(|i| head.at(i)[0]).collect();
        let raw_logvar: Vec<T> = (0..n).map(|i| head.at(i)[1]).collect();
        let logvar = raw_logvar.iter().map(|&x| x.max(lo).min(hi)).collect();
        Ok((Posterior { mu, logvar }, EncoderCache { v, e, blocks, raw_logvar }))
    }

    /// Posterior mean and (clamped) log-variance per node.
    pub fn encode(&self, g: &Graph) -> Result<Posterior<T>> {
        Ok(self.encode_with_cache(g)?.0)
    }

    pub fn decode_with_cache(&self, z: &[T]) -> Result<(Logits<T>, DecoderCache<T>)> {
        check_dim("latent length", self.shape.n, z.len())?;
        let zt = NodeTensor::from_vec(1, self.shape.n, 1, z.to_vec())?;
        let mut blocks = Vec::with_capacity(3);
        blocks.push(block_forward(&self.dec_in.mix, self.dec_in.linear.forward(&zt)?)?);
        for stage in &self.dec_hidden {
            let pre = stage.linear.forward(&blocks.last().unwrap().out)?;
            blocks.push(block_forward(&stage.mix, pre)?);
        }
        let top = &blocks.last().unwrap().out;
        let edges = self.dec_edge.forward(top)?.symmetrized();
        let nodes = self.dec_node.forward(top)?;
        Ok((Logits { nodes, edges }, DecoderCache { z: zt, blocks }))
    }

    pub fn decode(&self, z: &[T]) -> Result<Logits<T>> {
        Ok(self.decode_with_cache(z)?.0)
    }

    /// Accumulates decoder gradients into `grad` and returns `∂L/∂z`.
    pub fn decoder_backward(
        &self,
        cache: &DecoderCache<T>,
        g_logits: &Logits<T>,
        grad: &mut Self,
    ) -> Result<Vec<T>> {
        let top = &cache.blocks.last().unwrap().out;
        // edges = A + Aᵀ, so ∂L/∂A = G + Gᵀ
        let g_edge_raw = g_logits.edges.symmetrized();
        let (ge, mut g_top) = self.dec_edge.backward(top, &g_edge_raw)?;
        copy_grad(&mut grad.dec_edge, ge);
        let (gn, g_top_n) = self.dec_node.backward(top, &g_logits.nodes)?;
        copy_grad(&mut grad.dec_node, gn);
        g_top.data.iter_mut().zip(&g_top_n.data).for_each(|(a, &b)| *a += b);

        let mut g = g_top;
        for (idx, stage) in self.dec_hidden.iter().enumerate().rev() {
            let cache_b = &cache.blocks[idx + 1];
            let (gmix, g_pre) = block_backward(&stage.mix, cache_b, &g)?;
            copy_mix_grad(&mut grad.dec_hidden[idx].mix, gmix);
            let (glin, g_in) = stage.linear.backward(&cache.blocks[idx].out, &g_pre)?;
            copy_grad(&mut grad.dec_hidden[idx].linear, glin);
            g = g_in;
        }
        let (gmix, g_pre) = block_backward(&self.dec_in.mix, &cache.blocks[0], &g)?;
        copy_mix_grad(&mut grad.dec_in.mix, gmix);
        let (glin, gz) = self.dec_in.linear.backward(&cache.z, &g_pre)?;
        copy_grad(&mut grad.dec_in.linear, glin);
        Ok(gz.data)
    }

    /// Accumulates encoder gradients into `grad` given `∂L/∂μ` and
    /// `∂L/∂(log σ²)` (after clamping; entries clamped in the forward pass
    /// receive no gradient).
    pub fn encoder_backward(
        &self,
        cache: &EncoderCache<T>,
        g_mu: &[T],
        g_logvar: &[T],
        grad: &mut Self,
    ) -> Result<()> {
        let n = self.shape.n;
        let (lo, hi) = (T::lit(LOGVAR_MIN), T::lit(LOGVAR_MAX));
        let mut g_head = NodeTensor::zeros(1, n, 2);
        for i in 0..n {
            let raw = cache.raw_logvar[i];
            g_head.at_mut(i)[0] = g_mu[i];
            g_head.at_mut(i)[1] = if raw < lo || raw > hi { T::zero() } else { g_logvar[i] };
        }
        let top = &cache.blocks.last().unwrap().out;
        let (gh, mut g) = self.enc_head.backward(top, &g_head)?;
        copy_grad(&mut grad.enc_head, gh);
        for (idx, stage) in self.enc_hidden.iter().enumerate().rev() {
            let (gmix, g_pre) = block_backward(&stage.mix, &cache.blocks[idx + 1], &g)?;
            copy_mix_grad(&mut grad.enc_hidden[idx].mix, gmix);
            let (glin, g_in) = stage.linear.backward(&cache.blocks[idx].out, &g_pre)?;
            copy_grad(&mut grad.enc_hidden[idx].linear, glin);
            g = g_in;
        }
        let (gmix, g_pre) = block_backward(&self.enc_in_mix, &cache.blocks[0], &g)?;
        copy_mix_grad(&mut grad.enc_in_mix, gmix);
        let (gv, ge) = self.enc_in.backward(&cache.v, &cache.e, &g_pre)?;
        copy_grad(&mut grad.enc_in.from_nodes, gv);
        copy_grad(&mut grad.enc_in.from_edges, ge);
        Ok(())
    }
}

fn block_margin<T: Scalar>(blocks: &[BlockCache<T>]) -> T {
    blocks
        .iter()
        .flat_map(|b| b.pre.data.iter().chain(&b.mixed.data))
        .fold(T::infinity(), |m, v| m.min(v.abs()))
}

impl<T: Scalar> VaeParams<T> {
    /// Smallest `|x|` over every relu input of the encoder and of the
    /// decoder at `z`: the loss is smooth within this distance of the
    /// current activations.
    pub fn relu_margin(&self, g: &Graph, z: &[T]) -> Result<T> {
        let (_, enc) = self.encode_with_cache(g)?;
        let (_, dec) = self.decode_with_cache(z)?;
        Ok(block_margin(&enc.blocks).min(block_margin(&dec.blocks)))
    }

    /// Sign of every relu input, encoder first, in evaluation order.
    pub fn relu_pattern(&self, g: &Graph, z: &[T]) -> Result<Vec<bool>> {
        let (_, enc) = self.encode_with_cache(g)?;
        let (_, dec) = self.decode_with_cache(z)?;
        Ok(enc
            .blocks
            .iter()
            .chain(&dec.blocks)
            .flat_map(|b| b.pre.data.iter().chain(&b.mixed.data))
            .map(|&v| v > T::zero())
            .collect())
    }
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> Logits<T> {
    /// Argmax decoding, ties to the lowest category. Edges are read from the
    /// upper triangle; the diagonal is "not an edge".
    pub fn to_graph(&self) -> Graph {
        let n = self.nodes.n;
        let (d_a, d_e) = (self.nodes.channels, self.edges.channels);
        let mut g = Graph::empty(n, d_a, d_e);
        for i in 0..n {
            g.set_node(i, argmax(self.nodes.at(i)));
            for j in i + 1..n {
                g.set_edge(i, j, argmax(self.edges.at(i * n + j)));
            }
        }
        g
    }
}

impl<T: Scalar> VaeParams<T> {
    /// Decodes `z` and takes the most likely category in every slot.
    pub fn decode_graph(&self, z: &[T]) -> Result<Graph> {
        Ok(self.decode(z)?.to_graph())
    }
}
