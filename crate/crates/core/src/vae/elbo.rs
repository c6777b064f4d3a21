//! Negative ELBO for one graph and its gradient.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Result};
use crate::group::Graph;
use crate::nn::ops::softmax_cross_entropy;
use crate::nn::NodeTensor;
use crate::rng::seeded;
use crate::scalar::Scalar;
use crate::vae::model::{Logits, VaeParams};

/// Terms of the per-graph loss `-ELBO = recon_nodes + recon_edges + kl`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms<T> {
    pub loss: T,
    pub recon_nodes: T,
    pub recon_edges: T,
    pub kl: T,
}

/// Draws the standard-normal noise used by the reparameterization.
pub fn draw_noise<T: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<T> {
    (0..n).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect()
}

/// `z = μ + exp(log σ² / 2) ⊙ ε`.
pub fn reparam_sample<T: Scalar>(mu: &[T], logvar: &[T], eps: &[T]) -> Vec<T> {
    let half = T::lit(0.5);
    mu.iter()
        .zip(logvar)
        .zip(eps)
        .map(|((&m, &lv), &e)| m + (half * lv).exp() * e)
        .collect()
}

/// Categorical reconstruction loss: node terms over every node, edge terms
/// over the upper triangle. Returns the two terms and the logit gradients.
pub fn reconstruction<T: Scalar>(logits: &Logits<T>, g: &Graph) -> (T, T, Logits<T>) {
    let n = g.n();
    let mut g_nodes = NodeTensor::zeros(1, n, g.d_a());
    let mut g_edges = NodeTensor::zeros(2, n, g.d_e());
    let mut rn = T::zero();
    for i in 0..n {
        let (l, gr) = softmax_cross_entropy(logits.nodes.at(i), g.node(i));
        rn += l;
        g_nodes.at_mut(i).copy_from_slice(&gr);
    }
    let mut re = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            let (l, gr) = softmax_cross_entropy(logits.edges.at(i * n + j), g.edge(i, j));
            re += l;
            g_edges.at_mut(i * n + j).copy_from_slice(&gr);
        }
    }
    (
        rn,
        re,
        Logits {
            nodes: g_nodes,
            edges: g_edges,
        },
    )
}

/// `KL(N(μ, σ²) || N(0, 1))` summed over latent entries.
pub fn kl_divergence<T: Scalar>(mu: &[T], logvar: &[T]) -> T {
    let half = T::lit(0.5);
    mu.iter()
        .zip(logvar)
        .map(|(&m, &lv)| half * (lv.exp() + m * m - T::one() - lv))
        .sum()
}

impl<T: Scalar> VaeParams<T> {
    /// Loss for a fixed noise draw.
    pub fn elbo_with_noise(&self, g: &Graph, eps: &[T]) -> Result<ElboTerms<T>> {
        check_dim("noise length", self.shape.n, eps.len())?;
        let post = self.encode(g)?;
        let z = reparam_sample(&post.mu, &post.logvar, eps);
        let logits = self.decode(&z)?;
        let (recon_nodes, recon_edges, _) = reconstruction(&logits, g);
        let kl = kl_divergence(&post.mu, &post.logvar);
        Ok(ElboTerms {
            loss: recon_nodes + recon_edges + kl,
            recon_nodes,
            recon_edges,
            kl,
        })
    }

    /// Single-sample estimate of the negative ELBO with noise from `seed`.
    pub fn elbo(&self, g: &Graph, seed: u64) -> Result<ElboTerms<T>> {
        let eps = draw_noise(self.shape.n, &mut seeded(seed));
        self.elbo_with_noise(g, &eps)
    }

    /// Loss and gradient for a fixed noise draw.
    pub fn elbo_gradient(&self, g: &Graph, eps: &[T]) -> Result<(ElboTerms<T>, VaeParams<T>)> {
        self.elbo_gradient_beta(g, eps, T::one())
    }

    /// Gradient of `recon + beta * kl`; the reported terms are unweighted.
    pub fn elbo_gradient_beta(&self, g: &Graph, eps: &[T], beta: T) -> Result<(ElboTerms<T>, VaeParams<T>)> {
        check_dim("noise length", self.shape.n, eps.len())?;
        let (post, enc_cache) = self.encode_with_cache(g)?;
        let z = reparam_sample(&post.mu, &post.logvar, eps);
        let (logits, dec_cache) = self.decode_with_cache(&z)?;
        let (recon_nodes, recon_edges, g_logits) = reconstruction(&logits, g);
        let kl = kl_divergence(&post.mu, &post.logvar);

        let mut grad = self.zeros_like();
        let gz = self.decoder_backward(&dec_cache, &g_logits, &mut grad)?;
        let half = T::lit(0.5);
        let mut g_mu = Vec::with_capacity(z.len());
        let mut g_lv = Vec::with_capacity(z.len());
        for i in 0..z.len() {
            let sd = (half * post.logvar[i]).exp();
            g_mu.push(gz[i] + beta * post.mu[i]);
            g_lv.push(gz[i] * eps[i] * half * sd + beta * half * (sd * sd - T::one()));
        }
        self.encoder_backward(&enc_cache, &g_mu, &g_lv, &mut grad)?;
        Ok((
            ElboTerms {
                loss: recon_nodes + recon_edges + kl,
                recon_nodes,
                recon_edges,
                kl,
            },
            grad,
        ))
    }
}
