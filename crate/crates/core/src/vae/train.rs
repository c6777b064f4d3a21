//! Plain minibatch SGD on the negative ELBO.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::Graph;
use crate::rng::{seeded, substream};
use crate::scalar::Scalar;
use crate::vae::elbo::draw_noise;
use crate::vae::model::{VaeParams, VaeShape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub hidden: usize,
    /// Rescale each batch gradient to at most this Euclidean norm.
    #[serde(default)]
    pub clip_norm: Option<f64>,
    /// The KL weight ramps linearly from 0 to 1 over this many epochs.
    #[serde(default)]
    pub kl_warmup_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 300,
            seed: 0,
            hidden: 8,
            clip_norm: None,
            kl_warmup_epochs: 0,
        }
    }
}

/// Mean per-graph terms over one epoch, accumulated while stepping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: VaeParams<T>,
    pub loss_curve: Vec<EpochStats>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Input(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.hidden == 0 {
            return Err(Error::Input("batch size, epochs and hidden width must be >= 1".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Input(format!("clip norm must be positive, got {c}")));
            }
        }
        Ok(())
    }

    /// KL weight used during `epoch`.
    pub fn kl_weight(&self, epoch: usize) -> f64 {
        if self.kl_warmup_epochs == 0 {
            1.0
        } else {
            (epoch as f64 / self.kl_warmup_epochs as f64).min(1.0)
        }
    }
}

/// Trains from a fresh initialization.
pub fn train<T: Scalar>(graphs: &[Graph], config: &TrainConfig) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let first = graphs.first().ok_or_else(|| Error::Input("empty training set".into()))?;
    let shape = VaeShape {
        n: first.n(),
        d_a: first.d_a(),
        d_e: first.d_e(),
        hidden: config.hidden,
    };
    let params = VaeParams::init(shape, &mut seeded(config.seed))?;
    train_from(params, graphs, config)
}

/// Continues training `params`. Shuffling uses stream 1 of the seed and the
/// noise of epoch `e` stream `2 + e`; batch gradients are summed in batch
/// order whatever the thread count. With the default config this is plain
/// SGD on the mean per-graph loss.
pub fn train_from<T: Scalar>(
    mut params: VaeParams<T>,
    graphs: &[Graph],
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if graphs.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    for (idx, g) in graphs.iter().enumerate() {
        if g.n() != params.shape.n || g.d_a() != params.shape.d_a || g.d_e() != params.shape.d_e {
            return Err(Error::Input(format!("graph {idx} does not match the model shape")));
        }
    }
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut shuffle_rng = substream(config.seed, 1);
    let mut curve = Vec::with_capacity(config.epochs);
    let lr = T::lit(config.learning_rate);
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut noise_rng = substream(config.seed, 2 + epoch as u64);
        let noise: Vec<Vec<T>> = order.iter().map(|_| draw_noise(params.shape.n, &mut noise_rng)).collect();
        let beta = T::lit(config.kl_weight(epoch));
        let (mut loss, mut recon, mut kl) = (0.0, 0.0, 0.0);
        for (chunk, eps) in order.chunks(config.batch_size).zip(noise.chunks(config.batch_size)) {
            let results: Vec<_> = chunk
                .par_iter()
                .zip(eps.par_iter())
                .map(|(&gi, e)| params.elbo_gradient_beta(&graphs[gi], e, beta))
                .collect::<Result<_>>()?;
            let mut total = params.zeros_like();
            for (terms, grad) in &results {
                let l = terms.loss.as_f64();
                if !l.is_finite() {
                    return Err(Error::Divergence { epoch });
                }
                loss += l;
                recon += (terms.recon_nodes + terms.recon_edges).as_f64();
                kl += terms.kl.as_f64();
                total.add_scaled(grad, T::one());
            }
            let mut scale = -lr / T::from_usize_lossy(chunk.len());
            if let Some(clip) = config.clip_norm {
                let norm = total.flat().iter().map(|&v| v * v).sum::<T>().sqrt() / T::from_usize_lossy(chunk.len());
                if norm > T::lit(clip) {
                    scale *= T::lit(clip) / norm;
                }
            }
            params.add_scaled(&total, scale);
        }
        let count = graphs.len() as f64;
        let stats = EpochStats {
            epoch,
            loss: loss / count,
            recon: recon / count,
            kl: kl / count,
        };
        log::debug!("epoch {epoch}: loss {:.4} (recon {:.4}, kl {:.4})", stats.loss, stats.recon, stats.kl);
        curve.push(stats);
    }
    Ok(TrainOutcome { params, loss_curve: curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::synthetic::{generate_synthetic, SyntheticSpec};

    #[test]
    fn training_is_deterministic() {
        let graphs = generate_synthetic(&SyntheticSpec::default(), 40, 1).unwrap();
        let config = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let a = train::<f64>(&graphs, &config).unwrap();
        let b = train::<f64>(&graphs, &config).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss_curve, b.loss_curve);
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = single.install(|| train::<f64>(&graphs, &config)).unwrap();
        assert_eq!(a.params, c.params);
    }

    #[test]
    fn divergence_is_reported() {
        let graphs = generate_synthetic(&SyntheticSpec::default(), 8, 1).unwrap();
        let config = TrainConfig {
            epochs: 50,
            learning_rate: 1e6,
            ..TrainConfig::default()
        };
        match train::<f64>(&graphs, &config) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {:?}", other.map(|o| o.loss_curve.len())),
        }
    }

    #[test]
    fn rejects_bad_config() {
        let graphs = generate_synthetic(&SyntheticSpec::default(), 2, 1).unwrap();
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(train::<f64>(&graphs, &bad).is_err());
        assert!(train::<f64>(&[], &TrainConfig::default()).is_err());
    }
}
