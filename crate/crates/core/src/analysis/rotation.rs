//! Synthetic latents in a frequency-block layout whose class is carried
//! only by the block magnitudes.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{layout_dim, rotate_layout, GroupElement, GroupSpec};
use crate::linalg::Matrix;
use crate::rng::substream;

/// Each class has a magnitude template per block. A sample draws its block
/// magnitudes around its class template, a uniform phase per block, and is
/// finally moved by a uniformly random element of the cyclic group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationLatentSpec {
    pub k: usize,
    pub freqs: Vec<u32>,
    pub classes: usize,
    /// Templates are drawn uniformly from this range.
    pub magnitude_range: (f64, f64),
    /// Standard deviation of the per-sample magnitude noise.
    pub noise: f64,
    /// Seed of the class templates (sample noise uses the generation seed).
    pub template_seed: u64,
}

impl Default for RotationLatentSpec {
    fn default() -> Self {
        Self {
            k: 360,
            freqs: vec![0, 1, 1, 2, 3],
            classes: 4,
            magnitude_range: (0.5, 2.5),
            noise: 0.15,
            template_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationLatents {
    pub data: Matrix<f64>,
    pub labels: Vec<usize>,
    /// Rotation step applied to each sample.
    pub steps: Vec<usize>,
}

impl RotationLatentSpec {
    pub fn group(&self) -> Result<GroupSpec> {
        GroupSpec::cyclic(self.k, self.freqs.clone())
    }

    pub fn templates(&self) -> Vec<Vec<f64>> {
        let mut rng = substream(self.template_seed, u64::MAX);
        let (lo, hi) = self.magnitude_range;
        (0..self.classes)
            .map(|_| self.freqs.iter().map(|_| rng.random_range(lo..hi)).collect())
            .collect()
    }

    fn validate(&self) -> Result<()> {
        self.group()?;
        if self.classes == 0 {
            return Err(Error::Input("rotation latents need at least one class".into()));
        }
        let (lo, hi) = self.magnitude_range;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) || !(self.noise >= 0.0) {
            return Err(Error::Input("invalid magnitude range or noise".into()));
        }
        Ok(())
    }
}

/// Sample `i` depends only on `(seed, i)`; classes cycle so they stay balanced.
pub fn generate_rotation_latents(spec: &RotationLatentSpec, count: usize, seed: u64) -> Result<RotationLatents> {
    spec.validate()?;
    let templates = spec.templates();
    let group = spec.group()?;
    let dim = layout_dim(&spec.freqs);
    let mut data = Vec::with_capacity(count * dim);
    let mut labels = Vec::with_capacity(count);
    let mut steps = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = substream(seed, i as u64);
        let class = i % spec.classes;
        let mut z = Vec::with_capacity(dim);
        for (b, &f) in spec.freqs.iter().enumerate() {
            let mag = templates[class][b] + spec.noise * rng.sample::<f64, _>(StandardNormal);
            if f == 0 {
                z.push(mag);
            } else {
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                z.push(mag * phase.cos());
                z.push(mag * phase.sin());
            }
        }
        let GroupElement::Rotation { step, .. } = group.sample(&mut rng) else {
            unreachable!("cyclic groups sample rotations")
        };
        let theta = std::f64::consts::TAU * step as f64 / spec.k as f64;
        data.extend(rotate_layout(&spec.freqs, theta, &z)?);
        labels.push(class);
        steps.push(step);
    }
    Ok(RotationLatents {
        data: Matrix::from_vec(count, dim, data)?,
        labels,
        steps,
    })
}
