//! Latent interpolation and the Hamming stability of decoded paths.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::group::Graph;
use crate::invariant::sort_projection;
use crate::scalar::Scalar;
use crate::vae::VaeParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpolationMode {
    /// Straight line between the raw latents.
    Equivariant,
    /// Straight line between the sorted latents.
    Invariant,
}

impl FromStr for InterpolationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equivariant" => Ok(Self::Equivariant),
            "invariant" => Ok(Self::Invariant),
            other => Err(Error::Input(format!(
                "unknown interpolation mode '{other}' (expected equivariant or invariant)"
            ))),
        }
    }
}

impl std::fmt::Display for InterpolationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Equivariant => "equivariant",
            Self::Invariant => "invariant",
        })
    }
}

/// Points `α·a + (1-α)·b` for `α = 0, 1/(steps-1), ..., 1`, where `a`, `b`
/// are the endpoints (sorted in invariant mode). `decoded` is filled by
/// [`decode_path`] and is not serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct InterpolationPath<T> {
    pub z1: Vec<T>,
    pub z2: Vec<T>,
    pub mode: InterpolationMode,
    pub alphas: Vec<T>,
    pub points: Vec<Vec<T>>,
    #[serde(skip)]
    pub decoded: Vec<Graph>,
}

pub fn interpolate<T: Scalar>(z1: &[T], z2: &[T], mode: InterpolationMode, steps: usize) -> Result<InterpolationPath<T>> {
    check_dim("interpolation endpoint", z1.len(), z2.len())?;
    if steps < 2 {
        return Err(Error::Input(format!("interpolation needs at least 2 steps, got {steps}")));
    }
    let (a, b) = match mode {
        InterpolationMode::Equivariant => (z1.to_vec(), z2.to_vec()),
        InterpolationMode::Invariant => (sort_projection(z1)?.sorted, sort_projection(z2)?.sorted),
    };
    let last = T::from_usize_lossy(steps - 1);
    let alphas: Vec<T> = (0..steps).map(|i| T::from_usize_lossy(i) / last).collect();
    let points = alphas
        .iter()
        .map(|&alpha| {
            a.iter()
                .zip(&b)
                .map(|(&x, &y)| alpha * x + (T::one() - alpha) * y)
                .collect()
        })
        .collect();
    Ok(InterpolationPath {
        z1: z1.to_vec(),
        z2: z2.to_vec(),
        mode,
        alphas,
        points,
        decoded: Vec::new(),
    })
}

/// Argmax-decodes every point of the path.
pub fn decode_path<T: Scalar>(params: &VaeParams<T>, path: &mut InterpolationPath<T>) -> Result<()> {
    path.decoded = path
        .points
        .iter()
        .map(|z| params.decode_graph(z))
        .collect::<Result<_>>()?;
    Ok(())
}

/// Differing node slots plus differing upper-triangle edge slots.
pub fn hamming(a: &Graph, b: &Graph) -> Result<usize> {
    if !a.same_shape(b) {
        return Err(Error::Dimension {
            context: "hamming graph shape".into(),
            expected: a.n(),
            got: b.n(),
        });
    }
    let n = a.n();
    let nodes = (0..n).filter(|&i| a.node(i) != b.node(i)).count();
    let edges = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| a.edge(i, j) != b.edge(i, j))
        .count();
    Ok(nodes + edges)
}

/// Mean Hamming distance between consecutive decoded graphs of a path.
pub fn mean_consecutive_hamming(graphs: &[Graph]) -> Result<f64> {
    if graphs.len() < 2 {
        return Ok(0.0);
    }
    let total: usize = graphs
        .windows(2)
        .map(|w| hamming(&w[0], &w[1]))
        .sum::<Result<usize>>()?;
    Ok(total as f64 / (graphs.len() - 1) as f64)
}

/// Fixed-width histogram over `[0, max]`: bin `i` counts values in
/// `[i·w, (i+1)·w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn build(values: &[f64], bin_width: f64) -> Self {
        let max = values.iter().copied().fold(0.0, f64::max);
        let bins = (max / bin_width).floor() as usize + 1;
        let mut counts = vec![0; bins];
        for &v in values {
            counts[((v.max(0.0) / bin_width).floor() as usize).min(bins - 1)] += 1;
        }
        Self { bin_width, counts }
    }

    /// `(lower, upper, count)` per bin.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (i as f64 * self.bin_width, (i + 1) as f64 * self.bin_width, c))
    }
}

pub const STABILITY_BIN_WIDTH: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub mode: InterpolationMode,
    pub per_path: Vec<f64>,
    pub mean: f64,
    pub histogram: Histogram,
}

/// Decodes the interpolation between every pair and averages consecutive
/// Hamming distances along each path.
pub fn interpolation_stability<T: Scalar>(
    params: &VaeParams<T>,
    pairs: &[(Vec<T>, Vec<T>)],
    mode: InterpolationMode,
    steps: usize,
) -> Result<StabilityReport> {
    let per_path: Vec<f64> = pairs
        .par_iter()
        .map(|(a, b)| {
            check_dim("latent length", params.shape.n, a.len())?;
            let mut path = interpolate(a, b, mode, steps)?;
            decode_path(params, &mut path)?;
            mean_consecutive_hamming(&path.decoded)
        })
        .collect::<Result<_>>()?;
    let mean = if per_path.is_empty() {
        0.0
    } else {
        per_path.iter().sum::<f64>() / per_path.len() as f64
    };
    Ok(StabilityReport {
        mode,
        histogram: Histogram::build(&per_path, STABILITY_BIN_WIDTH),
        per_path,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Permutation;
    use crate::invariant::is_sorted;
    use crate::rng::seeded;
    use crate::vae::VaeShape;

    #[test]
    fn endpoints_follow_alpha_convention() {
        let p = interpolate(&[1.0, 2.0], &[5.0, -1.0], InterpolationMode::Equivariant, 5).unwrap();
        assert_eq!(p.points[0], vec![5.0, -1.0]);
        assert_eq!(p.points[4], vec![1.0, 2.0]);
        assert_eq!(p.alphas, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn invariant_points_are_sorted() {
        let p = interpolate(&[3.0, -1.0, 2.0], &[0.0, 9.0, -4.0], InterpolationMode::Invariant, 11).unwrap();
        assert!(p.points.iter().all(|z| is_sorted(z)));
    }

    #[test]
    fn swap_midpoints_differ_between_modes() {
        let eq = interpolate(&[0.0, 1.0], &[1.0, 0.0], InterpolationMode::Equivariant, 3).unwrap();
        assert_eq!(eq.points[1], vec![0.5, 0.5]);
        let inv = interpolate(&[0.0, 1.0], &[1.0, 0.0], InterpolationMode::Invariant, 3).unwrap();
        assert_eq!(inv.points[1], vec![0.0, 1.0]);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(interpolate(&[0.0], &[0.0, 1.0], InterpolationMode::Equivariant, 3).is_err());
        assert!(interpolate(&[0.0], &[1.0], InterpolationMode::Equivariant, 1).is_err());
        assert!("sideways".parse::<InterpolationMode>().is_err());
    }

    #[test]
    fn hamming_by_hand() {
        let mut a = Graph::empty(4, 5, 3);
        a.set_node(0, 0);
        a.set_node(1, 1);
        a.set_node(2, 2);
        assert_eq!(hamming(&a, &a).unwrap(), 0);
        let mut b = a.clone();
        b.set_node(2, 3);
        assert_eq!(hamming(&a, &b).unwrap(), 1);
        b.set_edge(0, 2, 1);
        assert_eq!(hamming(&a, &b).unwrap(), 2);
        assert!(hamming(&a, &Graph::empty(5, 5, 3)).is_err());
    }

    #[test]
    fn histogram_bins() {
        let h = Histogram::build(&[0.0, 0.4, 0.5, 1.2, 1.5], 0.5);
        assert_eq!(h.counts, vec![2, 1, 1, 1]);
        assert_eq!(Histogram::build(&[], 0.5).counts, vec![0]);
    }

    #[test]
    fn stability_trivial_cases() {
        let params = VaeParams::<f64>::init(VaeShape::default(), &mut seeded(1)).unwrap();
        let z = vec![0.3, -1.0, 0.7, 2.0, -0.5, 0.1];
        let r = interpolation_stability(&params, &[(z.clone(), z.clone())], InterpolationMode::Equivariant, 10).unwrap();
        assert_eq!(r.per_path, vec![0.0]);
        let moved = Permutation::random(6, &mut seeded(2)).apply(&z).unwrap();
        let r = interpolation_stability(&params, &[(z.clone(), moved.clone())], InterpolationMode::Invariant, 10).unwrap();
        assert_eq!(r.per_path, vec![0.0]);
        let zero = VaeParams::<f64>::zeros(VaeShape::default()).unwrap();
        for mode in [InterpolationMode::Equivariant, InterpolationMode::Invariant] {
            let r = interpolation_stability(&zero, &[(z.clone(), moved.clone())], mode, 10).unwrap();
            assert_eq!(r.mean, 0.0);
        }
    }
}
