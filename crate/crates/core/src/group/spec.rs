use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::permutation::Permutation;
use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::rng::seeded;
use crate::scalar::Scalar;

/// Largest group that may be enumerated (8!).
pub const DEFAULT_ENUMERATION_CAP: usize = 40_320;

/// Default discretization of the rotation group.
pub const DEFAULT_ROTATION_STEPS: usize = 360;

/// Description of a group acting on a latent space.
///
/// `Cyclic` is the `k`-step discretization of planar rotations acting
/// through a block layout: frequency 0 contributes a fixed 1-dim block and
/// frequency `f >= 1` a 2-dim block rotated by `f * theta`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupSpec {
    Symmetric { n: usize },
    Cyclic { k: usize, freqs: Vec<u32> },
}

/// An element of a group described by a [`GroupSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupElement {
    Perm(Permutation),
    /// Rotation by `2π·step/k`.
    Rotation { step: usize, k: usize },
    /// Continuous rotation angle in radians, normalized to `(-π, π]`.
    Angle(f64),
}

impl GroupSpec {
    pub fn symmetric(n: usize) -> Result<Self> {
        let spec = Self::Symmetric { n };
        spec.validate()?;
        Ok(spec)
    }

    pub fn cyclic(k: usize, freqs: Vec<u32>) -> Result<Self> {
        let spec = Self::Cyclic { k, freqs };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Symmetric { n } if *n == 0 => {
                Err(Error::Input("symmetric group needs n >= 1".into()))
            }
            Self::Cyclic { k, .. } if *k == 0 => {
                Err(Error::Input("cyclic group needs k >= 1".into()))
            }
            Self::Cyclic { freqs, .. } if freqs.is_empty() => {
                Err(Error::Input("cyclic layout needs at least one frequency".into()))
            }
            _ => Ok(()),
        }
    }

    /// Group order, saturating at `u128::MAX`.
    pub fn order(&self) -> u128 {
        match self {
            Self::Symmetric { n } => (1..=*n as u128)
                .try_fold(1u128, |acc, i| acc.checked_mul(i))
                .unwrap_or(u128::MAX),
            Self::Cyclic { k, .. } => *k as u128,
        }
    }

    /// Dimension of the vector space the group acts on.
    pub fn dim(&self) -> usize {
        match self {
            Self::Symmetric { n } => *n,
            Self::Cyclic { freqs, .. } => layout_dim(freqs),
        }
    }

    pub fn identity(&self) -> GroupElement {
        match self {
            Self::Symmetric { n } => GroupElement::Perm(Permutation::identity(*n)),
            Self::Cyclic { k, .. } => GroupElement::Rotation { step: 0, k: *k },
        }
    }

    /// Acts on a vector of length [`GroupSpec::dim`].
    pub fn act<T: Scalar>(&self, g: &GroupElement, z: &[T]) -> Result<Vec<T>> {
        check_dim("group action", self.dim(), z.len())?;
        match (self, g) {
            (Self::Symmetric { .. }, GroupElement::Perm(p)) => p.apply(z),
            (Self::Cyclic { freqs, .. }, g) => match g.angle() {
                Some(theta) => rotate_layout(freqs, T::lit(theta), z),
                None => Err(Error::Input("permutation cannot act on a rotation layout".into())),
            },
            (Self::Symmetric { .. }, _) => {
                Err(Error::Input("rotation cannot act on a symmetric-group space".into()))
            }
        }
    }

    /// Matrix `ρ(g)` of the action.
    pub fn representation<T: Scalar>(&self, g: &GroupElement) -> Result<Matrix<T>> {
        let d = self.dim();
        let mut m = Matrix::zeros(d, d);
        let mut e = vec![T::zero(); d];
        for c in 0..d {
            e[c] = T::one();
            let col = self.act(g, &e)?;
            for (r, v) in col.into_iter().enumerate() {
                m[(r, c)] = v;
            }
            e[c] = T::zero();
        }
        Ok(m)
    }

    /// `a · b`, acting as `b` first.
    pub fn compose(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        match (a, b) {
            (GroupElement::Perm(p), GroupElement::Perm(q)) => Ok(GroupElement::Perm(p.compose(q))),
            (GroupElement::Rotation { step: s, k }, GroupElement::Rotation { step: t, k: k2 })
                if k == k2 =>
            {
                Ok(GroupElement::Rotation { step: (s + t) % k, k: *k })
            }
            _ => match (a.angle(), b.angle()) {
                (Some(x), Some(y)) => Ok(GroupElement::Angle(normalize_angle(x + y))),
                _ => Err(Error::Input("cannot compose elements of different groups".into())),
            },
        }
    }

    pub fn inverse(&self, g: &GroupElement) -> GroupElement {
        match g {
            GroupElement::Perm(p) => GroupElement::Perm(p.inverse()),
            GroupElement::Rotation { step, k } => GroupElement::Rotation {
                step: (k - step % k) % k,
                k: *k,
            },
            GroupElement::Angle(t) => GroupElement::Angle(normalize_angle(-t)),
        }
    }
}

impl GroupElement {
    /// Rotation angle, `None` for permutations.
    pub fn angle(&self) -> Option<f64> {
        match self {
            Self::Perm(_) => None,
            Self::Rotation { step, k } => {
                Some(2.0 * std::f64::consts::PI * (*step as f64) / (*k as f64))
            }
            Self::Angle(t) => Some(*t),
        }
    }

    pub fn as_perm(&self) -> Option<&Permutation> {
        match self {
            Self::Perm(p) => Some(p),
            _ => None,
        }
    }
}

pub fn normalize_angle(t: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let r = t.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

pub fn layout_dim(freqs: &[u32]) -> usize {
    freqs.iter().map(|&f| if f == 0 { 1 } else { 2 }).sum()
}

/// Rotates every block of a frequency layout: frequency-`f` blocks by `f·theta`.
pub fn rotate_layout<T: Scalar>(freqs: &[u32], theta: T, z: &[T]) -> Result<Vec<T>> {
    check_dim("rotation layout", layout_dim(freqs), z.len())?;
    let mut out = Vec::with_capacity(z.len());
    let mut at = 0;
    for &f in freqs {
        if f == 0 {
            out.push(z[at]);
            at += 1;
        } else {
            let (s, c) = (T::from_u32(f).unwrap() * theta).sin_cos();
            let (a, b) = (z[at], z[at + 1]);
            out.push(c * a - s * b);
            out.push(s * a + c * b);
            at += 2;
        }
    }
    Ok(out)
}

/// Block-diagonal matrix of the rotation by `step` steps of a cyclic group.
pub fn rotation_block_matrix<T: Scalar>(spec: &GroupSpec, step: usize) -> Result<Matrix<T>> {
    let GroupSpec::Cyclic { k, .. } = spec else {
        return Err(Error::Input("rotation blocks need a cyclic group".into()));
    };
    if step >= *k {
        return Err(Error::Input(format!("rotation step {step} out of range 0..{k}")));
    }
    spec.representation(&GroupElement::Rotation { step, k: *k })
}

/// Every element exactly once: permutations in lexicographic order of their
/// images, rotations by ascending step.
pub fn enumerate_group(spec: &GroupSpec, cap: usize) -> Result<Vec<GroupElement>> {
    spec.validate()?;
    let order = spec.order();
    if order > cap as u128 {
        return Err(Error::EnumerationCap {
            order,
            cap,
            hint: "; use random sampling instead",
        });
    }
    Ok(match spec {
        GroupSpec::Symmetric { n } => (0..*n)
            .permutations(*n)
            .map(|image| GroupElement::Perm(Permutation::new(image).expect("valid permutation")))
            .collect(),
        GroupSpec::Cyclic { k, .. } => (0..*k)
            .map(|step| GroupElement::Rotation { step, k: *k })
            .collect(),
    })
}

/// Uniformly random element, deterministic in `seed`.
pub fn random_element(spec: &GroupSpec, seed: u64) -> GroupElement {
    let mut rng = seeded(seed);
    spec.sample(&mut rng)
}

impl GroupSpec {
    /// Uniform draw from a caller-owned generator.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        match self {
            Self::Symmetric { n } => GroupElement::Perm(Permutation::random(*n, rng)),
            Self::Cyclic { k, .. } => GroupElement::Rotation {
                step: rng.random_range(0..*k),
                k: *k,
            },
        }
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Symmetric { n } => write!(f, "sym:{n}"),
            Self::Cyclic { k, freqs } => {
                write!(f, "cyc:{k}:")?;
                let list = freqs.iter().map(|q| format!("f{q}")).join(",");
                f.write_str(&list)
            }
        }
    }
}

/// Compact grammar: `sym:<n>` or `cyc:<k>:<freq>,<freq>,...` where a
/// frequency may carry an `f` prefix (`cyc:360:f0,f1,f1`).
impl FromStr for GroupSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Input(format!("malformed group spec '{s}' (expected sym:N or cyc:K:f0,f1,..)"));
        let mut parts = s.trim().split(':');
        let spec = match parts.next() {
            Some("sym") => {
                let n = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                Self::Symmetric { n }
            }
            Some("cyc") => {
                let k = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                let freqs = parts
                    .next()
                    .ok_or_else(bad)?
                    .split(',')
                    .map(|t| t.trim().trim_start_matches('f').parse::<u32>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>>>()?;
                Self::Cyclic { k, freqs }
            }
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        spec.validate()?;
        Ok(spec)
    }
}
