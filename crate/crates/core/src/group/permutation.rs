use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// A permutation of `{0, .., n-1}` stored by forward image: position `i`
/// is sent to `image[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    image: Vec<usize>,
}

impl Permutation {
    pub fn new(image: Vec<usize>) -> Result<Self> {
        let n = image.len();
        let mut seen = vec![false; n];
        for &i in &image {
            if i >= n || seen[i] {
                return Err(Error::Input(format!(
                    "{image:?} is not a permutation of 0..{n}"
                )));
            }
            seen[i] = true;
        }
        Ok(Self { image })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            image: (0..n).collect(),
        }
    }

    /// Swaps `a` and `b`.
    pub fn transposition(n: usize, a: usize, b: usize) -> Self {
        let mut image: Vec<usize> = (0..n).collect();
        image.swap(a, b);
        Self { image }
    }

    /// Uniformly random permutation (Fisher-Yates).
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut image: Vec<usize> = (0..n).collect();
        image.shuffle(rng);
        Self { image }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.image.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.image.is_empty()
    }

    #[inline]
    pub fn image(&self) -> &[usize] {
        &self.image
    }

    #[inline]
    pub fn get(&self, i: usize) -> usize {
        self.image[i]
    }

    pub fn is_identity(&self) -> bool {
        self.image.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// `self ∘ other`: acting with the result equals acting with `other`
    /// first and then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len(), "composing permutations of different size");
        Self {
            image: other.image.iter().map(|&j| self.image[j]).collect(),
        }
    }

    pub fn inverse(&self) -> Self {
        let mut image = vec![0; self.len()];
        for (i, &j) in self.image.iter().enumerate() {
            image[j] = i;
        }
        Self { image }
    }

    /// `output[image[i]] = z[i]`.
    pub fn apply<T: Copy>(&self, z: &[T]) -> Result<Vec<T>> {
        check_dim("permutation action", self.len(), z.len())?;
        let mut out = z.to_vec();
        for (i, &x) in z.iter().enumerate() {
            out[self.image[i]] = x;
        }
        Ok(out)
    }

    /// Applies the permutation to the leading axis of a row-major buffer
    /// with `stride` entries per position.
    pub fn apply_rows<T: Copy>(&self, z: &[T], stride: usize) -> Result<Vec<T>> {
        check_dim("permutation row action", self.len() * stride, z.len())?;
        let mut out = z.to_vec();
        for i in 0..self.len() {
            let dst = self.image[i] * stride;
            out[dst..dst + stride].copy_from_slice(&z[i * stride..(i + 1) * stride]);
        }
        Ok(out)
    }

    /// Simultaneous action on both axes of an `n x n x stride` buffer.
    pub fn conjugate<T: Copy>(&self, z: &[T], stride: usize) -> Result<Vec<T>> {
        let n = self.len();
        check_dim("permutation conjugation", n * n * stride, z.len())?;
        let mut out = z.to_vec();
        for i in 0..n {
            for j in 0..n {
                let src = (i * n + j) * stride;
                let dst = (self.image[i] * n + self.image[j]) * stride;
                out[dst..dst + stride].copy_from_slice(&z[src..src + stride]);
            }
        }
        Ok(out)
    }

    /// Permutation matrix `P` with `P z = apply(z)`.
    pub fn matrix<T: Scalar>(&self) -> Matrix<T> {
        let n = self.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &j) in self.image.iter().enumerate() {
            m[(j, i)] = T::one();
        }
        m
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;
    fn try_from(image: Vec<usize>) -> Result<Self> {
        Self::new(image)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.image
    }
}

/// Acts on a vector: `output[p.image[i]] = z[i]`.
pub fn apply_perm_vector<T: Copy>(p: &Permutation, z: &[T]) -> Result<Vec<T>> {
    p.apply(z)
}
