//! Tools for analyzing equivariant latent representations.
//!
//! Equivariant encoders represent each input by a whole orbit of latent
//! codes. This crate measures distances between orbits, maps codes onto
//! invariant representations, trains a small permutation-equivariant graph
//! VAE to produce such codes, and runs the downstream analyses (PCA, kNN,
//! interpolation stability) on either representation.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

pub mod analysis;
pub mod error;
pub mod group;
pub mod invariant;
pub mod linalg;
pub mod nn;
pub mod quotient;
pub mod rng;
pub mod scalar;
pub mod selftest;
pub mod vae;

pub use error::{Error, Result};
pub use group::{GroupElement, GroupSpec, Graph, Permutation};
pub use scalar::Scalar;

pub type Matrix = linalg::Matrix<f64>;
pub type InvariantMap = invariant::InvariantMap<f64>;
pub type SortResult = invariant::SortResult<f64>;
pub type QuotientDistanceResult = quotient::QuotientDistanceResult<f64>;
pub type VaeParams = vae::VaeParams<f64>;

pub type Matrix32 = linalg::Matrix<f32>;
pub type InvariantMap32 = invariant::InvariantMap<f32>;
pub type VaeParams32 = vae::VaeParams<f32>;
