//! Downstream analyses of latent codes: PCA, kNN scores, interpolation.

pub mod interp;
pub mod knn;
pub mod pca;
pub mod rotation;

pub use interp::{
    decode_path, hamming, interpolate, interpolation_stability, mean_consecutive_hamming, Histogram,
    InterpolationMode, InterpolationPath, StabilityReport, STABILITY_BIN_WIDTH,
};
pub use knn::{knn_classify_eval, knn_regress_eval, macro_f1, majority, nearest, KScore};
pub use pca::{pca_fit, pca_transform, PcaModel};
pub use rotation::{generate_rotation_latents, RotationLatentSpec, RotationLatents};
