//! Two-component principal component analysis.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Mean, top-2 orthonormal directions and their variances (sample
/// covariance, divisor `m - 1`). Each component's largest-magnitude entry is
/// positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

pub fn pca_fit<T: Scalar>(data: &Matrix<T>) -> Result<PcaModel> {
    let (m, d) = (data.rows(), data.cols());
    if m < 3 || d < 2 {
        return Err(Error::Input(format!("PCA needs at least 3 rows and 2 columns, got {m}x{d}")));
    }
    if data.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("PCA input contains non-finite values".into()));
    }
    let mut mean = vec![0.0; d];
    for row in data.row_iter() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in data.row_iter() {
        let c: Vec<f64> = row.iter().zip(&mean).map(|(v, mu)| v.as_f64() - mu).collect();
        for a in 0..d {
            for b in a..d {
                cov[(a, b)] += c[a] * c[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / (m - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut components = Vec::with_capacity(2);
    let mut explained_variance = Vec::with_capacity(2);
    for &idx in &order[..2] {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let lead = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Projects rows onto the two components (an `m x 2` matrix).
    pub fn transform<T: Scalar>(&self, data: &Matrix<T>) -> Result<Matrix<f64>> {
        crate::error::check_dim("PCA input width", self.dim(), data.cols())?;
        let mut out = Vec::with_capacity(data.rows() * 2);
        for row in data.row_iter() {
            for comp in &self.components {
                out.push(
                    row.iter()
                        .zip(&self.mean)
                        .zip(comp)
                        .map(|((v, mu), c)| (v.as_f64() - mu) * c)
                        .sum(),
                );
            }
        }
        Matrix::from_vec(data.rows(), 2, out)
    }
}

pub fn pca_transform<T: Scalar>(model: &PcaModel, data: &Matrix<T>) -> Result<Matrix<f64>> {
    model.transform(data)
}
