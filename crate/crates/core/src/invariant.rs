//! Invariant maps `s: Z -> Z_s` and their application to latent datasets.
//!
//! Kinds provided:
//! - sorting cross section for `S_n` acting on coordinates (isometric onto
//!   the sorted cone);
//! - Reynolds-averaged random linear maps `M = |G|⁻¹ Σ_g W ρ(g)` for
//!   enumerable groups;
//! - random combinations of the permutation-invariant partition functionals
//!   (sum for vectors; diagonal and off-diagonal sums for matrices);
//! - sum / mean / max pooling over the node axis;
//! - per-block norms for rotation layouts. This one is nonlinear: linear
//!   invariant maps annihilate every nonzero-frequency block, so block
//!   magnitudes are what carries signal for pure rotation layouts.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::group::{enumerate_group, GroupElement, GroupSpec, Permutation};
use crate::linalg::Matrix;
use crate::rng::seeded;
use crate::scalar::Scalar;

/// Largest output dimension picked by default for random projections.
pub const DEFAULT_MAX_OUT_DIM: usize = 32;

pub fn default_out_dim(in_dim: usize) -> usize {
    in_dim.min(DEFAULT_MAX_OUT_DIM)
}

/// Sorted representative `s(z) = σ_z·z` and the stable sorting permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct SortResult<T> {
    pub sorted: Vec<T>,
    /// Applying `perm` to the input yields `sorted`.
    pub perm: Permutation,
}

/// Ascending sort with the stable sorting permutation.
pub fn sort_projection<T: Scalar>(z: &[T]) -> Result<SortResult<T>> {
    if let Some(i) = z.iter().position(|x| x.is_nan()) {
        return Err(Error::Input(format!("NaN at coordinate {i}")));
    }
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[a].partial_cmp(&z[b]).expect("no NaN"));
    let mut image = vec![0; z.len()];
    for (rank, &i) in order.iter().enumerate() {
        image[i] = rank;
    }
    Ok(SortResult {
        sorted: order.iter().map(|&i| z[i]).collect(),
        perm: Permutation::new(image).expect("ranks form a permutation"),
    })
}

/// `true` when coordinates are non-decreasing, i.e. `z` lies in the sorted cone.
pub fn is_sorted<T: Scalar>(z: &[T]) -> bool {
    z.windows(2).all(|w| w[0] <= w[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Sum,
    Mean,
    Max,
}

/// Reduces the node axis of an `n x channels` node-major buffer.
/// Padding rows are counted like any other row. Sums run over the sorted
/// column, so reordering rows leaves the result bit-identical.
pub fn pool<T: Scalar>(z: &[T], channels: usize, kind: PoolKind) -> Result<Vec<T>> {
    if z.is_empty() || channels == 0 {
        return Err(Error::Input("cannot pool an empty input".into()));
    }
    if z.len() % channels != 0 {
        return Err(Error::Dimension {
            context: "pooling input",
            expected: channels * (z.len() / channels + 1),
            got: z.len(),
        });
    }
    let n = z.len() / channels;
    let mut out = Vec::with_capacity(channels);
    let mut column = Vec::with_capacity(n);
    for c in 0..channels {
        column.clear();
        column.extend(z.iter().skip(c).step_by(channels).copied());
        out.push(match kind {
            PoolKind::Max => column.iter().copied().fold(T::neg_infinity(), T::max),
            PoolKind::Sum | PoolKind::Mean => {
                column.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                column.iter().copied().sum()
            }
        });
    }
    if kind == PoolKind::Mean {
        let n = T::from_usize_lossy(n);
        out.iter_mut().for_each(|o| *o /= n);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Sort,
    ReynoldsLinear,
    PartitionBasis,
    PoolSum,
    PoolMean,
    PoolMax,
    BlockNorm,
}

impl std::str::FromStr for MapKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sort" => Self::Sort,
            "reynolds" | "reynolds_linear" => Self::ReynoldsLinear,
            "partition" | "partition_basis" => Self::PartitionBasis,
            "pool-sum" | "pool_sum" => Self::PoolSum,
            "pool-mean" | "pool_mean" => Self::PoolMean,
            "pool-max" | "pool_max" => Self::PoolMax,
            "block-norm" | "block_norm" => Self::BlockNorm,
            other => return Err(Error::Input(format!("unknown projection kind '{other}'"))),
        })
    }
}

/// A realized invariant map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct InvariantMap<T> {
    pub kind: MapKind,
    /// Coefficients of the linear kinds.
    pub matrix: Option<Matrix<T>>,
    pub group: GroupSpec,
    pub in_dim: usize,
    pub out_dim: usize,
    pub seed: u64,
    /// Channels per node position (pooling and partition kinds).
    pub channels: usize,
    /// Tensor order of the input (partition kind).
    pub order: usize,
}

/// `|G|⁻¹ Σ_g W ρ(g)` over the enumerated group.
pub fn reynolds_average<T: Scalar>(spec: &GroupSpec, w: &Matrix<T>, cap: usize) -> Result<Matrix<T>> {
    check_dim("Reynolds projection input", spec.dim(), w.cols())?;
    let elements = enumerate_group(spec, cap).map_err(|e| match e {
        Error::EnumerationCap { order, cap, .. } => Error::EnumerationCap {
            order,
            cap,
            hint: "; use the partition-basis projection kind instead",
        },
        other => other,
    })?;
    let mut acc = Matrix::zeros(w.rows(), w.cols());
    for g in &elements {
        let rho = spec.representation::<T>(g)?;
        let wg = w.matmul(&rho)?;
        for r in 0..acc.rows() {
            for (a, &b) in acc.row_mut(r).iter_mut().zip(wg.row(r)) {
                *a += b;
            }
        }
    }
    let count = T::from_usize_lossy(elements.len());
    Ok(acc.map(|x| x / count))
}

fn gaussian_matrix<T: Scalar>(rows: usize, cols: usize, seed: u64) -> Matrix<T> {
    let mut rng = seeded(seed);
    Matrix::from_fn(rows, cols, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)))
}

/// Random linear map made invariant by Reynolds averaging; rows of the
/// pre-average matrix are i.i.d. standard normal.
pub fn reynolds_random_projection<T: Scalar>(
    spec: &GroupSpec,
    in_dim: usize,
    out_dim: usize,
    seed: u64,
    cap: usize,
) -> Result<InvariantMap<T>> {
    check_dim("Reynolds projection input", spec.dim(), in_dim)?;
    if out_dim == 0 {
        return Err(Error::Input("out_dim must be at least 1".into()));
    }
    let w = gaussian_matrix::<T>(out_dim, in_dim, seed);
    Ok(InvariantMap {
        kind: MapKind::ReynoldsLinear,
        matrix: Some(reynolds_average(spec, &w, cap)?),
        group: spec.clone(),
        in_dim,
        out_dim,
        seed,
        channels: 1,
        order: 1,
    })
}

/// Number of invariant partition functionals of a tensor of the given order.
fn partition_functionals(order: usize) -> Result<usize> {
    match order {
        1 => Ok(1),
        2 => Ok(2),
        o => Err(Error::Unsupported(format!("partition projection of order {o} (supported: 1, 2)"))),
    }
}

/// Random combination of the invariant partition functionals per channel.
/// Coefficient column `b * channels + c` weights functional `b` of channel `c`.
pub fn partition_invariant_projection<T: Scalar>(
    n: usize,
    channels: usize,
    out_dim: usize,
    order: usize,
    seed: u64,
) -> Result<InvariantMap<T>> {
    let b = partition_functionals(order)?;
    if out_dim == 0 {
        return Err(Error::Input("out_dim must be at least 1".into()));
    }
    let coeffs = gaussian_matrix::<T>(out_dim, b * channels, seed);
    let mut map = InvariantMap::partition_with_coefficients(n, channels, order, coeffs)?;
    map.seed = seed;
    Ok(map)
}

impl<T: Scalar> InvariantMap<T> {
    pub fn sort(n: usize) -> Self {
        Self {
            kind: MapKind::Sort,
            matrix: None,
            group: GroupSpec::Symmetric { n },
            in_dim: n,
            out_dim: n,
            seed: 0,
            channels: 1,
            order: 1,
        }
    }

    pub fn pooling(n: usize, channels: usize, kind: PoolKind) -> Self {
        Self {
            kind: match kind {
                PoolKind::Sum => MapKind::PoolSum,
                PoolKind::Mean => MapKind::PoolMean,
                PoolKind::Max => MapKind::PoolMax,
            },
            matrix: None,
            group: GroupSpec::Symmetric { n },
            in_dim: n * channels,
            out_dim: channels,
            seed: 0,
            channels,
            order: 1,
        }
    }

    pub fn block_norm(spec: &GroupSpec) -> Result<Self> {
        let GroupSpec::Cyclic { freqs, .. } = spec else {
            return Err(Error::Input("block norms need a cyclic rotation layout".into()));
        };
        Ok(Self {
            kind: MapKind::BlockNorm,
            matrix: None,
            group: spec.clone(),
            in_dim: spec.dim(),
            out_dim: freqs.len(),
            seed: 0,
            channels: 1,
            order: 1,
        })
    }

    /// Partition map with explicit coefficients (`out_dim x b(order)·channels`).
    pub fn partition_with_coefficients(
        n: usize,
        channels: usize,
        order: usize,
        coeffs: Matrix<T>,
    ) -> Result<Self> {
        let b = partition_functionals(order)?;
        check_dim("partition coefficients", b * channels, coeffs.cols())?;
        Ok(Self {
            kind: MapKind::PartitionBasis,
            out_dim: coeffs.rows(),
            matrix: Some(coeffs),
            group: GroupSpec::Symmetric { n },
            in_dim: n.pow(order as u32) * channels,
            seed: 0,
            channels,
            order,
        })
    }

    fn n(&self) -> usize {
        match &self.group {
            GroupSpec::Symmetric { n } => *n,
            GroupSpec::Cyclic { .. } => self.in_dim,
        }
    }

    /// Applies the map to one latent vector.
    pub fn apply(&self, z: &[T]) -> Result<Vec<T>> {
        check_dim("invariant map input", self.in_dim, z.len())?;
        match self.kind {
            MapKind::Sort => Ok(sort_projection(z)?.sorted),
            MapKind::PoolSum => pool(z, self.channels, PoolKind::Sum),
            MapKind::PoolMean => pool(z, self.channels, PoolKind::Mean),
            MapKind::PoolMax => pool(z, self.channels, PoolKind::Max),
            MapKind::ReynoldsLinear => self.matrix.as_ref().expect("linear map").mul_vec(z),
            MapKind::PartitionBasis => {
                let features = self.partition_features(z);
                self.matrix.as_ref().expect("linear map").mul_vec(&features)
            }
            MapKind::BlockNorm => {
                let GroupSpec::Cyclic { freqs, .. } = &self.group else { unreachable!() };
                let mut at = 0;
                Ok(freqs
                    .iter()
                    .map(|&f| {
                        if f == 0 {
                            at += 1;
                            z[at - 1]
                        } else {
                            at += 2;
                            z[at - 2].hypot(z[at - 1])
                        }
                    })
                    .collect())
            }
        }
    }

    /// Invariant functionals, laid out `b * channels + c`.
    fn partition_features(&self, z: &[T]) -> Vec<T> {
        let (n, c) = (self.n(), self.channels);
        if self.order == 1 {
            return pool(z, c, PoolKind::Sum).expect("validated shape");
        }
        let mut out = vec![T::zero(); 2 * c];
        for i in 0..n {
            for j in 0..n {
                let base = (i * n + j) * c;
                let slot = if i == j { 0 } else { c };
                for ch in 0..c {
                    out[slot + ch] += z[base + ch];
                }
            }
        }
        out
    }

    /// Group action on this map's input layout.
    pub fn act_input(&self, g: &GroupElement, z: &[T]) -> Result<Vec<T>> {
        match (self.kind, g) {
            (MapKind::PartitionBasis, GroupElement::Perm(p)) if self.order == 2 => {
                p.conjugate(z, self.channels)
            }
            (
                MapKind::PartitionBasis | MapKind::PoolSum | MapKind::PoolMean | MapKind::PoolMax,
                GroupElement::Perm(p),
            ) => p.apply_rows(z, self.channels),
            _ => self.group.act(g, z),
        }
    }

    /// Largest `|s(g·z) - s(z)|` over the given elements.
    pub fn invariance_defect(&self, z: &[T], elements: &[GroupElement]) -> Result<T> {
        let base = self.apply(z)?;
        let mut worst = T::zero();
        for g in elements {
            let moved = self.apply(&self.act_input(g, z)?)?;
            for (a, b) in base.iter().zip(&moved) {
                worst = worst.max((*a - *b).abs());
            }
        }
        Ok(worst)
    }
}

/// Projected dataset and the output columns that carry no variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected<T> {
    pub data: Matrix<T>,
    pub zero_variance_columns: Vec<usize>,
}

/// Applies `map` to every row. A few rows are re-acted by random group
/// elements as an invariance spot check.
pub fn apply_invariant_map<T: Scalar>(map: &InvariantMap<T>, dataset: &Matrix<T>) -> Result<Projected<T>> {
    check_dim("dataset columns", map.in_dim, dataset.cols())?;
    let mut data = Matrix::zeros(dataset.rows(), map.out_dim);
    for (r, row) in dataset.row_iter().enumerate() {
        data.row_mut(r).copy_from_slice(&map.apply(row)?);
    }

    let mut rng = seeded(map.seed ^ 0x5eed_c4ec);
    for row in dataset.row_iter().take(4) {
        let elements: Vec<GroupElement> = (0..4).map(|_| map.group.sample(&mut rng)).collect();
        let scale = row.iter().fold(T::one(), |m, x| m.max(x.abs()));
        let defect = map.invariance_defect(row, &elements)?;
        if defect > T::lit(1e-9) * scale * T::from_usize_lossy(map.in_dim.max(1)) {
            return Err(Error::InvarianceViolation(format!(
                "{:?} map changed by {defect} under the group action",
                map.kind
            )));
        }
    }

    let zero_variance_columns: Vec<usize> = (0..map.out_dim)
        .filter(|&c| {
            let first = data.row_iter().next().map(|r| r[c]);
            data.row_iter().all(|r| Some(r[c]) == first)
        })
        .collect();
    if !zero_variance_columns.is_empty() && dataset.rows() > 1 {
        log::warn!(
            "invariant map {:?} produced {} zero-variance column(s)",
            map.kind,
            zero_variance_columns.len()
        );
    }
    Ok(Projected {
        data,
        zero_variance_columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::DEFAULT_ENUMERATION_CAP as CAP;
    use crate::rng::seeded;

    fn sym(n: usize) -> GroupSpec {
        GroupSpec::symmetric(n).unwrap()
    }

    #[test]
    fn sort_examples() {
        let r = sort_projection(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(r.sorted, vec![1.0, 2.0, 3.0]);
        assert_eq!(r.perm.apply(&[3.0, 1.0, 2.0]).unwrap(), r.sorted);
        let r = sort_projection(&[1.0, 2.0, 3.0]).unwrap();
        assert!(r.perm.is_identity());
        let dup = sort_projection(&[2.0, 2.0, 1.0]).unwrap();
        assert_eq!(dup.sorted, vec![1.0, 2.0, 2.0]);
        // stable: first 2.0 keeps the lower rank
        assert_eq!(dup.perm.image(), &[1, 2, 0]);
        assert_eq!(sort_projection(&[2.0, 1.0, 2.0]).unwrap().sorted, dup.sorted);
    }

    #[test]
    fn sort_rejects_nan() {
        assert!(sort_projection(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn reynolds_hand_example() {
        let w = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let m = reynolds_average(&sym(2), &w, CAP).unwrap();
        assert_eq!(m.row(0), &[0.5, 0.5]);
        assert_eq!(m.mul_vec(&[2.0, 4.0]).unwrap(), vec![3.0]);
        assert_eq!(m.mul_vec(&[4.0, 2.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn reynolds_symmetric_rows_constant() {
        let map = reynolds_random_projection::<f64>(&sym(5), 5, 4, 3, CAP).unwrap();
        let m = map.matrix.as_ref().unwrap();
        for r in 0..4 {
            let row = m.row(r);
            for &x in row {
                assert!((x - row[0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reynolds_fixes_every_representation() {
        for spec in [sym(4), GroupSpec::cyclic(6, vec![0, 1, 2]).unwrap()] {
            let d = spec.dim();
            let map = reynolds_random_projection::<f64>(&spec, d, 3, 9, CAP).unwrap();
            let m = map.matrix.unwrap();
            for g in enumerate_group(&spec, CAP).unwrap() {
                let mg = m.matmul(&spec.representation(&g).unwrap()).unwrap();
                assert!(mg.max_abs_diff(&m) < 1e-12);
            }
        }
    }

    #[test]
    fn reynolds_annihilates_rotation_block() {
        let spec = GroupSpec::cyclic(4, vec![1]).unwrap();
        let map = reynolds_random_projection::<f64>(&spec, 2, 3, 1, CAP).unwrap();
        for &x in map.matrix.unwrap().as_slice() {
            assert!(x.abs() < 1e-12);
        }
    }

    #[test]
    fn reynolds_cap_points_to_partition_kind() {
        let err = reynolds_random_projection::<f64>(&sym(9), 9, 2, 0, CAP).unwrap_err();
        assert!(err.to_string().contains("partition-basis"), "{err}");
    }

    #[test]
    fn partition_examples() {
        let sum = InvariantMap::partition_with_coefficients(3, 1, 1, Matrix::from_rows(&[vec![1.0]]).unwrap())
            .unwrap();
        assert_eq!(sum.apply(&[1.0, 2.0, 3.0]).unwrap(), vec![6.0]);
        let trace =
            InvariantMap::partition_with_coefficients(3, 1, 2, Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap())
                .unwrap();
        let eye = Matrix::<f64>::identity(3);
        assert_eq!(trace.apply(eye.as_slice()).unwrap(), vec![3.0]);
        assert!(partition_invariant_projection::<f64>(3, 1, 2, 3, 0).is_err());
    }

    #[test]
    fn partition_order_two_conjugation_invariance() {
        let map = partition_invariant_projection::<f64>(4, 1, 5, 2, 17).unwrap();
        let mut rng = seeded(4);
        let x: Vec<f64> = (0..16).map(|_| rng.sample(StandardNormal)).collect();
        let base = map.apply(&x).unwrap();
        for g in enumerate_group(&sym(4), CAP).unwrap() {
            let out = map.apply(&map.act_input(&g, &x).unwrap()).unwrap();
            for (a, b) in base.iter().zip(&out) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pool_examples() {
        assert_eq!(pool(&[2.0, 4.0], 1, PoolKind::Mean).unwrap(), vec![3.0]);
        for g in enumerate_group(&sym(3), CAP).unwrap() {
            let z = g.as_perm().unwrap().apply(&[3.0, 1.0, 2.0]).unwrap();
            assert_eq!(pool(&z, 1, PoolKind::Max).unwrap(), vec![3.0]);
        }
        assert!(pool::<f64>(&[], 1, PoolKind::Sum).is_err());
    }

    #[test]
    fn pooling_counts_padding_rows() {
        // two channels; rows 3 and 4 stand for padded (not-a-node) slots
        let z = [1.0, 0.5, 2.0, 0.25, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let expected = vec![2.0, 0.75];
        for g in enumerate_group(&sym(5), CAP).unwrap() {
            let moved = g.as_perm().unwrap().apply_rows(&z, 2).unwrap();
            assert_eq!(pool(&moved, 2, PoolKind::Sum).unwrap(), expected);
        }
    }

    #[test]
    fn block_norm_is_rotation_invariant() {
        let spec = GroupSpec::cyclic(360, vec![0, 1, 3]).unwrap();
        let map = InvariantMap::<f64>::block_norm(&spec).unwrap();
        let z = [0.7, 3.0, 4.0, -1.0, 0.0];
        assert_eq!(map.apply(&z).unwrap(), vec![0.7, 5.0, 1.0]);
        let mut rng = seeded(2);
        let elements: Vec<_> = (0..50).map(|_| spec.sample(&mut rng)).collect();
        assert!(map.invariance_defect(&z, &elements).unwrap() < 1e-12);
    }

    #[test]
    fn apply_dataset_sorts_rows_and_flags_zero_map() {
        let data = Matrix::from_rows(&[vec![3.0, 1.0, 2.0], vec![0.0, -1.0, 5.0]]).unwrap();
        let out = apply_invariant_map(&InvariantMap::sort(3), &data).unwrap();
        assert!(out.data.row_iter().all(is_sorted));
        assert!(out.zero_variance_columns.is_empty());

        let zero = InvariantMap::partition_with_coefficients(3, 1, 1, Matrix::zeros(2, 1)).unwrap();
        let out = apply_invariant_map(&zero, &data).unwrap();
        assert!(out.data.as_slice().iter().all(|&x| x == 0.0));
        assert_eq!(out.zero_variance_columns, vec![0, 1]);
    }

    #[test]
    fn apply_dataset_reynolds_rows_and_permuted_copies() {
        let map = reynolds_random_projection::<f64>(&sym(6), 6, 4, 5, CAP).unwrap();
        let mut rng = seeded(8);
        let row: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
        let p = Permutation::random(6, &mut rng);
        let data = Matrix::from_rows(&[row.clone(), p.apply(&row).unwrap()]).unwrap();
        let out = apply_invariant_map(&map, &data).unwrap().data;
        for c in 0..4 {
            assert!((out[(0, c)] - out[(1, c)]).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_dataset_dimension_mismatch() {
        let data = Matrix::<f64>::zeros(2, 4);
        assert!(apply_invariant_map(&InvariantMap::sort(3), &data).is_err());
    }
}
