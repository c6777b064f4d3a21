//! k-nearest-neighbor regression and classification scores.
//!
//! Neighbors are ranked by Euclidean distance with ties going to the lower
//! training index.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{squared_euclidean, Scalar};

/// Score for one neighbor count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub score: f64,
}

fn check_sets<T: Scalar>(train: &Matrix<T>, train_len: usize, test: &Matrix<T>, test_len: usize, ks: &[usize]) -> Result<usize> {
    if train.rows() == 0 || test.rows() == 0 {
        return Err(Error::Input("kNN needs non-empty train and test sets".into()));
    }
    check_dim("train targets", train.rows(), train_len)?;
    check_dim("test targets", test.rows(), test_len)?;
    check_dim("test latent width", train.cols(), test.cols())?;
    let k_max = ks.iter().copied().max().ok_or_else(|| Error::Input("no k values given".into()))?;
    if ks.contains(&0) || k_max > train.rows() {
        return Err(Error::Input(format!(
            "k values must lie in 1..={} (the training set size)",
            train.rows()
        )));
    }
    Ok(k_max)
}

/// The `k` nearest training rows of `query`, nearest first.
pub fn nearest<T: Scalar>(train: &Matrix<T>, query: &[T], k: usize) -> Vec<usize> {
    let mut cand: Vec<(T, usize)> = train.row_iter().enumerate().map(|(i, r)| (squared_euclidean(r, query), i)).collect();
    let by = |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1));
    let k = k.min(cand.len());
    if k < cand.len() {
        cand.select_nth_unstable_by(k, by);
        cand.truncate(k);
    }
    cand.sort_by(by);
    cand.into_iter().map(|(_, i)| i).collect()
}

fn neighbor_lists<T: Scalar>(train: &Matrix<T>, test: &Matrix<T>, k_max: usize) -> Vec<Vec<usize>> {
    (0..test.rows())
        .into_par_iter()
        .map(|q| nearest(train, test.row(q), k_max))
        .collect()
}

/// Mean absolute error of the k-neighbor mean prediction, per `k`.
pub fn knn_regress_eval<T: Scalar>(
    train: &Matrix<T>,
    train_y: &[f64],
    test: &Matrix<T>,
    test_y: &[f64],
    ks: &[usize],
) -> Result<Vec<KScore>> {
    let k_max = check_sets(train, train_y.len(), test, test_y.len(), ks)?;
    let lists = neighbor_lists(train, test, k_max);
    Ok(ks
        .iter()
        .map(|&k| {
            let total: f64 = lists
                .iter()
                .zip(test_y)
                .map(|(nb, &y)| {
                    let pred = nb[..k].iter().map(|&i| train_y[i]).sum::<f64>() / k as f64;
                    (pred - y).abs()
                })
                .sum();
            KScore {
                k,
                score: total / test_y.len() as f64,
            }
        })
        .collect())
}

/// Majority vote, ties to the smallest label.
pub fn majority(labels: impl IntoIterator<Item = usize>) -> usize {
    let mut counts: std::collections::BTreeMap<usize, usize> = Default::default();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let mut best = (0, usize::MAX);
    for (&label, &c) in &counts {
        if c > best.0 {
            best = (c, label);
        }
    }
    best.1
}

/// F1 averaged over the classes present in `truth`.
pub fn macro_f1(truth: &[usize], pred: &[usize]) -> f64 {
    assert_eq!(truth.len(), pred.len());
    let classes: std::collections::BTreeSet<usize> = truth.iter().copied().collect();
    if classes.is_empty() {
        return 0.0;
    }
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let tp = truth.iter().zip(pred).filter(|&(&t, &p)| t == c && p == c).count() as f64;
            let fp = truth.iter().zip(pred).filter(|&(&t, &p)| t != c && p == c).count() as f64;
            let fn_ = truth.iter().zip(pred).filter(|&(&t, &p)| t == c && p != c).count() as f64;
            if tp == 0.0 {
                0.0
            } else {
                2.0 * tp / (2.0 * tp + fp + fn_)
            }
        })
        .sum();
    total / classes.len() as f64
}

/// Macro-F1 of the majority-vote classifier, per `k`.
pub fn knn_classify_eval<T: Scalar>(
    train: &Matrix<T>,
    train_labels: &[usize],
    test: &Matrix<T>,
    test_labels: &[usize],
    ks: &[usize],
) -> Result<Vec<KScore>> {
    let k_max = check_sets(train, train_labels.len(), test, test_labels.len(), ks)?;
    let lists = neighbor_lists(train, test, k_max);
    Ok(ks
        .iter()
        .map(|&k| {
            let pred: Vec<usize> = lists
                .iter()
                .map(|nb| majority(nb[..k].iter().map(|&i| train_labels[i])))
                .collect();
            KScore {
                k,
                score: macro_f1(test_labels, &pred),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn exact_match_has_zero_error() {
        let train = m(&[&[0.0, 0.0], &[1.0, 0.0], &[5.0, 5.0]]);
        let r = knn_regress_eval(&train, &[1.0, 2.0, 3.0], &m(&[&[1.0, 0.0]]), &[2.0], &[1]).unwrap();
        assert_eq!(r[0].score, 0.0);
        let r = knn_regress_eval(&train, &[4.0; 3], &m(&[&[9.0, 1.0], &[0.1, 0.2]]), &[4.0; 2], &[1, 2, 3]).unwrap();
        assert!(r.iter().all(|s| s.score == 0.0));
    }

    #[test]
    fn small_instance_by_hand() {
        // 1-D points 0, 1, 2, 4, 8 with targets 10, 20, 30, 40, 50.
        let train = m(&[&[0.0], &[1.0], &[2.0], &[4.0], &[8.0]]);
        let ty = [10.0, 20.0, 30.0, 40.0, 50.0];
        // query 1.5: nearest 1 and 2 (tie at 0.5, lower index first) -> 25
        // query 6: nearest 4 (dist 2) and 8 (dist 2), mean 45
        let r = knn_regress_eval(&train, &ty, &m(&[&[1.5], &[6.0]]), &[20.0, 47.0], &[1, 2]).unwrap();
        // k=1: 1.5 -> index 1 (20), 6 -> index 3 (40); errors 0 and 7
        assert_eq!(r[0].score, 3.5);
        // k=2: predictions 25 and 45; errors 5 and 2
        assert_eq!(r[1].score, 3.5);
    }

    #[test]
    fn tie_breaks_to_lower_index() {
        let train = m(&[&[1.0], &[-1.0], &[1.0]]);
        assert_eq!(nearest(&train, &[0.0], 3), vec![0, 1, 2]);
        assert_eq!(nearest(&train, &[0.9], 2), vec![0, 2]);
    }

    #[test]
    fn classify_identity_and_clusters() {
        let train = m(&[&[0.0], &[0.1], &[0.2], &[10.0], &[10.1], &[10.2]]);
        let labels = [0, 0, 0, 1, 1, 1];
        let r = knn_classify_eval(&train, &labels, &train, &labels, &[1, 3]).unwrap();
        assert!(r.iter().all(|s| s.score == 1.0));
    }

    #[test]
    fn vote_tie_goes_to_smallest_label() {
        assert_eq!(majority([3, 1, 3, 1]), 1);
        // neighbors of 0.0: indices 0..4 at distances 1, 1, 2, 2 with labels 2, 0, 0, 2
        let train = m(&[&[1.0], &[-1.0], &[2.0], &[-2.0]]);
        let r = knn_classify_eval(&train, &[2, 0, 0, 2], &m(&[&[0.0]]), &[0], &[4]).unwrap();
        assert_eq!(r[0].score, 1.0);
    }

    #[test]
    fn macro_f1_by_hand() {
        // class 0: tp 1, fp 1, fn 1 -> 0.5; class 1: tp 1, fp 1, fn 1 -> 0.5; class 2 absent from truth
        assert_eq!(macro_f1(&[0, 0, 1, 1], &[0, 1, 1, 0]), 0.5);
        // class 1 never predicted correctly
        assert_eq!(macro_f1(&[0, 1], &[0, 2]), 0.5);
    }

    #[test]
    fn rejects_bad_inputs() {
        let train = m(&[&[0.0], &[1.0]]);
        assert!(knn_regress_eval(&train, &[0.0, 1.0], &m(&[&[0.5]]), &[0.0], &[3]).is_err());
        assert!(knn_regress_eval(&train, &[0.0], &m(&[&[0.5]]), &[0.0], &[1]).is_err());
        assert!(knn_classify_eval(&train, &[0, 1], &Matrix::zeros(0, 1), &[], &[1]).is_err());
    }
}
