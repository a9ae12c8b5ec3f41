//! Solution-quality metrics over landscape minima: misclassification vectors
//! and distances, parameter distances, ROC/AUC and the AUC-versus-steps
//! experiment on the triatomic quench data.

mod auc_steps;

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ClassificationDataset, NeuralNetSpec};
use crate::numcore::ParamVector;

pub use auc_steps::{auc_table, auc_vs_steps, AucRow, AucStepsConfig, AucTable, TrainedMinima};

/// Number of bins per axis of the (d, ℓ) joint histogram.
pub const JOINT_BINS: usize = 50;

/// Which test items a solution gets wrong.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissVector {
    pub misses: Vec<bool>,
    /// Fraction of entries that are `true`.
    pub f: f64,
}

impl MissVector {
    pub fn new(misses: Vec<bool>) -> Self {
        let f = misses.iter().filter(|&&m| m).count() as f64 / misses.len().max(1) as f64;
        Self { misses, f }
    }

    pub fn len(&self) -> usize {
        self.misses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.misses.is_empty()
    }
}

/// Misclassification pattern of weights `w` on `test`. Predictions take the
/// most probable class, ties going to the lowest index.
pub fn miss_vector(spec: &NeuralNetSpec, w: &ParamVector, test: &ClassificationDataset) -> MissVector {
    MissVector::new((0..test.len()).map(|d| spec.predict(w, test.row(d)) != test.labels[d]).collect())
}

/// Fraction of items misclassified by exactly one of the two solutions.
pub fn misclassification_distance(a: &MissVector, b: &MissVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let differ = a.misses.iter().zip(&b.misses).filter(|(x, y)| x != y).count();
    Ok(differ as f64 / a.len().max(1) as f64)
}

/// Counts of minimum pairs binned by parameter distance (rows) and
/// misclassification distance (columns) over the observed ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointHistogram {
    pub d_range: (f64, f64),
    pub ell_range: (f64, f64),
    pub counts: Vec<Vec<usize>>,
    /// `log10(1 + count)` per cell.
    pub log_counts: Vec<Vec<f64>>,
}

fn bin_of(v: f64, (lo, hi): (f64, f64)) -> usize {
    if hi > lo {
        (((v - lo) / (hi - lo) * JOINT_BINS as f64).floor() as usize).min(JOINT_BINS - 1)
    } else {
        0
    }
}

impl JointHistogram {
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        let range = |sel: fn(&(f64, f64)) -> f64| {
            pairs.iter().map(sel).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (d_range, ell_range) = if pairs.is_empty() { ((0.0, 0.0), (0.0, 0.0)) } else { (range(|p| p.0), range(|p| p.1)) };
        let mut counts = vec![vec![0; JOINT_BINS]; JOINT_BINS];
        for &(d, l) in pairs {
            counts[bin_of(d, d_range)][bin_of(l, ell_range)] += 1;
        }
        let log_counts = counts.iter().map(|r| r.iter().map(|&c| (1.0 + c as f64).log10()).collect()).collect();
        Self { d_range, ell_range, counts, log_counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrices {
    /// Misclassification distances ℓ_ij.
    pub ell: DMatrix<f64>,
    /// Euclidean parameter distances d_ij.
    pub d: DMatrix<f64>,
    /// Misclassification fraction of each minimum.
    pub f: Vec<f64>,
    /// Heat-map row order from single-linkage clustering on ℓ.
    pub order: Vec<usize>,
    pub joint: JointHistogram,
}

/// Pairwise ℓ and d over `minima`, evaluated on `test`.
pub fn distance_matrix(
    spec: &NeuralNetSpec,
    minima: &[ParamVector],
    test: &ClassificationDataset,
) -> Result<DistanceMatrices> {
    if minima.len() < 2 {
        return Err(Error::Precondition(format!("need at least 2 minima, got {}", minima.len())));
    }
    if let Some(w) = minima.iter().find(|w| w.len() != spec.n_params()) {
        return Err(Error::DimensionMismatch { expected: spec.n_params(), got: w.len() });
    }
    let misses: Vec<MissVector> = minima.iter().map(|w| miss_vector(spec, w, test)).collect();
    let n = minima.len();
    let mut ell = DMatrix::zeros(n, n);
    let mut d = DMatrix::zeros(n, n);
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let l = misclassification_distance(&misses[i], &misses[j])?;
            let dist = (&minima[i] - &minima[j]).norm();
            ell[(i, j)] = l;
            ell[(j, i)] = l;
            d[(i, j)] = dist;
            d[(j, i)] = dist;
            pairs.push((dist, l));
        }
    }
    Ok(DistanceMatrices {
        order: single_linkage_order(&ell),
        f: misses.iter().map(|m| m.f).collect(),
        joint: JointHistogram::from_pairs(&pairs),
        ell,
        d,
    })
}

/// Leaf order of the single-linkage dendrogram of a symmetric distance
/// matrix. Pairs merge in order of (distance, i, j); when two clusters join,
/// the one holding the smaller index comes first.
pub fn single_linkage_order(dist: &DMatrix<f64>) -> Vec<usize> {
    let n = dist.nrows();
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    pairs.sort_by(|a, b| dist[*a].total_cmp(&dist[*b]).then(a.cmp(b)));
    let mut owner: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for (i, j) in pairs {
        let (a, b) = (owner[i], owner[j]);
        if a == b {
            continue;
        }
        let (keep, take) = if a < b { (a, b) } else { (b, a) };
        let moved = std::mem::take(&mut members[take]);
        for &m in &moved {
            owner[m] = keep;
        }
        members[keep].extend(moved);
    }
    members.into_iter().flatten().collect()
}

/// ROC curve swept from the highest threshold down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(F_pr, T_pr)` points, from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
    /// Threshold for each point after the first.
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,f_pr,t_pr\n");
        for (k, (f, t)) in self.points.iter().enumerate() {
            let th = if k == 0 { f64::INFINITY } else { self.thresholds[k - 1] };
            let _ = writeln!(s, "{th},{f},{t}");
        }
        s
    }
}

/// ROC from scores and positive flags. A threshold `P` predicts positive when
/// `score >= P`; thresholds are the distinct scores, and the area follows the
/// trapezoid rule (so tied positive/negative pairs count one half).
pub fn roc_from_scores(scores: &[f64], positive: &[bool]) -> Result<RocCurve> {
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch { expected: scores.len(), got: positive.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Domain("non-finite score".into()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Precondition(format!("ROC needs both classes, got {n_pos} positive and {n_neg} negative")));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut k = 0;
    while k < idx.len() {
        let th = scores[idx[k]];
        while k < idx.len() && scores[idx[k]] == th {
            if positive[idx[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let p = (fp as f64 / n_neg as f64, tp as f64 / n_pos as f64);
        let q = points[points.len() - 1];
        auc += (p.0 - q.0) * (p.1 + q.1) / 2.0;
        points.push(p);
        thresholds.push(th);
    }
    Ok(RocCurve { points, thresholds, auc })
}

/// ROC for predicting `positive_class` from its output probability.
pub fn roc_auc(
    spec: &NeuralNetSpec,
    w: &ParamVector,
    test: &ClassificationDataset,
    positive_class: usize,
) -> Result<RocCurve> {
    if positive_class >= spec.n_out {
        return Err(Error::Precondition(format!("class {positive_class} outside 0..{}", spec.n_out)));
    }
    let scores: Vec<f64> = (0..test.len()).map(|d| spec.forward(w, test.row(d)).1[positive_class].exp()).collect();
    let positive: Vec<bool> = test.labels.iter().map(|&c| c == positive_class).collect();
    roc_from_scores(&scores, &positive)
}

/// Symmetric matrix as CSV with a header of column indices, rows and
/// columns permuted by `order`.
pub fn matrix_csv(m: &DMatrix<f64>, order: &[usize]) -> String {
    let mut s = String::from("row");
    for &j in order {
        let _ = write!(s, ",{j}");
    }
    s.push('\n');
    for &i in order {
        let _ = write!(s, "{i}");
        for &j in order {
            let _ = write!(s, ",{}", m[(i, j)]);
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn pair_counting(scores: &[f64], positive: &[bool]) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if positive[i] && !positive[j] {
                    n += 1;
                    sum += if si > sj {
                        1.0
                    } else if si == sj {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        sum / n as f64
    }

    fn spec4() -> NeuralNetSpec {
        NeuralNetSpec { n_in: 2, n_hidden: 3, n_out: 4, lambda: 0.0, regularize_bias: true }
    }

    #[test]
    fn hand_auc_three_quarters() {
        let r = roc_from_scores(&[0.9, 0.4, 0.6, 0.1], &[true, true, false, false]).unwrap();
        assert!((r.auc - 0.75).abs() < 1e-15);
        assert_eq!(r.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(r.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn separating_and_constant_scores() {
        assert_eq!(roc_from_scores(&[0.9, 0.8, 0.2], &[true, true, false]).unwrap().auc, 1.0);
        assert_eq!(roc_from_scores(&[0.5; 6], &[true, false, true, false, false, true]).unwrap().auc, 0.5);
        assert!(roc_from_scores(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn trapezoid_matches_pair_counting_with_ties() {
        for seed in 0..200 {
            let mut r = rng::stream(11, seed);
            let n = r.random_range(2..60);
            // Coarse grid so ties are frequent.
            let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..8) as f64 / 7.0).collect();
            let mut positive: Vec<bool> = (0..n).map(|_| r.random::<bool>()).collect();
            positive[0] = true;
            positive[1] = false;
            let roc = roc_from_scores(&scores, &positive).unwrap();
            assert!((roc.auc - pair_counting(&scores, &positive)).abs() <= 1e-12, "seed {seed}");
            assert!(roc.points.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
        }
    }

    #[test]
    fn zero_weights_predict_class_zero() {
        let spec = spec4();
        let data = ClassificationDataset::new(2, vec![0.3; 8], vec![0, 1, 2, 3], 4).unwrap();
        let mv = miss_vector(&spec, &ParamVector::zeros(spec.n_params()), &data);
        assert_eq!(mv.misses, vec![false, true, true, true]);
        assert_eq!(mv.f, 0.75);
    }

    #[test]
    fn miss_vector_invariant_under_hidden_permutation() {
        let spec = spec4();
        let mut r = rng::seeded(5);
        let w = ParamVector::from_fn(spec.n_params(), |_, _| r.random_range(-2.0..2.0));
        let mut wp = w.clone();
        let perm = [2, 0, 1];
        for (j, &pj) in perm.iter().enumerate() {
            for k in 0..spec.n_in {
                wp[spec.w2(pj, k)] = w[spec.w2(j, k)];
            }
            wp[spec.bh(pj)] = w[spec.bh(j)];
            for i in 0..spec.n_out {
                wp[spec.w1(i, pj)] = w[spec.w1(i, j)];
            }
        }
        let data = crate::models::synthetic_blobs(60, 2, 4, 0.5, 9).unwrap();
        assert_eq!(miss_vector(&spec, &w, &data), miss_vector(&spec, &wp, &data));
    }

    #[test]
    fn distance_examples() {
        let a = MissVector::new(vec![true, false, false, false]);
        let b = MissVector::new(vec![false, true, true, false]);
        let c = MissVector::new(vec![true, true, true, false]);
        assert_eq!(misclassification_distance(&a, &a).unwrap(), 0.0);
        assert!((misclassification_distance(&a, &b).unwrap() - (a.f + b.f)).abs() < 1e-15);
        assert!((misclassification_distance(&a, &c).unwrap() - (c.f - a.f)).abs() < 1e-15);
        assert!(misclassification_distance(&a, &MissVector::new(vec![true])).is_err());
    }

    #[test]
    fn distance_matrix_properties() {
        let spec = spec4();
        let data = crate::models::synthetic_blobs(80, 2, 4, 0.6, 2).unwrap();
        let mut r = rng::seeded(8);
        let mut minima: Vec<ParamVector> =
            (0..6).map(|_| ParamVector::from_fn(spec.n_params(), |_, _| r.random_range(-2.0..2.0))).collect();
        minima.push(minima[2].clone());
        let m = distance_matrix(&spec, &minima, &data).unwrap();
        let n = minima.len();
        for i in 0..n {
            assert_eq!(m.ell[(i, i)], 0.0);
            for j in 0..n {
                assert_eq!(m.ell[(i, j)], m.ell[(j, i)]);
                assert!(m.ell[(i, j)] <= m.f[i] + m.f[j] + 1e-15);
                for k in 0..n {
                    assert!(m.ell[(i, k)] <= m.ell[(i, j)] + m.ell[(j, k)] + 1e-15);
                }
            }
        }
        assert_eq!(m.ell[(2, 6)], 0.0);
        assert_eq!(m.d[(2, 6)], 0.0);
        let mut sorted = m.order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        let total: usize = m.joint.counts.iter().flatten().sum();
        assert_eq!(total, n * (n - 1) / 2);
        assert!(distance_matrix(&spec, &minima[..1], &data).is_err());
    }

    #[test]
    fn single_linkage_groups_close_points() {
        let xs: [f64; 5] = [0.0, 10.0, 0.1, 10.2, 0.3];
        let d = DMatrix::from_fn(5, 5, |i, j| (xs[i] - xs[j]).abs());
        assert_eq!(single_linkage_order(&d), vec![0, 2, 4, 1, 3]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn ell_is_a_metric(a in proptest::collection::vec(any::<bool>(), 12),
                           b in proptest::collection::vec(any::<bool>(), 12),
                           c in proptest::collection::vec(any::<bool>(), 12)) {
            let (a, b, c) = (MissVector::new(a), MissVector::new(b), MissVector::new(c));
            let ab = misclassification_distance(&a, &b).unwrap();
            let bc = misclassification_distance(&b, &c).unwrap();
            let ac = misclassification_distance(&a, &c).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, misclassification_distance(&b, &a).unwrap());
            prop_assert_eq!(ab == 0.0, a == b);
            prop_assert!(ac <= ab + bc + 1e-15);
            let disjoint = a.misses.iter().zip(&b.misses).all(|(x, y)| !(*x && *y));
            prop_assert!(ab <= a.f + b.f + 1e-15);
            prop_assert_eq!((ab - (a.f + b.f)).abs() < 1e-12, disjoint);
        }
    }
}
