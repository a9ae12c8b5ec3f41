//! Hessian eigen-analysis.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{orthonormalize, Objective, ParamVector};
use crate::error::{Error, Result};
use crate::rng;

/// Above this dimension eigenpairs come from Lanczos iteration on
/// Hessian-vector products instead of a dense decomposition.
pub const DENSE_LIMIT: usize = 800;

/// Sorted Hessian eigenvalues with the counts used for index and κ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianSpectrum {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues below `−zero_tol · max|λ|`.
    pub n_negative: usize,
    /// Eigenvalues with `|λ| ≤ zero_tol · max|λ|`.
    pub n_zero: usize,
    /// Σ ln λ over the positive, non-zero eigenvalues.
    pub log_product_positive: f64,
}

impl HessianSpectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_positive(&self) -> usize {
        self.dim() - self.n_negative - self.n_zero
    }

    /// Sum of ln λ over the `kappa` largest eigenvalues.
    pub fn log_product_top(&self, kappa: usize) -> f64 {
        self.eigenvalues.iter().rev().take(kappa).map(|l| l.ln()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    /// Unit vector, sign fixed so that its largest-magnitude entry is positive.
    pub vector: ParamVector,
    /// The next eigenvalue lies within 1e-10 of this one; the vector is an
    /// arbitrary member of the eigenspace.
    pub degenerate: bool,
    /// ‖H v − λ v‖.
    pub residual: f64,
}

/// Full spectrum of the Hessian at `x`. `zero_tol` is relative to the largest
/// eigenvalue magnitude.
pub fn hessian_spectrum<O: Objective + ?Sized>(obj: &O, x: &ParamVector, zero_tol: f64) -> Result<HessianSpectrum> {
    spectrum_of_matrix(obj.hessian(x), zero_tol, x)
}

pub fn spectrum_of_matrix(h: DMatrix<f64>, zero_tol: f64, point: &ParamVector) -> Result<HessianSpectrum> {
    let (mut eigenvalues, _) = decompose(h, false, point)?;
    eigenvalues.sort_by(|a, b| a.total_cmp(b));
    Ok(classify(eigenvalues, zero_tol))
}

fn classify(eigenvalues: Vec<f64>, zero_tol: f64) -> HessianSpectrum {
    let scale = eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let thr = zero_tol * scale;
    let n_negative = eigenvalues.iter().filter(|&&l| l < -thr).count();
    let n_zero = eigenvalues.iter().filter(|&&l| l.abs() <= thr).count();
    let log_product_positive = eigenvalues.iter().filter(|&&l| l > thr).map(|l| l.ln()).sum();
    HessianSpectrum { eigenvalues, n_negative, n_zero, log_product_positive }
}

fn decompose(h: DMatrix<f64>, vectors: bool, point: &ParamVector) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
    let n = h.nrows();
    if n == 0 {
        return Ok((Vec::new(), vectors.then(|| DMatrix::zeros(0, 0))));
    }
    if !h.iter().all(|v| v.is_finite()) {
        return Err(Error::Eigensolver { point: point.as_slice().to_vec() });
    }
    let h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(h, f64::EPSILON, 1000 * n.max(10))
        .ok_or_else(|| Error::Eigensolver { point: point.as_slice().to_vec() })?;
    Ok((eig.eigenvalues.as_slice().to_vec(), vectors.then_some(eig.eigenvectors)))
}

fn fix_sign(mut v: ParamVector) -> ParamVector {
    let imax = v.iamax();
    if v[imax] < 0.0 {
        v.neg_mut();
    }
    v
}

/// Lowest eigenpair of the Hessian, with the objective's declared zero modes
/// shifted to the top of the spectrum so they are never returned.
pub fn lowest_eigenpair<O: Objective + ?Sized>(obj: &O, x: &ParamVector) -> Result<Eigenpair> {
    let mut pairs = lowest_pairs(obj, x, 2)?;
    let first = pairs.remove(0);
    Ok(first)
}

/// The `k` lowest eigenvalues (zero modes shifted away as for [`lowest_eigenpair`]).
pub fn lowest_eigenvalues<O: Objective + ?Sized>(obj: &O, x: &ParamVector, k: usize) -> Result<Vec<f64>> {
    Ok(lowest_pairs(obj, x, k)?.into_iter().map(|p| p.value).collect())
}

fn lowest_pairs<O: Objective + ?Sized>(obj: &O, x: &ParamVector, k: usize) -> Result<Vec<Eigenpair>> {
    let n = obj.dim();
    let k = k.min(n).max(1);
    let modes = orthonormalize(&obj.zero_modes(x));
    if n <= DENSE_LIMIT {
        let mut h = obj.hessian(x);
        if !modes.is_empty() {
            let shift = 10.0 * (1.0 + h.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max));
            for z in &modes {
                h.ger(shift, z, z, 1.0);
            }
        }
        let h_sym = (&h + h.transpose()) * 0.5;
        let (vals, vecs) = decompose(h_sym.clone(), true, x)?;
        let vecs = vecs.expect("eigenvectors requested");
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let out = (0..k)
            .map(|r| {
                let i = order[r];
                let v = fix_sign(DVector::from_column_slice(vecs.column(i).as_slice()));
                let residual = (&h_sym * &v - &v * vals[i]).norm();
                let degenerate = order.get(r + 1).is_some_and(|&j| (vals[j] - vals[i]).abs() < 1e-10);
                Eigenpair { value: vals[i], vector: v, degenerate, residual }
            })
            .collect();
        return Ok(out);
    }
    let shift = if modes.is_empty() {
        0.0
    } else {
        // Cheap spectral-radius bound from a few power iterations.
        let mut v = start_vector(n);
        let mut radius: f64 = 0.0;
        for _ in 0..20 {
            let hv = obj.hessian_vector(x, &v);
            radius = radius.max(hv.norm());
            let nv = hv.norm();
            if nv == 0.0 {
                break;
            }
            v = hv / nv;
        }
        10.0 * (1.0 + radius)
    };
    let apply = |v: &ParamVector| {
        let mut hv = obj.hessian_vector(x, v);
        for z in &modes {
            hv.axpy(shift * z.dot(v), z, 1.0);
        }
        hv
    };
    lanczos_lowest(apply, n, k, x)
}

fn start_vector(n: usize) -> ParamVector {
    let mut r = rng::seeded(0x5eed_1a2c_05);
    let v = ParamVector::from_iterator(n, (0..n).map(|_| r.random::<f64>() - 0.5));
    let nv = v.norm();
    v / nv
}

fn lanczos_lowest<F>(apply: F, n: usize, k: usize, point: &ParamVector) -> Result<Vec<Eigenpair>>
where
    F: Fn(&ParamVector) -> ParamVector,
{
    let mut m = 60.min(n);
    loop {
        let mut basis: Vec<ParamVector> = vec![start_vector(n)];
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        for j in 0..m {
            let mut w = apply(&basis[j]);
            let a = basis[j].dot(&w);
            alpha.push(a);
            // Full reorthogonalisation, twice for stability.
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dot(&w);
                    w.axpy(-c, b, 1.0);
                }
            }
            let bn = w.norm();
            if j + 1 == m || bn < 1e-12 {
                break;
            }
            beta.push(bn);
            basis.push(w / bn);
        }
        let dim = alpha.len();
        let mut t = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            t[(i, i)] = alpha[i];
            if i + 1 < dim {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let (vals, vecs) = decompose(t, true, point)?;
        let vecs = vecs.expect("eigenvectors requested");
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let mut out = Vec::with_capacity(k);
        let mut worst: f64 = 0.0;
        for r in 0..k.min(dim) {
            let i = order[r];
            let mut v = ParamVector::zeros(n);
            for (c, b) in vecs.column(i).iter().zip(&basis) {
                v.axpy(*c, b, 1.0);
            }
            let v = fix_sign(v.normalize());
            let residual = (apply(&v) - &v * vals[i]).norm();
            worst = worst.max(residual / (1e-6 * vals[i].abs() + 1e-8));
            let degenerate = order.get(r + 1).is_some_and(|&j| (vals[j] - vals[i]).abs() < 1e-10);
            out.push(Eigenpair { value: vals[i], vector: v, degenerate, residual });
        }
        if worst <= 1.0 || m >= n || m >= 480 {
            return Ok(out);
        }
        m = (2 * m).min(n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::testfns::{DoubleWell, Quadratic};

    #[test]
    fn diagonal_quadratic_spectrum() {
        let q = Quadratic(vec![1.0, 4.0]);
        let s = hessian_spectrum(&q, &ParamVector::zeros(2), 1e-6).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 4.0]);
        assert_eq!(s.n_negative, 0);
        assert_eq!(s.n_zero, 0);
        assert!((s.log_product_positive - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn double_well_saddle_has_index_one() {
        let s = hessian_spectrum(&DoubleWell, &ParamVector::zeros(1), 1e-6).unwrap();
        assert_eq!(s.n_negative, 1);
        let p = lowest_eigenpair(&DoubleWell, &ParamVector::zeros(1)).unwrap();
        assert!((p.value + 4.0).abs() < 1e-12);
        assert_eq!(p.vector[0].abs(), 1.0);
    }

    #[test]
    fn lowest_pair_of_diagonal() {
        let q = Quadratic(vec![1.0, 4.0]);
        let p = lowest_eigenpair(&q, &ParamVector::zeros(2)).unwrap();
        assert!((p.value - 1.0).abs() < 1e-14);
        assert!((p.vector[0].abs() - 1.0).abs() < 1e-14);
        assert!(p.residual <= 1e-6 * p.value.abs() + 1e-8);
        assert!(!p.degenerate);
    }

    #[test]
    fn degenerate_lowest_is_flagged() {
        let q = Quadratic(vec![2.0, 2.0, 5.0]);
        assert!(lowest_eigenpair(&q, &ParamVector::zeros(3)).unwrap().degenerate);
    }

    #[test]
    fn lanczos_matches_dense() {
        let n = 900;
        let diag: Vec<f64> = (0..n).map(|i| -3.0 + 0.01 * i as f64 + 0.5 * ((i * 7919) % 13) as f64).collect();
        let mut sorted = diag.clone();
        sorted.sort_by(f64::total_cmp);
        let q = Quadratic(diag);
        let vals = lowest_eigenvalues(&q, &ParamVector::zeros(n), 2).unwrap();
        assert!((vals[0] - sorted[0]).abs() < 1e-6, "{vals:?} vs {:?}", &sorted[..2]);
        assert!((vals[1] - sorted[1]).abs() < 1e-6, "{vals:?} vs {:?}", &sorted[..2]);
    }

    #[test]
    fn classify_counts_add_up() {
        let s = classify(vec![-2.0, 1e-9, 0.5, 3.0], 1e-6);
        assert_eq!((s.n_negative, s.n_zero, s.n_positive()), (1, 1, 2));
    }
}
