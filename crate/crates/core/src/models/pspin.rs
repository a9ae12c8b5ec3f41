//! Spherical p-spin glass: a random homogeneous polynomial of degree p ≤ 3
//! restricted to |w|² = N.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Metric, Objective, ParamVector};
use crate::rng;

/// Raw coefficients plus their symmetric reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct PSpinModel {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    /// x_{i1..ip}, row-major over all N^p index tuples.
    pub coefficients: Vec<f64>,
    /// 1 for p = 1, 2; 1/N for p = 3.
    pub normalization: f64,
    /// Σ over distinct permutations of x, one entry per sorted tuple
    /// i1 ≤ … ≤ ip, scaled by the normalisation.
    unique: Vec<f64>,
}

/// Model parameters sufficient to rebuild the coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PSpinParams {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
}

impl PSpinModel {
    pub fn new(n: usize, p: usize, seed: u64) -> Result<Self> {
        if n == 0 || !(1..=3).contains(&p) {
            return Err(Error::Precondition(format!("need N ≥ 1 and p ∈ {{1,2,3}}, got N={n}, p={p}")));
        }
        let mut r = rng::seeded(seed);
        let coefficients: Vec<f64> = (0..n.pow(p as u32)).map(|_| StandardNormal.sample(&mut r)).collect();
        Self::from_coefficients(n, p, seed, coefficients)
    }

    pub fn from_coefficients(n: usize, p: usize, seed: u64, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != n.pow(p as u32) {
            return Err(Error::DimensionMismatch { expected: n.pow(p as u32), got: coefficients.len() });
        }
        let normalization = if p == 3 { 1.0 / n as f64 } else { 1.0 };
        let x = &coefficients;
        let mut unique = Vec::new();
        match p {
            1 => unique.extend(x.iter().copied()),
            2 => {
                for i in 0..n {
                    for j in i..n {
                        unique.push(if i == j { x[i * n + i] } else { x[i * n + j] + x[j * n + i] });
                    }
                }
            }
            _ => {
                let at = |i: usize, j: usize, k: usize| x[(i * n + j) * n + k];
                for i in 0..n {
                    for j in i..n {
                        for k in j..n {
                            let mut perms = [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)].to_vec();
                            perms.sort_unstable();
                            perms.dedup();
                            unique.push(normalization * perms.iter().map(|&(a, b, c)| at(a, b, c)).sum::<f64>());
                        }
                    }
                }
            }
        }
        Ok(Self { n, p, seed, coefficients, normalization, unique })
    }

    pub fn params(&self) -> PSpinParams {
        PSpinParams { n: self.n, p: self.p, seed: self.seed }
    }

    /// H(w) summed over every index tuple of the raw tensor; no sphere
    /// constraint is imposed.
    pub fn polynomial(&self, w: &ParamVector) -> f64 {
        let n = self.n;
        let x = &self.coefficients;
        match self.p {
            1 => x.iter().zip(w.iter()).map(|(a, b)| a * b).sum(),
            2 => (0..n).map(|i| w[i] * (0..n).map(|j| x[i * n + j] * w[j]).sum::<f64>()).sum(),
            _ => {
                let mut e = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let row = &x[(i * n + j) * n..(i * n + j + 1) * n];
                        e += w[i] * w[j] * row.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                self.normalization * e
            }
        }
    }

    /// Euclidean gradient of the polynomial, from the symmetric reduction.
    pub fn euclidean_gradient(&self, w: &ParamVector) -> ParamVector {
        let n = self.n;
        let c = &self.unique;
        let mut g = ParamVector::zeros(n);
        match self.p {
            1 => g.copy_from_slice(c),
            2 => {
                let mut idx = 0;
                for i in 0..n {
                    for j in i..n {
                        let v = c[idx];
                        idx += 1;
                        g[i] += v * w[j];
                        g[j] += v * w[i];
                    }
                }
            }
            _ => {
                let ws = w.as_slice();
                let gs = g.as_mut_slice();
                let mut idx = 0;
                for i in 0..n {
                    for j in i..n {
                        let len = n - j;
                        let row = &c[idx..idx + len];
                        idx += len;
                        let wij = ws[i] * ws[j];
                        let mut dot = 0.0;
                        for (v, (wk, gk)) in row.iter().zip(ws[j..].iter().zip(gs[j..].iter_mut())) {
                            dot += v * wk;
                            *gk += v * wij;
                        }
                        gs[i] += ws[j] * dot;
                        gs[j] += ws[i] * dot;
                    }
                }
            }
        }
        g
    }

    /// Euclidean Hessian of the polynomial.
    pub fn euclidean_hessian(&self, w: &ParamVector) -> DMatrix<f64> {
        let n = self.n;
        let c = &self.unique;
        let mut h = DMatrix::zeros(n, n);
        match self.p {
            1 => {}
            2 => {
                let mut idx = 0;
                for i in 0..n {
                    for j in i..n {
                        h[(i, j)] += c[idx];
                        h[(j, i)] += c[idx];
                        idx += 1;
                    }
                }
            }
            _ => {
                let mut idx = 0;
                for i in 0..n {
                    for j in i..n {
                        for k in j..n {
                            let v = c[idx];
                            idx += 1;
                            for (a, b, f) in [(i, j, w[k]), (i, k, w[j]), (j, k, w[i])] {
                                h[(a, b)] += v * f;
                                h[(b, a)] += v * f;
                            }
                        }
                    }
                }
            }
        }
        h
    }

    /// Symmetrised coupling matrix (X + Xᵀ)/2 for p = 2.
    pub fn symmetric_matrix(&self) -> Result<DMatrix<f64>> {
        if self.p != 2 {
            return Err(Error::Precondition("coupling matrix exists only for p = 2".into()));
        }
        let x = DMatrix::from_row_slice(self.n, self.n, &self.coefficients);
        Ok((&x + x.transpose()) * 0.5)
    }

    fn check_sphere(&self, w: &ParamVector) -> Result<()> {
        if w.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: w.len() });
        }
        let nf = self.n as f64;
        let off = (w.norm_squared() - nf).abs();
        if off > 1e-8 * nf {
            return Err(Error::Domain(format!("|w|² − N = {off:e} exceeds 1e-8·N")));
        }
        Ok(())
    }

    /// Energy, Euclidean gradient and tangent gradient on the sphere |w|² = N.
    pub fn pspin_energy_gradient(&self, w: &ParamVector) -> Result<(f64, ParamVector, ParamVector)> {
        self.check_sphere(w)?;
        let g = self.euclidean_gradient(w);
        let t = tangent(&g, w);
        Ok((self.polynomial(w), g, t))
    }

    /// Σ w¹_i w²_j w³_k x_ijk on the product of three unit spheres (p = 3
    /// only), with per-sphere projected gradient blocks.
    pub fn pspin_product_sphere_energy(
        &self,
        w1: &ParamVector,
        w2: &ParamVector,
        w3: &ParamVector,
    ) -> Result<(f64, [ParamVector; 3])> {
        if self.p != 3 {
            return Err(Error::Precondition("product-sphere energy needs p = 3".into()));
        }
        for w in [w1, w2, w3] {
            if w.len() != self.n {
                return Err(Error::DimensionMismatch { expected: self.n, got: w.len() });
            }
            if (w.norm_squared() - 1.0).abs() > 1e-8 {
                return Err(Error::Domain(format!("block off the unit sphere: |w|² = {}", w.norm_squared())));
            }
        }
        let (e, g) = product_sphere_raw(&self.coefficients, self.n, w1, w2, w3);
        Ok((e, [tangent(&g[0], w1), tangent(&g[1], w2), tangent(&g[2], w3)]))
    }
}

/// Energy and Euclidean block gradients of the trilinear form.
pub(crate) fn product_sphere_raw(
    x: &[f64],
    n: usize,
    w1: &ParamVector,
    w2: &ParamVector,
    w3: &ParamVector,
) -> (f64, [ParamVector; 3]) {
    let mut g1 = ParamVector::zeros(n);
    let mut g2 = ParamVector::zeros(n);
    let mut g3 = ParamVector::zeros(n);
    let mut e = 0.0;
    for i in 0..n {
        for j in 0..n {
            let row = &x[(i * n + j) * n..(i * n + j + 1) * n];
            let dot: f64 = row.iter().zip(w3.iter()).map(|(a, b)| a * b).sum();
            let wij = w1[i] * w2[j];
            e += wij * dot;
            g1[i] += w2[j] * dot;
            g2[j] += w1[i] * dot;
            for (k, v) in row.iter().enumerate() {
                g3[k] += v * wij;
            }
        }
    }
    (e, [g1, g2, g3])
}

/// Component of `g` orthogonal to `w`.
pub fn tangent(g: &ParamVector, w: &ParamVector) -> ParamVector {
    let ww = w.norm_squared();
    if ww == 0.0 {
        return g.clone();
    }
    g - w * (g.dot(w) / ww)
}

/// H(√N·u/|u|): the sphere model as an unconstrained objective of dimension N,
/// flat along the radial direction.
#[derive(Debug, Clone)]
pub struct SphereChart<'a> {
    pub model: &'a PSpinModel,
}

impl SphereChart<'_> {
    fn project(&self, u: &ParamVector) -> (f64, ParamVector) {
        let r = u.norm();
        (r, u * ((self.model.n as f64).sqrt() / r))
    }
}

impl Objective for SphereChart<'_> {
    fn dim(&self) -> usize {
        self.model.n
    }

    fn energy_gradient(&self, u: &ParamVector) -> (f64, ParamVector) {
        let (r, w) = self.project(u);
        let h = self.model.euclidean_gradient(&w);
        let e = self.model.polynomial(&w);
        let s = (self.model.n as f64).sqrt() / r;
        (e, tangent(&h, u) * s)
    }

    fn hessian(&self, u: &ParamVector) -> DMatrix<f64> {
        let n = self.model.n;
        let (r, w) = self.project(u);
        let s = (n as f64).sqrt() / r;
        let h = self.model.euclidean_gradient(&w);
        let uhat = u / r;
        let proj = DMatrix::identity(n, n) - &uhat * uhat.transpose();
        let mut out = &proj * self.model.euclidean_hessian(&w) * &proj * (s * s);
        let hu = h.dot(u);
        let c = (n as f64).sqrt() / (r * r * r);
        out.ger(-c, &h, u, 1.0);
        out.ger(-c, u, &h, 1.0);
        for i in 0..n {
            out[(i, i)] -= c * hu;
        }
        out.ger(3.0 * c * hu / (r * r), u, u, 1.0);
        out
    }

    fn hessian_vector(&self, u: &ParamVector, v: &ParamVector) -> ParamVector {
        self.hessian(u) * v
    }

    fn zero_modes(&self, u: &ParamVector) -> Vec<ParamVector> {
        vec![u.normalize()]
    }

    /// The chart is invariant under rescaling; points are represented on the
    /// sphere itself.
    fn symmetry_reduce(&self, u: &ParamVector) -> ParamVector {
        self.project(u).1
    }

    fn metric(&self) -> Metric {
        Metric::Sphere { radius: (self.model.n as f64).sqrt() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{fd_hessian, finite_diff_gradient, gradient_rel_error, hessian_rel_error};
    use rand_distr::{Distribution, StandardNormal};

    fn on_sphere(n: usize, seed: u64) -> ParamVector {
        let mut r = rng::seeded(seed);
        let v = ParamVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut r)));
        v.normalize() * (n as f64).sqrt()
    }

    #[test]
    fn symmetric_gradient_matches_raw_polynomial() {
        for p in 1..=3 {
            let m = PSpinModel::new(6, p, 3).unwrap();
            let w = on_sphere(6, 10 + p as u64);
            let fd = ParamVector::from_iterator(6, (0..6).map(|i| {
                let mut a = w.clone();
                let mut b = w.clone();
                a[i] += 1e-6;
                b[i] -= 1e-6;
                (m.polynomial(&a) - m.polynomial(&b)) / 2e-6
            }));
            assert!(gradient_rel_error(&m.euclidean_gradient(&w), &fd) < 1e-6, "p={p}");
            // Euler: w·∇H = p H.
            assert!((w.dot(&m.euclidean_gradient(&w)) - p as f64 * m.polynomial(&w)).abs() < 1e-10 * m.polynomial(&w).abs().max(1.0));
        }
    }

    #[test]
    fn homogeneity_off_sphere() {
        for p in 1..=3 {
            let m = PSpinModel::new(5, p, 7).unwrap();
            let w = on_sphere(5, 1) * 0.7;
            let t: f64 = 1.9;
            let lhs = m.polynomial(&(&w * t));
            assert!((lhs - t.powi(p as i32) * m.polynomial(&w)).abs() < 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn tangent_gradient_is_orthogonal() {
        let m = PSpinModel::new(4, 3, 5).unwrap();
        let w = on_sphere(4, 2);
        let (_, _, t) = m.pspin_energy_gradient(&w).unwrap();
        assert!(t.dot(&w).abs() < 1e-12);
        assert!(matches!(m.pspin_energy_gradient(&(w * 1.01)), Err(Error::Domain(_))));
    }

    #[test]
    fn p1_extremes_are_plus_minus_root_n_norm() {
        let m = PSpinModel::new(7, 1, 4).unwrap();
        let x = ParamVector::from_vec(m.coefficients.clone());
        let w = &x * (-(7f64).sqrt() / x.norm());
        let (e, _, t) = m.pspin_energy_gradient(&w).unwrap();
        assert!((e + 7f64.sqrt() * x.norm()).abs() < 1e-12);
        assert!(t.norm() < 1e-12);
    }

    #[test]
    fn p2_eigenvectors_are_stationary_with_energy_n_lambda() {
        let n = 6;
        let m = PSpinModel::new(n, 2, 9).unwrap();
        let eig = nalgebra::SymmetricEigen::new(m.symmetric_matrix().unwrap());
        for (i, lam) in eig.eigenvalues.iter().enumerate() {
            let w = eig.eigenvectors.column(i).into_owned() * (n as f64).sqrt();
            let (e, _, t) = m.pspin_energy_gradient(&w).unwrap();
            assert!((e - n as f64 * lam).abs() < 1e-10);
            assert!(t.norm() < 1e-10);
        }
    }

    #[test]
    fn product_sphere_multilinearity_and_direct_sum() {
        let m = PSpinModel::from_coefficients(2, 3, 0, vec![1.0; 8]).unwrap();
        let e1 = ParamVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(m.pspin_product_sphere_energy(&e1, &e1, &e1).unwrap().0, 1.0);
        let m = PSpinModel::new(5, 3, 2).unwrap();
        let (a, b, c) = (on_sphere(5, 1) / 5f64.sqrt(), on_sphere(5, 2) / 5f64.sqrt(), on_sphere(5, 3) / 5f64.sqrt());
        let e = m.pspin_product_sphere_energy(&a, &b, &c).unwrap().0;
        assert!((m.pspin_product_sphere_energy(&a, &-&b, &c).unwrap().0 + e).abs() < 1e-14);
        assert!(m.pspin_product_sphere_energy(&(&a * 2.0), &b, &c).is_err());
    }

    #[test]
    fn sphere_chart_derivatives() {
        for p in 1..=3 {
            let m = PSpinModel::new(8, p, 11).unwrap();
            let chart = SphereChart { model: &m };
            for s in 0..20 {
                // Off-radius points exercise the chart's scaling.
                let u = on_sphere(8, 100 + s) * (0.8 + 0.02 * s as f64);
                let g = chart.energy_gradient(&u).1;
                assert!(gradient_rel_error(&g, &finite_diff_gradient(&chart, &u, 1e-6)) < 1e-5);
                assert!(hessian_rel_error(&chart.hessian(&u), &fd_hessian(&chart, &u, 1e-5)) < 1e-4);
                assert!(g.dot(&u).abs() < 1e-10 * g.norm().max(1.0));
            }
        }
    }

    #[test]
    fn bad_parameters() {
        assert!(PSpinModel::new(3, 4, 0).is_err());
        assert!(PSpinModel::from_coefficients(2, 3, 0, vec![0.0; 7]).is_err());
        assert!(PSpinModel::new(3, 3, 0).unwrap().symmetric_matrix().is_err());
    }
}
