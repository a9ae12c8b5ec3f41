//! Damped product-of-sines regression, y(x; q) = e^{−q₁x} sin(q₂x + q₃) sin(q₄x + q₅),
//! fitted by least squares.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SMatrix, SVector};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Objective, ParamVector};
use crate::rng;

/// Parameters used to generate the reference data.
pub const Q_STAR: [f64; 5] = [0.1, 2.13, 0.0, 1.34, 0.0];

/// Upper end of the sampling interval [0, 3π].
pub const X_MAX: f64 = 3.0 * PI;

type V5 = SVector<f64, 5>;
type M5 = SMatrix<f64, 5, 5>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    /// (x_i, t_i) pairs.
    pub data: Vec<(f64, f64)>,
}

pub fn model_value(x: f64, q: &[f64]) -> f64 {
    (-q[0] * x).exp() * (q[1] * x + q[2]).sin() * (q[3] * x + q[4]).sin()
}

/// y together with its gradient and Hessian in q.
fn model_derivatives(x: f64, q: &[f64]) -> (f64, V5, M5) {
    let e = (-q[0] * x).exp();
    let (s2, c2) = (q[1] * x + q[2]).sin_cos();
    let (s4, c4) = (q[3] * x + q[4]).sin_cos();
    let y = e * s2 * s4;
    // Each factor depends on its own parameters; u = (x, 1) is the common
    // derivative of a phase argument.
    let g = V5::new(-x * y, e * x * c2 * s4, e * c2 * s4, e * s2 * x * c4, e * s2 * c4);
    let u = [x, 1.0];
    let mut h = M5::zeros();
    h[(0, 0)] = x * x * y;
    for a in 0..2 {
        h[(0, 1 + a)] = -x * g[1 + a];
        h[(0, 3 + a)] = -x * g[3 + a];
        for b in 0..2 {
            h[(1 + a, 1 + b)] = -y * u[a] * u[b];
            h[(3 + a, 3 + b)] = -y * u[a] * u[b];
            h[(1 + a, 3 + b)] = e * c2 * c4 * u[a] * u[b];
        }
    }
    for r in 0..5 {
        for c in 0..r {
            h[(r, c)] = h[(c, r)];
        }
    }
    (y, g, h)
}

/// Σ (t_i − y(x_i; q))² and its gradient.
pub fn regression_cost(q: &ParamVector, data: &[(f64, f64)]) -> (f64, ParamVector) {
    let mut e = 0.0;
    let mut g = V5::zeros();
    for &(x, t) in data {
        let (y, dy, _) = model_derivatives(x, q.as_slice());
        let r = t - y;
        e += r * r;
        g -= dy * (2.0 * r);
    }
    (e, ParamVector::from_column_slice(g.as_slice()))
}

/// `n` points with x uniform in [0, 3π] and targets y(x; q*) plus Gaussian
/// noise of standard deviation `sigma`.
pub fn generate_regression_data(q_star: &[f64; 5], n: usize, sigma: f64, seed: u64) -> Result<Vec<(f64, f64)>> {
    if n == 0 {
        return Err(Error::Precondition("need at least one data point".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::Precondition(format!("noise sigma must be non-negative, got {sigma}")));
    }
    let mut r = rng::seeded(seed);
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Precondition(e.to_string()))?;
    Ok((0..n)
        .map(|_| {
            let x = r.random::<f64>() * X_MAX;
            let eps = if sigma > 0.0 { noise.sample(&mut r) } else { 0.0 };
            (x, model_value(x, q_star) + eps)
        })
        .collect())
}

/// Representative of q under the exact symmetries of y: the sign flip
/// (q₂, q₃) → (−q₂, π − q₃) (likewise for q₄, q₅), the factor swap, the joint
/// shift (q₃, q₅) → (q₃ + π, q₅ + π) and 2π shifts of either phase. The result
/// has q₂ ≥ q₄ ≥ 0, q₃ ∈ [−π/2, π/2) and q₅ ∈ [−π, π).
pub fn canonical_parameters(q: &ParamVector) -> ParamVector {
    let mut c = q.clone();
    for (w, p) in [(1, 2), (3, 4)] {
        if c[w] < 0.0 {
            c[w] = -c[w];
            c[p] = PI - c[p];
        }
    }
    if c[3] > c[1] {
        c.swap_rows(1, 3);
        c.swap_rows(2, 4);
    }
    let k = ((c[2] + PI / 2.0) / PI).floor();
    c[2] -= k * PI;
    c[4] -= k * PI;
    c[4] -= 2.0 * PI * ((c[4] + PI) / (2.0 * PI)).floor();
    c
}

impl RegressionModel {
    pub fn new(data: Vec<(f64, f64)>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Precondition("regression dataset is empty".into()));
        }
        Ok(Self { data })
    }
}

impl Objective for RegressionModel {
    fn dim(&self) -> usize {
        5
    }

    fn energy_gradient(&self, q: &ParamVector) -> (f64, ParamVector) {
        regression_cost(q, &self.data)
    }

    fn hessian(&self, q: &ParamVector) -> DMatrix<f64> {
        let mut h = M5::zeros();
        for &(x, t) in &self.data {
            let (y, dy, d2y) = model_derivatives(x, q.as_slice());
            h += (dy * dy.transpose() - d2y * (t - y)) * 2.0;
        }
        DMatrix::from_column_slice(5, 5, h.as_slice())
    }

    fn hessian_vector(&self, q: &ParamVector, v: &ParamVector) -> ParamVector {
        self.hessian(q) * v
    }

    fn symmetry_reduce(&self, q: &ParamVector) -> ParamVector {
        canonical_parameters(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{fd_hessian, finite_diff_gradient, gradient_rel_error, hessian_rel_error};

    fn random_q(r: &mut rng::Rng) -> ParamVector {
        ParamVector::from_iterator(5, (0..5).map(|_| r.random::<f64>() * 4.0 - 2.0))
    }

    #[test]
    fn noiseless_cost_vanishes_at_generator() {
        let data = generate_regression_data(&Q_STAR, 100, 0.0, 1).unwrap();
        assert_eq!(regression_cost(&ParamVector::from_row_slice(&Q_STAR), &data).0, 0.0);
        assert!(data.iter().all(|&(x, _)| (0.0..=X_MAX).contains(&x)));
    }

    #[test]
    fn noisy_cost_at_generator_is_chi_square_sized() {
        let data = generate_regression_data(&Q_STAR, 100, 0.02, 4).unwrap();
        let e = regression_cost(&ParamVector::from_row_slice(&Q_STAR), &data).0;
        // Direct oracle: the residuals are the noise draws.
        let direct: f64 = data.iter().map(|&(x, t)| (t - model_value(x, &Q_STAR)).powi(2)).sum();
        assert!((e - direct).abs() < 1e-15);
        assert!(e > 0.02 && e < 0.08, "{e}");
    }

    #[test]
    fn symmetries_preserve_cost() {
        let data = generate_regression_data(&Q_STAR, 50, 0.02, 2).unwrap();
        let mut r = rng::seeded(8);
        for _ in 0..20 {
            let q = random_q(&mut r);
            let e = regression_cost(&q, &data).0;
            let swapped = ParamVector::from_vec(vec![q[0], q[3], q[4], q[1], q[2]]);
            assert!((regression_cost(&swapped, &data).0 - e).abs() <= 1e-12 * e.max(1.0));
            let c = canonical_parameters(&q);
            assert!((regression_cost(&c, &data).0 - e).abs() <= 1e-10 * e.max(1.0));
            assert!(c[1] >= c[3] && c[3] >= 0.0);
            assert!((-PI / 2.0..PI / 2.0).contains(&c[2]) && (-PI..PI).contains(&c[4]));
            assert!((canonical_parameters(&c) - &c).norm() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let m = RegressionModel::new(generate_regression_data(&Q_STAR, 100, 0.02, 3).unwrap()).unwrap();
        let mut r = rng::seeded(9);
        for _ in 0..20 {
            let q = random_q(&mut r);
            let g = m.energy_gradient(&q).1;
            assert!(gradient_rel_error(&g, &finite_diff_gradient(&m, &q, 1e-6)) < 1e-5);
            assert!(hessian_rel_error(&m.hessian(&q), &fd_hessian(&m, &q, 1e-5)) < 1e-4);
        }
    }

    #[test]
    fn empty_data_is_rejected() {
        assert!(generate_regression_data(&Q_STAR, 0, 0.1, 1).is_err());
        assert!(generate_regression_data(&Q_STAR, 3, -1.0, 1).is_err());
        assert!(RegressionModel::new(vec![]).is_err());
    }
}
