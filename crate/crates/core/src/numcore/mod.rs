//! Numerical substrate: the objective contract, LBFGS, Hessian spectra and
//! finite-difference oracles.

mod fd;
mod geometry;
mod lbfgs;
mod spectrum;

use nalgebra::{DMatrix, DVector};

pub use fd::{
    fd_hessian, fd_hessian_vector, finite_diff_gradient, gradient_rel_error, hessian_rel_error,
};
pub use geometry::Metric;
pub use lbfgs::{lbfgs_minimize, lbfgs_minimize_with, LbfgsConfig, MinimizationResult};
pub use spectrum::{
    hessian_spectrum, lowest_eigenpair, lowest_eigenvalues, spectrum_of_matrix, Eigenpair,
    HessianSpectrum, DENSE_LIMIT,
};

/// A point in coordinate or parameter space.
pub type ParamVector = DVector<f64>;

/// Default relative threshold below which a Hessian eigenvalue counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-6;

/// A differentiable cost function.
///
/// Implementations must be pure: the same input always yields the same output,
/// and evaluation may happen concurrently from several threads.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    /// Energy and analytic gradient at `x`.
    fn energy_gradient(&self, x: &ParamVector) -> (f64, ParamVector);

    fn energy(&self, x: &ParamVector) -> f64 {
        self.energy_gradient(x).0
    }

    /// Dense symmetric Hessian. The default differentiates the analytic
    /// gradient by central differences with `h = 1e-5`.
    fn hessian(&self, x: &ParamVector) -> DMatrix<f64> {
        fd_hessian(self, x, 1e-5)
    }

    /// Hessian-vector product, by default a central difference of the gradient.
    fn hessian_vector(&self, x: &ParamVector, v: &ParamVector) -> ParamVector {
        fd_hessian_vector(self, x, v, 1e-5)
    }

    /// Directions along which the energy is exactly flat at stationary points
    /// (overall translations/rotations, radial direction of a sphere chart).
    /// Saddle searches shift these out of the way; spectra still report them.
    fn zero_modes(&self, _x: &ParamVector) -> Vec<ParamVector> {
        Vec::new()
    }

    /// How two points of this landscape are compared for identity.
    fn metric(&self) -> Metric {
        Metric::Euclidean
    }

    /// Representative of `x` under discrete exact symmetries of the objective
    /// (identity by default). Applied before points are stored.
    fn symmetry_reduce(&self, x: &ParamVector) -> ParamVector {
        x.clone()
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn energy_gradient(&self, x: &ParamVector) -> (f64, ParamVector) {
        (**self).energy_gradient(x)
    }
    fn energy(&self, x: &ParamVector) -> f64 {
        (**self).energy(x)
    }
    fn hessian(&self, x: &ParamVector) -> DMatrix<f64> {
        (**self).hessian(x)
    }
    fn hessian_vector(&self, x: &ParamVector, v: &ParamVector) -> ParamVector {
        (**self).hessian_vector(x, v)
    }
    fn zero_modes(&self, x: &ParamVector) -> Vec<ParamVector> {
        (**self).zero_modes(x)
    }
    fn metric(&self) -> Metric {
        (**self).metric()
    }
    fn symmetry_reduce(&self, x: &ParamVector) -> ParamVector {
        (**self).symmetry_reduce(x)
    }
}

/// Root-mean-square of a vector's entries.
pub fn rms(v: &ParamVector) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.norm() / (v.len() as f64).sqrt()
    }
}

pub(crate) fn all_finite(v: &ParamVector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Orthonormalises a set of vectors (modified Gram-Schmidt), dropping any that
/// are numerically dependent on the ones before.
pub fn orthonormalize(vectors: &[ParamVector]) -> Vec<ParamVector> {
    let mut basis: Vec<ParamVector> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let scale = v.norm();
        if scale == 0.0 {
            continue;
        }
        let mut w = v.clone();
        for b in &basis {
            let c = b.dot(&w);
            w.axpy(-c, b, 1.0);
        }
        let n = w.norm();
        if n > 1e-8 * scale {
            basis.push(w / n);
        }
    }
    basis
}

#[cfg(test)]
pub(crate) mod testfns {
    //! Small analytic objectives shared by unit tests.
    use super::*;

    /// E = Σ c_i x_i² / 2
    pub struct Quadratic(pub Vec<f64>);

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn energy_gradient(&self, x: &ParamVector) -> (f64, ParamVector) {
            let g = ParamVector::from_iterator(x.len(), x.iter().zip(&self.0).map(|(x, c)| c * x));
            let e = 0.5 * x.iter().zip(&self.0).map(|(x, c)| c * x * x).sum::<f64>();
            (e, g)
        }
        fn hessian(&self, _x: &ParamVector) -> DMatrix<f64> {
            DMatrix::from_diagonal(&DVector::from_vec(self.0.clone()))
        }
    }

    /// E = (x² − 1)², summed over coordinates.
    pub struct DoubleWell;

    impl Objective for DoubleWell {
        fn dim(&self) -> usize {
            1
        }
        fn energy_gradient(&self, x: &ParamVector) -> (f64, ParamVector) {
            let v = x[0];
            ((v * v - 1.0).powi(2), ParamVector::from_element(1, 4.0 * v * (v * v - 1.0)))
        }
        fn hessian(&self, x: &ParamVector) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, 12.0 * x[0] * x[0] - 4.0)
        }
    }

    pub struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn energy_gradient(&self, x: &ParamVector) -> (f64, ParamVector) {
            let (a, b) = (x[0], x[1]);
            let e = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = ParamVector::from_vec(vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ]);
            (e, g)
        }
    }

    pub struct Constant;

    impl Objective for Constant {
        fn dim(&self) -> usize {
            3
        }
        fn energy_gradient(&self, _x: &ParamVector) -> (f64, ParamVector) {
            (2.5, ParamVector::zeros(3))
        }
    }
}
