//! Central-difference oracles for analytic derivatives.

use nalgebra::DMatrix;

use super::{Objective, ParamVector};

/// Central-difference gradient, `(E(x + h e_i) − E(x − h e_i)) / 2h` per component.
pub fn finite_diff_gradient<O: Objective + ?Sized>(obj: &O, x: &ParamVector, h: f64) -> ParamVector {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = x.clone();
    ParamVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            let xi = x[i];
            probe[i] = xi + h;
            let ep = obj.energy(&probe);
            probe[i] = xi - h;
            let em = obj.energy(&probe);
            probe[i] = xi;
            (ep - em) / (2.0 * h)
        }),
    )
}

/// Hessian from central differences of the analytic gradient, symmetrised.
pub fn fd_hessian<O: Objective + ?Sized>(obj: &O, x: &ParamVector, h: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    let mut probe = x.clone();
    for j in 0..n {
        let xj = x[j];
        probe[j] = xj + h;
        let gp = obj.energy_gradient(&probe).1;
        probe[j] = xj - h;
        let gm = obj.energy_gradient(&probe).1;
        probe[j] = xj;
        hess.set_column(j, &((gp - gm) / (2.0 * h)));
    }
    (&hess + hess.transpose()) * 0.5
}

/// Hessian-vector product from a central difference of the gradient along `v`.
pub fn fd_hessian_vector<O: Objective + ?Sized>(
    obj: &O,
    x: &ParamVector,
    v: &ParamVector,
    h: f64,
) -> ParamVector {
    let vn = v.norm();
    if vn == 0.0 {
        return ParamVector::zeros(x.len());
    }
    let step = h / vn;
    let gp = obj.energy_gradient(&(x + v * step)).1;
    let gm = obj.energy_gradient(&(x - v * step)).1;
    (gp - gm) / (2.0 * step)
}

/// Normwise relative error `max_i |a_i − b_i| / max(‖a‖∞, ‖b‖∞)`.
pub fn gradient_rel_error(analytic: &ParamVector, reference: &ParamVector) -> f64 {
    let scale = analytic.amax().max(reference.amax()).max(1e-300);
    (analytic - reference).amax() / scale
}

/// Normwise relative error between two matrices (largest entry difference over
/// largest entry).
pub fn hessian_rel_error(analytic: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let scale = analytic.amax().max(reference.amax()).max(1e-300);
    (analytic - reference).amax() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::testfns::{Constant, DoubleWell, Quadratic};

    #[test]
    fn quadratic_gradient() {
        let q = Quadratic(vec![1.0, 1.0]);
        let g = finite_diff_gradient(&q, &ParamVector::from_vec(vec![1.0, 2.0]), 1e-5);
        assert!((g[0] - 1.0).abs() < 1e-8 && (g[1] - 2.0).abs() < 1e-8, "{g}");
    }

    #[test]
    fn constant_objective_has_zero_gradient() {
        let g = finite_diff_gradient(&Constant, &ParamVector::from_vec(vec![0.3, -1.0, 4.0]), 1e-6);
        assert_eq!(g.amax(), 0.0);
    }

    #[test]
    fn double_well_curvature() {
        let h = fd_hessian(&DoubleWell, &ParamVector::from_element(1, 0.0), 1e-5);
        assert!((h[(0, 0)] + 4.0).abs() < 1e-6);
        let hv = fd_hessian_vector(&DoubleWell, &ParamVector::from_element(1, 0.0), &ParamVector::from_element(1, 2.0), 1e-5);
        assert!((hv[0] + 8.0).abs() < 1e-6);
    }
}
