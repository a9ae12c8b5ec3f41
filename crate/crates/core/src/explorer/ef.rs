use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{
    hessian_spectrum, lbfgs_minimize, lbfgs_minimize_with, lowest_eigenpair, lowest_eigenvalues, rms, LbfgsConfig,
    Objective, ParamVector, DEFAULT_ZERO_TOL, DENSE_LIMIT,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EfConfig {
    pub max_iters: usize,
    pub rms_tol: f64,
    /// Trust radius of the uphill step along the lowest eigenvector.
    pub max_uphill_step: f64,
    /// Displacement along the negative eigenvector before the pathway quenches.
    pub displacement: f64,
    /// Iterations of the minimisation in the orthogonal complement per cycle.
    pub inner_iters: usize,
    /// Quench settings for the two pathway minima.
    pub quench: LbfgsConfig,
}

impl Default for EfConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            rms_tol: 1e-6,
            max_uphill_step: 0.1,
            displacement: 0.01,
            inner_iters: 20,
            quench: LbfgsConfig::default(),
        }
    }
}

/// A pathway minimum reached from the transition state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub energy: f64,
    pub coords: ParamVector,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionStateResult {
    pub coords: ParamVector,
    pub energy: f64,
    pub rms: f64,
    pub neg_eigenvalue: f64,
    pub eigenvector: ParamVector,
    /// Quench from coords − δ·v.
    pub minus: Endpoint,
    /// Quench from coords + δ·v.
    pub plus: Endpoint,
    pub n_iters: usize,
}

/// Number of negative Hessian eigenvalues at `x` (dense spectrum up to the
/// dense limit, two lowest Lanczos eigenvalues above it, which is enough to
/// tell 0, 1 and "more than 1" apart).
pub fn stationary_index<O: Objective + ?Sized>(obj: &O, x: &ParamVector) -> Result<usize> {
    if obj.dim() <= DENSE_LIMIT {
        return Ok(hessian_spectrum(obj, x, DEFAULT_ZERO_TOL)?.n_negative);
    }
    let l = lowest_eigenvalues(obj, x, 2)?;
    let scale = l[0].abs().max(l[1].abs());
    Ok(l.iter().filter(|&&v| v < -DEFAULT_ZERO_TOL * scale).count())
}

/// Refines a transition-state candidate: each cycle steps uphill along the
/// lowest Hessian eigenvector and minimises in its orthogonal complement.
/// On convergence the index must be exactly one; the two connected minima are
/// then found by quenching from small displacements along the eigenvector.
pub fn hybrid_ef_refine<O: Objective + ?Sized>(obj: &O, x0: &ParamVector, cfg: &EfConfig) -> Result<TransitionStateResult> {
    if x0.len() != obj.dim() {
        return Err(Error::DimensionMismatch { expected: obj.dim(), got: x0.len() });
    }
    let mut x = x0.clone();
    let mut converged = false;
    let mut iters = 0;
    let inner = LbfgsConfig { max_iters: cfg.inner_iters, rms_tol: 0.1 * cfg.rms_tol, ..cfg.quench.clone() };
    while iters < cfg.max_iters {
        let (_, g) = obj.energy_gradient(&x);
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { point: x.as_slice().to_vec() });
        }
        if rms(&g) <= cfg.rms_tol {
            converged = true;
            break;
        }
        iters += 1;
        let pair = lowest_eigenpair(obj, &x)?;
        let v = pair.vector;
        let gv = g.dot(&v);
        let lam = pair.value;
        let denom = lam.abs() + (lam * lam + 4.0 * gv * gv).sqrt();
        let h = if denom > 0.0 { 2.0 * gv / denom } else { 0.0 };
        x.axpy(h.clamp(-cfg.max_uphill_step, cfg.max_uphill_step), &v, 1.0);
        let res = lbfgs_minimize_with(
            |y| {
                let (e, g) = obj.energy_gradient(y);
                let c = g.dot(&v);
                (e, g - &v * c)
            },
            &x,
            &inner,
        );
        match res {
            Ok(r) => x = r.final_point,
            Err(Error::NonFinite { point }) => return Err(Error::NonFinite { point }),
            Err(e) => return Err(e),
        }
    }
    let (energy, g) = obj.energy_gradient(&x);
    if !converged {
        return Err(Error::NotConverged(format!(
            "eigenvector-following stopped after {iters} cycles at RMS gradient {:e}",
            rms(&g)
        )));
    }
    let index = stationary_index(obj, &x)?;
    if index != 1 {
        return Err(Error::WrongIndex { index, expected: 1, energy });
    }
    let pair = lowest_eigenpair(obj, &x)?;
    let quench = |sign: f64| -> Result<Endpoint> {
        let start = &x + &pair.vector * (sign * cfg.displacement);
        let r = lbfgs_minimize(obj, &start, &cfg.quench)?;
        Ok(Endpoint { energy: r.final_energy, coords: r.final_point, converged: r.converged })
    };
    Ok(TransitionStateResult {
        minus: quench(-1.0)?,
        plus: quench(1.0)?,
        rms: rms(&g),
        coords: x,
        energy,
        neg_eigenvalue: pair.value,
        eigenvector: pair.vector,
        n_iters: iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::testfns::{DoubleWell, Quadratic};

    #[test]
    fn double_well_saddle_and_pathway() {
        let ts = hybrid_ef_refine(&DoubleWell, &ParamVector::from_element(1, 0.1), &EfConfig::default()).unwrap();
        assert!(ts.coords[0].abs() < 1e-6);
        assert!((ts.energy - 1.0).abs() < 1e-10);
        assert!((ts.neg_eigenvalue + 4.0).abs() < 1e-5);
        let mut ends = [ts.minus.coords[0], ts.plus.coords[0]];
        ends.sort_by(f64::total_cmp);
        assert!((ends[0] + 1.0).abs() < 1e-6 && (ends[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn minimum_is_rejected_with_index_zero() {
        let r = hybrid_ef_refine(&DoubleWell, &ParamVector::from_element(1, 1.0), &EfConfig::default());
        assert!(matches!(r, Err(Error::WrongIndex { index: 0, .. })), "{r:?}");
    }

    #[test]
    fn convex_start_does_not_converge_to_a_saddle() {
        let q = Quadratic(vec![1.0, 2.0]);
        let cfg = EfConfig { max_iters: 30, ..Default::default() };
        assert!(hybrid_ef_refine(&q, &ParamVector::from_vec(vec![0.5, 0.5]), &cfg).is_err());
    }
}
