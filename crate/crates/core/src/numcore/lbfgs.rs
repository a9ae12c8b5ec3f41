//! Limited-memory BFGS with a capped step and backtracking line search.
//!
//! Search directions come from the standard two-loop recursion with the
//! `sᵀy / yᵀy` initial scaling. Steps longer than `max_step` are rescaled, and
//! each step is accepted only under the sufficient-decrease (Armijo) condition,
//! so the accepted energy sequence never increases.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{all_finite, rms, Objective, ParamVector};
use crate::error::{Error, Result};

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LbfgsConfig {
    /// Number of stored correction pairs.
    pub memory: usize,
    /// Convergence threshold on the RMS gradient.
    pub rms_tol: f64,
    /// Largest Euclidean length of a single step.
    pub max_step: f64,
    pub max_iters: usize,
    pub record_trajectory: bool,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { memory: 10, rms_tol: 1e-6, max_step: 0.2, max_iters: 10_000, record_trajectory: false }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::Precondition("LBFGS memory must be at least 1".into()));
        }
        if !(self.rms_tol > 0.0) || !(self.max_step > 0.0) {
            return Err(Error::Precondition("LBFGS rms_tol and max_step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizationResult {
    pub final_point: ParamVector,
    pub final_energy: f64,
    pub final_rms: f64,
    pub converged: bool,
    /// Accepted iterations.
    pub n_steps: usize,
    /// Energy/gradient evaluations, including rejected line-search trials.
    pub n_evals: usize,
    /// One point per iteration, start and end included.
    pub trajectory: Option<Vec<ParamVector>>,
}

/// Minimises `obj` from `x0`.
///
/// Reaching `max_iters` is not an error: the result comes back with
/// `converged == false`. A non-finite energy or gradient at an accepted point
/// aborts with the offending point; non-finite trial points are backtracked.
pub fn lbfgs_minimize<O: Objective + ?Sized>(
    obj: &O,
    x0: &ParamVector,
    cfg: &LbfgsConfig,
) -> Result<MinimizationResult> {
    if x0.len() != obj.dim() {
        return Err(Error::DimensionMismatch { expected: obj.dim(), got: x0.len() });
    }
    lbfgs_minimize_with(|x| obj.energy_gradient(x), x0, cfg)
}

/// LBFGS over an arbitrary evaluator returning `(energy, gradient)`.
///
/// The evaluator may return a projected gradient (for minimisation in a
/// subspace), as long as the projection is applied consistently.
pub fn lbfgs_minimize_with<F>(mut eval: F, x0: &ParamVector, cfg: &LbfgsConfig) -> Result<MinimizationResult>
where
    F: FnMut(&ParamVector) -> (f64, ParamVector),
{
    cfg.validate()?;
    let n = x0.len();
    let mut x = x0.clone();
    let (mut e, mut g) = eval(&x);
    let mut n_evals = 1;
    if !e.is_finite() || !all_finite(&g) {
        return Err(Error::NonFinite { point: x.as_slice().to_vec() });
    }
    let mut trajectory = cfg.record_trajectory.then(|| vec![x.clone()]);
    let mut history: VecDeque<(ParamVector, ParamVector, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut n_steps = 0;
    let mut converged = rms(&g) <= cfg.rms_tol;

    while !converged && n_steps < cfg.max_iters {
        let mut accepted = None;
        for attempt in 0..2 {
            let mut d = if attempt == 0 { two_loop(&g, &history) } else { -&g };
            if d.dot(&g) >= 0.0 {
                history.clear();
                d = -&g;
            }
            let len = d.norm();
            if len > cfg.max_step {
                d *= cfg.max_step / len;
            }
            let slope = d.dot(&g);
            let mut alpha = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                let trial = &x + &d * alpha;
                let (et, gt) = eval(&trial);
                n_evals += 1;
                let sufficient = et <= e + ARMIJO_C1 * alpha * slope;
                // Below rounding level the energy cannot certify progress; fall
                // back to a decrease of the gradient norm.
                let flat = et <= e && gt.norm() < g.norm();
                if et.is_finite() && all_finite(&gt) && (sufficient || flat) {
                    accepted = Some((trial, et, gt));
                    break;
                }
                alpha *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            // Stale curvature pairs can produce useless directions; retry downhill.
            history.clear();
        }
        let Some((x_new, e_new, g_new)) = accepted else {
            break;
        };
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = x_new;
        e = e_new;
        g = g_new;
        n_steps += 1;
        if let Some(t) = trajectory.as_mut() {
            t.push(x.clone());
        }
        converged = rms(&g) <= cfg.rms_tol;
    }
    debug_assert_eq!(x.len(), n);
    Ok(MinimizationResult {
        final_rms: rms(&g),
        final_point: x,
        final_energy: e,
        converged,
        n_steps,
        n_evals,
        trajectory,
    })
}

fn two_loop(g: &ParamVector, history: &VecDeque<(ParamVector, ParamVector, f64)>) -> ParamVector {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, y, 1.0);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = s.dot(y) / y.dot(y);
        q *= gamma;
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&q);
        q.axpy(a - b, s, 1.0);
    }
    -q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::testfns::{Quadratic, Rosenbrock};

    #[test]
    fn quadratic_converges_to_origin() {
        let q = Quadratic(vec![1.0, 1.0]);
        let r = lbfgs_minimize(&q, &ParamVector::from_vec(vec![3.0, 4.0]), &LbfgsConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.final_point.norm() < 1e-5);
        assert!(r.final_energy < 1e-11);
    }

    #[test]
    fn rosenbrock_reaches_analytic_minimum_reproducibly() {
        let cfg = LbfgsConfig { rms_tol: 1e-9, max_iters: 100_000, ..Default::default() };
        let x0 = ParamVector::from_vec(vec![-1.2, 1.0]);
        let r = lbfgs_minimize(&Rosenbrock, &x0, &cfg).unwrap();
        assert!(r.converged);
        assert!((r.final_point[0] - 1.0).abs() < 1e-6 && (r.final_point[1] - 1.0).abs() < 1e-6, "{}", r.final_point);
        let again = lbfgs_minimize(&Rosenbrock, &x0, &cfg).unwrap();
        assert_eq!(r.n_steps, again.n_steps);
        assert_eq!(r.final_point, again.final_point);
    }

    #[test]
    fn trajectory_and_monotone_energy() {
        let cfg = LbfgsConfig { record_trajectory: true, ..Default::default() };
        let r = lbfgs_minimize(&Rosenbrock, &ParamVector::from_vec(vec![-1.2, 1.0]), &cfg).unwrap();
        let traj = r.trajectory.as_ref().unwrap();
        assert_eq!(traj.len(), r.n_steps + 1);
        assert_eq!(traj.last().unwrap(), &r.final_point);
        let energies: Vec<f64> = traj.iter().map(|x| Rosenbrock.energy(x)).collect();
        assert!(energies.windows(2).all(|w| w[1] <= w[0]));
        let plain = lbfgs_minimize(&Rosenbrock, &ParamVector::from_vec(vec![-1.2, 1.0]), &LbfgsConfig::default()).unwrap();
        assert!(plain.trajectory.is_none());
    }

    #[test]
    fn iteration_cap_is_not_an_error() {
        let cfg = LbfgsConfig { max_iters: 3, ..Default::default() };
        let r = lbfgs_minimize(&Rosenbrock, &ParamVector::from_vec(vec![-1.2, 1.0]), &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.n_steps, 3);
    }

    #[test]
    fn non_finite_start_is_rejected() {
        let err = lbfgs_minimize_with(
            |x: &ParamVector| (f64::NAN, x.clone()),
            &ParamVector::from_vec(vec![1.0]),
            &LbfgsConfig::default(),
        );
        assert!(matches!(err, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn dimension_mismatch() {
        let q = Quadratic(vec![1.0, 1.0]);
        assert!(lbfgs_minimize(&q, &ParamVector::zeros(3), &LbfgsConfig::default()).is_err());
    }
}
