//! Spherical p-spin experiments: gradient-descent quench ensembles and their
//! concentration, landscape exploration at small N, and the teacher–student
//! protocol for a loss with a known zero ground state.

mod teacher;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explorer::{basin_hopping_runs, connect_database, BasinHoppingConfig, ConnectConfig, ConnectReport};
use crate::landscape::{build_disconnectivity_tree, DisconnectivityTree, LandscapeDatabase};
use crate::models::pspin::tangent;
use crate::models::{PSpinModel, SphereChart};
use crate::numcore::ParamVector;
use crate::rng;

pub use teacher::{embed_teacher, permute_hidden, student_loss, teacher_student, StudentLoss, TeacherStudentConfig, TeacherStudentReport};

/// Consecutive energy increases after which a descent counts as diverged.
pub const DIVERGENCE_RUN: usize = 100;

/// Threshold and ground-state levels of the p = 3 model, per spin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReference {
    /// Level of the bulk of the local minima, E∞ = 2√(2/3).
    pub e_inf: f64,
    /// Ground-state bound E₀.
    pub e_0: f64,
}

impl ComplexityReference {
    pub fn p3() -> Self {
        Self { e_inf: 2.0 * (2.0f64 / 3.0).sqrt(), e_0: 1.657 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuenchConfig {
    pub n: usize,
    pub p: usize,
    pub n_starts: usize,
    /// Constant step length multiplying the tangent gradient.
    pub step_size: f64,
    /// Stop when the tangent gradient norm drops below this.
    pub grad_tol: f64,
    pub max_steps: usize,
    /// Seed of the coefficient realisation.
    pub model_seed: u64,
    /// Seed of the starting points.
    pub seed: u64,
}

impl QuenchConfig {
    /// Defaults for size `n`: step 0.01·√N, tolerance 1e-6, 10⁵ steps.
    pub fn new(n: usize, p: usize, n_starts: usize, model_seed: u64, seed: u64) -> Self {
        Self { n, p, n_starts, step_size: 0.01 * (n as f64).sqrt(), grad_tol: 1e-6, max_steps: 100_000, model_seed, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Precondition(format!("N must be at least 2, got {}", self.n)));
        }
        if !(self.step_size > 0.0) || !(self.grad_tol > 0.0) {
            return Err(Error::Precondition("step_size and grad_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuenchOutcome {
    Converged,
    /// Step budget exhausted.
    Unconverged,
    /// Energy rose for [`DIVERGENCE_RUN`] consecutive steps.
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchRun {
    pub energy: f64,
    pub point: ParamVector,
    pub grad_norm: f64,
    pub n_steps: usize,
    pub outcome: QuenchOutcome,
}

/// Point drawn uniformly from the sphere of radius `radius` in N dimensions.
pub fn uniform_sphere_point(n: usize, radius: f64, r: &mut rng::Rng) -> ParamVector {
    loop {
        let v = ParamVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut *r)));
        let len = v.norm();
        if len > 0.0 {
            return v * (radius / len);
        }
    }
}

/// Energy and tangent gradient; the energy comes from Euler's relation
/// H(w) = w·∇H(w)/p for a homogeneous polynomial.
fn energy_tangent(model: &PSpinModel, w: &ParamVector) -> (f64, ParamVector) {
    let g = model.euclidean_gradient(w);
    (g.dot(w) / model.p as f64, tangent(&g, w))
}

/// Constant-step tangent gradient descent on |w|² = N, each step retracted
/// back onto the sphere by rescaling.
pub fn sphere_descent(model: &PSpinModel, w0: &ParamVector, step: f64, grad_tol: f64, max_steps: usize) -> QuenchRun {
    let radius = (model.n as f64).sqrt();
    let mut w = w0 * (radius / w0.norm());
    let (mut e, mut g) = energy_tangent(model, &w);
    let mut rises = 0;
    let mut n_steps = 0;
    let outcome = loop {
        if g.norm() < grad_tol {
            break QuenchOutcome::Converged;
        }
        if n_steps >= max_steps {
            break QuenchOutcome::Unconverged;
        }
        w.axpy(-step, &g, 1.0);
        let len = w.norm();
        w *= radius / len;
        let (e_new, g_new) = energy_tangent(model, &w);
        rises = if e_new > e { rises + 1 } else { 0 };
        e = e_new;
        g = g_new;
        n_steps += 1;
        if rises >= DIVERGENCE_RUN || !e.is_finite() {
            break QuenchOutcome::Diverged;
        }
    };
    QuenchRun { energy: e, grad_norm: g.norm(), point: w, n_steps, outcome }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchEnsemble {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub model_seed: u64,
    pub step_size: f64,
    /// E/N of every converged run, in start order.
    pub energies_per_spin: Vec<f64>,
    /// Outcome of every start, in start order.
    pub outcomes: Vec<QuenchOutcome>,
    pub n_diverged: usize,
    pub n_unconverged: usize,
}

impl QuenchEnsemble {
    pub fn mean(&self) -> f64 {
        self.energies_per_spin.iter().sum::<f64>() / self.energies_per_spin.len().max(1) as f64
    }

    /// Unbiased sample variance of E/N (zero for fewer than two runs).
    pub fn variance(&self) -> f64 {
        let k = self.energies_per_spin.len();
        if k < 2 {
            return 0.0;
        }
        let m = self.mean();
        self.energies_per_spin.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / (k - 1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("energy_per_spin\n");
        for e in &self.energies_per_spin {
            s.push_str(&format!("{e}\n"));
        }
        s
    }
}

/// Runs `cfg.n_starts` descents from uniform sphere starts (start `k` uses
/// stream `k` of `cfg.seed`) on the model realisation `cfg.model_seed`.
pub fn quench_ensemble(cfg: &QuenchConfig) -> Result<QuenchEnsemble> {
    cfg.validate()?;
    let model = PSpinModel::new(cfg.n, cfg.p, cfg.model_seed)?;
    quench_ensemble_with(&model, cfg)
}

/// As [`quench_ensemble`] on an existing model (whose size and degree
/// override those in `cfg`).
pub fn quench_ensemble_with(model: &PSpinModel, cfg: &QuenchConfig) -> Result<QuenchEnsemble> {
    cfg.validate()?;
    let radius = (model.n as f64).sqrt();
    let runs: Vec<QuenchRun> = (0..cfg.n_starts)
        .into_par_iter()
        .map(|k| {
            let w0 = uniform_sphere_point(model.n, radius, &mut rng::stream(cfg.seed, k as u64));
            sphere_descent(model, &w0, cfg.step_size, cfg.grad_tol, cfg.max_steps)
        })
        .collect();
    let nf = model.n as f64;
    let count = |o| runs.iter().filter(|r| r.outcome == o).count();
    Ok(QuenchEnsemble {
        n: model.n,
        p: model.p,
        seed: cfg.seed,
        model_seed: model.seed,
        step_size: cfg.step_size,
        energies_per_spin: runs.iter().filter(|r| r.outcome == QuenchOutcome::Converged).map(|r| r.energy / nf).collect(),
        outcomes: runs.iter().map(|r| r.outcome).collect(),
        n_diverged: count(QuenchOutcome::Diverged),
        n_unconverged: count(QuenchOutcome::Unconverged),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub n: usize,
    pub n_converged: usize,
    pub mean: f64,
    pub variance: f64,
}

/// Empirical variance of E/N for each configuration.
pub fn variance_vs_n(configs: &[QuenchConfig]) -> Result<Vec<VarianceRow>> {
    if configs.len() < 2 {
        return Err(Error::Precondition("variance table needs at least two sizes".into()));
    }
    configs
        .iter()
        .map(|c| {
            let ens = quench_ensemble(c)?;
            Ok(VarianceRow { n: c.n, n_converged: ens.energies_per_spin.len(), mean: ens.mean(), variance: ens.variance() })
        })
        .collect()
}

pub fn variance_csv(rows: &[VarianceRow]) -> String {
    let mut s = String::from("n,n_converged,mean,variance\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.n, r.n_converged, r.mean, r.variance));
    }
    s
}

/// Histogram of E/N with the threshold levels as metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyHistogram {
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
    pub below: usize,
    pub above: usize,
    pub minus_e0: f64,
    pub minus_e_inf: f64,
}

pub const HISTOGRAM_BINS: usize = 60;
pub const HISTOGRAM_RANGE: (f64, f64) = (-1.70, -1.30);

impl EnergyHistogram {
    pub fn from_ensemble(ens: &QuenchEnsemble) -> Self {
        let (lo, hi) = HISTOGRAM_RANGE;
        let mut counts = vec![0; HISTOGRAM_BINS];
        let (mut below, mut above) = (0, 0);
        for &e in &ens.energies_per_spin {
            if e < lo {
                below += 1;
            } else if e >= hi {
                above += 1;
            } else {
                counts[(((e - lo) / (hi - lo)) * HISTOGRAM_BINS as f64).floor().min((HISTOGRAM_BINS - 1) as f64) as usize] += 1;
            }
        }
        let r = ComplexityReference::p3();
        Self { n: ens.n, lo, hi, counts, below, above, minus_e0: -r.e_0, minus_e_inf: -r.e_inf }
    }
}

/// Descent on the product of three unit spheres for Σ w¹_i w²_j w³_k x_ijk.
/// Returns the final energy, the three blocks and whether the combined
/// tangent gradient fell below `grad_tol`.
pub fn product_sphere_descent(
    model: &PSpinModel,
    seed: u64,
    step: f64,
    grad_tol: f64,
    max_steps: usize,
) -> Result<(f64, [ParamVector; 3], bool)> {
    if model.p != 3 {
        return Err(Error::Precondition("product-sphere descent needs p = 3".into()));
    }
    let mut r = rng::seeded(seed);
    let mut w: [ParamVector; 3] = std::array::from_fn(|_| uniform_sphere_point(model.n, 1.0, &mut r));
    let mut e = 0.0;
    for _ in 0..=max_steps {
        let (en, g) = model.pspin_product_sphere_energy(&w[0], &w[1], &w[2])?;
        e = en;
        let norm = g.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt();
        if norm < grad_tol {
            return Ok((e, w, true));
        }
        for (b, gb) in w.iter_mut().zip(&g) {
            b.axpy(-step, gb, 1.0);
            let len = b.norm();
            *b /= len;
        }
    }
    Ok((e, w, false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PSpinLandscapeConfig {
    /// Independent basin-hopping runs from uniform sphere starts.
    pub n_starts: usize,
    pub bh: BasinHoppingConfig,
    pub connect: ConnectConfig,
    /// Number of tree levels across the energy range of the database.
    pub tree_levels: usize,
}

impl Default for PSpinLandscapeConfig {
    fn default() -> Self {
        Self {
            n_starts: 20,
            bh: BasinHoppingConfig { n_steps: 10, step_size: 1.0, temperature: 1.0, ..Default::default() },
            connect: ConnectConfig { budget: 40, ..Default::default() },
            tree_levels: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PSpinLandscape {
    pub db: LandscapeDatabase,
    pub tree: DisconnectivityTree,
    pub connect: ConnectReport,
}

/// Basin-hopping and connection runs for the p = 3 model on the sphere,
/// summarised as a disconnectivity tree.
pub fn pspin_disconnectivity(n: usize, seed: u64, cfg: &PSpinLandscapeConfig) -> Result<PSpinLandscape> {
    if !(2..=100).contains(&n) {
        return Err(Error::Precondition(format!("landscape exploration supports 2 ≤ N ≤ 100, got {n}")));
    }
    let model = PSpinModel::new(n, 3, seed)?;
    let chart = SphereChart { model: &model };
    let mut db = LandscapeDatabase::new(crate::numcore::Objective::metric(&chart));
    let starts: Vec<ParamVector> =
        (0..cfg.n_starts.max(1)).map(|k| uniform_sphere_point(n, (n as f64).sqrt(), &mut rng::stream(seed, k as u64))).collect();
    basin_hopping_runs(&chart, &starts, &BasinHoppingConfig { seed, ..cfg.bh.clone() }, &mut db)?;
    let connect = connect_database(&chart, &mut db, &cfg.connect)?;
    let (lo, hi) = db
        .minima
        .iter()
        .map(|m| m.energy)
        .chain(db.transition_states.iter().map(|t| t.energy))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), e| (a.min(e), b.max(e)));
    let delta = ((hi - lo) / cfg.tree_levels.max(1) as f64).max(1e-9);
    let tree = build_disconnectivity_tree(&db, lo, hi, delta)?;
    Ok(PSpinLandscape { db, tree, connect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    #[test]
    fn p1_reaches_the_unique_minimum() {
        let cfg = QuenchConfig { n_starts: 8, ..QuenchConfig::new(12, 1, 8, 3, 4) };
        let ens = quench_ensemble(&cfg).unwrap();
        let model = PSpinModel::new(12, 1, 3).unwrap();
        let xnorm = ParamVector::from_vec(model.coefficients.clone()).norm();
        assert_eq!(ens.energies_per_spin.len(), 8);
        for e in &ens.energies_per_spin {
            assert!((e + xnorm / 12f64.sqrt()).abs() < 1e-9, "{e}");
        }
        assert!(ens.variance() < 1e-18);
    }

    #[test]
    fn p2_energies_are_eigenvalues() {
        for seed in 0..4 {
            let n = 10;
            let model = PSpinModel::new(n, 2, seed).unwrap();
            let eig = SymmetricEigen::new(model.symmetric_matrix().unwrap()).eigenvalues;
            let cfg = QuenchConfig { step_size: 0.05, ..QuenchConfig::new(n, 2, 5, seed, 100 + seed) };
            let ens = quench_ensemble_with(&model, &cfg).unwrap();
            assert!(!ens.energies_per_spin.is_empty());
            for e in &ens.energies_per_spin {
                let nearest = eig.iter().map(|l| (l - e).abs() / l.abs().max(1e-12)).fold(f64::INFINITY, f64::min);
                assert!(nearest < 1e-6, "E/N {e} not an eigenvalue of {eig}");
            }
        }
    }

    #[test]
    fn endpoints_are_tangent_stationary() {
        let model = PSpinModel::new(15, 3, 2).unwrap();
        let w0 = uniform_sphere_point(15, 15f64.sqrt(), &mut rng::seeded(1));
        let run = sphere_descent(&model, &w0, 0.05, 1e-6, 100_000);
        assert_eq!(run.outcome, QuenchOutcome::Converged);
        assert!((run.point.norm_squared() - 15.0).abs() < 1e-10);
        let g = tangent(&model.euclidean_gradient(&run.point), &run.point);
        assert!(g.norm() < 1e-6);
        assert!(g.dot(&run.point).abs() < 1e-10);
    }

    #[test]
    fn divergent_step_is_dropped() {
        let model = PSpinModel::new(10, 2, 1).unwrap();
        let w0 = uniform_sphere_point(10, 10f64.sqrt(), &mut rng::seeded(1));
        let run = sphere_descent(&model, &w0, 50.0, 1e-6, 20_000);
        assert_ne!(run.outcome, QuenchOutcome::Converged);
    }

    #[test]
    fn histogram_counts_every_energy() {
        let ens = QuenchEnsemble {
            n: 10,
            p: 3,
            seed: 0,
            model_seed: 0,
            step_size: 0.1,
            energies_per_spin: vec![-1.8, -1.7, -1.65, -1.31, -1.30, -1.0],
            outcomes: vec![QuenchOutcome::Converged; 6],
            n_diverged: 0,
            n_unconverged: 0,
        };
        let h = EnergyHistogram::from_ensemble(&ens);
        assert_eq!(h.below, 1);
        assert_eq!(h.above, 2);
        assert_eq!(h.counts.iter().sum::<usize>(), 3);
        assert_eq!(h.counts[0], 1);
        assert!((h.minus_e_inf + 1.632_993).abs() < 1e-6);
    }

    #[test]
    fn product_sphere_descent_converges() {
        let model = PSpinModel::new(8, 3, 5).unwrap();
        let (e, w, ok) = product_sphere_descent(&model, 2, 0.05, 1e-6, 200_000).unwrap();
        assert!(ok);
        assert!(e < 0.0);
        assert!(w.iter().all(|b| (b.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn small_landscape_has_index_one_saddles() {
        let cfg = PSpinLandscapeConfig {
            n_starts: 6,
            bh: BasinHoppingConfig { n_steps: 5, ..PSpinLandscapeConfig::default().bh },
            connect: ConnectConfig { budget: 10, ..Default::default() },
            tree_levels: 20,
        };
        let out = pspin_disconnectivity(10, 3, &cfg).unwrap();
        assert!(out.db.minima.len() >= 2, "{}", out.db.minima.len());
        let model = PSpinModel::new(10, 3, 3).unwrap();
        let chart = SphereChart { model: &model };
        for ts in &out.db.transition_states {
            assert_eq!(crate::explorer::stationary_index(&chart, &ts.coords).unwrap(), 1);
        }
        for m in &out.db.minima {
            assert!(m.energy / 10.0 > -ComplexityReference::p3().e_0 - 0.5);
        }
    }
}
