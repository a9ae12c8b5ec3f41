use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::LandscapeDatabase;
use crate::numcore::{lbfgs_minimize, LbfgsConfig, Objective, ParamVector};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasinHoppingConfig {
    pub n_steps: usize,
    /// Maximum perturbation per coordinate.
    pub step_size: f64,
    /// Metropolis temperature on quenched energies; 0 is greedy, +∞ accepts all.
    pub temperature: f64,
    pub seed: u64,
    pub lbfgs: LbfgsConfig,
}

impl Default for BasinHoppingConfig {
    fn default() -> Self {
        Self { n_steps: 100, step_size: 0.5, temperature: 1.0, seed: 0, lbfgs: LbfgsConfig::default() }
    }
}

impl BasinHoppingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(Error::Precondition(format!("step_size must be positive, got {}", self.step_size)));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::Precondition(format!("temperature must be non-negative, got {}", self.temperature)));
        }
        self.lbfgs.validate()
    }
}

/// Resumable basin-hopping state. Step `k` draws from its own random stream,
/// so a run restored from a checkpoint continues exactly as an uninterrupted
/// one would.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinHopping {
    pub cfg: BasinHoppingConfig,
    pub current: ParamVector,
    pub current_energy: f64,
    pub steps_done: usize,
    pub n_accepted: usize,
    pub n_unconverged: usize,
    /// Every converged quench, in order (energy, symmetry-reduced point).
    pub quenched: Vec<(f64, ParamVector)>,
}

impl BasinHopping {
    /// Quenches `x0` and makes the result the current point.
    pub fn start<O: Objective + ?Sized>(obj: &O, x0: &ParamVector, cfg: BasinHoppingConfig) -> Result<Self> {
        cfg.validate()?;
        let res = lbfgs_minimize(obj, x0, &cfg.lbfgs)?;
        let mut bh = Self {
            cfg,
            current: obj.symmetry_reduce(&res.final_point),
            current_energy: res.final_energy,
            steps_done: 0,
            n_accepted: 0,
            n_unconverged: 0,
            quenched: Vec::new(),
        };
        if res.converged {
            bh.quenched.push((res.final_energy, obj.symmetry_reduce(&res.final_point)));
        } else {
            bh.n_unconverged += 1;
        }
        Ok(bh)
    }

    pub fn is_finished(&self) -> bool {
        self.steps_done >= self.cfg.n_steps
    }

    /// One perturb-quench-accept cycle.
    pub fn step<O: Objective + ?Sized>(&mut self, obj: &O) -> Result<()> {
        let mut r = rng::stream(self.cfg.seed, self.steps_done as u64 + 1);
        let s = self.cfg.step_size;
        let trial = ParamVector::from_iterator(
            self.current.len(),
            self.current.iter().map(|&v| v + s * (2.0 * r.random::<f64>() - 1.0)),
        );
        self.steps_done += 1;
        let res = match lbfgs_minimize(obj, &trial, &self.cfg.lbfgs) {
            Ok(res) => res,
            Err(Error::NonFinite { .. }) => {
                self.n_unconverged += 1;
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        if !res.converged {
            self.n_unconverged += 1;
            return Ok(());
        }
        let reduced = obj.symmetry_reduce(&res.final_point);
        self.quenched.push((res.final_energy, reduced.clone()));
        let de = res.final_energy - self.current_energy;
        let t = self.cfg.temperature;
        let u: f64 = r.random();
        let accept = de <= 0.0 || (t > 0.0 && u < (-de / t).exp());
        if accept {
            self.current = reduced;
            self.current_energy = res.final_energy;
            self.n_accepted += 1;
        }
        Ok(())
    }

    pub fn run_to_end<O: Objective + ?Sized>(&mut self, obj: &O) -> Result<()> {
        while !self.is_finished() {
            self.step(obj)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinHoppingReport {
    /// Database ids of the distinct minima visited, in first-visit order.
    pub minima: Vec<usize>,
    pub n_quenches: usize,
    pub n_accepted: usize,
    pub n_unconverged: usize,
}

fn register(bh: &BasinHopping, db: &mut LandscapeDatabase) -> Result<BasinHoppingReport> {
    let mut minima = Vec::new();
    for (e, x) in &bh.quenched {
        let (id, _) = db.add_minimum(*e, x)?;
        if !minima.contains(&id) {
            minima.push(id);
        }
    }
    Ok(BasinHoppingReport {
        minima,
        n_quenches: bh.quenched.len() + bh.n_unconverged,
        n_accepted: bh.n_accepted,
        n_unconverged: bh.n_unconverged,
    })
}

/// Runs `cfg.n_steps` basin-hopping steps from `x0`, registering every
/// converged quench in `db`.
pub fn basin_hopping<O: Objective + ?Sized>(
    obj: &O,
    x0: &ParamVector,
    cfg: &BasinHoppingConfig,
    db: &mut LandscapeDatabase,
) -> Result<BasinHoppingReport> {
    let mut bh = BasinHopping::start(obj, x0, cfg.clone())?;
    bh.run_to_end(obj)?;
    register(&bh, db)
}

/// Independent runs from several starts (run `r` uses seed stream `r` of
/// `cfg.seed`). Runs execute in parallel; registration happens afterwards in
/// start order, so the database does not depend on scheduling.
pub fn basin_hopping_runs<O: Objective + ?Sized>(
    obj: &O,
    starts: &[ParamVector],
    cfg: &BasinHoppingConfig,
    db: &mut LandscapeDatabase,
) -> Result<Vec<BasinHoppingReport>> {
    let runs: Vec<Result<BasinHopping>> = starts
        .par_iter()
        .enumerate()
        .map(|(r, x0)| {
            let cfg = BasinHoppingConfig { seed: rng::derive_seed(cfg.seed, r as u64), ..cfg.clone() };
            let mut bh = BasinHopping::start(obj, x0, cfg)?;
            bh.run_to_end(obj)?;
            Ok(bh)
        })
        .collect();
    runs.into_iter().map(|bh| register(&bh?, db)).collect()
}
