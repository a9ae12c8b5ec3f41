//! AUC of triatomic outcome predictions as a function of how many steps
//! before convergence the input configuration was taken.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::roc_auc;
use crate::error::{Error, Result};
use crate::explorer::{basin_hopping, BasinHoppingConfig};
use crate::landscape::LandscapeDatabase;
use crate::models::{extract_inputs, ClassificationDataset, InputMode, NeuralNet, NeuralNetSpec, QuenchDataset};
use crate::numcore::{LbfgsConfig, Metric, ParamVector};
use crate::rng;

/// The triangle outcome is the positive class.
const POSITIVE_CLASS: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AucStepsConfig {
    pub n_hidden: usize,
    pub lambdas: Vec<f64>,
    /// Position in `lambdas` whose global minimum gives the headline curve.
    pub reference_lambda: usize,
    pub regularize_bias: bool,
    pub s_values: Vec<usize>,
    /// Fraction of quench sequences used for training; the rest are tested.
    pub train_fraction: f64,
    /// Basin-hopping per (λ, s); its seed is replaced per λ.
    pub bh: BasinHoppingConfig,
    /// Half-width of the uniform initial weights.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for AucStepsConfig {
    fn default() -> Self {
        Self {
            n_hidden: 3,
            lambdas: vec![1e-4, 1e-3, 1e-2],
            reference_lambda: 0,
            regularize_bias: true,
            s_values: vec![1, 2, 5, 10, 20, 30, 40, 50, 60, 70, 80],
            train_fraction: 0.5,
            bh: BasinHoppingConfig {
                n_steps: 20,
                step_size: 1.0,
                temperature: 0.05,
                seed: 0,
                lbfgs: LbfgsConfig { rms_tol: 1e-5, ..LbfgsConfig::default() },
            },
            init_scale: 1.0,
            seed: 0,
        }
    }
}

impl AucStepsConfig {
    pub fn spec(&self, lambda: f64) -> NeuralNetSpec {
        NeuralNetSpec { n_in: 2, n_hidden: self.n_hidden, n_out: 4, lambda, regularize_bias: self.regularize_bias }
    }

    fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.reference_lambda >= self.lambdas.len() {
            return Err(Error::Precondition("reference_lambda must index a non-empty lambda list".into()));
        }
        if self.s_values.is_empty() || self.s_values.contains(&0) {
            return Err(Error::Precondition("s_values must be non-empty and positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Precondition(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction)));
        }
        self.bh.validate()
    }
}

/// Minima of the training cost for one (λ, s), lowest energy first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedMinima {
    pub lambda_index: usize,
    pub s: usize,
    pub energies: Vec<f64>,
    pub weights: Vec<ParamVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub s: usize,
    /// Test AUC of the reference-λ global minimum trained at this s.
    pub global_min_auc: f64,
    /// Test AUC of each λ's global minimum trained at this s.
    pub global_min_auc_by_lambda: Vec<f64>,
    /// Best test AUC at this s over every stored minimum of every λ and s.
    pub max_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucTable {
    pub lambdas: Vec<f64>,
    pub reference_lambda: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_minima: usize,
    pub rows: Vec<AucRow>,
}

impl AucTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("s,global_min_auc,max_auc");
        for l in &self.lambdas {
            let _ = write!(s, ",global_min_auc_lambda_{l}");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{},{},{}", r.s, r.global_min_auc, r.max_auc);
            for a in &r.global_min_auc_by_lambda {
                let _ = write!(s, ",{a}");
            }
            s.push('\n');
        }
        s
    }
}

/// Assembles the AUC table from trained minima and per-s test sets.
pub fn auc_table(
    cfg: &AucStepsConfig,
    trained: &[TrainedMinima],
    tests: &[(usize, ClassificationDataset)],
    n_train: usize,
) -> Result<AucTable> {
    let spec = cfg.spec(0.0);
    let mut rows = Vec::with_capacity(tests.len());
    for (s, test) in tests {
        let mut by_lambda = vec![f64::NAN; cfg.lambdas.len()];
        let mut max_auc = f64::NEG_INFINITY;
        for t in trained {
            let aucs: Vec<f64> =
                t.weights.par_iter().map(|w| roc_auc(&spec, w, test, POSITIVE_CLASS).map(|r| r.auc)).collect::<Result<_>>()?;
            if t.s == *s {
                if let Some(&a) = aucs.first() {
                    by_lambda[t.lambda_index] = a;
                }
            }
            max_auc = aucs.into_iter().fold(max_auc, f64::max);
        }
        rows.push(AucRow {
            s: *s,
            global_min_auc: by_lambda[cfg.reference_lambda],
            global_min_auc_by_lambda: by_lambda,
            max_auc,
        });
    }
    Ok(AucTable {
        lambdas: cfg.lambdas.clone(),
        reference_lambda: cfg.reference_lambda,
        n_train,
        n_test: tests.first().map_or(0, |t| t.1.len()),
        n_minima: trained.iter().map(|t| t.weights.len()).sum(),
        rows,
    })
}

/// Splits the quench sequences into training and test halves, trains a
/// network landscape for every (λ, s) by basin-hopping and tabulates the test
/// AUC for predicting the triangle outcome.
pub fn auc_vs_steps(quenches: &QuenchDataset, cfg: &AucStepsConfig) -> Result<AucTable> {
    cfg.validate()?;
    let mut idx: Vec<usize> = (0..quenches.runs.len()).collect();
    idx.shuffle(&mut rng::seeded(cfg.seed));
    let n_train = ((quenches.runs.len() as f64) * cfg.train_fraction).round() as usize;
    if n_train == 0 || n_train == idx.len() {
        return Err(Error::Precondition(format!("cannot split {} sequences for training and testing", idx.len())));
    }
    let train_runs: Vec<_> = idx[..n_train].iter().map(|&i| quenches.runs[i].clone()).collect();
    let test_runs: Vec<_> = idx[n_train..].iter().map(|&i| quenches.runs[i].clone()).collect();

    let mut trains = Vec::with_capacity(cfg.s_values.len());
    let mut tests = Vec::with_capacity(cfg.s_values.len());
    for &s in &cfg.s_values {
        trains.push(extract_inputs(&train_runs, InputMode::R2AtS(s))?);
        tests.push((s, extract_inputs(&test_runs, InputMode::R2AtS(s))?));
    }

    let jobs: Vec<(usize, usize)> =
        (0..cfg.lambdas.len()).flat_map(|l| (0..cfg.s_values.len()).map(move |k| (l, k))).collect();
    let trained: Vec<TrainedMinima> = jobs
        .par_iter()
        .map(|&(l, k)| {
            let net = NeuralNet::new(cfg.spec(cfg.lambdas[l]), trains[k].clone())?;
            let seed = rng::derive_seed(cfg.seed, l as u64 + 1);
            let mut r = rng::stream(seed, 0);
            let x0 = ParamVector::from_fn(net.spec.n_params(), |_, _| r.random_range(-cfg.init_scale..cfg.init_scale));
            let bh = BasinHoppingConfig { seed, ..cfg.bh.clone() };
            let mut db = LandscapeDatabase::new(Metric::Euclidean);
            basin_hopping(&net, &x0, &bh, &mut db)?;
            let order = db.minima_by_energy();
            Ok(TrainedMinima {
                lambda_index: l,
                s: cfg.s_values[k],
                energies: order.iter().map(|&i| db.minima[i].energy).collect(),
                weights: order.iter().map(|&i| db.minima[i].coords.clone()).collect(),
            })
        })
        .collect::<Result<_>>()?;
    auc_table(cfg, &trained, &tests, n_train)
}
