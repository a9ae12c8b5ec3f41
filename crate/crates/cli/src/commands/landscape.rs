//! Commands that build or analyse a stored landscape database.

use std::fs;
use std::path::PathBuf;

use mlscape::explorer::{connect_database_with, BasinHopping, BasinHoppingConfig, ConnectConfig, ConnectJob};
use mlscape::graphnet::{build_graph, graph_stats};
use mlscape::landscape::{
    build_disconnectivity_tree, harmonic_cv, partial_sum_cv, DisconnectivityTree, KappaMode, LandscapeDatabase,
};
use mlscape::mlmetrics::{misclassification_distance, miss_vector, MissVector};
use mlscape::models::{build_quench_dataset, extract_inputs, ClassificationDataset, InputMode, NeuralNet, NeuralNetSpec, QuenchDataset, TriatomicModel};
use mlscape::numcore::{Objective, DEFAULT_ZERO_TOL};
use mlscape::rng;
use serde::{Deserialize, Serialize};

use super::{load_db_input, load_objective, read_json, save_landscape, uniform_weights, Run};
use crate::config;
use crate::objective::ObjectiveSpec;
use crate::output::{csv_rows, write_json, Output};
use crate::{CliError, CliResult, CommonArgs};

/// Tag holding a minimum's test-set misclassification fraction.
pub const TAG_TEST_MISCLASS: &str = "test_misclass";
/// Tag holding a minimum's test-set miss vector as a string of 0/1.
pub const TAG_TEST_MISSES: &str = "test_misses";

const TRAIN_CHECKPOINT: &str = "train.checkpoint.json";
const CONNECT_CHECKPOINT: &str = "connect.checkpoint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainLandscapeParams {
    /// Quench dataset written by `triatomic-dataset`; generated when absent.
    pub dataset: Option<PathBuf>,
    /// Quenches to generate when no dataset is given.
    pub n_runs: usize,
    pub input_mode: InputMode,
    pub lambda: f64,
    pub n_hidden: usize,
    pub regularize_bias: bool,
    pub train_fraction: f64,
    /// Independent basin-hopping runs; their seeds are derived from the run seed.
    pub n_starts: usize,
    pub bh: BasinHoppingConfig,
    pub init_scale: f64,
    /// Basin-hopping steps between checkpoint writes.
    pub checkpoint_every: usize,
    /// Store the Hessian spectrum of every minimum.
    pub spectra: bool,
}

impl Default for TrainLandscapeParams {
    fn default() -> Self {
        Self {
            dataset: None,
            n_runs: 1000,
            input_mode: InputMode::R2AtS(1),
            lambda: 1e-4,
            n_hidden: 3,
            regularize_bias: true,
            train_fraction: 0.5,
            n_starts: 1,
            bh: BasinHoppingConfig {
                n_steps: 200,
                step_size: 1.0,
                temperature: 0.05,
                ..Default::default()
            },
            init_scale: 1.0,
            checkpoint_every: 10,
            spectra: true,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainCheckpoint {
    config_sha256: String,
    runs: Vec<BasinHopping>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConnectCheckpoint {
    config_sha256: String,
    db: LandscapeDatabase,
    jobs: Vec<ConnectJob>,
}

fn load_checkpoint<T: serde::de::DeserializeOwned>(out: &Output, name: &str) -> CliResult<T> {
    let p = out.path(name);
    if !p.exists() {
        return Err(CliError::new("resume", format!("no checkpoint at {}", p.display())));
    }
    read_json(&p)
}

fn check_hash(found: &str, expected: &str) -> CliResult<()> {
    if found != expected {
        return Err(CliError::new(
            "resume",
            format!("checkpoint was written by config {found}, current config is {expected}"),
        ));
    }
    Ok(())
}

fn stopped(out: &Output, name: &str) -> CliResult<()> {
    eprintln!("stopped early; checkpoint at {} (continue with --resume)", out.path(name).display());
    Ok(())
}

pub fn quench_dataset_input(dataset: &Option<PathBuf>, n_runs: usize, seed: u64) -> CliResult<QuenchDataset> {
    match dataset {
        Some(p) => read_json(&config::resolve_input(p)),
        None => Ok(build_quench_dataset(&TriatomicModel::default(), n_runs, seed)?),
    }
}

fn misses_tag(m: &MissVector) -> String {
    m.misses.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn misses_from_tag(s: &str) -> MissVector {
    MissVector::new(s.chars().map(|c| c == '1').collect())
}

pub fn train_landscape(run: &Run<TrainLandscapeParams>, args: &CommonArgs) -> CliResult<()> {
    let (p, out, seed) = (&run.cfg.params, &run.out, run.cfg.seed);
    if !(0.0..1.0).contains(&p.train_fraction) || p.train_fraction == 0.0 || p.n_starts == 0 {
        return Err(CliError::new("config", "train_fraction must lie in (0, 1) and n_starts ≥ 1"));
    }
    let quenches = quench_dataset_input(&p.dataset, p.n_runs, seed)?;
    let all = extract_inputs(&quenches.runs, p.input_mode)?;
    let n_train = ((p.train_fraction * all.len() as f64).round() as usize).clamp(1, all.len().saturating_sub(1).max(1));
    let (train, test) = all.split(n_train, all.len() - n_train, seed)?;
    let spec = NeuralNetSpec {
        n_in: all.n_in,
        n_hidden: p.n_hidden,
        n_out: 4,
        lambda: p.lambda,
        regularize_bias: p.regularize_bias,
    };
    let net = NeuralNet::new(spec, train)?;
    let hash = run.cfg.hash()?;

    let mut runs: Vec<BasinHopping> = if args.resume {
        let ck: TrainCheckpoint = load_checkpoint(out, TRAIN_CHECKPOINT)?;
        check_hash(&ck.config_sha256, &hash)?;
        ck.runs
    } else {
        Vec::new()
    };
    let mut remaining = args.stop_after;
    let mut since_save = 0;
    let save = |runs: &Vec<BasinHopping>| -> CliResult<()> {
        write_json(&out.path(TRAIN_CHECKPOINT), &TrainCheckpoint { config_sha256: hash.clone(), runs: runs.clone() })
    };
    for k in 0..p.n_starts {
        if k == runs.len() {
            let w0 = uniform_weights(spec.n_params(), p.init_scale, &mut rng::stream(seed, k as u64));
            let cfg = BasinHoppingConfig { seed: rng::derive_seed(seed, k as u64), ..p.bh.clone() };
            runs.push(BasinHopping::start(&net, &w0, cfg)?);
        }
        while !runs[k].is_finished() {
            if remaining == Some(0) {
                save(&runs)?;
                return stopped(out, TRAIN_CHECKPOINT);
            }
            runs[k].step(&net)?;
            remaining = remaining.map(|r| r - 1);
            since_save += 1;
            if since_save % p.checkpoint_every.max(1) == 0 {
                save(&runs)?;
            }
        }
    }

    let mut db = LandscapeDatabase::new(net.metric());
    for bh in &runs {
        for (e, x) in &bh.quenched {
            db.add_minimum(*e, x)?;
        }
    }
    if p.spectra {
        db.attach_spectra(&net, DEFAULT_ZERO_TOL)?;
    }
    let mut rows = Vec::new();
    for m in db.minima.iter_mut() {
        let mv = miss_vector(&spec, &m.coords, &test);
        m.tags.insert(TAG_TEST_MISCLASS.into(), mv.f.to_string());
        m.tags.insert(TAG_TEST_MISSES.into(), misses_tag(&mv));
        rows.push(vec![m.id as f64, m.energy, net.misclassification_fraction(&m.coords, &net.data), mv.f]);
    }
    save_landscape(out, &db, &ObjectiveSpec::NeuralNet { net: net.clone() })?;
    out.json("test_set.json", &test)?;
    out.text("minima.csv", &csv_rows("id,energy,train_misclass,test_misclass", rows))?;
    let _ = fs::remove_file(out.path(TRAIN_CHECKPOINT));
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConnectParams {
    pub db: Option<PathBuf>,
    /// Objective description; defaults to `objective.json` beside the database.
    pub objective: Option<PathBuf>,
    pub connect: ConnectConfig,
    /// Store Hessian spectra of minima found while connecting.
    pub spectra: bool,
}

impl Default for ConnectParams {
    fn default() -> Self {
        Self { db: None, objective: None, connect: ConnectConfig::default(), spectra: true }
    }
}

pub fn connect(run: &Run<ConnectParams>, args: &CommonArgs) -> CliResult<()> {
    let (p, out) = (&run.cfg.params, &run.out);
    let (db_path, db_in) = load_db_input(&p.db)?;
    let spec = load_objective(&db_path, &p.objective)?;
    let obj = spec.build()?;
    let hash = run.cfg.hash()?;
    let (mut db, prior) = if args.resume {
        let ck: ConnectCheckpoint = load_checkpoint(out, CONNECT_CHECKPOINT)?;
        check_hash(&ck.config_sha256, &hash)?;
        (ck.db, ck.jobs)
    } else {
        (db_in, Vec::new())
    };
    let mut remaining = args.stop_after;
    let mut halted = false;
    let report = connect_database_with(&obj, &mut db, &p.connect, prior, |db, jobs| {
        write_json(
            &out.path(CONNECT_CHECKPOINT),
            &ConnectCheckpoint { config_sha256: hash.clone(), db: db.clone(), jobs: jobs.to_vec() },
        )
        .map_err(|e| mlscape::Error::Io(std::io::Error::other(e.message)))?;
        remaining = remaining.map(|r| r.saturating_sub(1));
        halted = remaining == Some(0);
        Ok(!halted)
    })?;
    if halted {
        return stopped(out, CONNECT_CHECKPOINT);
    }
    if p.spectra {
        db.attach_spectra(&obj, DEFAULT_ZERO_TOL)?;
    }
    save_landscape(out, &db, &spec)?;
    out.json("connect_report.json", &report)?;
    let _ = fs::remove_file(out.path(CONNECT_CHECKPOINT));
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisconnectivityParams {
    pub db: Option<PathBuf>,
    /// Test set for colouring leaves of a network database by their
    /// misclassification distance to the global minimum. Without it, miss
    /// vectors stored as tags by `train-landscape` are used.
    pub test_set: Option<PathBuf>,
    /// Network objective for `test_set`; defaults to `objective.json` beside
    /// the database.
    pub objective: Option<PathBuf>,
    /// Number of levels across [e_min, e_max] when `delta_e` is not given.
    pub n_levels: usize,
    pub delta_e: Option<f64>,
    pub e_min: Option<f64>,
    pub e_max: Option<f64>,
}

impl Default for DisconnectivityParams {
    fn default() -> Self {
        Self { db: None, test_set: None, objective: None, n_levels: 50, delta_e: None, e_min: None, e_max: None }
    }
}

/// Tree over `db`, with levels from the params or the database's range.
pub fn tree_for(db: &LandscapeDatabase, p: &DisconnectivityParams) -> CliResult<DisconnectivityTree> {
    let (lo, hi, _) = DisconnectivityTree::default_range(db)
        .ok_or_else(|| CliError::new("precondition", "database has no minima"))?;
    let (lo, hi) = (p.e_min.unwrap_or(lo), p.e_max.unwrap_or(hi));
    let delta = p.delta_e.unwrap_or(if hi > lo { (hi - lo) / p.n_levels.max(1) as f64 } else { 1.0 });
    Ok(build_disconnectivity_tree(db, lo, hi, delta)?)
}

/// `min_id,energy,parent,ell_to_global`; the last column is the
/// misclassification distance to the global minimum when miss vectors are
/// known, and empty otherwise.
pub fn leaf_csv(db: &LandscapeDatabase, tree: &DisconnectivityTree, misses: &[Option<MissVector>]) -> CliResult<String> {
    let global = db.global_minimum().and_then(|g| misses.get(g.id).cloned().flatten());
    let mut s = String::from("min_id,energy,parent,ell_to_global\n");
    for l in &tree.leaves {
        let ell = match (&global, misses.get(l.min_id).and_then(|m| m.as_ref())) {
            (Some(g), Some(m)) => misclassification_distance(g, m)?.to_string(),
            _ => String::new(),
        };
        let parent = l.parent.map_or(String::new(), |p| p.to_string());
        s.push_str(&format!("{},{},{},{}\n", l.min_id, l.energy, parent, ell));
    }
    Ok(s)
}

fn tagged_misses(db: &LandscapeDatabase) -> Vec<Option<MissVector>> {
    db.minima.iter().map(|m| m.tags.get(TAG_TEST_MISSES).map(|s| misses_from_tag(s))).collect()
}

pub fn write_tree(out: &Output, db: &LandscapeDatabase, tree: &DisconnectivityTree) -> CliResult<()> {
    write_tree_coloured(out, db, tree, &tagged_misses(db))
}

fn write_tree_coloured(
    out: &Output,
    db: &LandscapeDatabase,
    tree: &DisconnectivityTree,
    misses: &[Option<MissVector>],
) -> CliResult<()> {
    out.text("tree.lines", &tree.to_lines())?;
    out.text("leaves.csv", &leaf_csv(db, tree, misses)?)?;
    let merges: String = std::iter::once("energy,ts_id,a,b\n".to_string())
        .chain(tree.merges.iter().map(|m| format!("{},{},{},{}\n", m.energy, m.ts_id, m.joined.0, m.joined.1)))
        .collect();
    out.text("merges.csv", &merges)?;
    out.json("tree.json", tree)?;
    Ok(())
}

pub fn disconnectivity(run: &Run<DisconnectivityParams>) -> CliResult<()> {
    let p = &run.cfg.params;
    let (db_path, db) = load_db_input(&p.db)?;
    let tree = tree_for(&db, p)?;
    let misses = match &p.test_set {
        Some(t) => {
            let test: ClassificationDataset = read_json(&config::resolve_input(t))?;
            let ObjectiveSpec::NeuralNet { net } = load_objective(&db_path, &p.objective)? else {
                return Err(CliError::new("config", "params.test_set needs a neural-network objective"));
            };
            db.minima.iter().map(|m| Some(miss_vector(&net.spec, &m.coords, &test))).collect()
        }
        None => tagged_misses(&db),
    };
    write_tree_coloured(&run.out, &db, &tree, &misses)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvParams {
    pub db: Option<PathBuf>,
    /// Used to compute missing spectra.
    pub objective: Option<PathBuf>,
    pub t_min: f64,
    pub t_max: f64,
    pub n_t: usize,
    pub kappa: KappaMode,
    /// Numbers of lowest minima for partial-sum curves.
    pub partial_sums: Vec<usize>,
}

impl Default for CvParams {
    fn default() -> Self {
        Self {
            db: None,
            objective: None,
            t_min: 0.01,
            t_max: 1.0,
            n_t: 100,
            kappa: KappaMode::Auto,
            partial_sums: Vec::new(),
        }
    }
}

pub fn temperature_grid(t_min: f64, t_max: f64, n: usize) -> CliResult<Vec<f64>> {
    if !(t_min > 0.0 && t_max >= t_min) || n == 0 {
        return Err(CliError::new("config", "need 0 < t_min ≤ t_max and n_t ≥ 1"));
    }
    Ok((0..n).map(|i| if n == 1 { t_min } else { t_min + (t_max - t_min) * i as f64 / (n - 1) as f64 }).collect())
}

pub fn cv(run: &Run<CvParams>) -> CliResult<()> {
    let p = &run.cfg.params;
    let (db_path, mut db) = load_db_input(&p.db)?;
    if db.minima.iter().any(|m| m.spectrum.is_none()) {
        let obj = load_objective(&db_path, &p.objective)?.build()?;
        db.attach_spectra(&obj, DEFAULT_ZERO_TOL)?;
    }
    let ts = temperature_grid(p.t_min, p.t_max, p.n_t)?;
    let full = harmonic_cv(&db, &ts, p.kappa)?;
    run.out.text("cv.csv", &csv_rows("T,cv", full.iter().map(|&(t, c)| vec![t, c])))?;
    let mut rows = Vec::new();
    for &m in &p.partial_sums {
        for (t, c) in partial_sum_cv(&db, m, &ts, p.kappa)? {
            rows.push(vec![m as f64, t, c]);
        }
    }
    if !p.partial_sums.is_empty() {
        run.out.text("cv_partial.csv", &csv_rows("m,T,cv", rows))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetstatsParams {
    pub db: Option<PathBuf>,
}

pub fn write_netstats(out: &Output, db: &LandscapeDatabase) -> CliResult<()> {
    let g = build_graph(db);
    let stats = graph_stats(&g);
    out.json("netstats.json", &stats)?;
    out.dot("graph.dot", &g.to_dot())?;
    let hist = stats.degree_histogram.iter().enumerate().map(|(k, &c)| vec![k as f64, c as f64]);
    out.text("degree_histogram.csv", &csv_rows("degree,count", hist))?;
    Ok(())
}

pub fn netstats(run: &Run<NetstatsParams>) -> CliResult<()> {
    let (_, db) = load_db_input(&run.cfg.params.db)?;
    write_netstats(&run.out, &db)
}
