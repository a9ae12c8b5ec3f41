//! Commands that run one self-contained experiment end to end.

use std::path::PathBuf;

use mlscape::basinvol::{enumerate_and_entropy, estimate_basin_volume, BasinWalkConfig, BoxDomain};
use mlscape::explorer::{basin_hopping, basin_hopping_runs, connect_database, BasinHoppingConfig, ConnectConfig};
use mlscape::landscape::LandscapeDatabase;
use mlscape::mlmetrics::{auc_vs_steps, distance_matrix, matrix_csv, AucStepsConfig};
use mlscape::models::regression::{model_value, X_MAX};
use mlscape::models::{
    generate_regression_data, load_idx, synthetic_blobs, ClassificationDataset, NeuralNet, NeuralNetSpec,
    RegressionModel, TriatomicModel, Q_STAR,
};
use mlscape::numcore::{LbfgsConfig, Objective, ParamVector};
use mlscape::pspin_lab::{
    pspin_disconnectivity, quench_ensemble, teacher_student as run_teacher_student, EnergyHistogram,
    PSpinLandscapeConfig, QuenchConfig, TeacherStudentConfig, VarianceRow,
};
use mlscape::rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::landscape::{quench_dataset_input, tree_for, write_netstats, write_tree, DisconnectivityParams};
use super::{save_landscape, uniform_weights, Run};
use crate::config::resolve_input;
use crate::objective::{DoubleWell, ObjectiveSpec};
use crate::output::csv_rows;
use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriatomicDatasetParams {
    pub n_runs: usize,
    pub model: TriatomicModel,
}

impl Default for TriatomicDatasetParams {
    fn default() -> Self {
        Self { n_runs: 1000, model: TriatomicModel::default() }
    }
}

pub fn triatomic_dataset(run: &Run<TriatomicDatasetParams>) -> CliResult<()> {
    let p = &run.cfg.params;
    let ds = mlscape::models::build_quench_dataset(&p.model, p.n_runs, run.cfg.seed)?;
    let mut labels = String::from("run,label,energy,n_steps\n");
    let mut seq = String::from("run,step,r12,r13,r23\n");
    for (k, q) in ds.runs.iter().enumerate() {
        labels.push_str(&format!("{k},{},{},{}\n", q.label, q.result.final_energy, q.result.n_steps));
        for (s, x) in q.result.trajectory.iter().flatten().enumerate() {
            let [a, b, c] = TriatomicModel::distances(x);
            seq.push_str(&format!("{k},{s},{a},{b},{c}\n"));
        }
    }
    run.out.json("dataset.json", &ds)?;
    run.out.text("labels.csv", &labels)?;
    run.out.text("sequences.csv", &seq)?;
    run.out.json(
        "summary.json",
        &serde_json::json!({
            "n_labelled": ds.runs.len(),
            "label_histogram": ds.label_histogram,
            "n_unconverged": ds.n_unconverged,
            "n_unmatched": ds.n_unmatched,
        }),
    )?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AucParams {
    pub dataset: Option<PathBuf>,
    pub n_runs: usize,
    /// Its `seed` is replaced by the run seed.
    pub auc: AucStepsConfig,
}

impl Default for AucParams {
    fn default() -> Self {
        Self { dataset: None, n_runs: 1000, auc: AucStepsConfig::default() }
    }
}

pub fn auc(run: &Run<AucParams>) -> CliResult<()> {
    let p = &run.cfg.params;
    let quenches = quench_dataset_input(&p.dataset, p.n_runs, run.cfg.seed)?;
    let cfg = AucStepsConfig { seed: run.cfg.seed, ..p.auc.clone() };
    let table = auc_vs_steps(&quenches, &cfg)?;
    run.out.text("auc.csv", &table.to_csv())?;
    run.out.json("auc.json", &table)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressionParams {
    pub q_star: [f64; 5],
    pub n_points: usize,
    pub sigma: f64,
    /// Basin-hopping runs from uniform starts in `start_lo..start_hi`.
    pub n_starts: usize,
    pub start_lo: [f64; 5],
    pub start_hi: [f64; 5],
    pub bh: BasinHoppingConfig,
    pub connect: ConnectConfig,
    /// Points per model curve.
    pub grid_points: usize,
    pub tree: DisconnectivityParams,
}

impl Default for RegressionParams {
    fn default() -> Self {
        let pi = std::f64::consts::PI;
        Self {
            q_star: Q_STAR,
            n_points: 100,
            sigma: 0.02,
            n_starts: 50,
            start_lo: [0.0, 0.0, -pi, 0.0, -pi],
            start_hi: [1.0, 8.0, pi, 8.0, pi],
            bh: BasinHoppingConfig { n_steps: 100, step_size: 1.5, temperature: 5.0, ..Default::default() },
            connect: ConnectConfig { budget: 300, ..Default::default() },
            grid_points: 200,
            tree: DisconnectivityParams::default(),
        }
    }
}

/// Regression data and the minima database from basin-hopping runs.
pub fn regression_landscape(p: &RegressionParams, seed: u64) -> CliResult<(RegressionModel, LandscapeDatabase)> {
    let data = generate_regression_data(&p.q_star, p.n_points, p.sigma, seed)?;
    let model = RegressionModel::new(data)?;
    let starts: Vec<ParamVector> = (0..p.n_starts)
        .map(|k| {
            let mut r = rng::stream(seed, k as u64 + 1);
            ParamVector::from_iterator(5, (0..5).map(|i| r.random_range(p.start_lo[i]..=p.start_hi[i])))
        })
        .collect();
    let mut db = LandscapeDatabase::new(model.metric());
    basin_hopping_runs(&model, &starts, &BasinHoppingConfig { seed, ..p.bh.clone() }, &mut db)?;
    Ok((model, db))
}

pub fn regression(run: &Run<RegressionParams>) -> CliResult<()> {
    let (p, out) = (&run.cfg.params, &run.out);
    let (model, mut db) = regression_landscape(p, run.cfg.seed)?;
    out.text("data.csv", &csv_rows("x,t", model.data.iter().map(|&(x, t)| vec![x, t])))?;
    if db.minima.len() >= 2 {
        let report = connect_database(&model, &mut db, &p.connect)?;
        out.json("connect_report.json", &report)?;
    }
    let n = p.grid_points.max(2);
    let mut curves = Vec::new();
    for m in &db.minima {
        for i in 0..n {
            let x = X_MAX * i as f64 / (n - 1) as f64;
            curves.push(vec![m.id as f64, x, model_value(x, m.coords.as_slice())]);
        }
    }
    out.text("curves.csv", &csv_rows("min_id,x,y", curves))?;
    let rows = db.minima.iter().map(|m| [vec![m.id as f64, m.energy], m.coords.as_slice().to_vec()].concat());
    out.text("minima.csv", &csv_rows("id,energy,q1,q2,q3,q4,q5", rows))?;
    let tree = tree_for(&db, &p.tree)?;
    write_tree(out, &db, &tree)?;
    write_netstats(out, &db)?;
    save_landscape(out, &db, &ObjectiveSpec::Regression { data: model.data.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticDigits {
    pub n_in: usize,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DigitsParams {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Use seeded Gaussian blobs when the IDX files are missing.
    pub synthetic_fallback: bool,
    pub synthetic: SyntheticDigits,
    pub n_train: usize,
    pub n_test: usize,
    pub n_hidden: usize,
    /// Regularisation of the landscape used for the misclassification metrics.
    pub lambda_metrics: f64,
    /// Regularisation of the landscape used for the network of minima.
    pub lambda_graph: f64,
    pub n_starts: usize,
    pub bh: BasinHoppingConfig,
    pub connect: ConnectConfig,
    pub init_scale: f64,
}

impl Default for DigitsParams {
    fn default() -> Self {
        Self {
            train_images: "train-images-idx3-ubyte".into(),
            train_labels: "train-labels-idx1-ubyte".into(),
            test_images: "t10k-images-idx3-ubyte".into(),
            test_labels: "t10k-labels-idx1-ubyte".into(),
            synthetic_fallback: false,
            synthetic: SyntheticDigits::default(),
            n_train: 1000,
            n_test: 1000,
            n_hidden: 10,
            lambda_metrics: 0.1,
            lambda_graph: 0.01,
            n_starts: 10,
            bh: BasinHoppingConfig {
                n_steps: 10,
                step_size: 1.0,
                temperature: 1.0,
                lbfgs: LbfgsConfig { rms_tol: 1e-5, max_iters: 5000, ..Default::default() },
                ..Default::default()
            },
            connect: ConnectConfig { budget: 200, ..Default::default() },
            init_scale: 0.1,
        }
    }
}

impl Default for SyntheticDigits {
    fn default() -> Self {
        Self { n_in: 64, spread: 0.25 }
    }
}

/// Train and test sets from the IDX files, or the synthetic stand-in.
pub fn digit_data(p: &DigitsParams, seed: u64) -> CliResult<(ClassificationDataset, ClassificationDataset)> {
    let paths = [&p.train_images, &p.train_labels, &p.test_images, &p.test_labels].map(|x| resolve_input(x));
    if paths.iter().all(|x| x.is_file()) {
        let train = load_idx(&paths[0], &paths[1], Some(p.n_train))?;
        let test = load_idx(&paths[2], &paths[3], Some(p.n_test))?;
        return Ok((train, test));
    }
    if !p.synthetic_fallback {
        let missing: Vec<String> = paths.iter().filter(|x| !x.is_file()).map(|x| x.display().to_string()).collect();
        return Err(CliError::new(
            "missing_data",
            format!(
                "IDX files not found: {}; set MLSCAPE_DATA_DIR or params paths, or enable params.synthetic_fallback",
                missing.join(", ")
            ),
        ));
    }
    let all = synthetic_blobs(p.n_train + p.n_test, p.synthetic.n_in, 10, p.synthetic.spread, seed)?;
    Ok(all.split(p.n_train, p.n_test, seed)?)
}

fn nn_landscape(p: &DigitsParams, net: &NeuralNet, seed: u64) -> CliResult<LandscapeDatabase> {
    let starts: Vec<ParamVector> = (0..p.n_starts)
        .map(|k| uniform_weights(net.dim(), p.init_scale, &mut rng::stream(seed, k as u64)))
        .collect();
    let mut db = LandscapeDatabase::new(net.metric());
    basin_hopping_runs(net, &starts, &BasinHoppingConfig { seed, ..p.bh.clone() }, &mut db)?;
    Ok(db)
}

pub fn digits(run: &Run<DigitsParams>) -> CliResult<()> {
    let (p, out, seed) = (&run.cfg.params, &run.out, run.cfg.seed);
    let (train, test) = digit_data(p, seed)?;
    let spec = |lambda| NeuralNetSpec { n_in: train.n_in, n_hidden: p.n_hidden, n_out: 10, lambda, regularize_bias: true };

    let net = NeuralNet::new(spec(p.lambda_metrics), train.clone())?;
    let db = nn_landscape(p, &net, seed)?;
    let minima: Vec<ParamVector> = db.minima.iter().map(|m| m.coords.clone()).collect();
    out.json("metrics_db.json", &db)?;
    if minima.len() >= 2 {
        let dm = distance_matrix(&net.spec, &minima, &test)?;
        out.text("ell.csv", &matrix_csv(&dm.ell, &dm.order))?;
        out.text("d.csv", &matrix_csv(&dm.d, &dm.order))?;
        let f = dm.f.iter().enumerate().map(|(i, &f)| vec![i as f64, db.minima[i].energy, f]);
        out.text("fractions.csv", &csv_rows("min_id,energy,test_misclass", f))?;
        let j = &dm.joint;
        let mut rows = Vec::new();
        for (a, row) in j.log_counts.iter().enumerate() {
            for (b, &c) in row.iter().enumerate() {
                rows.push(vec![a as f64, b as f64, c]);
            }
        }
        out.text("joint.csv", &csv_rows("d_bin,ell_bin,log10_1p_count", rows))?;
    } else {
        let f = db.minima.iter().map(|m| vec![m.id as f64, m.energy, net.misclassification_fraction(&m.coords, &test)]);
        out.text("fractions.csv", &csv_rows("min_id,energy,test_misclass", f))?;
    }

    let graph_net = NeuralNet::new(spec(p.lambda_graph), train)?;
    let mut gdb = nn_landscape(p, &graph_net, rng::derive_seed(seed, 1))?;
    if gdb.minima.len() >= 2 {
        let report = connect_database(&graph_net, &mut gdb, &p.connect)?;
        out.json("connect_report.json", &report)?;
    }
    out.json("graph_db.json", &gdb)?;
    write_netstats(out, &gdb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PspinParams {
    pub p: usize,
    pub n_values: Vec<usize>,
    pub n_starts: usize,
    /// Step length divided by √N.
    pub step_scale: f64,
    pub grad_tol: f64,
    pub max_steps: usize,
    pub model_seed: u64,
    /// N of the disconnectivity-graph run; none to skip it.
    pub landscape_n: Option<usize>,
    pub landscape: PSpinLandscapeConfig,
}

impl Default for PspinParams {
    fn default() -> Self {
        Self {
            p: 3,
            n_values: vec![20, 40, 60, 80, 100],
            n_starts: 500,
            step_scale: 0.01,
            grad_tol: 1e-6,
            max_steps: 100_000,
            model_seed: 0,
            landscape_n: Some(20),
            landscape: PSpinLandscapeConfig::default(),
        }
    }
}

fn histogram_csv(h: &EnergyHistogram) -> String {
    let width = (h.hi - h.lo) / h.counts.len() as f64;
    let rows = h.counts.iter().enumerate().map(|(i, &c)| vec![h.lo + i as f64 * width, h.lo + (i + 1) as f64 * width, c as f64]);
    csv_rows("bin_lo,bin_hi,count", rows)
}

pub fn pspin(run: &Run<PspinParams>) -> CliResult<()> {
    let (p, out, seed) = (&run.cfg.params, &run.out, run.cfg.seed);
    let mut rows = Vec::new();
    let mut hists = Vec::new();
    for &n in &p.n_values {
        let cfg = QuenchConfig {
            step_size: p.step_scale * (n as f64).sqrt(),
            grad_tol: p.grad_tol,
            max_steps: p.max_steps,
            ..QuenchConfig::new(n, p.p, p.n_starts, p.model_seed, seed)
        };
        let ens = quench_ensemble(&cfg)?;
        out.text(&format!("quench_n{n}.csv"), &ens.to_csv())?;
        let h = EnergyHistogram::from_ensemble(&ens);
        out.text(&format!("histogram_n{n}.csv"), &histogram_csv(&h))?;
        rows.push(VarianceRow { n, n_converged: ens.energies_per_spin.len(), mean: ens.mean(), variance: ens.variance() });
        hists.push(h);
    }
    out.text("variance.csv", &mlscape::pspin_lab::variance_csv(&rows))?;
    out.json("histograms.json", &hists)?;
    if let Some(n) = p.landscape_n {
        let ls = pspin_disconnectivity(n, p.model_seed, &PSpinLandscapeConfig { bh: BasinHoppingConfig { seed, ..p.landscape.bh.clone() }, ..p.landscape.clone() })?;
        write_tree(out, &ls.db, &ls.tree)?;
        out.json("connect_report.json", &ls.connect)?;
        save_landscape(out, &ls.db, &ObjectiveSpec::PspinSphere { n, p: 3, model_seed: p.model_seed })?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherStudentParams {
    pub n_items: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub spread: f64,
    /// Teacher hidden nodes; students have `scale` times as many.
    pub n_hidden: usize,
    pub scales: Vec<f64>,
    pub training: TeacherStudentConfig,
}

impl Default for TeacherStudentParams {
    fn default() -> Self {
        Self {
            n_items: 400,
            n_in: 2,
            n_out: 3,
            spread: 0.15,
            n_hidden: 3,
            scales: vec![1.0, 2.0],
            training: TeacherStudentConfig::default(),
        }
    }
}

pub fn teacher_student(run: &Run<TeacherStudentParams>) -> CliResult<()> {
    let (p, out, seed) = (&run.cfg.params, &run.out, run.cfg.seed);
    let data = synthetic_blobs(p.n_items, p.n_in, p.n_out, p.spread, seed)?;
    let spec = NeuralNetSpec { n_in: p.n_in, n_hidden: p.n_hidden, n_out: p.n_out, lambda: 0.0, regularize_bias: false };
    let mut reports = Vec::new();
    let mut summary = String::from("scale,student_hidden,loss_at_teacher,final_loss\n");
    for (i, &s) in p.scales.iter().enumerate() {
        let rep = run_teacher_student(&spec, &data, s, seed, &p.training)?;
        out.text(&format!("trace_{i}.csv"), &rep.trace_csv())?;
        let lt = rep.loss_at_teacher.map_or(String::new(), |v| v.to_string());
        summary.push_str(&format!("{s},{},{lt},{}\n", rep.student_hidden, rep.final_loss));
        reports.push(rep);
    }
    out.text("summary.csv", &summary)?;
    out.json("reports.json", &reports)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasinvolParams {
    /// Dimension of the toy double well (x₀² − 1)² + Σ x_i².
    pub dim: usize,
    pub box_lo: f64,
    pub box_hi: f64,
    pub n_particles: usize,
    pub bh: BasinHoppingConfig,
    pub walk: BasinWalkConfig,
}

impl Default for BasinvolParams {
    fn default() -> Self {
        Self {
            dim: 1,
            box_lo: -2.0,
            box_hi: 2.0,
            n_particles: 0,
            bh: BasinHoppingConfig { n_steps: 50, step_size: 1.5, ..Default::default() },
            walk: BasinWalkConfig::default(),
        }
    }
}

pub fn basinvol(run: &Run<BasinvolParams>) -> CliResult<()> {
    let (p, out, seed) = (&run.cfg.params, &run.out, run.cfg.seed);
    if p.dim == 0 {
        return Err(CliError::new("config", "dim must be at least 1"));
    }
    let obj = DoubleWell { dim: p.dim };
    let mut db = LandscapeDatabase::new(obj.metric());
    let x0 = ParamVector::from_element(p.dim, 0.5 * (p.box_lo + p.box_hi) + 0.1);
    basin_hopping(&obj, &x0, &BasinHoppingConfig { seed, ..p.bh.clone() }, &mut db)?;
    let domain = BoxDomain::cube(p.dim, p.box_lo, p.box_hi);
    let mut rows = Vec::new();
    let mut volumes = Vec::new();
    for m in &db.minima {
        let walk = BasinWalkConfig { seed: rng::derive_seed(seed, m.id as u64 + 1), ..p.walk.clone() };
        let est = estimate_basin_volume(&obj, &db, m.id, &domain, &walk)?;
        rows.push(vec![m.id as f64, m.energy, est.f_basin, est.v_basin, est.f_error, est.n_membership_calls as f64]);
        volumes.push(est.v_basin);
    }
    let report = enumerate_and_entropy(&volumes, domain.volume(), p.n_particles)?;
    out.text("volumes.csv", &csv_rows("min_id,energy,f_basin,v_basin,f_error,membership_calls", rows))?;
    out.json("entropy.json", &report)?;
    save_landscape(out, &db, &ObjectiveSpec::DoubleWell { dim: p.dim })
}
