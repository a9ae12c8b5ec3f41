mod experiments;
mod landscape;

use std::path::{Path, PathBuf};

use mlscape::landscape::{load_db, LandscapeDatabase};
use mlscape::numcore::ParamVector;
use rand::Rng as _;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{self, ExperimentConfig};
use crate::objective::ObjectiveSpec;
use crate::output::Output;
use crate::{CliError, CliResult, Command, CommonArgs};

pub fn run(cmd: Command, args: &CommonArgs) -> CliResult<()> {
    match cmd {
        Command::TriatomicDataset => experiments::triatomic_dataset(&setup(cmd, args)?),
        Command::TrainLandscape => landscape::train_landscape(&setup(cmd, args)?, args),
        Command::Connect => landscape::connect(&setup(cmd, args)?, args),
        Command::Disconnectivity => landscape::disconnectivity(&setup(cmd, args)?),
        Command::Cv => landscape::cv(&setup(cmd, args)?),
        Command::Auc => experiments::auc(&setup(cmd, args)?),
        Command::Regression => experiments::regression(&setup(cmd, args)?),
        Command::Digits => experiments::digits(&setup(cmd, args)?),
        Command::Netstats => landscape::netstats(&setup(cmd, args)?),
        Command::Pspin => experiments::pspin(&setup(cmd, args)?),
        Command::TeacherStudent => experiments::teacher_student(&setup(cmd, args)?),
        Command::Basinvol => experiments::basinvol(&setup(cmd, args)?),
    }
}

/// Resolved config together with its output directory.
pub struct Run<P> {
    pub cfg: ExperimentConfig<P>,
    pub out: Output,
}

fn setup<P: DeserializeOwned + Serialize + Default>(cmd: Command, args: &CommonArgs) -> CliResult<Run<P>> {
    let cfg = config::load::<P>(cmd, args)?;
    let out = Output::create(&cfg)?;
    Ok(Run { cfg, out })
}

/// Objective description stored next to every database.
pub const OBJECTIVE_FILE: &str = "objective.json";
pub const DB_FILE: &str = "db.json";

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new("io", format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::new("parse", format!("{}: {e}", path.display())))
}

/// Database at `path` and the objective it was built on (from `objective`, or
/// else `objective.json` beside the database).
fn load_db_input(path: &Option<PathBuf>) -> CliResult<(PathBuf, LandscapeDatabase)> {
    let p = config::required_input(path, "db")?;
    let db = load_db(&p).map_err(|e| CliError::new("io", format!("{}: {e}", p.display())))?;
    Ok((p, db))
}

fn load_objective(db_path: &Path, explicit: &Option<PathBuf>) -> CliResult<ObjectiveSpec> {
    let p = match explicit {
        Some(p) => config::resolve_input(p),
        None => db_path.with_file_name(OBJECTIVE_FILE),
    };
    read_json(&p)
}

fn save_landscape(out: &Output, db: &LandscapeDatabase, objective: &ObjectiveSpec) -> CliResult<()> {
    out.json(DB_FILE, db)?;
    out.json(OBJECTIVE_FILE, objective)?;
    Ok(())
}

fn uniform_weights(n: usize, scale: f64, r: &mut mlscape::rng::Rng) -> ParamVector {
    ParamVector::from_iterator(n, (0..n).map(|_| scale * (2.0 * r.random::<f64>() - 1.0)))
}
