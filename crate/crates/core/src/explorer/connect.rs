use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ef::{hybrid_ef_refine, EfConfig, TransitionStateResult};
use super::neb::{dneb_candidates, NebConfig};
use crate::error::{Error, Result};
use crate::landscape::{superbasin_partition, LandscapeDatabase};
use crate::numcore::Objective;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectStrategy {
    /// Closest pair of minima (under the landscape metric) lying in different
    /// connected components.
    NearestFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConnectConfig {
    pub strategy: ConnectStrategy,
    /// Maximum number of connection jobs.
    pub budget: usize,
    /// Transition-state candidates refined per job.
    pub max_candidates: usize,
    pub neb: NebConfig,
    pub ef: EfConfig,
}

impl Default for ConnectConfig {
    fn default() -> Self {
        Self {
            strategy: ConnectStrategy::NearestFirst,
            budget: 100,
            max_candidates: 3,
            neb: NebConfig::default(),
            ef: EfConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Connected,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectJob {
    pub endpoints: (usize, usize),
    pub status: JobStatus,
    pub discovered_minima: Vec<usize>,
    pub discovered_ts: Vec<usize>,
    pub log: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectReport {
    pub jobs: Vec<ConnectJob>,
    pub connected: bool,
    pub n_components: usize,
}

fn components(db: &LandscapeDatabase) -> Vec<usize> {
    let mut comp = vec![0; db.minima.len()];
    for (c, set) in superbasin_partition(db, f64::INFINITY).iter().enumerate() {
        for &m in set {
            comp[m] = c;
        }
    }
    comp
}

/// Registers the transition state and its pathway minima. Returns false when
/// the pathway does not join two distinct converged minima.
fn register<O: Objective + ?Sized>(
    obj: &O,
    db: &mut LandscapeDatabase,
    ts: &TransitionStateResult,
    job: &mut ConnectJob,
) -> Result<bool> {
    if !ts.minus.converged || !ts.plus.converged {
        job.log.push(format!("pathway quench unconverged for TS at E={}", ts.energy));
        return Ok(false);
    }
    let mut ids = [0; 2];
    for (k, end) in [&ts.minus, &ts.plus].into_iter().enumerate() {
        let (id, new) = db.add_minimum(end.energy, &obj.symmetry_reduce(&end.coords))?;
        if new {
            job.discovered_minima.push(id);
        }
        ids[k] = id;
    }
    if ids[0] == ids[1] {
        job.log.push(format!("TS at E={} leads to minimum {} on both sides", ts.energy, ids[0]));
        return Ok(false);
    }
    match db.add_transition_state(ts.energy, &obj.symmetry_reduce(&ts.coords), ts.neg_eigenvalue, (ids[0], ids[1])) {
        Ok((id, new)) => {
            if new {
                job.discovered_ts.push(id);
            }
            Ok(true)
        }
        Err(Error::Inconsistent(msg)) => {
            job.log.push(msg);
            Ok(false)
        }
        Err(e) => Err(e),
    }
}

/// Repeatedly picks the nearest pair of minima in different components, runs
/// DNEB and refines its candidates, and registers every new stationary point,
/// until the minima graph is connected or the job budget is spent.
pub fn connect_database<O: Objective + ?Sized>(
    obj: &O,
    db: &mut LandscapeDatabase,
    cfg: &ConnectConfig,
) -> Result<ConnectReport> {
    connect_database_with(obj, db, cfg, Vec::new(), |_, _| Ok(true))
}

/// [`connect_database`] continuing from `prior` jobs already applied to `db`.
/// `on_job` sees the database and the job log after every job; returning
/// false stops the run early, leaving a state that a later call with the
/// same log resumes exactly.
pub fn connect_database_with<O, F>(
    obj: &O,
    db: &mut LandscapeDatabase,
    cfg: &ConnectConfig,
    prior: Vec<ConnectJob>,
    mut on_job: F,
) -> Result<ConnectReport>
where
    O: Objective + ?Sized,
    F: FnMut(&LandscapeDatabase, &[ConnectJob]) -> Result<bool>,
{
    if db.minima.len() < 2 {
        return Err(Error::Precondition("connect needs at least two minima".into()));
    }
    let metric = obj.metric();
    let mut tried: BTreeSet<(usize, usize)> = prior.iter().map(|j| j.endpoints).collect();
    let mut jobs = prior;
    while jobs.len() < cfg.budget {
        let comp = components(db);
        if comp.iter().all(|&c| c == 0) {
            break;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        let n = db.minima.len();
        for i in 0..n {
            for j in i + 1..n {
                if comp[i] == comp[j] || tried.contains(&(i, j)) {
                    continue;
                }
                let d = metric.distance(&db.minima[i].coords, &db.minima[j].coords);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let Some((_, a, b)) = best else {
            break;
        };
        tried.insert((a, b));
        let mut job = ConnectJob {
            endpoints: (a, b),
            status: JobStatus::Pending,
            discovered_minima: Vec::new(),
            discovered_ts: Vec::new(),
            log: Vec::new(),
        };
        let (xa, xb) = (db.minima[a].coords.clone(), db.minima[b].coords.clone());
        match dneb_candidates(obj, &xa, &xb, &cfg.neb) {
            Ok(cands) => {
                for c in cands.iter().take(cfg.max_candidates) {
                    match hybrid_ef_refine(obj, c, &cfg.ef) {
                        Ok(ts) => {
                            register(obj, db, &ts, &mut job)?;
                        }
                        Err(e @ (Error::WrongIndex { .. } | Error::NotConverged(_) | Error::NonFinite { .. })) => {
                            job.log.push(e.to_string())
                        }
                        Err(e) => return Err(e),
                    }
                    let comp = components(db);
                    if comp[a] == comp[b] {
                        break;
                    }
                }
            }
            Err(e @ (Error::NotConverged(_) | Error::NonFinite { .. } | Error::Precondition(_))) => {
                job.log.push(format!("DNEB: {e}"))
            }
            Err(e) => return Err(e),
        }
        let comp = components(db);
        job.status = if comp[a] == comp[b] { JobStatus::Connected } else { JobStatus::Failed };
        log::debug!("connect job {a}-{b}: {:?}", job.status);
        jobs.push(job);
        if !on_job(db, &jobs)? {
            break;
        }
    }
    let comp = components(db);
    let n_components = comp.iter().max().map_or(0, |m| m + 1);
    Ok(ConnectReport { jobs, connected: n_components <= 1, n_components })
}
