use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{hessian_spectrum, HessianSpectrum, Metric, Objective, ParamVector};

/// Identifier written into every database file.
pub const SCHEMA: &str = "mlscape.landscape/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub id: usize,
    pub energy: f64,
    pub coords: ParamVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<HessianSpectrum>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tags: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionState {
    pub id: usize,
    pub energy: f64,
    pub coords: ParamVector,
    pub neg_eigenvalue: f64,
    pub min_pair: (usize, usize),
}

/// Minima and index-one saddles, deduplicated under a metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeDatabase {
    pub schema: String,
    pub metric: Metric,
    pub energy_tol: f64,
    pub dist_tol: f64,
    pub minima: Vec<Minimum>,
    pub transition_states: Vec<TransitionState>,
}

impl LandscapeDatabase {
    /// Empty database with the default tolerances (1e-6 in energy, 1e-3 in
    /// distance).
    pub fn new(metric: Metric) -> Self {
        Self::with_tolerances(metric, 1e-6, 1e-3)
    }

    pub fn with_tolerances(metric: Metric, energy_tol: f64, dist_tol: f64) -> Self {
        Self { schema: SCHEMA.into(), metric, energy_tol, dist_tol, minima: Vec::new(), transition_states: Vec::new() }
    }

    fn same_point(&self, e1: f64, x1: &ParamVector, e2: f64, x2: &ParamVector) -> bool {
        (e1 - e2).abs() <= self.energy_tol && self.metric.distance(x1, x2) <= self.dist_tol
    }

    /// Id of the stored minimum matching (energy, coords), if any.
    pub fn find_minimum(&self, energy: f64, coords: &ParamVector) -> Option<usize> {
        self.minima.iter().find(|m| self.same_point(m.energy, &m.coords, energy, coords)).map(|m| m.id)
    }

    /// Inserts a converged minimum, or returns the id of its duplicate.
    /// The boolean is true for a new insertion.
    pub fn add_minimum(&mut self, energy: f64, coords: &ParamVector) -> Result<(usize, bool)> {
        if !energy.is_finite() || !coords.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { point: coords.as_slice().to_vec() });
        }
        if let Some(id) = self.find_minimum(energy, coords) {
            return Ok((id, false));
        }
        let id = self.minima.len();
        self.minima.push(Minimum {
            id,
            energy,
            coords: self.metric.canonicalize(coords),
            spectrum: None,
            tags: BTreeMap::new(),
        });
        Ok((id, true))
    }

    /// Inserts a transition state linking two stored minima, or returns the id
    /// of its duplicate.
    pub fn add_transition_state(
        &mut self,
        energy: f64,
        coords: &ParamVector,
        neg_eigenvalue: f64,
        min_pair: (usize, usize),
    ) -> Result<(usize, bool)> {
        if !energy.is_finite() || !coords.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { point: coords.as_slice().to_vec() });
        }
        let n = self.minima.len();
        if min_pair.0 >= n || min_pair.1 >= n {
            return Err(Error::Inconsistent(format!("transition state references unknown minima {min_pair:?}")));
        }
        if !(neg_eigenvalue < 0.0) {
            return Err(Error::Inconsistent(format!("transition state eigenvalue {neg_eigenvalue} is not negative")));
        }
        let floor = self.minima[min_pair.0].energy.max(self.minima[min_pair.1].energy);
        if energy < floor - 1e-9 {
            return Err(Error::Inconsistent(format!(
                "transition state energy {energy} below connected minimum energy {floor}"
            )));
        }
        if let Some(ts) = self.transition_states.iter().find(|t| self.same_point(t.energy, &t.coords, energy, coords)) {
            return Ok((ts.id, false));
        }
        let id = self.transition_states.len();
        self.transition_states.push(TransitionState {
            id,
            energy,
            coords: self.metric.canonicalize(coords),
            neg_eigenvalue,
            min_pair,
        });
        Ok((id, true))
    }

    /// Minimum ids ordered by (energy, id).
    pub fn minima_by_energy(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..self.minima.len()).collect();
        ids.sort_by(|&a, &b| self.minima[a].energy.total_cmp(&self.minima[b].energy).then(a.cmp(&b)));
        ids
    }

    pub fn global_minimum(&self) -> Option<&Minimum> {
        self.minima_by_energy().first().map(|&i| &self.minima[i])
    }

    /// Minimum ids adjacent to `id` through stored transition states.
    pub fn neighbours(&self, id: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .transition_states
            .iter()
            .filter_map(|t| match t.min_pair {
                (a, b) if a == id && b != id => Some(b),
                (a, b) if b == id && a != id => Some(a),
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Computes and stores the Hessian spectrum of every minimum that lacks one.
    pub fn attach_spectra<O: Objective + ?Sized>(&mut self, obj: &O, zero_tol: f64) -> Result<()> {
        for m in self.minima.iter_mut().filter(|m| m.spectrum.is_none()) {
            m.spectrum = Some(hessian_spectrum(obj, &m.coords, zero_tol)?);
        }
        Ok(())
    }

    /// Checks the stored-data invariants (used after loading).
    pub fn validate(&self) -> Result<()> {
        for (i, m) in self.minima.iter().enumerate() {
            if m.id != i {
                return Err(Error::Inconsistent(format!("minimum at position {i} has id {}", m.id)));
            }
        }
        for (i, t) in self.transition_states.iter().enumerate() {
            if t.id != i {
                return Err(Error::Inconsistent(format!("transition state at position {i} has id {}", t.id)));
            }
            if t.min_pair.0 >= self.minima.len() || t.min_pair.1 >= self.minima.len() {
                return Err(Error::Inconsistent(format!("transition state {i} references unknown minima")));
            }
        }
        Ok(())
    }
}

pub fn save_db(db: &LandscapeDatabase, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(db)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_db(path: &Path) -> Result<LandscapeDatabase> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("<missing>");
    if found != SCHEMA {
        return Err(Error::Schema { expected: SCHEMA.into(), found: found.into() });
    }
    let db: LandscapeDatabase = serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
    db.validate()?;
    Ok(db)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_row_slice(v)
    }

    #[test]
    fn duplicates_share_ids_and_tolerances_separate() {
        let mut db = LandscapeDatabase::new(Metric::Euclidean);
        let (a, new_a) = db.add_minimum(1.0, &pv(&[0.0, 1.0])).unwrap();
        let (b, new_b) = db.add_minimum(1.0 + 1e-7, &pv(&[0.0, 1.0 + 1e-4])).unwrap();
        assert_eq!((a, new_a, b, new_b), (0, true, 0, false));
        let (c, _) = db.add_minimum(1.0 + 1e-5, &pv(&[0.0, 1.0])).unwrap();
        assert_eq!(c, 1);
        let (d, _) = db.add_minimum(1.0, &pv(&[0.0, 1.1])).unwrap();
        assert_eq!(d, 2);
        assert!(db.add_minimum(f64::NAN, &pv(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn transition_state_checks() {
        let mut db = LandscapeDatabase::new(Metric::Euclidean);
        db.add_minimum(0.0, &pv(&[-1.0])).unwrap();
        db.add_minimum(0.5, &pv(&[1.0])).unwrap();
        assert!(db.add_transition_state(1.0, &pv(&[0.0]), -4.0, (0, 2)).is_err());
        assert!(db.add_transition_state(0.4, &pv(&[0.0]), -4.0, (0, 1)).is_err());
        assert!(db.add_transition_state(1.0, &pv(&[0.0]), 4.0, (0, 1)).is_err());
        assert_eq!(db.add_transition_state(1.0, &pv(&[0.0]), -4.0, (0, 1)).unwrap(), (0, true));
        assert_eq!(db.add_transition_state(1.0, &pv(&[1e-5]), -4.0, (0, 1)).unwrap(), (0, false));
        assert_eq!(db.neighbours(0), vec![1]);
    }

    #[test]
    fn save_load_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut db = LandscapeDatabase::new(Metric::Sphere { radius: 2.0 });
        db.add_minimum(-0.1 / 3.0, &pv(&[0.1, 0.2f64.sqrt(), 1e-300, -7.0 / 3.0])).unwrap();
        db.minima[0].tags.insert("k".into(), "v".into());
        let (p1, p2) = (dir.path().join("a.json"), dir.path().join("b.json"));
        save_db(&db, &p1).unwrap();
        let back = load_db(&p1).unwrap();
        assert_eq!(back, db);
        save_db(&back, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn empty_truncated_and_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("db.json");
        let db = LandscapeDatabase::new(Metric::Euclidean);
        save_db(&db, &p).unwrap();
        assert!(load_db(&p).unwrap().minima.is_empty());
        let text = fs::read_to_string(&p).unwrap();
        fs::write(&p, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_db(&p), Err(Error::Parse(_))));
        fs::write(&p, text.replace(SCHEMA, "other/9")).unwrap();
        assert!(matches!(load_db(&p), Err(Error::Schema { .. })));
    }
}
