use serde::{Deserialize, Serialize};

use super::db::LandscapeDatabase;
use crate::error::{Error, Result};

/// How the number of vibrational modes κ is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaMode {
    /// κ = dim − n_zero, required to be the same for every minimum.
    Auto,
    /// κ = dim − n: the n smallest eigenvalues are dropped (e.g. the six
    /// rigid-body modes of a cluster).
    DropZeroModes(usize),
}

/// C_V/k_B at each temperature from the harmonic superposition over all minima.
pub fn harmonic_cv(db: &LandscapeDatabase, temperatures: &[f64], kappa_mode: KappaMode) -> Result<Vec<(f64, f64)>> {
    cv_over(db, &db.minima_by_energy(), temperatures, kappa_mode)
}

/// As [`harmonic_cv`], keeping only the `m_lowest` lowest minima.
pub fn partial_sum_cv(
    db: &LandscapeDatabase,
    m_lowest: usize,
    temperatures: &[f64],
    kappa_mode: KappaMode,
) -> Result<Vec<(f64, f64)>> {
    if m_lowest == 0 || m_lowest > db.minima.len() {
        return Err(Error::Precondition(format!("m must lie in 1..={}, got {m_lowest}", db.minima.len())));
    }
    cv_over(db, &db.minima_by_energy()[..m_lowest], temperatures, kappa_mode)
}

fn cv_over(db: &LandscapeDatabase, ids: &[usize], temperatures: &[f64], mode: KappaMode) -> Result<Vec<(f64, f64)>> {
    if ids.is_empty() {
        return Err(Error::Precondition("no minima".into()));
    }
    let mut kappas = Vec::with_capacity(ids.len());
    let mut log_prods = Vec::with_capacity(ids.len());
    for &id in ids {
        let s = db.minima[id]
            .spectrum
            .as_ref()
            .ok_or_else(|| Error::Precondition(format!("minimum {id} has no Hessian spectrum")))?;
        let (k, lp) = match mode {
            KappaMode::Auto => (s.dim() - s.n_zero, s.log_product_positive),
            KappaMode::DropZeroModes(n) => {
                let k = s.dim().saturating_sub(n);
                if s.eigenvalues.iter().rev().take(k).any(|&l| !(l > 0.0)) {
                    return Err(Error::Inconsistent(format!(
                        "minimum {id} has a non-positive eigenvalue among its top {k}"
                    )));
                }
                (k, s.log_product_top(k))
            }
        };
        kappas.push(k);
        log_prods.push(lp);
    }
    let kappa = kappas[0];
    let offenders: Vec<usize> = ids.iter().zip(&kappas).filter(|(_, &k)| k != kappa).map(|(&id, _)| id).collect();
    if !offenders.is_empty() {
        return Err(Error::Inconsistent(format!(
            "κ differs across minima (κ={kappa} for minimum {}); offending minima: {offenders:?}",
            ids[0]
        )));
    }
    let e0 = ids.iter().map(|&i| db.minima[i].energy).fold(f64::INFINITY, f64::min);
    let energies: Vec<f64> = ids.iter().map(|&i| db.minima[i].energy - e0).collect();
    temperatures
        .iter()
        .map(|&t| {
            if !(t > 0.0) {
                return Err(Error::Precondition(format!("temperature must be positive, got {t}")));
            }
            let beta = 1.0 / t;
            // The common β^{−κ} factor cancels in the occupation probabilities.
            let logw: Vec<f64> = energies.iter().zip(&log_prods).map(|(e, lp)| -beta * e - 0.5 * lp).collect();
            let m = logw.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let w: Vec<f64> = logw.iter().map(|l| (l - m).exp()).collect();
            let z: f64 = w.iter().sum();
            let mean = w.iter().zip(&energies).map(|(w, e)| w * e).sum::<f64>() / z;
            let var = w.iter().zip(&energies).map(|(w, e)| w * (e - mean).powi(2)).sum::<f64>() / z;
            Ok((t, kappa as f64 + beta * beta * var))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{spectrum_of_matrix, Metric, ParamVector};
    use nalgebra::DMatrix;

    fn db_with(levels: &[(f64, [f64; 2])]) -> LandscapeDatabase {
        let mut db = LandscapeDatabase::new(Metric::Euclidean);
        for (i, (e, diag)) in levels.iter().enumerate() {
            let (id, _) = db.add_minimum(*e, &ParamVector::from_element(1, i as f64)).unwrap();
            let h = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(diag));
            db.minima[id].spectrum = Some(spectrum_of_matrix(h, 1e-6, &ParamVector::zeros(2)).unwrap());
        }
        db
    }

    #[test]
    fn single_minimum_is_flat_kappa() {
        let db = db_with(&[(0.3, [1.0, 2.0])]);
        for (_, c) in harmonic_cv(&db, &[0.1, 1.0, 10.0], KappaMode::Auto).unwrap() {
            assert_eq!(c, 2.0);
        }
    }

    #[test]
    fn two_level_formula() {
        let delta = 0.7;
        let db = db_with(&[(0.0, [1.0, 3.0]), (delta, [1.0, 3.0])]);
        let temps: Vec<f64> = (1..40).map(|k| 0.05 * k as f64).collect();
        let cv = harmonic_cv(&db, &temps, KappaMode::Auto).unwrap();
        for (t, c) in cv {
            let b = 1.0 / t;
            let w = 1.0 / (1.0 + (b * delta).exp());
            let exact = 2.0 + b * b * delta * delta * w * (1.0 - w);
            assert!((c - exact).abs() < 1e-10, "{t}: {c} vs {exact}");
        }
        assert_eq!(partial_sum_cv(&db, 2, &temps, KappaMode::Auto).unwrap(), harmonic_cv(&db, &temps, KappaMode::Auto).unwrap());
        assert!(partial_sum_cv(&db, 1, &temps, KappaMode::Auto).unwrap().iter().all(|&(_, c)| c == 2.0));
        assert!(partial_sum_cv(&db, 3, &temps, KappaMode::Auto).is_err());
    }

    #[test]
    fn mixed_kappa_names_offenders() {
        let db = db_with(&[(0.0, [1.0, 3.0]), (0.2, [0.0, 3.0])]);
        match harmonic_cv(&db, &[1.0], KappaMode::Auto) {
            Err(Error::Inconsistent(msg)) => assert!(msg.contains("[1]"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(harmonic_cv(&db, &[1.0], KappaMode::DropZeroModes(1)).is_ok());
    }
}
