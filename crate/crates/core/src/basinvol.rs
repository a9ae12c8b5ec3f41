//! Mean basin volumes by thermodynamic integration over harmonically
//! tethered Monte Carlo walks, with basin membership decided by a full
//! quench, and the state counts and entropies that follow from them.
//!
//! For a basin B around minimum x₀ and tether U_k(x) = k|x − x₀|², the free
//! energy F(k) = −ln ∫_B exp(−U_k) satisfies dF/dk = ⟨|x − x₀|²⟩_k and
//! F(0) = −ln v_B. The same integral is run for a reference ball of known
//! volume centred on x₀ and lying inside the basin; at the stiffest tether
//! both walks see the same Gaussian, so
//! f_B = f_ball − ∫₀^{k_max} (⟨r²⟩_B − ⟨r²⟩_ball) dk.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::LandscapeDatabase;
use crate::numcore::{lbfgs_minimize, LbfgsConfig, Objective, ParamVector};
use crate::rng;

/// Axis-aligned box bounding the configuration space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self { lo: vec![lo; dim], hi: vec![hi; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, x: &ParamVector) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn sample(&self, r: &mut rng::Rng) -> ParamVector {
        ParamVector::from_iterator(self.dim(), self.lo.iter().zip(&self.hi).map(|(a, b)| r.random_range(*a..*b)))
    }

    fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() || self.lo.iter().zip(&self.hi).any(|(a, b)| !(b > a)) {
            return Err(Error::Precondition("box needs matching lo < hi bounds".into()));
        }
        Ok(())
    }
}

/// Volume of the d-dimensional ball of radius r.
pub fn ball_volume(dim: usize, r: f64) -> f64 {
    let d = dim as f64;
    (d / 2.0 * PI.ln() + d * r.ln() - ln_gamma_half_integer(d / 2.0 + 1.0)).exp()
}

/// ln Γ(x) for x a positive multiple of 1/2.
fn ln_gamma_half_integer(x: f64) -> f64 {
    let mut acc = if (x - x.floor()).abs() < 1e-12 { 0.0 } else { 0.5 * PI.ln() };
    let mut y = if acc == 0.0 { 1.0 } else { 0.5 };
    while y < x - 1e-12 {
        acc += y.ln();
        y += 1.0;
    }
    acc
}

/// ln N!.
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Minimum id reached by quenching from `x`, or `None` when the quench does
/// not converge or ends at a minimum not in `db`.
pub fn assign_basin<O: Objective + ?Sized>(
    obj: &O,
    db: &LandscapeDatabase,
    x: &ParamVector,
    lbfgs: &LbfgsConfig,
) -> Result<Option<usize>> {
    let res = match lbfgs_minimize(obj, x, lbfgs) {
        Ok(r) => r,
        Err(Error::NonFinite { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    if !res.converged {
        log::debug!("membership quench did not converge from {:?}", x.as_slice());
        return Ok(None);
    }
    Ok(db.find_minimum(res.final_energy, &obj.symmetry_reduce(&res.final_point)))
}

/// Whether the quench from `x` ends at minimum `target_id`.
pub fn basin_membership<O: Objective + ?Sized>(
    obj: &O,
    db: &LandscapeDatabase,
    x: &ParamVector,
    target_id: usize,
    lbfgs: &LbfgsConfig,
) -> Result<bool> {
    if target_id >= db.minima.len() {
        return Err(Error::Precondition(format!("minimum {target_id} not in database")));
    }
    Ok(assign_basin(obj, db, x, lbfgs)? == Some(target_id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasinWalkConfig {
    /// Tether levels between `k_min` and `k_max` (geometric), plus k = 0.
    pub n_bias_levels: usize,
    /// Stiffest tether, in units of 1/r_ref²; `None` picks 50·dim.
    pub k_max_scale: Option<f64>,
    /// Softest non-zero tether, in units of 1/(box diagonal)².
    pub k_min_scale: f64,
    pub steps_per_level: usize,
    /// Fraction of each walk discarded as equilibration.
    pub equilibration: f64,
    /// Largest Monte Carlo displacement per coordinate.
    pub mc_step: f64,
    pub r_ref: f64,
    /// Uniform points in the reference ball checked for membership.
    pub n_ref_checks: usize,
    /// Batches for the batch-means error estimate.
    pub n_batches: usize,
    pub seed: u64,
    pub lbfgs: LbfgsConfig,
}

impl Default for BasinWalkConfig {
    fn default() -> Self {
        Self {
            n_bias_levels: 16,
            k_max_scale: None,
            k_min_scale: 1e-3,
            steps_per_level: 200_000,
            equilibration: 0.1,
            mc_step: 1.0,
            r_ref: 0.1,
            n_ref_checks: 200,
            n_batches: 20,
            seed: 0,
            lbfgs: LbfgsConfig::default(),
        }
    }
}

impl BasinWalkConfig {
    fn validate(&self) -> Result<()> {
        if self.n_bias_levels < 2 || self.steps_per_level < self.n_batches || self.n_batches < 2 {
            return Err(Error::Precondition("need ≥ 2 bias levels, ≥ 2 batches and steps_per_level ≥ n_batches".into()));
        }
        if !(self.r_ref > 0.0) || !(self.mc_step > 0.0) || !(self.k_min_scale > 0.0) {
            return Err(Error::Precondition("r_ref, mc_step and k_min_scale must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.equilibration) {
            return Err(Error::Precondition("equilibration fraction must lie in [0, 1)".into()));
        }
        self.lbfgs.validate()
    }
}

/// ⟨r²⟩ at one tether level for the basin and reference walks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub k: f64,
    pub basin_r2: f64,
    pub basin_r2_err: f64,
    pub ref_r2: f64,
    pub ref_r2_err: f64,
    pub basin_acceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub min_id: usize,
    /// Dimensionless free energy −ln v.
    pub f_basin: f64,
    pub v_basin: f64,
    /// Standard error of `f_basin` from batch means.
    pub f_error: f64,
    /// −ln of the reference ball volume.
    pub f_ref: f64,
    pub n_membership_calls: usize,
    pub levels: Vec<LevelStats>,
    pub seed: u64,
}

fn batch_mean_error(samples: &[f64], n_batches: usize) -> (f64, f64) {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let size = n / n_batches;
    let means: Vec<f64> =
        (0..n_batches).map(|b| samples[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let mm = means.iter().sum::<f64>() / n_batches as f64;
    let var = means.iter().map(|m| (m - mm) * (m - mm)).sum::<f64>() / (n_batches - 1) as f64;
    (mean, (var / n_batches as f64).sqrt())
}

/// Metropolis walk under the tether `k`, confined by `inside`. Returns the
/// post-equilibration r² samples and the acceptance fraction.
fn tethered_walk(
    x0: &ParamVector,
    k: f64,
    step: f64,
    cfg: &BasinWalkConfig,
    r: &mut rng::Rng,
    mut inside: impl FnMut(&ParamVector) -> Result<bool>,
) -> Result<(Vec<f64>, f64)> {
    let burn = (cfg.equilibration * cfg.steps_per_level as f64) as usize;
    let mut x = x0.clone();
    let mut r2 = 0.0;
    let mut samples = Vec::with_capacity(cfg.steps_per_level - burn);
    let mut accepted = 0;
    for t in 0..cfg.steps_per_level {
        let trial = ParamVector::from_iterator(x.len(), x.iter().map(|&v| v + step * (2.0 * r.random::<f64>() - 1.0)));
        let r2_trial = (&trial - x0).norm_squared();
        let u: f64 = r.random();
        if u < (-k * (r2_trial - r2)).exp() && inside(&trial)? {
            x = trial;
            r2 = r2_trial;
            accepted += 1;
        }
        if t >= burn {
            samples.push(r2);
        }
    }
    Ok((samples, accepted as f64 / cfg.steps_per_level as f64))
}

/// Basin volume of minimum `min_id` within `domain` by staged tether
/// integration against a reference ball.
pub fn estimate_basin_volume<O: Objective + ?Sized>(
    obj: &O,
    db: &LandscapeDatabase,
    min_id: usize,
    domain: &BoxDomain,
    cfg: &BasinWalkConfig,
) -> Result<VolumeEstimate> {
    cfg.validate()?;
    domain.validate()?;
    let m = db.minima.get(min_id).ok_or_else(|| Error::Precondition(format!("minimum {min_id} not in database")))?;
    let x0 = m.coords.clone();
    let dim = x0.len();
    if dim != domain.dim() || dim != obj.dim() {
        return Err(Error::DimensionMismatch { expected: obj.dim(), got: dim });
    }
    if !domain.contains(&x0) {
        return Err(Error::Precondition("minimum lies outside the box".into()));
    }
    let mut calls = 0usize;
    let mut member = |x: &ParamVector| -> Result<bool> {
        calls += 1;
        basin_membership(obj, db, x, min_id, &cfg.lbfgs)
    };

    let mut r = rng::stream(cfg.seed, 0);
    for _ in 0..cfg.n_ref_checks {
        let dir = ParamVector::from_iterator(dim, (0..dim).map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut r)));
        let rad = cfg.r_ref * r.random::<f64>().powf(1.0 / dim as f64);
        let p = &x0 + dir.normalize() * rad;
        if !domain.contains(&p) || !member(&p)? {
            return Err(Error::Precondition(format!(
                "reference ball of radius {} is not inside the basin; use a smaller r_ref",
                cfg.r_ref
            )));
        }
    }

    let diag2: f64 = domain.lo.iter().zip(&domain.hi).map(|(a, b)| (b - a) * (b - a)).sum();
    let k_max = cfg.k_max_scale.unwrap_or(50.0 * dim as f64) / (cfg.r_ref * cfg.r_ref);
    let k_min = cfg.k_min_scale / diag2;
    let n_levels = cfg.n_bias_levels;
    let ratio = (k_max / k_min).powf(1.0 / (n_levels - 1) as f64);
    let mut ks = vec![0.0];
    ks.extend((0..n_levels).map(|i| k_min * ratio.powi(i as i32)));

    let r_ref2 = cfg.r_ref * cfg.r_ref;
    let mut levels = Vec::with_capacity(ks.len());
    for (level, &k) in ks.iter().enumerate() {
        let sigma = if k > 0.0 { (0.5 / k).sqrt() } else { f64::INFINITY };
        let mut rb = rng::stream(cfg.seed, 2 * level as u64 + 1);
        let step_b = cfg.mc_step.min(2.0 * sigma);
        let (sb, acc) = tethered_walk(&x0, k, step_b, cfg, &mut rb, |x| Ok(domain.contains(x) && member(x)?))?;
        let mut rr = rng::stream(cfg.seed, 2 * level as u64 + 2);
        let step_r = (cfg.r_ref).min(2.0 * sigma);
        let (sr, _) = tethered_walk(&x0, k, step_r, cfg, &mut rr, |x| Ok((x - &x0).norm_squared() <= r_ref2))?;
        let (b, be) = batch_mean_error(&sb, cfg.n_batches);
        let (rf, re) = batch_mean_error(&sr, cfg.n_batches);
        levels.push(LevelStats { k, basin_r2: b, basin_r2_err: be, ref_r2: rf, ref_r2_err: re, basin_acceptance: acc });
    }

    // Trapezoid in k on [0, k_min], then in ln k over the geometric ladder.
    let diff = |l: &LevelStats| l.basin_r2 - l.ref_r2;
    let var = |l: &LevelStats| l.basin_r2_err * l.basin_r2_err + l.ref_r2_err * l.ref_r2_err;
    let h0 = levels[1].k;
    let mut integral = 0.5 * h0 * (diff(&levels[0]) + diff(&levels[1]));
    let mut err2 = (0.5 * h0).powi(2) * (var(&levels[0]) + var(&levels[1]));
    let dl = ratio.ln();
    for i in 1..levels.len() {
        let w = if i == 1 || i == levels.len() - 1 { 0.5 * dl } else { dl };
        integral += w * levels[i].k * diff(&levels[i]);
        err2 += (w * levels[i].k).powi(2) * var(&levels[i]);
    }
    let f_ref = -ball_volume(dim, cfg.r_ref).ln();
    let f_basin = f_ref - integral;
    Ok(VolumeEstimate {
        min_id,
        f_basin,
        v_basin: (-f_basin).exp(),
        f_error: err2.sqrt(),
        f_ref,
        n_membership_calls: calls,
        levels,
        seed: cfg.seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// Unbiased mean basin volume (harmonic mean of the sample).
    pub mean_volume: f64,
    /// Estimated number of minima V/⟨v⟩.
    pub omega: f64,
    /// ln Ω − ln N!.
    pub s_boltzmann: f64,
    /// −Σ p ln p − ln N!, p_i = v_i / Σ v.
    pub s_gibbs: f64,
    pub total_volume: f64,
    pub n_particles: usize,
}

/// Largest tolerated excess of Σ v_i over the total volume, relative to it.
pub const VOLUME_SUM_TOLERANCE: f64 = 0.05;

/// State count and entropies from basin volumes of distinct minima that were
/// found with probability proportional to their volume.
pub fn enumerate_and_entropy(volumes: &[f64], total_volume: f64, n_particles: usize) -> Result<EntropyReport> {
    if volumes.is_empty() || volumes.iter().any(|v| !(*v > 0.0)) || !(total_volume > 0.0) {
        return Err(Error::Precondition("volumes and total volume must be positive".into()));
    }
    let sum: f64 = volumes.iter().sum();
    if sum > total_volume * (1.0 + VOLUME_SUM_TOLERANCE) {
        return Err(Error::Inconsistent(format!("basin volumes sum to {sum}, above the total volume {total_volume}")));
    }
    let mean_volume = volumes.len() as f64 / volumes.iter().map(|v| 1.0 / v).sum::<f64>();
    let omega = total_volume / mean_volume;
    let lnf = ln_factorial(n_particles);
    let s_gibbs = -volumes.iter().map(|v| v / sum).map(|p| p * p.ln()).sum::<f64>() - lnf;
    Ok(EntropyReport {
        mean_volume,
        omega,
        s_boltzmann: omega.ln() - lnf,
        s_gibbs,
        total_volume,
        n_particles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::testfns::DoubleWell;
    use crate::numcore::Metric;

    /// (x² − 1)² + y².
    struct SeparableWell;

    impl Objective for SeparableWell {
        fn dim(&self) -> usize {
            2
        }
        fn energy_gradient(&self, x: &ParamVector) -> (f64, ParamVector) {
            let (a, b) = (x[0], x[1]);
            ((a * a - 1.0).powi(2) + b * b, ParamVector::from_vec(vec![4.0 * a * (a * a - 1.0), 2.0 * b]))
        }
    }

    fn db_of(points: &[Vec<f64>], energies: &[f64]) -> LandscapeDatabase {
        let mut db = LandscapeDatabase::new(Metric::Euclidean);
        for (p, e) in points.iter().zip(energies) {
            db.add_minimum(*e, &ParamVector::from_vec(p.clone())).unwrap();
        }
        db
    }

    #[test]
    fn ball_volumes() {
        assert!((ball_volume(1, 0.5) - 1.0).abs() < 1e-14);
        assert!((ball_volume(2, 1.0) - PI).abs() < 1e-14);
        assert!((ball_volume(3, 2.0) - 4.0 / 3.0 * PI * 8.0).abs() < 1e-12);
        assert!((ln_factorial(5) - 120f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn membership_in_1d_double_well() {
        let db = db_of(&[vec![-1.0], vec![1.0]], &[0.0, 0.0]);
        let cfg = LbfgsConfig::default();
        let x = ParamVector::from_element(1, 0.5);
        assert!(basin_membership(&DoubleWell, &db, &x, 1, &cfg).unwrap());
        assert!(!basin_membership(&DoubleWell, &db, &x, 0, &cfg).unwrap());
        assert!(basin_membership(&DoubleWell, &db, &ParamVector::from_element(1, 1.0), 1, &cfg).unwrap());
        assert!(basin_membership(&DoubleWell, &db, &x, 7, &cfg).is_err());
    }

    #[test]
    fn one_dimensional_basins_have_length_two() {
        let db = db_of(&[vec![-1.0], vec![1.0]], &[0.0, 0.0]);
        let domain = BoxDomain::cube(1, -2.0, 2.0);
        let cfg = BasinWalkConfig { seed: 4, ..Default::default() };
        let mut vols = Vec::new();
        for id in 0..2 {
            let est = estimate_basin_volume(&DoubleWell, &db, id, &domain, &cfg).unwrap();
            assert!((est.v_basin - 2.0).abs() < 0.1, "{est:?}");
            assert!(est.n_membership_calls > 0);
            vols.push(est.v_basin);
        }
        let rep = enumerate_and_entropy(&vols[..1], 4.0, 0).unwrap();
        assert!((rep.omega - 2.0).abs() < 0.1);
    }

    #[test]
    fn oversized_reference_ball_is_rejected() {
        let db = db_of(&[vec![-1.0], vec![1.0]], &[0.0, 0.0]);
        let cfg = BasinWalkConfig { r_ref: 1.5, ..Default::default() };
        let err = estimate_basin_volume(&DoubleWell, &db, 1, &BoxDomain::cube(1, -2.0, 2.0), &cfg);
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn two_dimensional_basins_are_half_the_box() {
        let db = db_of(&[vec![-1.0, 0.0], vec![1.0, 0.0]], &[0.0, 0.0]);
        let domain = BoxDomain::cube(2, -2.0, 2.0);
        let mut total = 0.0;
        for id in 0..2 {
            let cfg = BasinWalkConfig { seed: 1 + id as u64, ..Default::default() };
            let est = estimate_basin_volume(&SeparableWell, &db, id, &domain, &cfg).unwrap();
            assert!((est.v_basin - 8.0).abs() < 0.4, "{est:?}");
            total += est.v_basin;
        }
        assert!((total - domain.volume()).abs() < 0.05 * domain.volume());
    }

    #[test]
    fn uniform_points_are_partitioned() {
        let db = db_of(&[vec![-1.0, 0.0], vec![1.0, 0.0]], &[0.0, 0.0]);
        let domain = BoxDomain::cube(2, -2.0, 2.0);
        let mut r = rng::seeded(2);
        let mut counts = [0usize; 3];
        for _ in 0..2000 {
            match assign_basin(&SeparableWell, &db, &domain.sample(&mut r), &LbfgsConfig::default()).unwrap() {
                Some(id) => counts[id] += 1,
                None => counts[2] += 1,
            }
        }
        assert!(counts[2] <= 2, "{counts:?}");
        assert!((counts[0] as f64 / 2000.0 - 0.5).abs() < 0.05);
    }

    #[test]
    fn entropy_formulas() {
        let rep = enumerate_and_entropy(&[1.0, 3.0], 4.0, 0).unwrap();
        let expect = -(0.25f64 * 0.25f64.ln() + 0.75 * 0.75f64.ln());
        assert!((rep.s_gibbs - expect).abs() < 1e-14);
        assert!((rep.mean_volume - 1.5).abs() < 1e-14);
        let eq = enumerate_and_entropy(&[2.0; 5], 10.0, 0).unwrap();
        assert!((eq.omega - 5.0).abs() < 1e-12);
        assert!((eq.s_gibbs - eq.s_boltzmann).abs() < 1e-12);
        let with_n = enumerate_and_entropy(&[2.0; 5], 10.0, 3).unwrap();
        assert!((eq.s_boltzmann - with_n.s_boltzmann - 6f64.ln()).abs() < 1e-12);
        assert!(matches!(enumerate_and_entropy(&[3.0, 3.0], 4.0, 0), Err(Error::Inconsistent(_))));
        assert!(enumerate_and_entropy(&[0.0], 4.0, 0).is_err());
    }
}
