//! Three-atom cluster bound by Lennard-Jones pairs and an Axilrod-Teller
//! triple-dipole term.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::data::ClassificationDataset;
use crate::error::{Error, Result};
use crate::numcore::{lbfgs_minimize, LbfgsConfig, Metric, MinimizationResult, Objective, ParamVector};
use crate::rng;

/// Atom pairs in the order (r12, r13, r23).
pub const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// Minimum pair separation accepted as non-coincident.
pub const MIN_SEPARATION: f64 = 1e-8;

/// Side of the cube in which quench starts are drawn.
pub const START_CUBE_SIDE: f64 = 3.464_101_615_137_754_6;

// Coefficients of (a, b, c) in the three linear factors of Q.
const SIGNS: [[f64; 3]; 3] = [[1.0, 1.0, -1.0], [1.0, -1.0, 1.0], [-1.0, 1.0, 1.0]];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriatomicModel {
    pub epsilon: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl Default for TriatomicModel {
    fn default() -> Self {
        Self { epsilon: 1.0, sigma: 1.0, gamma: 2.0 }
    }
}

/// Energy with first and second derivatives in the squared separations.
struct Reduced {
    e: f64,
    g: [f64; 3],
    h: [[f64; 3]; 3],
}

impl TriatomicModel {
    /// The three separations (r12, r13, r23).
    pub fn distances(coords: &ParamVector) -> [f64; 3] {
        PAIRS.map(|(i, j)| pair_vector(coords, i, j).norm())
    }

    /// Energy and gradient; errors if two atoms coincide.
    pub fn triatomic_energy_gradient(&self, coords: &ParamVector) -> Result<(f64, ParamVector)> {
        if coords.len() != 9 {
            return Err(Error::DimensionMismatch { expected: 9, got: coords.len() });
        }
        let r = Self::distances(coords);
        if r.iter().any(|&d| !(d > MIN_SEPARATION * self.sigma)) {
            return Err(Error::Domain(format!("coincident atoms, separations {r:?}")));
        }
        let red = self.reduced(coords);
        Ok((red.e, self.chain_gradient(coords, &red.g)))
    }

    fn reduced(&self, coords: &ParamVector) -> Reduced {
        let s2 = self.sigma * self.sigma;
        let sq = PAIRS.map(|(i, j)| pair_vector(coords, i, j).norm_squared());
        let mut out = Reduced { e: 0.0, g: [0.0; 3], h: [[0.0; 3]; 3] };

        // 4ε[(σ²/a)^6 − (σ²/a)^3]
        for p in 0..3 {
            let t = s2 / sq[p];
            let (t3, t6) = (t.powi(3), t.powi(6));
            let a = sq[p];
            out.e += 4.0 * self.epsilon * (t6 - t3);
            out.g[p] += 4.0 * self.epsilon * (-6.0 * t6 + 3.0 * t3) / a;
            out.h[p][p] += 4.0 * self.epsilon * (42.0 * t6 - 12.0 * t3) / (a * a);
        }

        // γ[s^{-3/2} + (3/8) Q s^{-5/2}],  s = abc,  Q = Π (±a ±b ±c)
        if self.gamma != 0.0 {
            let lin = SIGNS.map(|row| row[0] * sq[0] + row[1] * sq[1] + row[2] * sq[2]);
            let q = lin[0] * lin[1] * lin[2];
            let mut qg = [0.0; 3];
            let mut qh = [[0.0; 3]; 3];
            for k in 0..3 {
                let (l, m) = ((k + 1) % 3, (k + 2) % 3);
                for p in 0..3 {
                    qg[p] += SIGNS[k][p] * lin[l] * lin[m];
                    for r in 0..3 {
                        qh[p][r] += lin[m] * (SIGNS[k][p] * SIGNS[l][r] + SIGNS[l][p] * SIGNS[k][r]);
                    }
                }
            }
            let prod = sq[0] * sq[1] * sq[2];
            let (u, ug, uh) = power_of_product(prod, &sq, -1.5);
            let (v, vg, vh) = power_of_product(prod, &sq, -2.5);
            out.e += self.gamma * (u + 0.375 * q * v);
            for p in 0..3 {
                out.g[p] += self.gamma * (ug[p] + 0.375 * (qg[p] * v + q * vg[p]));
                for r in 0..3 {
                    out.h[p][r] += self.gamma
                        * (uh[p][r] + 0.375 * (qh[p][r] * v + qg[p] * vg[r] + qg[r] * vg[p] + q * vh[p][r]));
                }
            }
        }
        out
    }

    fn chain_gradient(&self, coords: &ParamVector, g: &[f64; 3]) -> ParamVector {
        let mut out = ParamVector::zeros(9);
        for (p, &(i, j)) in PAIRS.iter().enumerate() {
            let d = pair_vector(coords, i, j) * (2.0 * g[p]);
            for k in 0..3 {
                out[3 * i + k] += d[k];
                out[3 * j + k] -= d[k];
            }
        }
        out
    }

    /// The four reference minima (equilateral, then linear with atom 1, 2, 3
    /// in the centre), located by tight quenches.
    pub fn reference_minima(&self) -> Vec<ReferenceMinimum> {
        let cfg = LbfgsConfig { rms_tol: 1e-10, ..LbfgsConfig::default() };
        let side = 1.17 * self.sigma;
        let tri = ParamVector::from_vec(vec![
            0.0, 0.0, 0.0, side, 0.0, 0.0, 0.5 * side, 0.5 * 3f64.sqrt() * side, 0.0,
        ]);
        let mut starts = vec![tri];
        let bond = 1.11 * self.sigma;
        for centre in 0..3 {
            let mut x = ParamVector::zeros(9);
            let others: Vec<usize> = (0..3).filter(|&a| a != centre).collect();
            x[3 * others[0]] = -bond;
            x[3 * others[1]] = bond;
            // Small bend so the quench is not confined to the line by symmetry.
            x[3 * centre + 1] = 1e-3;
            starts.push(x);
        }
        starts
            .into_iter()
            .map(|x0| {
                let res = lbfgs_minimize(self, &x0, &cfg).expect("reference quench");
                ReferenceMinimum { energy: res.final_energy, distances: Self::distances(&res.final_point), coords: res.final_point }
            })
            .collect()
    }

    /// Label 0 for the triangle, 1 to 3 for the linear isomer whose centre is
    /// atom 1 to 3. Energy must match within 1e-4 ε and the ordered
    /// separations within 1e-3 σ.
    pub fn classify(refs: &[ReferenceMinimum], energy: f64, coords: &ParamVector) -> Option<u8> {
        let d = Self::distances(coords);
        refs.iter().position(|m| {
            (m.energy - energy).abs() <= 1e-4 && m.distances.iter().zip(&d).all(|(a, b)| (a - b).abs() <= 1e-3)
        })
        .map(|i| i as u8)
    }

    /// Uniform start in the cube, resampled while any two atoms are closer
    /// than [`MIN_SEPARATION`].
    pub fn random_start(&self, rng: &mut rng::Rng) -> ParamVector {
        loop {
            let side = START_CUBE_SIDE * self.sigma;
            let x = ParamVector::from_iterator(9, (0..9).map(|_| rng.random::<f64>() * side));
            if Self::distances(&x).iter().all(|&d| d > MIN_SEPARATION * self.sigma) {
                return x;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMinimum {
    pub energy: f64,
    pub distances: [f64; 3],
    pub coords: ParamVector,
}

/// s^k with s = a·b·c, differentiated in (a, b, c).
fn power_of_product(prod: f64, sq: &[f64; 3], k: f64) -> (f64, [f64; 3], [[f64; 3]; 3]) {
    let u = prod.powf(k);
    let g = [k * u / sq[0], k * u / sq[1], k * u / sq[2]];
    let mut h = [[0.0; 3]; 3];
    for p in 0..3 {
        for r in 0..3 {
            h[p][r] = if p == r { k * (k - 1.0) * u / (sq[p] * sq[p]) } else { k * k * u / (sq[p] * sq[r]) };
        }
    }
    (u, g, h)
}

fn pair_vector(x: &ParamVector, i: usize, j: usize) -> Vector3<f64> {
    Vector3::new(x[3 * i] - x[3 * j], x[3 * i + 1] - x[3 * j + 1], x[3 * i + 2] - x[3 * j + 2])
}

impl Objective for TriatomicModel {
    fn dim(&self) -> usize {
        9
    }

    /// Non-finite values are returned for coincident atoms so that line
    /// searches back away from them.
    fn energy_gradient(&self, x: &ParamVector) -> (f64, ParamVector) {
        self.triatomic_energy_gradient(x)
            .unwrap_or_else(|_| (f64::NAN, ParamVector::from_element(9, f64::NAN)))
    }

    fn hessian(&self, x: &ParamVector) -> DMatrix<f64> {
        let red = self.reduced(x);
        let grads: Vec<ParamVector> = (0..3)
            .map(|p| {
                let mut e = [0.0; 3];
                e[p] = 1.0;
                self.chain_gradient(x, &e)
            })
            .collect();
        let mut h = DMatrix::zeros(9, 9);
        for p in 0..3 {
            for r in 0..3 {
                h.ger(red.h[p][r], &grads[p], &grads[r], 1.0);
            }
            let (i, j) = PAIRS[p];
            let c = 2.0 * red.g[p];
            for k in 0..3 {
                h[(3 * i + k, 3 * i + k)] += c;
                h[(3 * j + k, 3 * j + k)] += c;
                h[(3 * i + k, 3 * j + k)] -= c;
                h[(3 * j + k, 3 * i + k)] -= c;
            }
        }
        h
    }

    fn hessian_vector(&self, x: &ParamVector, v: &ParamVector) -> ParamVector {
        self.hessian(x) * v
    }

    /// Three translations and the (two or three) independent rotations.
    fn zero_modes(&self, x: &ParamVector) -> Vec<ParamVector> {
        let mut modes = Vec::with_capacity(6);
        for k in 0..3 {
            modes.push(ParamVector::from_iterator(9, (0..9).map(|i| if i % 3 == k { 1.0 } else { 0.0 })));
        }
        let c = Vector3::new(
            (x[0] + x[3] + x[6]) / 3.0,
            (x[1] + x[4] + x[7]) / 3.0,
            (x[2] + x[5] + x[8]) / 3.0,
        );
        for axis in Matrix3::<f64>::identity().column_iter() {
            let mut m = ParamVector::zeros(9);
            for a in 0..3 {
                let r = Vector3::new(x[3 * a], x[3 * a + 1], x[3 * a + 2]) - c;
                let t = axis.cross(&r);
                m.rows_mut(3 * a, 3).copy_from(&t);
            }
            modes.push(m);
        }
        modes
    }

    fn metric(&self) -> Metric {
        Metric::RigidBody
    }
}

/// One labelled quench of the triatomic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledQuench {
    pub result: MinimizationResult,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchDataset {
    pub runs: Vec<LabelledQuench>,
    pub n_unconverged: usize,
    pub n_unmatched: usize,
    pub label_histogram: [usize; 4],
    pub seed: u64,
}

/// `n_runs` LBFGS quenches from uniform starts in the cube, each recorded
/// with its full trajectory and labelled by the minimum it reached.
pub fn build_quench_dataset(model: &TriatomicModel, n_runs: usize, seed: u64) -> Result<QuenchDataset> {
    if n_runs == 0 {
        return Err(Error::Precondition("n_runs must be at least 1".into()));
    }
    let refs = model.reference_minima();
    let cfg = LbfgsConfig { record_trajectory: true, ..LbfgsConfig::default() };
    let mut ds = QuenchDataset { runs: Vec::new(), n_unconverged: 0, n_unmatched: 0, label_histogram: [0; 4], seed };
    for run in 0..n_runs {
        let mut r = rng::stream(seed, run as u64);
        let x0 = model.random_start(&mut r);
        let res = lbfgs_minimize(model, &x0, &cfg)?;
        if !res.converged {
            ds.n_unconverged += 1;
            continue;
        }
        match TriatomicModel::classify(&refs, res.final_energy, &res.final_point) {
            Some(label) => {
                ds.label_histogram[label as usize] += 1;
                ds.runs.push(LabelledQuench { result: res, label });
            }
            None => ds.n_unmatched += 1,
        }
    }
    Ok(ds)
}

/// Which configuration of each quench becomes a classifier input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// (r12, r13, r23) of the starting geometry.
    InitialR3,
    /// (r12, r13) of the configuration `s` steps before convergence; sequences
    /// shorter than that fall back to the starting geometry.
    R2AtS(usize),
}

/// Turns labelled quench sequences into a 4-class dataset.
pub fn extract_inputs(runs: &[LabelledQuench], mode: InputMode) -> Result<ClassificationDataset> {
    if let InputMode::R2AtS(0) = mode {
        return Err(Error::Precondition("s must be at least 1".into()));
    }
    let n_in = if mode == InputMode::InitialR3 { 3 } else { 2 };
    let mut inputs = Vec::with_capacity(runs.len() * n_in);
    for (d, q) in runs.iter().enumerate() {
        let traj = q
            .result
            .trajectory
            .as_ref()
            .filter(|t| !t.is_empty())
            .ok_or_else(|| Error::Precondition(format!("quench {d} has no recorded trajectory")))?;
        match mode {
            InputMode::InitialR3 => inputs.extend(TriatomicModel::distances(&traj[0])),
            InputMode::R2AtS(s) => {
                let last = traj.len() - 1;
                let at = if s <= last { last - s } else { 0 };
                inputs.extend(&TriatomicModel::distances(&traj[at])[..2]);
            }
        }
    }
    ClassificationDataset::new(n_in, inputs, runs.iter().map(|q| q.label as usize).collect(), 4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{fd_hessian, finite_diff_gradient, gradient_rel_error, hessian_rel_error, rms};

    fn triangle(side: f64) -> ParamVector {
        ParamVector::from_vec(vec![0.0, 0.0, 0.0, side, 0.0, 0.0, 0.5 * side, 0.5 * 3f64.sqrt() * side, 0.0])
    }

    fn random_rotation(r: &mut rng::Rng) -> Matrix3<f64> {
        let axis = Vector3::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5, r.random::<f64>() - 0.5);
        nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), r.random::<f64>() * 6.0).into_inner()
    }

    #[test]
    fn lj_pair_minimum_with_distant_third_atom() {
        let m = TriatomicModel { gamma: 0.0, ..Default::default() };
        let r0 = 2f64.powf(1.0 / 6.0);
        let x = ParamVector::from_vec(vec![0.0, 0.0, 0.0, r0, 0.0, 0.0, 1e6, 0.0, 0.0]);
        assert!((m.energy(&x) + 1.0).abs() < 1e-6);
    }

    #[test]
    fn equilateral_and_linear_energies() {
        let m = TriatomicModel::default();
        let x = triangle(1.16875);
        let (e, g) = m.triatomic_energy_gradient(&x).unwrap();
        assert!((e + 2.185).abs() < 1e-3, "{e}");
        assert!(rms(&g) < 1e-4);
        let d = 1.10876;
        let lin = ParamVector::from_vec(vec![-d, 0.0, 0.0, 0.0, 0.0, 0.0, d, 0.0, 0.0]);
        assert!((m.energy(&lin) + 2.219).abs() < 1e-3);
    }

    #[test]
    fn coincident_atoms_are_a_domain_error() {
        let x = ParamVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(TriatomicModel::default().triatomic_energy_gradient(&x), Err(Error::Domain(_))));
    }

    #[test]
    fn invariant_under_rigid_motion_and_relabelling() {
        let m = TriatomicModel::default();
        let mut r = rng::seeded(11);
        for _ in 0..50 {
            let x = m.random_start(&mut r);
            let e = m.energy(&x);
            let rot = random_rotation(&mut r);
            let shift = Vector3::new(r.random::<f64>(), r.random::<f64>(), r.random::<f64>());
            let mut y = ParamVector::zeros(9);
            let perm = [2, 0, 1];
            for a in 0..3 {
                let p = Vector3::new(x[3 * a], x[3 * a + 1], x[3 * a + 2]);
                y.rows_mut(3 * perm[a], 3).copy_from(&(rot * p + shift));
            }
            let ey = m.energy(&y);
            assert!((e - ey).abs() <= 1e-10 * e.abs().max(1.0), "{e} {ey}");
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let m = TriatomicModel::default();
        let mut r = rng::seeded(5);
        let mut n = 0;
        while n < 20 {
            let x = m.random_start(&mut r);
            if TriatomicModel::distances(&x).iter().any(|&d| d < 0.7) {
                continue;
            }
            let g = m.energy_gradient(&x).1;
            assert!(gradient_rel_error(&g, &finite_diff_gradient(&m, &x, 1e-6)) < 1e-5);
            assert!(hessian_rel_error(&m.hessian(&x), &fd_hessian(&m, &x, 1e-5)) < 1e-4);
            n += 1;
        }
    }

    #[test]
    fn reference_minima_and_labels() {
        let m = TriatomicModel::default();
        let refs = m.reference_minima();
        assert!((refs[0].energy + 2.185).abs() < 1e-3);
        assert!((refs[0].distances[0] - 1.16875).abs() < 1e-4);
        for (k, rm) in refs.iter().enumerate().skip(1) {
            assert!((rm.energy + 2.219).abs() < 1e-3);
            // The long pair excludes the centre atom.
            let long = (0..3).max_by(|&a, &b| rm.distances[a].total_cmp(&rm.distances[b])).unwrap();
            assert!(!(PAIRS[long].0 == k - 1 || PAIRS[long].1 == k - 1));
            assert!((rm.distances.iter().fold(f64::MAX, |a, &b| a.min(b)) - 1.10876).abs() < 1e-4);
        }
        for (k, rm) in refs.iter().enumerate() {
            assert_eq!(TriatomicModel::classify(&refs, rm.energy, &rm.coords), Some(k as u8));
        }
    }

    #[test]
    fn exact_minimum_start_takes_no_steps() {
        let m = TriatomicModel::default();
        let refs = m.reference_minima();
        let res = lbfgs_minimize(&m, &refs[0].coords, &LbfgsConfig::default()).unwrap();
        assert_eq!(res.n_steps, 0);
        assert_eq!(TriatomicModel::classify(&refs, res.final_energy, &res.final_point), Some(0));
    }

    #[test]
    fn zero_modes_are_flat_at_minimum() {
        let m = TriatomicModel::default();
        let x = m.reference_minima()[0].coords.clone();
        let h = m.hessian(&x);
        for z in crate::numcore::orthonormalize(&m.zero_modes(&x)) {
            assert!((&h * &z).norm() < 1e-6);
        }
    }

    fn fake_run(n: usize) -> LabelledQuench {
        let traj: Vec<ParamVector> = (0..n).map(|i| triangle(1.0 + i as f64)).collect();
        let result = MinimizationResult {
            final_point: traj[n - 1].clone(),
            final_energy: 0.0,
            final_rms: 0.0,
            converged: true,
            n_steps: n - 1,
            n_evals: n,
            trajectory: Some(traj),
        };
        LabelledQuench { result, label: 2 }
    }

    #[test]
    fn input_extraction_indexing_and_padding() {
        let runs = [fake_run(5)];
        let near = extract_inputs(&runs, InputMode::R2AtS(1)).unwrap();
        assert_eq!(near.inputs, TriatomicModel::distances(&triangle(4.0))[..2].to_vec());
        let far = extract_inputs(&runs, InputMode::R2AtS(80)).unwrap();
        assert_eq!(far.inputs, TriatomicModel::distances(&triangle(1.0))[..2].to_vec());
        let init = extract_inputs(&runs, InputMode::InitialR3).unwrap();
        assert_eq!((init.n_in, init.labels.clone()), (3, vec![2]));
        assert_eq!(init.inputs, TriatomicModel::distances(&triangle(1.0)).to_vec());
        let mut bare = fake_run(2);
        bare.result.trajectory = None;
        assert!(extract_inputs(&[bare], InputMode::InitialR3).is_err());
        assert!(extract_inputs(&runs, InputMode::R2AtS(0)).is_err());
    }

    #[test]
    fn small_dataset_is_labelled_and_reproducible() {
        let m = TriatomicModel::default();
        let a = build_quench_dataset(&m, 30, 3).unwrap();
        let b = build_quench_dataset(&m, 30, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.runs.len() + a.n_unconverged + a.n_unmatched, 30);
        assert!(a.runs.len() >= 25);
        assert!(a.runs.iter().all(|q| q.result.trajectory.is_some()));
    }
}
