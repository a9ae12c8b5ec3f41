//! Single-hidden-layer tanh network with softmax outputs and L² regularised
//! cross-entropy cost.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::data::ClassificationDataset;
use crate::error::{Error, Result};
use crate::numcore::{Objective, ParamVector};

/// Architecture and regularisation. Weights are laid out as the blocks
/// w² (hidden × in, row-major), w¹ (out × hidden), hidden biases, output biases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuralNetSpec {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
    pub lambda: f64,
    pub regularize_bias: bool,
}

impl NeuralNetSpec {
    pub fn n_params(&self) -> usize {
        self.n_hidden * self.n_in + self.n_out * self.n_hidden + self.n_hidden + self.n_out
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_in == 0 || self.n_hidden == 0 || self.n_out == 0 {
            return Err(Error::Precondition("layer sizes must be positive".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Precondition(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        Ok(())
    }

    #[inline]
    pub fn w2(&self, j: usize, k: usize) -> usize {
        j * self.n_in + k
    }

    #[inline]
    pub fn w1(&self, i: usize, j: usize) -> usize {
        self.n_hidden * self.n_in + i * self.n_hidden + j
    }

    #[inline]
    pub fn bh(&self, j: usize) -> usize {
        self.n_hidden * (self.n_in + self.n_out) + j
    }

    #[inline]
    pub fn bo(&self, i: usize) -> usize {
        self.n_hidden * (self.n_in + self.n_out + 1) + i
    }

    /// Index of the weight feeding hidden node `j` from augmented input `k`
    /// (k = n_in is the bias).
    #[inline]
    fn hidden_in(&self, j: usize, k: usize) -> usize {
        if k < self.n_in {
            self.w2(j, k)
        } else {
            self.bh(j)
        }
    }

    fn is_bias(&self, p: usize) -> bool {
        p >= self.bh(0)
    }

    fn regularizer(&self, w: &ParamVector) -> f64 {
        let end = if self.regularize_bias { w.len() } else { self.bh(0) };
        self.lambda * w.rows(0, end).norm_squared()
    }

    /// Hidden activations and output log-probabilities for one input.
    pub fn forward(&self, w: &ParamVector, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h: Vec<f64> = (0..self.n_hidden)
            .map(|j| {
                let a = w[self.bh(j)] + (0..self.n_in).map(|k| w[self.w2(j, k)] * x[k]).sum::<f64>();
                a.tanh()
            })
            .collect();
        let y: Vec<f64> = (0..self.n_out)
            .map(|i| w[self.bo(i)] + (0..self.n_hidden).map(|j| w[self.w1(i, j)] * h[j]).sum::<f64>())
            .collect();
        let m = y.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + y.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        (h, y.into_iter().map(|v| v - lse).collect())
    }

    pub fn probabilities(&self, w: &ParamVector, x: &[f64]) -> Vec<f64> {
        self.forward(w, x).1.into_iter().map(f64::exp).collect()
    }

    /// Most probable class, ties going to the lowest index.
    pub fn predict(&self, w: &ParamVector, x: &[f64]) -> usize {
        let lp = self.forward(w, x).1;
        let mut best = 0;
        for (i, &v) in lp.iter().enumerate() {
            if v > lp[best] {
                best = i;
            }
        }
        best
    }
}

/// Cost of `spec` with weights `w` on `data`, and its gradient.
pub fn nn_cost(spec: &NeuralNetSpec, w: &ParamVector, data: &ClassificationDataset) -> (f64, ParamVector) {
    let n = data.len().max(1) as f64;
    let mut e = 0.0;
    let mut g = ParamVector::zeros(spec.n_params());
    let mut back = vec![0.0; spec.n_hidden];
    for d in 0..data.len() {
        let x = data.row(d);
        let c = data.labels[d];
        let (h, lp) = spec.forward(w, x);
        e -= lp[c];
        back.iter_mut().for_each(|b| *b = 0.0);
        for i in 0..spec.n_out {
            let delta = lp[i].exp() - if i == c { 1.0 } else { 0.0 };
            g[spec.bo(i)] += delta;
            for j in 0..spec.n_hidden {
                g[spec.w1(i, j)] += delta * h[j];
                back[j] += delta * w[spec.w1(i, j)];
            }
        }
        for j in 0..spec.n_hidden {
            let gj = back[j] * (1.0 - h[j] * h[j]);
            g[spec.bh(j)] += gj;
            for k in 0..spec.n_in {
                g[spec.w2(j, k)] += gj * x[k];
            }
        }
    }
    e /= n;
    g /= n;
    e += spec.regularizer(w);
    for p in 0..g.len() {
        if spec.regularize_bias || !spec.is_bias(p) {
            g[p] += 2.0 * spec.lambda * w[p];
        }
    }
    (e, g)
}

/// Network cost on a fixed training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralNet {
    pub spec: NeuralNetSpec,
    pub data: ClassificationDataset,
}

impl NeuralNet {
    pub fn new(spec: NeuralNetSpec, data: ClassificationDataset) -> Result<Self> {
        spec.validate()?;
        if data.n_in != spec.n_in {
            return Err(Error::DimensionMismatch { expected: spec.n_in, got: data.n_in });
        }
        if data.class_count > spec.n_out {
            return Err(Error::Precondition(format!(
                "{} classes but only {} outputs",
                data.class_count, spec.n_out
            )));
        }
        Ok(Self { spec, data })
    }

    /// Fraction of `data` whose predicted class differs from the label.
    pub fn misclassification_fraction(&self, w: &ParamVector, data: &ClassificationDataset) -> f64 {
        let wrong = (0..data.len()).filter(|&d| self.spec.predict(w, data.row(d)) != data.labels[d]).count();
        wrong as f64 / data.len().max(1) as f64
    }
}

impl Objective for NeuralNet {
    fn dim(&self) -> usize {
        self.spec.n_params()
    }

    fn energy_gradient(&self, w: &ParamVector) -> (f64, ParamVector) {
        nn_cost(&self.spec, w, &self.data)
    }

    fn hessian(&self, w: &ParamVector) -> DMatrix<f64> {
        let s = &self.spec;
        let np = s.n_params();
        let inv_n = 1.0 / self.data.len().max(1) as f64;
        let mut hess = DMatrix::zeros(np, np);
        let mut jac = DMatrix::zeros(s.n_out, np);
        let mut xt = vec![1.0; s.n_in + 1];
        for d in 0..self.data.len() {
            let x = self.data.row(d);
            xt[..s.n_in].copy_from_slice(x);
            let c = self.data.labels[d];
            let (h, lp) = s.forward(w, x);
            let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
            let delta: Vec<f64> = (0..s.n_out).map(|i| p[i] - if i == c { 1.0 } else { 0.0 }).collect();
            let dh: Vec<f64> = h.iter().map(|v| 1.0 - v * v).collect();

            // Gauss-Newton part J_yᵀ (diag p − p pᵀ) J_y.
            jac.fill(0.0);
            for i in 0..s.n_out {
                jac[(i, s.bo(i))] = 1.0;
                for j in 0..s.n_hidden {
                    jac[(i, s.w1(i, j))] = h[j];
                    let f = w[s.w1(i, j)] * dh[j];
                    for (k, &xv) in xt.iter().enumerate() {
                        jac[(i, s.hidden_in(j, k))] = f * xv;
                    }
                }
            }
            let pj = jac.tr_mul(&nalgebra::DVector::from_vec(p.clone()));
            let mut mj = jac.clone();
            for i in 0..s.n_out {
                mj.row_mut(i).scale_mut(p[i]);
            }
            hess.gemm_tr(inv_n, &jac, &mj, 1.0);
            hess.ger(-inv_n, &pj, &pj, 1.0);

            // Σ_i δ_i ∇²y_i.
            for j in 0..s.n_hidden {
                let mut ej = 0.0;
                for i in 0..s.n_out {
                    ej += delta[i] * w[s.w1(i, j)];
                    let a = s.w1(i, j);
                    for (k, &xv) in xt.iter().enumerate() {
                        let b = s.hidden_in(j, k);
                        let v = inv_n * delta[i] * dh[j] * xv;
                        hess[(a, b)] += v;
                        hess[(b, a)] += v;
                    }
                }
                let f = inv_n * ej * (-2.0 * h[j] * dh[j]);
                for (k, &xk) in xt.iter().enumerate() {
                    for (l, &xl) in xt.iter().enumerate() {
                        hess[(s.hidden_in(j, k), s.hidden_in(j, l))] += f * xk * xl;
                    }
                }
            }
        }
        for p in 0..np {
            if s.regularize_bias || !s.is_bias(p) {
                hess[(p, p)] += 2.0 * s.lambda;
            }
        }
        hess
    }

    /// A uniform shift of the output biases leaves the softmax unchanged; it is
    /// a true zero mode unless the biases are regularised.
    fn zero_modes(&self, _w: &ParamVector) -> Vec<ParamVector> {
        let s = &self.spec;
        if s.lambda > 0.0 && s.regularize_bias {
            return Vec::new();
        }
        let mut v = ParamVector::zeros(s.n_params());
        for i in 0..s.n_out {
            v[s.bo(i)] = 1.0;
        }
        vec![v]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::data::synthetic_blobs;
    use crate::numcore::{fd_hessian, finite_diff_gradient, gradient_rel_error, hessian_rel_error};
    use crate::rng;
    use rand::Rng as _;

    fn spec(lambda: f64, regularize_bias: bool) -> NeuralNetSpec {
        NeuralNetSpec { n_in: 3, n_hidden: 4, n_out: 4, lambda, regularize_bias }
    }

    fn random_w(n: usize, r: &mut rng::Rng) -> ParamVector {
        ParamVector::from_iterator(n, (0..n).map(|_| r.random::<f64>() * 2.0 - 1.0))
    }

    #[test]
    fn parameter_count() {
        let s = NeuralNetSpec { n_in: 784, n_hidden: 10, n_out: 10, lambda: 0.1, regularize_bias: true };
        assert_eq!(s.n_params(), 7960);
        assert_eq!(spec(0.0, true).n_params(), 12 + 16 + 4 + 4);
    }

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let s = spec(0.3, true);
        let data = synthetic_blobs(20, 3, 4, 0.1, 1).unwrap();
        let (e, g) = nn_cost(&s, &ParamVector::zeros(s.n_params()), &data);
        assert!((e - 4f64.ln()).abs() < 1e-14);
        // Only output biases see the residual 1/4 − δ when hidden units are zero.
        for i in 0..4 {
            let count = data.labels.iter().filter(|&&c| c == i).count() as f64;
            assert!((g[s.bo(i)] - (0.25 - count / 20.0)).abs() < 1e-14);
            for j in 0..4 {
                assert_eq!(g[s.w1(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn certain_prediction_leaves_only_regularizer() {
        let s = NeuralNetSpec { n_in: 1, n_hidden: 1, n_out: 2, lambda: 0.01, regularize_bias: false };
        let data = ClassificationDataset::new(1, vec![0.5], vec![0], 2).unwrap();
        // Output bias gap of 800 puts p₀ = 1 to machine precision.
        let w = ParamVector::from_vec(vec![0.3, 0.2, -0.1, 0.05, 400.0, -400.0]);
        let e = nn_cost(&s, &w, &data).0;
        let reg = 0.01 * (0.09 + 0.04 + 0.01);
        assert!((e - reg).abs() < 1e-14);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut r = rng::seeded(21);
        for (lambda, rb) in [(0.0, true), (1e-3, false), (0.1, true)] {
            let data = synthetic_blobs(30, 3, 4, 0.2, 5).unwrap();
            let net = NeuralNet::new(spec(lambda, rb), data).unwrap();
            for _ in 0..10 {
                let w = random_w(net.dim(), &mut r);
                let g = net.energy_gradient(&w).1;
                assert!(gradient_rel_error(&g, &finite_diff_gradient(&net, &w, 1e-6)) < 1e-5);
                assert!(hessian_rel_error(&net.hessian(&w), &fd_hessian(&net, &w, 1e-5)) < 1e-4);
            }
        }
    }

    #[test]
    fn hidden_node_sign_flip_and_permutation_are_symmetries() {
        let s = spec(0.05, true);
        let data = synthetic_blobs(25, 3, 4, 0.2, 9).unwrap();
        let mut r = rng::seeded(2);
        let w = random_w(s.n_params(), &mut r);
        let e = nn_cost(&s, &w, &data).0;
        let mut flipped = w.clone();
        let j = 2;
        for k in 0..s.n_in {
            flipped[s.w2(j, k)] *= -1.0;
        }
        flipped[s.bh(j)] *= -1.0;
        for i in 0..s.n_out {
            flipped[s.w1(i, j)] *= -1.0;
        }
        assert!((nn_cost(&s, &flipped, &data).0 - e).abs() < 1e-12);
        let perm = [3, 0, 1, 2];
        let mut permuted = w.clone();
        for j in 0..4 {
            for k in 0..s.n_in {
                permuted[s.w2(perm[j], k)] = w[s.w2(j, k)];
            }
            permuted[s.bh(perm[j])] = w[s.bh(j)];
            for i in 0..s.n_out {
                permuted[s.w1(i, perm[j])] = w[s.w1(i, j)];
            }
        }
        assert!((nn_cost(&s, &permuted, &data).0 - e).abs() < 1e-12);
    }

    #[test]
    fn output_bias_shift_is_zero_mode_only_without_bias_regularization() {
        let data = synthetic_blobs(10, 3, 4, 0.2, 1).unwrap();
        let free = NeuralNet::new(spec(0.1, false), data.clone()).unwrap();
        let w = random_w(free.dim(), &mut rng::seeded(3));
        let z = &free.zero_modes(&w)[0];
        assert!((free.energy(&(&w + z * 0.7)) - free.energy(&w)).abs() < 1e-12);
        assert!(NeuralNet::new(spec(0.1, true), data).unwrap().zero_modes(&w).is_empty());
    }

    #[test]
    fn predict_breaks_ties_low() {
        let s = NeuralNetSpec { n_in: 1, n_hidden: 1, n_out: 3, lambda: 0.0, regularize_bias: false };
        assert_eq!(s.predict(&ParamVector::zeros(s.n_params()), &[0.3]), 0);
    }
}
