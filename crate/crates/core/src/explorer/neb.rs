use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Objective, ParamVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NebConfig {
    /// Interior images between the two fixed endpoints.
    pub n_images: usize,
    pub spring_constant: f64,
    /// Weight of the perpendicular spring component orthogonal to the true
    /// perpendicular gradient.
    pub dneb_mix: f64,
    pub max_neb_iters: usize,
    /// Band relaxation stops once the RMS band gradient falls below this.
    pub ts_candidate_tol: f64,
    /// Largest displacement of any image in one iteration.
    pub max_step: f64,
}

impl Default for NebConfig {
    fn default() -> Self {
        Self { n_images: 12, spring_constant: 1.0, dneb_mix: 1.0, max_neb_iters: 1000, ts_candidate_tol: 1e-3, max_step: 0.1 }
    }
}

impl NebConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_images < 3 {
            return Err(Error::Precondition(format!("need at least 3 images, got {}", self.n_images)));
        }
        if !(self.spring_constant > 0.0) || !(self.max_step > 0.0) {
            return Err(Error::Precondition("spring_constant and max_step must be positive".into()));
        }
        Ok(())
    }
}

const COLLAPSE: f64 = 1e-8;

/// Improved (upwind) tangent at interior image `i`.
fn tangent(band: &[ParamVector], e: &[f64], i: usize) -> ParamVector {
    let tp = &band[i + 1] - &band[i];
    let tm = &band[i] - &band[i - 1];
    let (ep, e0, em) = (e[i + 1], e[i], e[i - 1]);
    let t = if ep > e0 && e0 > em {
        tp
    } else if ep < e0 && e0 < em {
        tm
    } else {
        let dmax = (ep - e0).abs().max((em - e0).abs());
        let dmin = (ep - e0).abs().min((em - e0).abs());
        if ep > em {
            tp * dmax + tm * dmin
        } else {
            tp * dmin + tm * dmax
        }
    };
    let n = t.norm();
    if n > 0.0 {
        t / n
    } else {
        t
    }
}

/// Relaxes a doubly-nudged elastic band between two minima and returns the
/// images that are local energy maxima along it, highest first. When the
/// relaxed band has no interior maximum, its highest interior image is
/// returned instead.
pub fn dneb_candidates<O: Objective + ?Sized>(
    obj: &O,
    min_a: &ParamVector,
    min_b: &ParamVector,
    cfg: &NebConfig,
) -> Result<Vec<ParamVector>> {
    cfg.validate()?;
    let metric = obj.metric();
    let a = metric.canonicalize(min_a);
    let b = metric.align(&a, min_b);
    if (&b - &a).norm() < COLLAPSE {
        return Err(Error::Precondition("DNEB endpoints coincide".into()));
    }
    let m = cfg.n_images;
    let mut band: Vec<ParamVector> = (0..m + 2).map(|i| &a + (&b - &a) * (i as f64 / (m + 1) as f64)).collect();
    let mut energies = vec![0.0; m + 2];
    let mut grads = vec![ParamVector::zeros(a.len()); m + 2];
    for i in 0..m + 2 {
        let (e, g) = obj.energy_gradient(&band[i]);
        energies[i] = e;
        grads[i] = g;
    }
    let n_coords = (m * a.len()) as f64;

    // FIRE relaxation of the interior images.
    let (mut dt, dt_max, mut alpha): (f64, f64, f64) = (0.02, 0.2, 0.1);
    let mut since_negative = 0;
    let mut velocity = vec![ParamVector::zeros(a.len()); m];
    for _ in 0..cfg.max_neb_iters {
        let forces: Vec<ParamVector> = (1..=m)
            .map(|i| {
                let tau = tangent(&band, &energies, i);
                let g = &grads[i];
                let g_perp = g - &tau * g.dot(&tau);
                let spring = (&band[i + 1] - &band[i] * 2.0 + &band[i - 1]) * -cfg.spring_constant;
                let s_par = &tau * spring.dot(&tau);
                let s_perp = &spring - &s_par;
                let mut total = &g_perp + &s_par;
                let gn = g_perp.norm();
                if gn > 0.0 && cfg.dneb_mix != 0.0 {
                    let ghat = &g_perp / gn;
                    total += (&s_perp - &ghat * s_perp.dot(&ghat)) * cfg.dneb_mix;
                }
                -total
            })
            .collect();
        let f2: f64 = forces.iter().map(|f| f.norm_squared()).sum();
        if !f2.is_finite() {
            return Err(Error::NonFinite { point: band[1].as_slice().to_vec() });
        }
        if (f2 / n_coords).sqrt() < cfg.ts_candidate_tol {
            break;
        }
        let power: f64 = forces.iter().zip(&velocity).map(|(f, v)| f.dot(v)).sum();
        if power > 0.0 {
            let vnorm = velocity.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
            let fnorm = f2.sqrt();
            for (v, f) in velocity.iter_mut().zip(&forces) {
                *v = &*v * (1.0 - alpha) + f * (alpha * vnorm / fnorm);
            }
            since_negative += 1;
            if since_negative > 5 {
                dt = (dt * 1.1).min(dt_max);
                alpha *= 0.99;
            }
        } else {
            velocity.iter_mut().for_each(|v| v.fill(0.0));
            since_negative = 0;
            dt *= 0.5;
            alpha = 0.1;
        }
        for (k, (v, f)) in velocity.iter_mut().zip(&forces).enumerate() {
            *v += f * dt;
            let mut step = &*v * dt;
            let len = step.norm();
            if len > cfg.max_step {
                step *= cfg.max_step / len;
            }
            band[k + 1] += step;
            let (e, g) = obj.energy_gradient(&band[k + 1]);
            energies[k + 1] = e;
            grads[k + 1] = g;
        }
        if band.windows(2).any(|w| (&w[1] - &w[0]).norm() < COLLAPSE) {
            return Err(Error::NotConverged("elastic band collapsed".into()));
        }
    }
    let mut maxima: Vec<usize> =
        (1..=m).filter(|&i| energies[i] > energies[i - 1] && energies[i] >= energies[i + 1]).collect();
    if maxima.is_empty() {
        maxima.push((1..=m).max_by(|&i, &j| energies[i].total_cmp(&energies[j])).expect("non-empty band"));
    }
    maxima.sort_by(|&i, &j| energies[j].total_cmp(&energies[i]));
    Ok(maxima.into_iter().map(|i| band[i].clone()).collect())
}
