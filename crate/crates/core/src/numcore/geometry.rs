//! Point comparison for deduplication and band construction.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::ParamVector;

/// How points of a landscape are canonicalised, aligned and compared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metric {
    /// Raw Euclidean distance.
    Euclidean,
    /// Flat list of 3D atom positions; compared after optimal translation and
    /// proper rotation (Kabsch). Atom labels are kept, so permutational isomers
    /// remain distinct.
    RigidBody,
    /// Points on (or radially projected onto) a sphere of the given radius.
    Sphere { radius: f64 },
}

impl Metric {
    /// Representative of `x` in its equivalence class.
    pub fn canonicalize(&self, x: &ParamVector) -> ParamVector {
        match *self {
            Metric::Euclidean => x.clone(),
            Metric::RigidBody => {
                let c = centroid(x);
                let mut out = x.clone();
                for a in 0..x.len() / 3 {
                    for k in 0..3 {
                        out[3 * a + k] -= c[k];
                    }
                }
                out
            }
            Metric::Sphere { radius } => {
                let n = x.norm();
                if n == 0.0 {
                    x.clone()
                } else {
                    x * (radius / n)
                }
            }
        }
    }

    /// `x` moved (within its equivalence class) to best match `reference`.
    /// The result is expressed in `reference`'s frame.
    pub fn align(&self, reference: &ParamVector, x: &ParamVector) -> ParamVector {
        match *self {
            Metric::Euclidean | Metric::Sphere { .. } => self.canonicalize(x),
            Metric::RigidBody => kabsch_align(reference, x),
        }
    }

    pub fn distance(&self, a: &ParamVector, b: &ParamVector) -> f64 {
        match *self {
            Metric::Euclidean => (a - b).norm(),
            Metric::Sphere { .. } => (self.canonicalize(a) - self.canonicalize(b)).norm(),
            Metric::RigidBody => (kabsch_align(a, b) - a).norm(),
        }
    }
}

fn centroid(x: &ParamVector) -> Vector3<f64> {
    let n = x.len() / 3;
    let mut c = Vector3::zeros();
    for a in 0..n {
        c += Vector3::new(x[3 * a], x[3 * a + 1], x[3 * a + 2]);
    }
    if n > 0 {
        c /= n as f64;
    }
    c
}

fn kabsch_align(reference: &ParamVector, x: &ParamVector) -> ParamVector {
    let n = reference.len() / 3;
    let cr = centroid(reference);
    let cx = centroid(x);
    let atom = |v: &ParamVector, a: usize, c: &Vector3<f64>| {
        Vector3::new(v[3 * a], v[3 * a + 1], v[3 * a + 2]) - c
    };
    let mut cov = Matrix3::zeros();
    for a in 0..n {
        cov += atom(x, a, &cx) * atom(reference, a, &cr).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return x.clone(),
    };
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, if d == 0.0 { 1.0 } else { d }));
    let rot = v * fix * u.transpose();
    let mut out = x.clone();
    for a in 0..n {
        let p = rot * atom(x, a, &cx) + cr;
        out[3 * a] = p[0];
        out[3 * a + 1] = p[1];
        out[3 * a + 2] = p[2];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    #[test]
    fn rigid_distance_ignores_rotation_and_translation() {
        let x = ParamVector::from_vec(vec![0.0, 0.0, 0.0, 1.1, 0.0, 0.0, 0.3, 0.9, 0.2]);
        let rot = Rotation3::from_euler_angles(0.3, -1.2, 2.0);
        let mut y = x.clone();
        for a in 0..3 {
            let p = rot * Vector3::new(x[3 * a], x[3 * a + 1], x[3 * a + 2]) + Vector3::new(5.0, -2.0, 1.0);
            y[3 * a] = p[0];
            y[3 * a + 1] = p[1];
            y[3 * a + 2] = p[2];
        }
        assert!(Metric::RigidBody.distance(&x, &y) < 1e-12);
        assert!(Metric::Euclidean.distance(&x, &y) > 1.0);
    }

    #[test]
    fn rigid_distance_keeps_labels() {
        // Linear chain with atom 0 in the middle versus atom 1 in the middle.
        let a = ParamVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
        let b = ParamVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
        assert!(Metric::RigidBody.distance(&a, &b) > 0.5);
    }

    #[test]
    fn sphere_projection() {
        let m = Metric::Sphere { radius: 2.0 };
        let x = ParamVector::from_vec(vec![3.0, 4.0]);
        assert!((m.canonicalize(&x).norm() - 2.0).abs() < 1e-14);
        assert!(m.distance(&x, &(x.clone() * 7.0)) < 1e-14);
    }
}
