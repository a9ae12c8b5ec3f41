//! Serializable description of the objective a database was built on, stored
//! next to the database so that later commands can rebuild it.

use mlscape::models::{NeuralNet, PSpinModel, RegressionModel, SphereChart, TriatomicModel};
use mlscape::numcore::{Metric, Objective, ParamVector};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    Triatomic { model: TriatomicModel },
    Regression { data: Vec<(f64, f64)> },
    NeuralNet { net: NeuralNet },
    PspinSphere { n: usize, p: usize, model_seed: u64 },
    /// Toy double well, see [`DoubleWell`].
    DoubleWell { dim: usize },
}

/// Owned objective built from an [`ObjectiveSpec`].
pub enum AnyObjective {
    Triatomic(TriatomicModel),
    Regression(RegressionModel),
    NeuralNet(NeuralNet),
    Pspin(PSpinModel),
    DoubleWell(DoubleWell),
}

impl ObjectiveSpec {
    pub fn build(&self) -> CliResult<AnyObjective> {
        Ok(match self {
            ObjectiveSpec::Triatomic { model } => AnyObjective::Triatomic(*model),
            ObjectiveSpec::Regression { data } => AnyObjective::Regression(RegressionModel::new(data.clone())?),
            ObjectiveSpec::NeuralNet { net } => AnyObjective::NeuralNet(NeuralNet::new(net.spec, net.data.clone())?),
            ObjectiveSpec::PspinSphere { n, p, model_seed } => AnyObjective::Pspin(PSpinModel::new(*n, *p, *model_seed)?),
            ObjectiveSpec::DoubleWell { dim } => AnyObjective::DoubleWell(DoubleWell { dim: *dim }),
        })
    }
}

/// (x₀² − 1)² + Σ_{i>0} x_i²: two minima at x₀ = ±1 joined by a saddle at
/// the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleWell {
    pub dim: usize,
}

impl Objective for DoubleWell {
    fn dim(&self) -> usize {
        self.dim
    }

    fn energy_gradient(&self, x: &ParamVector) -> (f64, ParamVector) {
        let a = x[0];
        let mut g = x * 2.0;
        g[0] = 4.0 * a * (a * a - 1.0);
        let e = (a * a - 1.0).powi(2) + x.rows(1, x.len() - 1).norm_squared();
        (e, g)
    }

    fn hessian(&self, x: &ParamVector) -> DMatrix<f64> {
        let mut h = DMatrix::identity(self.dim, self.dim) * 2.0;
        h[(0, 0)] = 12.0 * x[0] * x[0] - 4.0;
        h
    }
}

macro_rules! delegate {
    ($self:ident, $o:ident => $e:expr) => {
        match $self {
            AnyObjective::Triatomic($o) => $e,
            AnyObjective::Regression($o) => $e,
            AnyObjective::NeuralNet($o) => $e,
            AnyObjective::Pspin(m) => {
                let $o = &SphereChart { model: m };
                $e
            }
            AnyObjective::DoubleWell($o) => $e,
        }
    };
}

impl Objective for AnyObjective {
    fn dim(&self) -> usize {
        delegate!(self, o => o.dim())
    }

    fn energy_gradient(&self, x: &ParamVector) -> (f64, ParamVector) {
        delegate!(self, o => o.energy_gradient(x))
    }

    fn energy(&self, x: &ParamVector) -> f64 {
        delegate!(self, o => o.energy(x))
    }

    fn hessian(&self, x: &ParamVector) -> DMatrix<f64> {
        delegate!(self, o => o.hessian(x))
    }

    fn hessian_vector(&self, x: &ParamVector, v: &ParamVector) -> ParamVector {
        delegate!(self, o => o.hessian_vector(x, v))
    }

    fn zero_modes(&self, x: &ParamVector) -> Vec<ParamVector> {
        delegate!(self, o => o.zero_modes(x))
    }

    fn metric(&self) -> Metric {
        delegate!(self, o => o.metric())
    }

    fn symmetry_reduce(&self, x: &ParamVector) -> ParamVector {
        delegate!(self, o => o.symmetry_reduce(x))
    }
}
