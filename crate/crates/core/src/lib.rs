//! Tools for mapping the solution landscapes of machine-learning cost functions.
//!
//! The crate locates minima and index-one saddles of differentiable objectives
//! (LBFGS, basin-hopping, doubly-nudged elastic band, hybrid eigenvector-following),
//! stores them in a deduplicated database and derives emergent analyses from it:
//! disconnectivity trees, harmonic-superposition heat capacities, minima networks,
//! misclassification metrics, spherical p-spin quench statistics and basin volumes.
//!
//! Module map:
//!
//! * [`numcore`]: objective contract, LBFGS, Hessian spectra, finite-difference oracles
//! * [`models`]: triatomic cluster, non-linear regression, neural network, p-spin
//! * [`explorer`]: basin-hopping, DNEB, hybrid eigenvector-following, connect driver
//! * [`landscape`]: stationary-point database, superbasins, trees, thermodynamics
//! * [`graphnet`]: network of minima and its statistics
//! * [`mlmetrics`]: misclassification vectors and distances, ROC/AUC
//! * [`pspin_lab`]: p-spin quench ensembles and teacher-student experiments
//! * [`basinvol`]: mean basin volumes by thermodynamic integration

pub mod basinvol;
pub mod error;
pub mod explorer;
pub mod graphnet;
pub mod landscape;
pub mod mlmetrics;
pub mod models;
pub mod numcore;
pub mod pspin_lab;
pub mod rng;

pub use error::{Error, Result};
pub use numcore::{Objective, ParamVector};
