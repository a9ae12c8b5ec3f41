//! The four landscapes studied: a triatomic cluster, non-linear regression,
//! a single-hidden-layer classifier and the spherical p-spin model.

pub mod data;
pub mod nn;
pub mod pspin;
pub mod regression;
pub mod triatomic;

pub use data::{load_idx, synthetic_blobs, ClassificationDataset};
pub use nn::{nn_cost, NeuralNet, NeuralNetSpec};
pub use regression::{canonical_parameters, generate_regression_data, regression_cost, RegressionModel, Q_STAR};
pub use triatomic::{build_quench_dataset, extract_inputs, InputMode, LabelledQuench, QuenchDataset, TriatomicModel};
pub use pspin::{PSpinModel, PSpinParams, SphereChart};
