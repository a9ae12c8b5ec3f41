//! Stationary-point database and the analyses derived from it: superbasins,
//! disconnectivity trees and harmonic-superposition heat capacities.

mod db;
mod thermo;
mod tree;

pub use db::{load_db, save_db, LandscapeDatabase, Minimum, TransitionState, SCHEMA};
pub use thermo::{harmonic_cv, partial_sum_cv, KappaMode};
pub use tree::{
    build_disconnectivity_tree, merge_events, superbasin_partition, DisconnectivityTree, Leaf, MergeEvent, TreeNode,
};
