//! Landscape exploration: basin-hopping for minima, doubly-nudged elastic
//! bands and hybrid eigenvector-following for transition states, and a driver
//! that grows a connected database.

mod basin_hopping;
mod connect;
mod ef;
mod neb;

pub use basin_hopping::{basin_hopping, basin_hopping_runs, BasinHopping, BasinHoppingConfig, BasinHoppingReport};
pub use connect::{connect_database, connect_database_with, ConnectConfig, ConnectJob, ConnectReport, ConnectStrategy, JobStatus};
pub use ef::{hybrid_ef_refine, stationary_index, EfConfig, Endpoint, TransitionStateResult};
pub use neb::{dneb_candidates, NebConfig};
