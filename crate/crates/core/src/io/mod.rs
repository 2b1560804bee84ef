//! Configuration, snapshots and run directories.

pub mod config;
pub mod rundir;
pub mod snapshot;

pub use config::{load_and_prepare, load_config, prepare, PreparedRun, RunConfig};
pub use rundir::{load_history, RunDirectory, RunMetadata, RunReport, RunStatus};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};
