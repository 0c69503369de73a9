//! File formats, configuration, checkpoints, result files and parallel
//! cross-validation for the `advreg` command-line tool.

pub mod checkpoint;
pub mod config;
pub mod io;
pub mod report;
pub mod runner;

pub use checkpoint::Checkpoint;
pub use report::ResultFile;
