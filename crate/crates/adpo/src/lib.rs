//! Dataset files, the experiment runner, reports and the `adpo` command
//! line on top of `adpo-core`.

pub mod cli;
pub mod dataset_file;
pub mod error;
pub mod plan;
pub mod report;
pub mod runner;

pub use error::{HarnessError, Result};
