//! Command-line front end for `ggr-core`: JSON configuration, output
//! directory layout with resumable levels, CSV plot data and a parallel
//! multistart.

pub mod config;
pub mod driver;
pub mod expr;
pub mod formats;
pub mod parallel;

pub use config::{ConfigIssue, RunConfig};
pub use driver::{run, RunError, RunOptions, RunSummary};
pub use parallel::RayonMultistart;
