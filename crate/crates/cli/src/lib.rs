//! Command-line pipeline around `ddm-core`: oracle training, DDM training,
//! sampling, evaluation and sweep reports, with checkpoint persistence.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod sweep;

pub use error::{CliError, CliResult};
