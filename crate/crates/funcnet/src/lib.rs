//! Files, configuration, benchmarks and the command line for `funcnet-core`.

pub mod benchmark;
pub mod commands;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod settings;

pub use error::{CliError, CliResult};
pub use settings::Settings;
