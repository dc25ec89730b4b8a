//! Library side of the `evotraj` command: one module per subcommand, so
//! the pipeline can also be driven from tests without spawning processes.

pub mod analyze;
pub mod error;
pub mod evolve;
pub mod gen_data;
pub mod report;
pub mod settings;

pub use error::{CliError, Result};
