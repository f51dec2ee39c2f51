//! Library half of the `lsmdual` command: config parsing and the
//! simulate / value / bounds pipelines behind each subcommand.

pub mod config;
pub mod pipeline;

pub use config::RunConfig;
pub use pipeline::{
    cmd_bounds, cmd_simulate, cmd_value, BoundsReport, Context, SimulateReport, ValueReport,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Lsm(#[from] lsmdual::LsmError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad configuration, 1 for numerical or I/O failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Lsm(_) | Self::Io(_) => 1,
        }
    }
}
