//! Configuration files, command-line driver and file output for `growfem-core`.

pub mod config;
pub mod driver;
pub mod initial;
pub mod output;

use config::{parse_config, ConfigError, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Demo {
    /// Convergence study on the fast dilation.
    Fig1,
    /// Patterns on the slowly growing square.
    Fig2,
    /// Patterns on the evolving surface.
    Fig4,
}

impl Demo {
    pub fn source(self) -> &'static str {
        match self {
            Demo::Fig1 => include_str!("../configs/fig1.cfg"),
            Demo::Fig2 => include_str!("../configs/fig2.cfg"),
            Demo::Fig4 => include_str!("../configs/fig4.cfg"),
        }
    }

    pub fn config(self) -> Result<RunConfig, ConfigError> {
        parse_config(self.source())
    }
}
