//! Plumbing behind the `udc` binary. Every command is a plain function over a
//! [`RunConfig`] so it can be driven from tests as well as the shell.

pub mod config;
pub mod error;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{CliError, Result};
