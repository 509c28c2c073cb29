//! Library side of the `dpsf` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
