//! Command-line entry points and the read-only HTTP service.

pub mod cli;
pub mod server;
