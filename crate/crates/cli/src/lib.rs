//! Library surface of the command line front end: run configuration,
//! command implementations, and the output-directory lock. The `steg`
//! binary is a thin argument-parsing wrapper over these.

pub mod commands;
pub mod config;
pub mod lockfile;
