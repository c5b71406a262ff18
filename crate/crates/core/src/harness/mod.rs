//! File formats, run configuration, CLI commands and experiment drivers.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod experiment;
pub mod format;
pub mod parallel;
