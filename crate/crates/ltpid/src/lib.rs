//! Experiment driver for `ltpid-core`: JSON configuration, file formats,
//! the trial pipeline with a parallel batch runner, and the CLI verbs.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod formats;
