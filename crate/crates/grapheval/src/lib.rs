//! Std companion to `grapheval-core`: HTTP model backends, the
//! record/replay cache, dataset and report files, experiment runs and the
//! `grapheval` command line.

pub mod backends;
pub mod cli;
pub mod harness;

pub use grapheval_core as core;
