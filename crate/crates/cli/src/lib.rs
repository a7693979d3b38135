//! Experiment orchestration for the abf-core solvers.

pub mod acceptance;
pub mod config;
pub mod run;
