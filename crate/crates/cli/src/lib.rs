//! Experiment front end for the `pmcmc` samplers: data generation,
//! single runs, the acceptance-rate grid and its report.

pub mod cli;
pub mod config;
pub mod data;
pub mod figure;
pub mod grid;
pub mod run;

pub use config::{ExperimentConfig, SamplerKind};
