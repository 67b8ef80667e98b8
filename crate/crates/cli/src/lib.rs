//! Experiment runner behind the `kappalab` binary.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{resolve, validate, Diagnostic, DiagnosticKind, Experiment, ExperimentConfig, RawConfig};
