//! Data generators, the Monte Carlo experiment runner, and reports.

pub mod experiments;
pub mod generators;
pub mod report;

pub use experiments::{rep_rng, run_coverage_experiment, HarnessError};
pub use generators::{GeneratorError, GeneratorSpec, NoiseKind, Sample};
pub use report::{
    ConfigOverrides, ExperimentConfig, ExperimentKind, ExperimentReport, RepRecord, ALL_KINDS,
};
