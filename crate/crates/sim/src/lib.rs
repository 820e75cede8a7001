//! Simulation harness: data-generating processes, Monte Carlo studies and
//! timing benchmarks for the estimators and tests of `lavc`.

pub mod bench;
pub mod dgp;
pub mod error;
pub mod report;
pub mod stats;
pub mod study;

pub use bench::{timing_bench, BenchConfig, BenchOutput, BenchTarget};
pub use dgp::{generate, replication_rng, Dgp, Model, NoiseDist};
pub use error::{SimError, SimResult};
pub use report::{density_trace, ReportRow, StudyReport, TimingReport, TimingRow};
pub use study::{
    constant_coef_study, default_test_specs, mise_grid, mise_study, size_power_study, test_label,
    ConstantCoefConfig, CurveEstimator, MiseConfig, SizePowerConfig,
};
