//! Wall-clock comparison of the local average pipeline with the classical
//! estimators. Timings go to a [`TimingReport`]; the [`StudyReport`] holds
//! only numerical summaries of the fitted curves.

use std::collections::BTreeMap;
use std::time::Instant;

use lavc::kernels::Kernel;
use lavc::semivarying::fit_lape;
use lavc::smoothing::{smooth_coefficient, SmoothOptions, SmootherSpec};
use lavc::{fit_groups, sort_and_group, Dataset, SelectionVector};
use serde::{Deserialize, Serialize};

use crate::dgp::Dgp;
use crate::error::{SimError, SimResult};
use crate::report::{ReportRow, StudyReport, TimingReport, TimingRow};
use crate::study::{mise_grid, CurveEstimator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchTarget {
    /// Grouping, per-group fits and smoothing to the grid.
    LocalAverage,
    /// As `LocalAverage`, plus confidence bands and bias estimates.
    LocalAverageInference,
    OneStep,
    TwoStep,
    /// Constant-coefficient fit by projection; needs a semivarying model.
    Lape,
}

impl BenchTarget {
    pub fn label(self) -> &'static str {
        match self {
            BenchTarget::LocalAverage => "local_average",
            BenchTarget::LocalAverageInference => "local_average_inference",
            BenchTarget::OneStep => "one_step",
            BenchTarget::TwoStep => "two_step",
            BenchTarget::Lape => "lape",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub dgp: Dgp,
    pub grid_points: usize,
    /// Timed repetitions after one untimed warm-up run.
    pub reps: usize,
    pub group_size: usize,
    pub kernel: Kernel,
    pub bandwidth: f64,
    pub degree: usize,
    pub alpha: f64,
    pub targets: Vec<BenchTarget>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutput {
    pub report: StudyReport,
    pub timings: TimingReport,
}

fn run_target(target: BenchTarget, cfg: &BenchConfig, data: &Dataset, grid: &[f64]) -> SimResult<Vec<f64>> {
    let index = cfg.dgp.model.target();
    let spec = SmootherSpec::new(cfg.kernel, cfg.bandwidth, cfg.degree)?;
    Ok(match target {
        BenchTarget::LocalAverage => CurveEstimator::LocalAverage {
            group_size: cfg.group_size,
            smoother: spec,
        }
        .estimate(data, grid, index)?,
        BenchTarget::LocalAverageInference => {
            let design = sort_and_group(data, cfg.group_size)?;
            let fit = fit_groups(&design)?;
            let sel = SelectionVector::new(index, fit.p())?;
            let curve = smooth_coefficient(&fit, sel, &spec, grid, Some(cfg.alpha), &SmoothOptions::default())?;
            let bands = curve.band_halfwidth.unwrap_or_default();
            curve.value.into_iter().chain(bands).collect()
        }
        BenchTarget::OneStep => CurveEstimator::OneStep {
            kernel: cfg.kernel,
            bandwidth: cfg.bandwidth,
        }
        .estimate(data, grid, index)?,
        BenchTarget::TwoStep => CurveEstimator::TwoStep {
            kernel: cfg.kernel,
            bandwidth: cfg.bandwidth,
            pilot_bandwidth: None,
        }
        .estimate(data, grid, index)?,
        BenchTarget::Lape => {
            let design = sort_and_group(data, cfg.group_size)?;
            fit_lape(&design, false)?.b_hat.iter().copied().collect()
        }
    })
}

fn median(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

pub fn timing_bench(cfg: &BenchConfig) -> SimResult<BenchOutput> {
    cfg.dgp.validate()?;
    if cfg.reps == 0 || cfg.targets.is_empty() || cfg.grid_points < 2 {
        return Err(SimError::Config(
            "need at least one repetition, one target and two grid points".into(),
        ));
    }
    if cfg.targets.contains(&BenchTarget::Lape) && cfg.dgp.model.q() == 0 {
        return Err(SimError::Config("the LAPE benchmark needs a model with constant coefficients".into()));
    }
    let data = cfg.dgp.generate_replication(0)?;
    let grid = mise_grid(cfg.grid_points);
    let mut rows = Vec::new();
    let mut timing_rows = Vec::new();
    for &target in &cfg.targets {
        let output = run_target(target, cfg, &data, &grid)?;
        let mut times = Vec::with_capacity(cfg.reps);
        for _ in 0..cfg.reps {
            let start = Instant::now();
            let again = run_target(target, cfg, &data, &grid)?;
            times.push(start.elapsed().as_secs_f64());
            debug_assert_eq!(again, output);
        }
        times.sort_by(f64::total_cmp);
        timing_rows.push(TimingRow {
            label: target.label().into(),
            median_seconds: median(&times),
            min_seconds: times[0],
            max_seconds: times[times.len() - 1],
            reps: cfg.reps,
        });
        rows.push(ReportRow {
            label: target.label().into(),
            metrics: BTreeMap::from([
                ("checksum".to_string(), output.iter().sum()),
                ("first".to_string(), output[0]),
                ("last".to_string(), output[output.len() - 1]),
                ("len".to_string(), output.len() as f64),
            ]),
        });
    }
    Ok(BenchOutput {
        report: StudyReport {
            study: "bench".into(),
            reps: cfg.reps,
            seed: cfg.dgp.seed,
            config: serde_json::to_value(cfg).map_err(|e| SimError::Serialize(e.to_string()))?,
            rows,
            samples: BTreeMap::new(),
        },
        timings: TimingReport { rows: timing_rows },
    })
}
