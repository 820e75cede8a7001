//! Monte Carlo studies: curve MISE, test size and power, and the sampling
//! behaviour of the constant-coefficient estimator.
//!
//! Replication `r` always draws from stream `r` of the master seed and
//! aggregates are formed in replication order, so results do not depend on
//! how many threads run the replications.

use std::collections::BTreeMap;

use lavc::baselines::{one_step_curve, two_step_curve, BaselineSpec};
use lavc::constancy::{run_tests, T2Smoother, TestKind, TestSpec};
use lavc::kernels::Kernel;
use lavc::local_average::to_pointwise_model;
use lavc::semivarying::{fit_joint, fit_lape, SemiMethod};
use lavc::smoothing::{local_poly, SmootherSpec};
use lavc::{fit_groups, sort_and_group, Dataset, SelectionVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{Dgp, Model, NoiseDist};
use crate::error::{SimError, SimResult};
use crate::report::{ReportRow, StudyReport};
use crate::stats::{mean, spearman, trapezoid, variance};

/// Lower and upper ends of the MISE integration grid.
pub const MISE_RANGE: (f64, f64) = (0.05, 0.95);

/// `points` equally spaced abscissae on [`MISE_RANGE`].
pub fn mise_grid(points: usize) -> Vec<f64> {
    let (lo, hi) = MISE_RANGE;
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case")]
pub enum CurveEstimator {
    LocalAverage { group_size: usize, smoother: SmootherSpec },
    OneStep { kernel: Kernel, bandwidth: f64 },
    TwoStep { kernel: Kernel, bandwidth: f64, pilot_bandwidth: Option<f64> },
}

impl CurveEstimator {
    pub fn label(&self) -> String {
        match self {
            CurveEstimator::LocalAverage { group_size, smoother } => format!(
                "local_average(I={group_size},h={},degree={})",
                smoother.bandwidth,
                smoother.degree.order()
            ),
            CurveEstimator::OneStep { bandwidth, .. } => format!("one_step(h={bandwidth})"),
            CurveEstimator::TwoStep { bandwidth, .. } => format!("two_step(h={bandwidth})"),
        }
    }

    /// Estimates coefficient `target` (0-based) on `grid`.
    pub fn estimate(&self, data: &Dataset, grid: &[f64], target: usize) -> lavc::Result<Vec<f64>> {
        match *self {
            CurveEstimator::LocalAverage { group_size, smoother } => {
                let design = sort_and_group(data, group_size)?;
                let fit = fit_groups(&design)?;
                let points = to_pointwise_model(&fit, SelectionVector::new(target, fit.p())?)?;
                grid.par_iter()
                    .map(|&u| local_poly(&points, &smoother, u))
                    .collect::<Vec<_>>()
                    .into_iter()
                    .collect()
            }
            CurveEstimator::OneStep { kernel, bandwidth } => {
                let curve = one_step_curve(data, grid, &BaselineSpec::one_step(kernel, bandwidth))?;
                Ok(curve.column(target).iter().copied().collect())
            }
            CurveEstimator::TwoStep {
                kernel,
                bandwidth,
                pilot_bandwidth,
            } => {
                let mut spec = BaselineSpec::two_step(kernel, bandwidth);
                spec.pilot_bandwidth = pilot_bandwidth;
                two_step_curve(data, grid, target, &spec)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiseConfig {
    /// Model, sample size, noise; `seed` is the master seed.
    pub dgp: Dgp,
    pub reps: usize,
    pub grid_points: usize,
    pub estimators: Vec<CurveEstimator>,
}

/// Runs `f` for every replication in parallel and returns the results in
/// replication order, failing with the earliest failing replication.
fn replicate<T, F>(reps: usize, f: F) -> SimResult<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> SimResult<T> + Sync,
{
    let results: Vec<SimResult<T>> = (0..reps).into_par_iter().map(&f).collect();
    results.into_iter().collect()
}

fn replication_error(label: &str, rep: usize, seed: u64) -> impl FnOnce(lavc::Error) -> SimError + '_ {
    move |source| SimError::Replication {
        label: label.to_string(),
        rep,
        seed,
        source,
    }
}

fn to_value<T: Serialize>(cfg: &T) -> SimResult<serde_json::Value> {
    serde_json::to_value(cfg).map_err(|e| SimError::Serialize(e.to_string()))
}

/// Mean over replications of `∫ (â(u) − a(u))² du` on the interior grid.
pub fn mise_study(cfg: &MiseConfig) -> SimResult<StudyReport> {
    cfg.dgp.validate()?;
    if cfg.reps < 2 {
        return Err(SimError::Config("a MISE study needs at least 2 replications".into()));
    }
    if cfg.grid_points < 2 {
        return Err(SimError::Config("the MISE grid needs at least 2 points".into()));
    }
    if cfg.estimators.is_empty() {
        return Err(SimError::Config("no estimators given".into()));
    }
    let grid = mise_grid(cfg.grid_points);
    let model = cfg.dgp.model;
    let target = model.target();
    let truth: Vec<f64> = grid.iter().map(|&u| model.target_coefficient(u)).collect();
    let labels: Vec<String> = cfg.estimators.iter().map(CurveEstimator::label).collect();

    let ise: Vec<Vec<f64>> = replicate(cfg.reps, |rep| {
        let data = cfg.dgp.generate_replication(rep)?;
        cfg.estimators
            .iter()
            .zip(&labels)
            .map(|(est, label)| {
                let curve = est
                    .estimate(&data, &grid, target)
                    .map_err(replication_error(label, rep, cfg.dgp.seed))?;
                let sq: Vec<f64> = curve.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).collect();
                Ok(trapezoid(&grid, &sq))
            })
            .collect()
    })?;

    let mut rows = Vec::new();
    let mut samples = BTreeMap::new();
    for (j, label) in labels.iter().enumerate() {
        let values: Vec<f64> = ise.iter().map(|r| r[j]).collect();
        rows.push(ReportRow {
            label: label.clone(),
            metrics: BTreeMap::from([
                ("mise".to_string(), mean(&values)),
                ("sd_ise".to_string(), variance(&values).sqrt()),
            ]),
        });
        samples.insert(format!("ise:{label}"), values);
    }
    Ok(StudyReport {
        study: "mise".into(),
        reps: cfg.reps,
        seed: cfg.dgp.seed,
        config: to_value(cfg)?,
        rows,
        samples,
    })
}

/// Tests at the usual bandwidths: `n^{-2/5}` for T1 and `n^{-1/5}` for T2.
pub fn default_test_specs(n: usize, target: usize, kernel: Kernel, weighted_t2: bool) -> Vec<TestSpec> {
    let nf = n as f64;
    vec![
        TestSpec {
            kind: TestKind::T1,
            target,
            kernel,
            bandwidth: Some(nf.powf(-0.4)),
            weighted: false,
            smoother: T2Smoother::default(),
        },
        TestSpec {
            kind: TestKind::T2,
            target,
            kernel,
            bandwidth: Some(nf.powf(-0.2)),
            weighted: weighted_t2,
            smoother: T2Smoother::default(),
        },
        TestSpec {
            kind: TestKind::T3,
            target,
            kernel,
            bandwidth: None,
            weighted: false,
            smoother: T2Smoother::default(),
        },
    ]
}

pub fn test_label(spec: &TestSpec) -> String {
    match spec.kind {
        TestKind::T1 => "t1".into(),
        TestKind::T2 if spec.weighted => "t2w".into(),
        TestKind::T2 => "t2".into(),
        TestKind::T3 => "t3".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePowerConfig {
    /// 7 or 8; `a = 0` is the null model.
    pub example: u8,
    pub a_values: Vec<f64>,
    pub n: usize,
    pub seed: u64,
    pub reps: usize,
    pub group_size: usize,
    pub alpha: f64,
    pub tests: Vec<TestSpec>,
    #[serde(default)]
    pub noise: NoiseDist,
    #[serde(default)]
    pub sigma_override: Option<f64>,
}

struct TestOutcome {
    standardized: f64,
    reject: bool,
    /// T3 only: `(2(I−p)/I) T₃` and its chi-square decision.
    scaled: Option<(f64, bool)>,
}

/// Rejection rates of each test for each `a`. Replication `r` uses the same
/// random stream for every `a`.
pub fn size_power_study(cfg: &SizePowerConfig) -> SimResult<StudyReport> {
    if !(cfg.example == 7 || cfg.example == 8) {
        return Err(SimError::Config(format!(
            "size/power studies use examples 7 or 8, got {}",
            cfg.example
        )));
    }
    if cfg.a_values.is_empty() || cfg.tests.is_empty() {
        return Err(SimError::Config("need at least one a value and one test".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(SimError::Config(format!("alpha must be in (0, 1), got {}", cfg.alpha)));
    }
    if cfg.reps < 2 {
        return Err(SimError::Config("need at least 2 replications".into()));
    }
    let labels: Vec<String> = cfg.tests.iter().map(test_label).collect();
    let mut rows = Vec::new();
    let mut samples = BTreeMap::new();
    let mut rates: Vec<Vec<f64>> = vec![Vec::new(); cfg.tests.len()];

    for &a in &cfg.a_values {
        let dgp = Dgp {
            model: Model::alternative(cfg.example, a)?,
            n: cfg.n,
            seed: cfg.seed,
            noise: cfg.noise,
            sigma_override: cfg.sigma_override,
        };
        dgp.validate()?;
        // calibrate once, outside the parallel loop
        let _ = dgp.sigma();
        let outcomes: Vec<Vec<TestOutcome>> = replicate(cfg.reps, |rep| {
            let data = dgp.generate_replication(rep)?;
            let design = sort_and_group(&data, cfg.group_size)
                .map_err(replication_error("grouping", rep, cfg.seed))?;
            run_tests(&design, &cfg.tests)
                .into_iter()
                .zip(&labels)
                .map(|(r, label)| {
                    let r = r.map_err(replication_error(label, rep, cfg.seed))?;
                    let scaled = r
                        .alternative
                        .as_ref()
                        .map(|alt| (alt.statistic, alt.p_value < cfg.alpha));
                    Ok(TestOutcome {
                        standardized: r.standardized,
                        reject: r.rejects(cfg.alpha),
                        scaled,
                    })
                })
                .collect()
        })?;

        for (j, label) in labels.iter().enumerate() {
            let std: Vec<f64> = outcomes.iter().map(|o| o[j].standardized).collect();
            let rate = outcomes.iter().filter(|o| o[j].reject).count() as f64 / cfg.reps as f64;
            rates[j].push(rate);
            let mut metrics = BTreeMap::from([
                ("a".to_string(), a),
                ("rejection_rate".to_string(), rate),
                ("mean_standardized".to_string(), mean(&std)),
                ("var_standardized".to_string(), variance(&std)),
            ]);
            let scaled: Vec<(f64, bool)> = outcomes.iter().filter_map(|o| o[j].scaled).collect();
            if scaled.len() == outcomes.len() {
                let w: Vec<f64> = scaled.iter().map(|s| s.0).collect();
                metrics.insert("mean_scaled".into(), mean(&w));
                metrics.insert("var_scaled".into(), variance(&w));
                metrics.insert(
                    "chi2_rejection_rate".into(),
                    scaled.iter().filter(|s| s.1).count() as f64 / cfg.reps as f64,
                );
                samples.insert(format!("scaled:a={a}/{label}"), w);
            }
            rows.push(ReportRow {
                label: format!("a={a}/{label}"),
                metrics,
            });
            samples.insert(format!("standardized:a={a}/{label}"), std);
        }
    }
    if cfg.a_values.len() >= 3 {
        for (j, label) in labels.iter().enumerate() {
            rows.push(ReportRow {
                label: format!("monotonicity/{label}"),
                metrics: BTreeMap::from([("spearman".to_string(), spearman(&cfg.a_values, &rates[j]))]),
            });
        }
    }
    Ok(StudyReport {
        study: "size_power".into(),
        reps: cfg.reps,
        seed: cfg.seed,
        config: to_value(cfg)?,
        rows,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantCoefConfig {
    pub dgp: Dgp,
    pub reps: usize,
    pub group_sizes: Vec<usize>,
    pub method: SemiMethod,
}

/// Sampling distribution of `b̂₁` for each group size.
pub fn constant_coef_study(cfg: &ConstantCoefConfig) -> SimResult<StudyReport> {
    cfg.dgp.validate()?;
    let b_true = cfg
        .dgp
        .model
        .b()
        .ok_or_else(|| SimError::Config("the model has no constant coefficient".into()))?;
    if cfg.reps < 2 || cfg.group_sizes.is_empty() {
        return Err(SimError::Config("need at least 2 replications and one group size".into()));
    }
    let _ = cfg.dgp.sigma();
    let mut rows = Vec::new();
    let mut samples = BTreeMap::new();
    for &size in &cfg.group_sizes {
        let label = format!("I={size}");
        let fits: Vec<(f64, f64, usize)> = replicate(cfg.reps, |rep| {
            let data = cfg.dgp.generate_replication(rep)?;
            let err = || replication_error(&label, rep, cfg.dgp.seed);
            let design = sort_and_group(&data, size).map_err(err())?;
            let fit = match cfg.method {
                SemiMethod::Projection => fit_lape(&design, false),
                SemiMethod::Joint => fit_joint(&design),
            }
            .map_err(err())?;
            let se = fit.std_errors().map_or(f64::NAN, |s| s[0]);
            Ok((fit.b_hat[0], se, fit.n))
        })?;
        let b: Vec<f64> = fits.iter().map(|f| f.0).collect();
        let se: Vec<f64> = fits.iter().map(|f| f.1).collect();
        let n_used = fits[0].2 as f64;
        let m = mean(&b);
        let v = variance(&b);
        let mse = b.iter().map(|x| (x - b_true).powi(2)).sum::<f64>() / b.len() as f64;
        rows.push(ReportRow {
            label: label.clone(),
            metrics: BTreeMap::from([
                ("group_size".to_string(), size as f64),
                ("mean_b".to_string(), m),
                ("sd_b".to_string(), v.sqrt()),
                ("mse_b".to_string(), mse),
                ("mean_se".to_string(), mean(&se)),
                ("n_var_b".to_string(), n_used * v),
                ("n_used".to_string(), n_used),
                ("sigma2".to_string(), cfg.dgp.sigma().powi(2)),
            ]),
        });
        samples.insert(format!("b_hat:{label}"), b);
    }
    Ok(StudyReport {
        study: "constant_coefficient".into(),
        reps: cfg.reps,
        seed: cfg.dgp.seed,
        config: to_value(cfg)?,
        rows,
        samples,
    })
}
