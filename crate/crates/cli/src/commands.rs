//! The subcommands. Each resolves its defaults into the settings, validates
//! them, runs, and returns the files it wrote.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lavc::constancy::{TestKind, TestSpec};
use lavc::kernels::Kernel;
use lavc::local_average::{fit_groups_with, FitOptions, SelectionVector};
use lavc::semivarying::{fit_joint, fit_lape, SemiMethod, SemiVaryingFit};
use lavc::smoothing::{smooth_coefficient, SmoothOptions, SmootherSpec};
use lavc::{ingest_csv, run_test, sort_and_group, CsvSchema, Dataset, GroupedDesign};
use lavc_sim::{
    constant_coef_study, default_test_specs, mise_study, size_power_study, timing_bench, BenchConfig,
    BenchTarget, ConstantCoefConfig, CurveEstimator, Dgp, MiseConfig, Model, NoiseDist, SizePowerConfig,
    StudyReport,
};
use serde::Serialize;

use crate::failure::Failure;
use crate::settings::{EstimatorName, Settings, Study};

pub const DEFAULT_GROUP_SIZE: usize = 10;
pub const DEFAULT_DEGREE: usize = 3;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_GRID: usize = 100;
pub const DEFAULT_MISE_GRID: usize = 91;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_N: usize = 500;
pub const DEFAULT_SIM_REPS: usize = 100;
pub const DEFAULT_BENCH_REPS: usize = 21;
pub const DEFAULT_BENCH_BANDWIDTH: f64 = 0.4;
const DENSITY_POINTS: usize = 200;

type Outcome = Result<Vec<PathBuf>, Failure>;

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Failure::io(path, e))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Failure::io(path, e))
}

fn check_alpha(alpha: f64) -> Result<(), Failure> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Failure::config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_positive(name: &str, value: usize) -> Result<(), Failure> {
    if value == 0 {
        Err(Failure::config(format!("{name} must be positive")))
    } else {
        Ok(())
    }
}

fn load_dataset(s: &mut Settings) -> Result<Dataset, Failure> {
    let input = s
        .input
        .clone()
        .ok_or_else(|| Failure::config("--input is required"))?;
    let schema = CsvSchema {
        u: s.u_column.get_or_insert_with(|| "u".into()).clone(),
        y: s.y_column.get_or_insert_with(|| "y".into()).clone(),
        x: s.x_columns.clone().unwrap_or_default(),
        z: s.z_columns.clone().unwrap_or_default(),
    };
    let file = File::open(&input).map_err(|e| Failure::io(&input, e))?;
    let data = ingest_csv(std::io::BufReader::new(file), &schema)
        .map_err(|e| Failure::Input(format!("{}: {e}", input.display())))?;
    if *s.intercept.get_or_insert(false) {
        Ok(data.with_intercept())
    } else {
        Ok(data)
    }
}

/// Adds the data rows (1-based, as in the input file) of a failing group.
fn locate(err: lavc::Error, design: &GroupedDesign) -> Failure {
    if let lavc::Error::SingularGroup { group, .. } = err {
        if let Some(g) = design.groups().get(group) {
            let mut rows: Vec<usize> = g.rows.iter().map(|r| r + 1).collect();
            rows.sort_unstable();
            let rows: Vec<String> = rows.iter().map(ToString::to_string).collect();
            return Failure::Numerical(format!("{err}; data rows {}", rows.join(", ")));
        }
    }
    err.into()
}

/// 0-based target from the 1-based setting, defaulting to the last column.
fn resolve_target(s: &mut Settings, p: usize) -> Result<usize, Failure> {
    let target = *s.target.get_or_insert(p);
    if target == 0 || target > p {
        return Err(Failure::config(format!(
            "target must be between 1 and {p}, got {target}"
        )));
    }
    Ok(target - 1)
}

fn kernel(s: &mut Settings) -> Kernel {
    *s.kernel.get_or_insert(Kernel::Epanechnikov)
}

fn group(s: &mut Settings, data: &Dataset) -> Result<GroupedDesign, Failure> {
    let size = *s.group_size.get_or_insert(DEFAULT_GROUP_SIZE);
    Ok(sort_and_group(data, size)?)
}

pub fn fit_varying(s: &mut Settings) -> Outcome {
    let data = load_dataset(s)?;
    let target = resolve_target(s, data.p())?;
    let kernel = kernel(s);
    let h = s
        .bandwidth
        .ok_or_else(|| Failure::config("fit-varying needs --bandwidth"))?;
    let degree = *s.degree.get_or_insert(DEFAULT_DEGREE);
    let alpha = *s.alpha.get_or_insert(DEFAULT_ALPHA);
    let points = *s.grid.get_or_insert(DEFAULT_GRID);
    let expand = *s.expand_window.get_or_insert(false);
    check_alpha(alpha)?;
    if points < 2 {
        return Err(Failure::config("the grid needs at least 2 points"));
    }
    let spec = SmootherSpec::new(kernel, h, degree)?;
    let design = group(s, &data)?;
    let fit = fit_groups_with(&design, &FitOptions { ridge: s.ridge }).map_err(|e| locate(e, &design))?;
    let sel = SelectionVector::new(target, fit.p())?;
    let lo = fit.u_bar[0];
    let hi = fit.u_bar[fit.u_bar.len() - 1];
    let grid: Vec<f64> = (0..points)
        .map(|i| {
            let t = i as f64 / (points - 1) as f64;
            if i + 1 == points {
                hi
            } else {
                lo + (hi - lo) * t
            }
        })
        .collect();
    let curve = smooth_coefficient(
        &fit,
        sel,
        &spec,
        &grid,
        Some(alpha),
        &SmoothOptions { expand_window: expand },
    )
    .map_err(|e| locate(e, &design))?;
    let output = s.output.get_or_insert_with(|| "curve.csv".into()).clone();
    let mut out = create(&output)?;
    curve.write_csv(&mut out)?;
    out.flush().map_err(|e| Failure::io(&output, e))?;
    Ok(vec![output])
}

#[derive(Serialize)]
struct Coefficient {
    name: String,
    estimate: f64,
    std_error: Option<f64>,
}

#[derive(Serialize)]
struct SemiReport {
    method: SemiMethod,
    coefficients: Vec<Coefficient>,
    /// `σ̂² Σ̂⁻¹`, row-major.
    sigma_b: Option<Vec<Vec<f64>>>,
    rss0: f64,
    n_used: usize,
    /// Input rows (1-based) left out of the trailing partial group.
    dropped_rows: Vec<usize>,
    varying: Vec<GroupCoefficients>,
}

#[derive(Serialize)]
struct GroupCoefficients {
    u_bar: f64,
    a_hat: Vec<f64>,
}

pub fn fit_semi(s: &mut Settings) -> Outcome {
    let data = load_dataset(s)?;
    if data.q() == 0 {
        return Err(Failure::config("fit-semi needs constant-coefficient columns (--z-columns)"));
    }
    let method = (*s.method.get_or_insert(crate::settings::SemiMethodArg::Projection)).into();
    let design = group(s, &data)?;
    let fit: SemiVaryingFit = match method {
        SemiMethod::Joint => fit_joint(&design),
        SemiMethod::Projection => fit_lape(&design, true),
    }
    .map_err(|e| locate(e, &design))?;
    let se = fit.std_errors();
    let coefficients = data
        .z_names()
        .iter()
        .enumerate()
        .map(|(j, name)| Coefficient {
            name: name.clone(),
            estimate: fit.b_hat[j],
            std_error: se.as_ref().map(|se| se[j]),
        })
        .collect();
    let sigma_b = fit.sigma_b.as_ref().map(|m| {
        (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect()
    });
    let varying = fit
        .a_hat
        .as_ref()
        .map(|a| {
            design
                .groups()
                .iter()
                .enumerate()
                .map(|(i, g)| GroupCoefficients {
                    u_bar: g.u_bar,
                    a_hat: a.row(i).iter().copied().collect(),
                })
                .collect()
        })
        .unwrap_or_default();
    let mut dropped_rows: Vec<usize> = design.dropped_rows().iter().map(|r| r + 1).collect();
    dropped_rows.sort_unstable();
    let report = SemiReport {
        method,
        coefficients,
        sigma_b,
        rss0: fit.rss0,
        n_used: fit.n,
        dropped_rows,
        varying,
    };
    let output = s.output.get_or_insert_with(|| "semi.json".into()).clone();
    write_json(&output, &report)?;
    Ok(vec![output])
}

pub fn test(s: &mut Settings) -> Outcome {
    let data = load_dataset(s)?;
    let kind = s
        .test_type
        .ok_or_else(|| Failure::config("test needs --type (t1, t2 or t3)"))?;
    let target = resolve_target(s, data.p())?;
    let kernel = kernel(s);
    let design = group(s, &data)?;
    let n = design.n() as f64;
    let bandwidth = match kind {
        TestKind::T1 => Some(*s.bandwidth.get_or_insert(n.powf(-0.4))),
        TestKind::T2 => Some(*s.bandwidth.get_or_insert(n.powf(-0.2))),
        TestKind::T3 => None,
    };
    let weighted = kind == TestKind::T2 && !*s.unweighted_t2.get_or_insert(false);
    let smoother = match kind {
        TestKind::T2 => (*s.t2_smoother.get_or_insert(crate::settings::T2SmootherArg::LocalLinear)).into(),
        _ => Default::default(),
    };
    if s.ridge.is_some() {
        return Err(Failure::config("--ridge is not available for tests"));
    }
    let spec = TestSpec {
        kind,
        target,
        kernel,
        bandwidth,
        weighted,
        smoother,
    };
    let mut result = run_test(&design, &spec).map_err(|e| locate(e, &design))?;
    result.config.target = Some(target + 1);
    let output = s.output.get_or_insert_with(|| "test.json".into()).clone();
    write_json(&output, &result)?;
    Ok(vec![output])
}

fn out_dir(s: &mut Settings) -> PathBuf {
    s.out_dir.get_or_insert_with(|| ".".into()).clone()
}

fn write_report(report: &StudyReport, dir: &Path, density: bool) -> Outcome {
    let json = dir.join("report.json");
    let csv = dir.join("report.csv");
    report.write_json(create(&json)?)?;
    report.write_csv(create(&csv)?)?;
    let mut files = vec![json, csv];
    if density {
        let path = dir.join("density.csv");
        report.write_density_csv(create(&path)?, DENSITY_POINTS)?;
        files.push(path);
    }
    Ok(files)
}

fn dgp(s: &mut Settings, model: Model) -> Dgp {
    let mut dgp = Dgp::new(
        model,
        *s.n.get_or_insert(DEFAULT_N),
        *s.seed.get_or_insert(DEFAULT_SEED),
    );
    dgp.noise = NoiseDist::from(*s.noise.get_or_insert(crate::settings::NoiseArg::Normal));
    dgp.sigma_override = s.sigma;
    dgp
}

pub fn simulate(s: &mut Settings) -> Outcome {
    let study = *s.study.get_or_insert(Study::Mise);
    let reps = *s.reps.get_or_insert(DEFAULT_SIM_REPS);
    let group_size = *s.group_size.get_or_insert(DEFAULT_GROUP_SIZE);
    let kernel = kernel(s);
    check_positive("reps", reps)?;
    let dir = out_dir(s);
    match study {
        Study::Mise => {
            let example = *s.example.get_or_insert(2);
            let dgp = dgp(s, Model::example(example)?);
            let h = s
                .bandwidth
                .ok_or_else(|| Failure::config("a MISE study needs --bandwidth"))?;
            let degree = *s.degree.get_or_insert(DEFAULT_DEGREE);
            let grid_points = *s.grid.get_or_insert(DEFAULT_MISE_GRID);
            let names = s
                .estimators
                .get_or_insert_with(|| vec![EstimatorName::LocalAverage])
                .clone();
            let estimators = names
                .iter()
                .map(|name| -> Result<CurveEstimator, Failure> {
                    Ok(match name {
                        EstimatorName::LocalAverage => CurveEstimator::LocalAverage {
                            group_size,
                            smoother: SmootherSpec::new(kernel, h, degree)?,
                        },
                        EstimatorName::OneStep => CurveEstimator::OneStep { kernel, bandwidth: h },
                        EstimatorName::TwoStep => CurveEstimator::TwoStep {
                            kernel,
                            bandwidth: h,
                            pilot_bandwidth: None,
                        },
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let cfg = MiseConfig {
                dgp,
                reps,
                grid_points,
                estimators,
            };
            write_report(&mise_study(&cfg)?, &dir, false)
        }
        Study::SizePower => {
            let example = *s.example.get_or_insert(7);
            let n = *s.n.get_or_insert(DEFAULT_N);
            let seed = *s.seed.get_or_insert(DEFAULT_SEED);
            let alpha = *s.alpha.get_or_insert(DEFAULT_ALPHA);
            check_alpha(alpha)?;
            let a_values = s.a_values.get_or_insert_with(|| vec![0.0]).clone();
            let kinds = s
                .tests
                .get_or_insert_with(|| vec![TestKind::T1, TestKind::T2, TestKind::T3])
                .clone();
            let weighted = !*s.unweighted_t2.get_or_insert(false);
            let smoother = (*s.t2_smoother.get_or_insert(crate::settings::T2SmootherArg::LocalLinear)).into();
            let model = Model::alternative(example, 0.0)?;
            let target = model.target();
            let defaults = default_test_specs(n, target, kernel, weighted);
            let tests = kinds
                .iter()
                .map(|&kind| {
                    let mut spec = *defaults.iter().find(|d| d.kind == kind).expect("every kind has a default");
                    if kind != TestKind::T3 {
                        spec.bandwidth = s.bandwidth.or(spec.bandwidth);
                    }
                    spec.smoother = smoother;
                    spec
                })
                .collect();
            let noise = NoiseDist::from(*s.noise.get_or_insert(crate::settings::NoiseArg::Normal));
            let cfg = SizePowerConfig {
                example,
                a_values,
                n,
                seed,
                reps,
                group_size,
                alpha,
                tests,
                noise,
                sigma_override: s.sigma,
            };
            write_report(&size_power_study(&cfg)?, &dir, true)
        }
        Study::Constant => {
            let example = *s.example.get_or_insert(4);
            let dgp = dgp(s, Model::example(example)?);
            let group_sizes = s.group_sizes.get_or_insert_with(|| vec![group_size]).clone();
            let method = (*s.method.get_or_insert(crate::settings::SemiMethodArg::Projection)).into();
            let cfg = ConstantCoefConfig {
                dgp,
                reps,
                group_sizes,
                method,
            };
            write_report(&constant_coef_study(&cfg)?, &dir, false)
        }
    }
}

pub fn bench(s: &mut Settings) -> Outcome {
    let example = *s.example.get_or_insert(1);
    let model = Model::example(example)?;
    let dgp = dgp(s, model);
    let reps = *s.reps.get_or_insert(DEFAULT_BENCH_REPS);
    let group_size = *s.group_size.get_or_insert(DEFAULT_GROUP_SIZE);
    let kernel = kernel(s);
    let bandwidth = *s.bandwidth.get_or_insert(DEFAULT_BENCH_BANDWIDTH);
    let degree = *s.degree.get_or_insert(DEFAULT_DEGREE);
    let alpha = *s.alpha.get_or_insert(DEFAULT_ALPHA);
    let grid_points = *s.grid.get_or_insert(DEFAULT_GRID);
    check_alpha(alpha)?;
    check_positive("reps", reps)?;
    let targets = s
        .targets
        .get_or_insert_with(|| {
            use crate::settings::BenchTargetArg as T;
            let mut t = vec![T::LocalAverage, T::LocalAverageInference, T::OneStep, T::TwoStep];
            if model.q() > 0 {
                t.push(T::Lape);
            }
            t
        })
        .iter()
        .map(|&t| BenchTarget::from(t))
        .collect();
    let dir = out_dir(s);
    let cfg = BenchConfig {
        dgp,
        grid_points,
        reps,
        group_size,
        kernel,
        bandwidth,
        degree,
        alpha,
        targets,
    };
    let output = timing_bench(&cfg)?;
    let mut files = write_report(&output.report, &dir, false)?;
    let csv = dir.join("timings.csv");
    output.timings.write_csv(create(&csv)?)?;
    let json = dir.join("timings.json");
    write_json(&json, &output.timings)?;
    files.extend([csv, json]);
    Ok(files)
}
