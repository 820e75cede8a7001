//! Run settings shared by every subcommand. Each can come from a flag or from
//! a JSON config file (same names, snake_case); flags win.

use std::path::{Path, PathBuf};

use clap::Args;
use lavc::constancy::{T2Smoother, TestKind};
use lavc::kernels::Kernel;
use lavc::semivarying::SemiMethod;
use lavc_sim::{BenchTarget, NoiseDist};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Study {
    Mise,
    SizePower,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum EstimatorName {
    LocalAverage,
    OneStep,
    TwoStep,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// JSON config file with any of these settings; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Input CSV with a header row [fit-varying, fit-semi, test].
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Index variable column [default: u].
    #[arg(long)]
    pub u_column: Option<String>,
    /// Response column [default: y].
    #[arg(long)]
    pub y_column: Option<String>,
    /// Varying-coefficient columns, comma separated [default: all other columns].
    #[arg(long, value_delimiter = ',')]
    pub x_columns: Option<Vec<String>>,
    /// Constant-coefficient columns, comma separated [default: none].
    #[arg(long, value_delimiter = ',')]
    pub z_columns: Option<Vec<String>>,
    /// Prepend an intercept as varying column 1.
    #[arg(long)]
    pub intercept: Option<bool>,

    /// Group size I [default: 10].
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Smoothing bandwidth h. Required by fit-varying; tests default to
    /// n^(-2/5) for T1 and n^(-1/5) for T2; bench defaults to 0.4.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Local polynomial degree, 1 or 3 [default: 3].
    #[arg(long)]
    pub degree: Option<usize>,
    /// Kernel: epanechnikov, uniform, triangular or biweight [default: epanechnikov].
    #[arg(long)]
    pub kernel: Option<Kernel>,
    /// Varying coefficient to smooth or test, 1-based [default: the last].
    #[arg(long)]
    pub target: Option<usize>,
    /// Level of the pointwise bands and of the tests [default: 0.05].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of evaluation points [default: 100; 91 for MISE studies].
    #[arg(long)]
    pub grid: Option<usize>,
    /// Ridge term added to singular group Gram matrices [default: none].
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Double the bandwidth (up to 4 times) where a window is empty.
    #[arg(long)]
    pub expand_window: Option<bool>,

    /// Constancy test: t1, t2 or t3 [test].
    #[arg(long = "type")]
    #[serde(rename = "type")]
    pub test_type: Option<TestKind>,
    /// Use the unweighted T2 residual sums of squares.
    #[arg(long)]
    pub unweighted_t2: Option<bool>,
    /// T2 alternative smoother: local-linear or nadaraya-watson [default: local-linear].
    #[arg(long)]
    pub t2_smoother: Option<T2SmootherArg>,
    /// Constant-coefficient estimator: projection or joint [default: projection].
    #[arg(long)]
    pub method: Option<SemiMethodArg>,

    /// Study to run: mise, size-power or constant [default: mise].
    #[arg(long)]
    pub study: Option<Study>,
    /// Simulation example 1..8 [default: 2 for mise, 7 for size-power,
    /// 4 for constant, 1 for bench].
    #[arg(long)]
    pub example: Option<u8>,
    /// Sample size [default: 500].
    #[arg(long)]
    pub n: Option<usize>,
    /// Replications (simulate) or timed repetitions (bench) [default: 100 / 21].
    #[arg(long)]
    pub reps: Option<usize>,
    /// Master seed [default: 42].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Mixing values of examples 7–8, comma separated [default: 0].
    #[arg(long, value_delimiter = ',')]
    pub a_values: Option<Vec<f64>>,
    /// Tests of a size-power study, comma separated [default: t1,t2,t3].
    #[arg(long, value_delimiter = ',')]
    pub tests: Option<Vec<TestKind>>,
    /// Curve estimators of a MISE study, comma separated [default: local-average].
    #[arg(long, value_delimiter = ',')]
    pub estimators: Option<Vec<EstimatorName>>,
    /// Group sizes of a constant-coefficient study [default: the group size].
    #[arg(long, value_delimiter = ',')]
    pub group_sizes: Option<Vec<usize>>,
    /// Error distribution: normal or uniform [default: normal].
    #[arg(long)]
    pub noise: Option<NoiseArg>,
    /// Noise scale replacing the calibrated one.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Benchmarked estimators, comma separated [default: local-average,
    /// local-average-inference, one-step, two-step, plus lape for
    /// semivarying examples].
    #[arg(long, value_delimiter = ',')]
    pub targets: Option<Vec<BenchTargetArg>>,

    /// Output file [fit-varying: curve.csv, fit-semi: semi.json, test: test.json].
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Output directory of simulate and bench [default: .].
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Run manifest path [default: next to the output].
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

macro_rules! value_enum_wrapper {
    ($name:ident, $inner:ty, { $($variant:ident => $value:expr),* $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
        #[serde(rename_all = "kebab-case")]
        #[value(rename_all = "kebab-case")]
        pub enum $name {
            $($variant),*
        }

        impl From<$name> for $inner {
            fn from(v: $name) -> $inner {
                match v {
                    $($name::$variant => $value),*
                }
            }
        }
    };
}

value_enum_wrapper!(T2SmootherArg, T2Smoother, {
    LocalLinear => T2Smoother::LocalLinear,
    NadarayaWatson => T2Smoother::NadarayaWatson,
});
value_enum_wrapper!(SemiMethodArg, SemiMethod, {
    Projection => SemiMethod::Projection,
    Joint => SemiMethod::Joint,
});
value_enum_wrapper!(NoiseArg, NoiseDist, {
    Normal => NoiseDist::Normal,
    Uniform => NoiseDist::Uniform,
});
value_enum_wrapper!(BenchTargetArg, BenchTarget, {
    LocalAverage => BenchTarget::LocalAverage,
    LocalAverageInference => BenchTarget::LocalAverageInference,
    OneStep => BenchTarget::OneStep,
    TwoStep => BenchTarget::TwoStep,
    Lape => BenchTarget::Lape,
});

impl Settings {
    /// Fills every unset field from `base`.
    fn or(self, base: Settings) -> Settings {
        macro_rules! pick {
            ($($f:ident),*) => {
                Settings { config: self.config, $($f: self.$f.or(base.$f)),* }
            };
        }
        pick!(
            input, u_column, y_column, x_columns, z_columns, intercept, group_size, bandwidth, degree,
            kernel, target, alpha, grid, ridge, expand_window, test_type, unweighted_t2, t2_smoother,
            method, study, example, n, reps, seed, a_values, tests, estimators, group_sizes, noise,
            sigma, targets, output, out_dir, manifest
        )
    }

    /// Merges the config file named by `--config`, if any. A run manifest is
    /// accepted as a config file. Relative paths stay relative to the working
    /// directory.
    pub fn resolve(self) -> Result<Settings, Failure> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        Ok(self.or(load_config(&path)?))
    }

    /// The set fields as JSON, in a form [`Settings::resolve`] reads back.
    pub fn to_json(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("settings serialize");
        if let serde_json::Value::Object(map) = &mut value {
            map.retain(|_, v| !v.is_null());
        }
        value
    }
}

fn load_config(path: &Path) -> Result<Settings, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let value = match value.get("settings") {
        Some(inner) if value.get("tool").is_some() => inner.clone(),
        _ => value,
    };
    serde_json::from_value(value).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_config() {
        let flags = Settings {
            group_size: Some(5),
            ..Default::default()
        };
        let file = Settings {
            group_size: Some(10),
            bandwidth: Some(0.3),
            ..Default::default()
        };
        let merged = flags.or(file);
        assert_eq!(merged.group_size, Some(5));
        assert_eq!(merged.bandwidth, Some(0.3));
    }

    #[test]
    fn config_json_names() {
        let s: Settings = serde_json::from_str(
            r#"{"group_size": 4, "type": "t3", "kernel": "uniform", "a_values": [0, 0.5], "study": "size-power"}"#,
        )
        .unwrap();
        assert_eq!(s.group_size, Some(4));
        assert_eq!(s.test_type, Some(TestKind::T3));
        assert_eq!(s.kernel, Some(Kernel::Uniform));
        assert_eq!(s.study, Some(Study::SizePower));
        assert!(serde_json::from_str::<Settings>(r#"{"group_sise": 4}"#).is_err());
    }
}
