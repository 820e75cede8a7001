//! Local average estimation and inference for varying and semivarying
//! coefficient models.
//!
//! Observations are sorted by the index variable `U`, cut into groups of `I`
//! consecutive rows and fitted group by group with constant coefficients
//! ([`local_average`]). The resulting pointwise estimates feed a second-stage
//! smoother ([`smoothing`]) and three constancy tests ([`constancy`]).
//! Constant coefficients of the semivarying model are estimated by
//! projecting out each group's column space ([`semivarying`]). The
//! [`baselines`] module holds the classical kernel estimators used for
//! comparison.

pub mod baselines;
pub mod constancy;
pub mod design;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod local_average;
mod quadrature;
pub mod semivarying;
pub mod smoothing;

pub use constancy::{run_test, run_tests, test_t1, test_t2, test_t3, TestKind, TestResult, TestSpec};
pub use design::{ingest_csv, sort_and_group, CsvSchema, Dataset, GroupedDesign};
pub use error::{Error, Result};
pub use kernels::{Kernel, KernelConstants};
pub use local_average::{fit_groups, fit_groups_with, FitOptions, LocalAverageFit, SelectionVector};
pub use semivarying::{fit_joint, fit_lape, SemiVaryingFit};
pub use smoothing::{SmoothedCurve, SmootherSpec};
