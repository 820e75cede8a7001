//! Classical kernel estimators of the varying coefficients, kept as plain
//! implementations for comparison: the one-step local polynomial estimator
//! and the two-step estimator (small pilot bandwidth, then local cubic).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::Dataset;
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::smoothing::{check_bandwidth, local_poly, SmootherSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    OneStep,
    TwoStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    pub kernel: Kernel,
    pub bandwidth: f64,
    /// Pilot bandwidth of the two-step estimator; `None` means `h/4`,
    /// widened if needed so that every pilot window holds `2p` points.
    pub pilot_bandwidth: Option<f64>,
    /// Local polynomial degree of the one-step estimator.
    pub degree: usize,
}

impl BaselineSpec {
    pub fn one_step(kernel: Kernel, bandwidth: f64) -> Self {
        BaselineSpec {
            kind: BaselineKind::OneStep,
            kernel,
            bandwidth,
            pilot_bandwidth: None,
            degree: 1,
        }
    }

    pub fn two_step(kernel: Kernel, bandwidth: f64) -> Self {
        BaselineSpec {
            kind: BaselineKind::TwoStep,
            kernel,
            bandwidth,
            pilot_bandwidth: None,
            degree: 3,
        }
    }

    fn validate(&self) -> Result<()> {
        check_bandwidth(self.bandwidth)?;
        if let Some(h0) = self.pilot_bandwidth {
            check_bandwidth(h0)?;
        }
        Ok(())
    }
}

/// Rows sorted by `U`, so that kernel windows are contiguous slices.
struct SortedRows<'a> {
    data: &'a Dataset,
    order: Vec<usize>,
    u: Vec<f64>,
}

impl<'a> SortedRows<'a> {
    fn new(data: &'a Dataset) -> Self {
        let mut order: Vec<usize> = (0..data.n()).collect();
        order.sort_by(|&a, &b| data.u()[a].total_cmp(&data.u()[b]).then(a.cmp(&b)));
        let u = order.iter().map(|&i| data.u()[i]).collect();
        SortedRows { data, order, u }
    }

    fn window(&self, u: f64, h: f64) -> std::ops::Range<usize> {
        let lo = self.u.partition_point(|&v| v < u - h);
        let hi = self.u.partition_point(|&v| v <= u + h);
        lo..hi
    }

    /// Kernel-weighted least squares of `Y` on `X ⊗ (1, (U−u)/h, …)`;
    /// returns all `p(degree+1)` coefficients, zero-order terms first.
    fn local_fit(&self, kernel: Kernel, h: f64, degree: usize, u: f64) -> Result<DVector<f64>> {
        let p = self.data.p();
        let cols = p * (degree + 1);
        let rows: Vec<(usize, f64, f64)> = self
            .window(u, h)
            .filter_map(|s| {
                let t = (self.u[s] - u) / h;
                let w = kernel.eval(t);
                (w > 0.0).then_some((self.order[s], t, w.sqrt()))
            })
            .collect();
        if rows.is_empty() {
            return Err(Error::EmptyWindow(u));
        }
        let rank_err = Error::RankDeficientWindow { u, needed: cols };
        if rows.len() < cols {
            return Err(rank_err);
        }
        let x = self.data.x();
        let a = DMatrix::from_fn(rows.len(), cols, |r, c| {
            let (i, t, sw) = rows[r];
            let (power, l) = (c / p, c % p);
            sw * x[(i, l)] * t.powi(power as i32)
        });
        let b = DVector::from_fn(rows.len(), |r, _| rows[r].2 * self.data.y()[rows[r].0]);
        let qr = a.qr();
        let r = qr.r();
        let diag_max = (0..cols).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
        if (0..cols).any(|j| r[(j, j)].abs() <= 1e-10 * diag_max) {
            return Err(rank_err);
        }
        let mut qtb = b;
        qr.q_tr_mul(&mut qtb);
        r.solve_upper_triangular(&qtb.rows(0, cols)).ok_or(rank_err)
    }

    /// Smallest half-width such that every `[Uᵢ − r, Uᵢ + r]` holds `m` rows.
    fn min_cover_radius(&self, m: usize) -> f64 {
        let n = self.u.len();
        if m == 0 || n < m {
            return f64::INFINITY;
        }
        (0..n)
            .map(|i| {
                let first = i.saturating_sub(m - 1);
                let last = i.min(n - m);
                (first..=last)
                    .map(|j| (self.u[i] - self.u[j]).max(self.u[j + m - 1] - self.u[i]))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
}

/// One-step estimate of all `p` coefficients at `u`.
pub fn one_step(data: &Dataset, u: f64, spec: &BaselineSpec) -> Result<DVector<f64>> {
    spec.validate()?;
    let rows = SortedRows::new(data);
    let coef = rows.local_fit(spec.kernel, spec.bandwidth, spec.degree, u)?;
    Ok(coef.rows(0, data.p()).clone_owned())
}

/// One-step estimates on a grid; row `g` holds the `p` coefficients at `grid[g]`.
pub fn one_step_curve(data: &Dataset, grid: &[f64], spec: &BaselineSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let rows = SortedRows::new(data);
    let p = data.p();
    let fits: Vec<Result<DVector<f64>>> = grid
        .par_iter()
        .map(|&u| rows.local_fit(spec.kernel, spec.bandwidth, spec.degree, u))
        .collect();
    let mut out = DMatrix::zeros(grid.len(), p);
    for (g, fit) in fits.into_iter().enumerate() {
        let coef = fit?;
        for l in 0..p {
            out[(g, l)] = coef[l];
        }
    }
    Ok(out)
}

/// The pilot bandwidth actually used by the two-step estimator.
pub fn pilot_bandwidth(data: &Dataset, spec: &BaselineSpec) -> Result<f64> {
    spec.validate()?;
    if let Some(h0) = spec.pilot_bandwidth {
        return Ok(h0);
    }
    let rows = SortedRows::new(data);
    let needed = 2 * data.p();
    let radius = rows.min_cover_radius(needed);
    if !radius.is_finite() {
        return Err(Error::RankDeficientWindow {
            u: f64::NAN,
            needed,
        });
    }
    // kernels vanish on the boundary of their support
    Ok((spec.bandwidth / 4.0).max(radius * (1.0 + 1e-9) + f64::MIN_POSITIVE))
}

/// Pilot local-linear estimates of coefficient `target` at every `Uᵢ`.
fn pilot_points(data: &Dataset, target: usize, kernel: Kernel, h0: f64) -> Result<Vec<(f64, f64)>> {
    let rows = SortedRows::new(data);
    let fits: Vec<Result<(f64, f64)>> = rows
        .u
        .par_iter()
        .map(|&u| rows.local_fit(kernel, h0, 1, u).map(|c| (u, c[target])))
        .collect();
    fits.into_iter().collect()
}

fn check_target(data: &Dataset, target: usize) -> Result<()> {
    if target < data.p() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "target column {target} out of range for p = {}",
            data.p()
        )))
    }
}

/// Two-step estimate of coefficient `target` (0-based) at `u`.
pub fn two_step(data: &Dataset, u: f64, target: usize, spec: &BaselineSpec) -> Result<f64> {
    Ok(two_step_curve(data, &[u], target, spec)?[0])
}

/// Two-step estimates of coefficient `target` on a grid, sharing the pilot.
pub fn two_step_curve(data: &Dataset, grid: &[f64], target: usize, spec: &BaselineSpec) -> Result<Vec<f64>> {
    check_target(data, target)?;
    let h0 = pilot_bandwidth(data, spec)?;
    let pilot = pilot_points(data, target, spec.kernel, h0)?;
    let stage2 = SmootherSpec::new(spec.kernel, spec.bandwidth, 3)?;
    let values: Vec<Result<f64>> = grid.par_iter().map(|&u| local_poly(&pilot, &stage2, u)).collect();
    values.into_iter().collect()
}
