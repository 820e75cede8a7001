//! Per-group least squares: the local average estimator.
//!
//! Each group of `I` consecutive observations (in `U`) is fitted by ordinary
//! least squares with a constant coefficient vector, giving the `k`
//! pointwise estimates `â(Ū_i·)`. Groups are independent, so the fit runs in
//! parallel; output depends only on group content.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::design::GroupedDesign;
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::linalg::GroupQr;
use crate::smoothing::nadaraya_watson;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitOptions {
    /// Adds `ridge · I` to every per-group Gram matrix. Exploratory only: it
    /// biases the variance functional and the tests.
    pub ridge: Option<f64>,
}

/// Selects coordinate `index` (0-based) out of `dim` coefficients, i.e. the
/// standard basis vector `e_{index, dim}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionVector {
    index: usize,
    dim: usize,
}

impl SelectionVector {
    pub fn new(index: usize, dim: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidParameter(format!(
                "coefficient index {index} out of range for dimension {dim}"
            )));
        }
        Ok(SelectionVector { index, dim })
    }

    /// The last coordinate, `e_{p,p}`.
    pub fn last(dim: usize) -> Result<Self> {
        Self::new(dim.wrapping_sub(1), dim)
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalAverageFit {
    /// `k × p`; row `i` is `â(Ū_i·)`.
    pub a_hat: DMatrix<f64>,
    /// Per-group `(X*ᵢᵀX*ᵢ)⁻¹`.
    pub gram_inv: Vec<DMatrix<f64>>,
    pub u_bar: Vec<f64>,
    /// Residuals `Y*ᵢ − X*ᵢâᵢ`, stacked in sorted order (length `kI`).
    pub residuals: Vec<f64>,
    pub rss1: f64,
    /// `rss1 / (k(I − p))`; `None` when `I = p`.
    pub sigma2_hat: Option<f64>,
    pub group_size: usize,
}

impl LocalAverageFit {
    pub fn k(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn p(&self) -> usize {
        self.a_hat.ncols()
    }

    /// Rows used, `n = kI`.
    pub fn n(&self) -> usize {
        self.k() * self.group_size
    }

    /// Residual variance estimate; fails when `I ≤ p`.
    pub fn sigma2(&self) -> Result<f64> {
        self.sigma2_hat.ok_or_else(|| {
            Error::InvalidParameter(format!(
                "residual variance needs group size > p (I = {}, p = {})",
                self.group_size,
                self.p()
            ))
        })
    }

    fn check(&self, sel: SelectionVector) -> Result<()> {
        if sel.dim() != self.p() {
            return Err(Error::InvalidParameter(format!(
                "selection of dimension {} used with a fit of dimension {}",
                sel.dim(),
                self.p()
            )));
        }
        Ok(())
    }
}

pub fn fit_groups(design: &GroupedDesign) -> Result<LocalAverageFit> {
    fit_groups_with(design, &FitOptions::default())
}

pub fn fit_groups_with(design: &GroupedDesign, opts: &FitOptions) -> Result<LocalAverageFit> {
    let p = design.p();
    if p == 0 {
        return Err(Error::InvalidParameter("no varying covariates".into()));
    }
    let group_size = design.group_size();
    if group_size < p {
        return Err(Error::GroupTooSmall { group_size, p });
    }
    let per_group: Vec<Result<(DVector<f64>, DMatrix<f64>, DVector<f64>)>> = design
        .groups()
        .par_iter()
        .enumerate()
        .with_min_len(32)
        .map(|(i, g)| {
            let qr = GroupQr::new(&g.x, opts.ridge, i)?;
            let coef = qr.solve(&g.x, &g.y);
            let resid = &g.y - &g.x * &coef;
            Ok((coef, qr.gram_inverse(), resid))
        })
        .collect();

    let k = design.k();
    let mut a_hat = DMatrix::zeros(k, p);
    let mut gram_inv = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(design.n());
    for (i, r) in per_group.into_iter().enumerate() {
        let (coef, gi, resid) = r?;
        a_hat.set_row(i, &coef.transpose());
        gram_inv.push(gi);
        residuals.extend(resid.iter());
    }
    let rss1: f64 = residuals.iter().map(|r| r * r).sum();
    let dof = k * (group_size - p);
    let sigma2_hat = (dof > 0).then(|| rss1 / dof as f64);
    Ok(LocalAverageFit {
        a_hat,
        gram_inv,
        u_bar: design.u_bar(),
        residuals,
        rss1,
        sigma2_hat,
        group_size,
    })
}

/// The `k` pseudo-observations `(Ū_i·, â_l(Ū_i·))`, in ascending `Ū`.
pub fn to_pointwise_model(fit: &LocalAverageFit, sel: SelectionVector) -> Result<Vec<(f64, f64)>> {
    fit.check(sel)?;
    Ok(fit
        .u_bar
        .iter()
        .enumerate()
        .map(|(i, &u)| (u, fit.a_hat[(i, sel.index())]))
        .collect())
}

/// Kernel-smoothed estimate of `e_lᵀ Γ(u, I) e_l`, the conditional
/// expectation of the inverse per-group Gram diagonal.
#[derive(Debug, Clone)]
pub struct GammaHat {
    points: Vec<(f64, f64)>,
    kernel: Kernel,
    bandwidth: f64,
}

impl GammaHat {
    pub fn eval(&self, u: f64) -> Result<f64> {
        nadaraya_watson(&self.points, self.kernel, self.bandwidth, u)
    }

    /// The realized per-group values `(Ū_i·, e_lᵀ(X*ᵢᵀX*ᵢ)⁻¹e_l)`.
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

pub fn gamma_hat(
    fit: &LocalAverageFit,
    sel: SelectionVector,
    kernel: Kernel,
    bandwidth: f64,
) -> Result<GammaHat> {
    fit.check(sel)?;
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let l = sel.index();
    let points = fit
        .u_bar
        .iter()
        .zip(&fit.gram_inv)
        .map(|(&u, g)| (u, g[(l, l)]))
        .collect();
    Ok(GammaHat {
        points,
        kernel,
        bandwidth,
    })
}
