//! Constant coefficients of the semivarying model `Y = Xᵀa(U) + Zᵀb + ε`.
//!
//! Two routes give the same `b̂`:
//!
//! * [`fit_joint`] solves the block-bordered normal equations of the full
//!   grouped least-squares problem, eliminating the per-group coefficients
//!   through their Gram inverses and solving the reduced Schur system.
//! * [`fit_lape`] projects `Y` and `Z` onto the orthogonal complement of each
//!   group's column space (the projection `ℙ`, kept as per-group orthonormal
//!   bases) and regresses `ℙY` on `ℙZ`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::GroupedDesign;
use crate::error::{Error, Result};
use crate::linalg::{annihilate, column_basis, GroupQr};

/// Relative eigenvalue floor of the Schur system against `Σ ZᵀZ`.
const SCHUR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemiMethod {
    Joint,
    Projection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiVaryingFit {
    pub b_hat: DVector<f64>,
    /// `σ̂² Σ̂⁻¹`, so that `b̂ ± z · sqrt(diag(sigma_b) / n)` is a pointwise
    /// interval. `None` when no residual degrees of freedom remain.
    pub sigma_b: Option<DMatrix<f64>>,
    /// `k × p` back-substituted varying coefficients.
    pub a_hat: Option<DMatrix<f64>>,
    pub method: SemiMethod,
    pub rss0: f64,
    /// Rows used, `n = kI`.
    pub n: usize,
}

impl SemiVaryingFit {
    /// Standard errors `sqrt(diag(sigma_b) / n)`.
    pub fn std_errors(&self) -> Option<Vec<f64>> {
        let n = self.n as f64;
        self.sigma_b
            .as_ref()
            .map(|s| (0..s.nrows()).map(|j| (s[(j, j)] / n).sqrt()).collect())
    }
}

fn require_constant_part(design: &GroupedDesign) -> Result<()> {
    if design.q() == 0 {
        return Err(Error::InvalidParameter(
            "the design has no constant-coefficient columns".into(),
        ));
    }
    if design.group_size() < design.p() {
        return Err(Error::GroupTooSmall {
            group_size: design.group_size(),
            p: design.p(),
        });
    }
    Ok(())
}

fn z_of(g: &crate::design::Group) -> &DMatrix<f64> {
    g.z.as_ref().expect("constant part checked by caller")
}

/// Solves the symmetric Schur system, rejecting it when it is numerically
/// singular relative to `scale` (the largest eigenvalue of `Σ ZᵀZ`).
fn solve_schur(schur: &DMatrix<f64>, rhs: &DVector<f64>, scale: f64) -> Result<DVector<f64>> {
    let eig = SymmetricEigen::new(schur.clone()).eigenvalues;
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if !(min > SCHUR_TOL * scale) {
        return Err(Error::SingularSchur);
    }
    Cholesky::new(schur.clone())
        .map(|c| c.solve(rhs))
        .ok_or(Error::SingularSchur)
}

fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

fn covariance_from_schur(
    schur: &DMatrix<f64>,
    rss0: f64,
    design: &GroupedDesign,
) -> Option<DMatrix<f64>> {
    let dof = design.n() as i64 - (design.k() * design.p()) as i64 - design.q() as i64;
    if dof <= 0 {
        return None;
    }
    let sigma2 = rss0 / dof as f64;
    let n = design.n() as f64;
    let inv = Cholesky::new(schur.clone())?.inverse();
    let cov = inv * (sigma2 * n);
    Some((&cov + cov.transpose()) * 0.5)
}

struct JointBlock {
    schur: DMatrix<f64>,
    rhs: DVector<f64>,
    ztz: DMatrix<f64>,
    qr: Option<GroupQr>,
}

/// Joint grouped least squares for `(a, b)`, solved through the Schur
/// complement of the block-diagonal `𝕏ᵀ𝕏`.
pub fn fit_joint(design: &GroupedDesign) -> Result<SemiVaryingFit> {
    require_constant_part(design)?;
    let q = design.q();
    let blocks: Vec<Result<JointBlock>> = design
        .groups()
        .par_iter()
        .enumerate()
        .with_min_len(32)
        .map(|(i, g)| {
            let z = z_of(g);
            let ztz = z.tr_mul(z);
            let zty = z.tr_mul(&g.y);
            if g.x.ncols() == 0 {
                return Ok(JointBlock {
                    schur: ztz.clone(),
                    rhs: zty,
                    ztz,
                    qr: None,
                });
            }
            let qr = GroupQr::new(&g.x, None, i)?;
            let gram_inv = qr.gram_inverse();
            let xtz = g.x.tr_mul(z);
            let xty = g.x.tr_mul(&g.y);
            let ztx_ginv = xtz.transpose() * &gram_inv;
            Ok(JointBlock {
                schur: &ztz - &ztx_ginv * &xtz,
                rhs: zty - ztx_ginv * xty,
                ztz,
                qr: Some(qr),
            })
        })
        .collect();

    let mut schur = DMatrix::zeros(q, q);
    let mut rhs = DVector::zeros(q);
    let mut ztz = DMatrix::zeros(q, q);
    let mut factors = Vec::with_capacity(design.k());
    for b in blocks {
        let b = b?;
        schur += &b.schur;
        rhs += &b.rhs;
        ztz += &b.ztz;
        factors.push(b.qr);
    }
    let schur = (&schur + schur.transpose()) * 0.5;
    let b_hat = solve_schur(&schur, &rhs, max_eigenvalue(&ztz))?;

    let p = design.p();
    let mut a_hat = DMatrix::zeros(design.k(), p);
    let mut rss0 = 0.0;
    for (i, (g, qr)) in design.groups().iter().zip(&factors).enumerate() {
        let partial = &g.y - z_of(g) * &b_hat;
        let resid = match qr {
            Some(qr) => {
                let a = qr.solve(&g.x, &partial);
                let r = &partial - &g.x * &a;
                a_hat.set_row(i, &a.transpose());
                r
            }
            None => partial,
        };
        rss0 += resid.norm_squared();
    }
    let sigma_b = covariance_from_schur(&schur, rss0, design);
    Ok(SemiVaryingFit {
        b_hat,
        sigma_b,
        a_hat: Some(a_hat),
        method: SemiMethod::Joint,
        rss0,
        n: design.n(),
    })
}

/// `ℙ = Iₙ − H₁ ⊕ … ⊕ H_k`, stored as one orthonormal basis of each group's
/// column space; never densified.
#[derive(Debug, Clone)]
pub struct ProjectionOperator {
    bases: Vec<Option<DMatrix<f64>>>,
    group_size: usize,
}

impl ProjectionOperator {
    pub fn new(design: &GroupedDesign) -> Result<Self> {
        let bases: Vec<Result<Option<DMatrix<f64>>>> = design
            .groups()
            .par_iter()
            .enumerate()
            .with_min_len(32)
            .map(|(i, g)| column_basis(&g.x, i))
            .collect();
        Ok(ProjectionOperator {
            bases: bases.into_iter().collect::<Result<_>>()?,
            group_size: design.group_size(),
        })
    }

    pub fn k(&self) -> usize {
        self.bases.len()
    }

    /// `(I − Hᵢ) m` for a block `m` with `I` rows belonging to group `i`.
    pub fn apply_block(&self, group: usize, m: &DMatrix<f64>) -> DMatrix<f64> {
        annihilate(self.bases[group].as_ref(), m)
    }

    /// `ℙ v` for a stacked vector of length `kI`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let size = self.group_size;
        let mut out = DVector::zeros(v.len());
        for (i, basis) in self.bases.iter().enumerate() {
            let block = v.rows(i * size, size).clone_owned();
            let projected = match basis {
                Some(q) => &block - q * q.tr_mul(&block),
                None => block,
            };
            out.rows_mut(i * size, size).copy_from(&projected);
        }
        out
    }

    /// The dense hat matrix `Hᵢ` of group `i`.
    pub fn hat_matrix(&self, group: usize) -> DMatrix<f64> {
        match &self.bases[group] {
            Some(q) => q * q.transpose(),
            None => DMatrix::zeros(self.group_size, self.group_size),
        }
    }
}

/// The local average projection estimator `b̂ = (ℤᵀℙℤ)⁻¹ ℤᵀℙ𝕐`.
///
/// With `back_substitute`, also returns `âᵢ = (X*ᵢᵀX*ᵢ)⁻¹X*ᵢᵀ(Y*ᵢ − Z*ᵢb̂)`.
pub fn fit_lape(design: &GroupedDesign, back_substitute: bool) -> Result<SemiVaryingFit> {
    require_constant_part(design)?;
    let proj = ProjectionOperator::new(design)?;
    let (n, q, size) = (design.n(), design.q(), design.group_size());
    let mut pz = DMatrix::zeros(n, q);
    let mut py = DVector::zeros(n);
    let mut ztz = DMatrix::zeros(q, q);
    for (i, g) in design.groups().iter().enumerate() {
        let z = z_of(g);
        ztz += z.tr_mul(z);
        pz.rows_mut(i * size, size).copy_from(&proj.apply_block(i, z));
        let y = DMatrix::from_column_slice(size, 1, g.y.as_slice());
        py.rows_mut(i * size, size)
            .copy_from(&proj.apply_block(i, &y).column(0));
    }
    // least squares of ℙY on ℙZ through a QR of ℙZ
    let qr = pz.clone().qr();
    let r = qr.r();
    let scale = max_eigenvalue(&ztz);
    let singular = (0..q).any(|j| !(r[(j, j)] * r[(j, j)] > SCHUR_TOL * scale));
    if singular {
        return Err(Error::SingularSchur);
    }
    let b_hat = r
        .solve_upper_triangular(&qr.q().tr_mul(&py))
        .ok_or(Error::SingularSchur)?;
    let rss0 = (&py - &pz * &b_hat).norm_squared();

    let a_hat = if back_substitute && design.p() > 0 {
        let mut a_hat = DMatrix::zeros(design.k(), design.p());
        for (i, g) in design.groups().iter().enumerate() {
            let gqr = GroupQr::new(&g.x, None, i)?;
            let a = gqr.solve(&g.x, &(&g.y - z_of(g) * &b_hat));
            a_hat.set_row(i, &a.transpose());
        }
        Some(a_hat)
    } else {
        None
    };
    let schur = r.tr_mul(&r);
    let sigma_b = covariance_from_schur(&schur, rss0, design);
    Ok(SemiVaryingFit {
        b_hat,
        sigma_b,
        a_hat,
        method: SemiMethod::Projection,
        rss0,
        n,
    })
}

/// `σ̂² Σ̂⁻¹` with `Σ̂ = (1/n) Σᵢ Z*ᵢᵀ(I − Hᵢ)Z*ᵢ` and
/// `σ̂² = rss0 / (n − kp − q)`.
pub fn covariance_b(design: &GroupedDesign, fit: &SemiVaryingFit) -> Result<DMatrix<f64>> {
    require_constant_part(design)?;
    let proj = ProjectionOperator::new(design)?;
    let q = design.q();
    let mut schur = DMatrix::zeros(q, q);
    let mut ztz = DMatrix::zeros(q, q);
    for (i, g) in design.groups().iter().enumerate() {
        let z = z_of(g);
        ztz += z.tr_mul(z);
        schur += z.tr_mul(&proj.apply_block(i, z));
    }
    let schur = (&schur + schur.transpose()) * 0.5;
    let eig_min = SymmetricEigen::new(schur.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::MAX, f64::min);
    if !(eig_min > SCHUR_TOL * max_eigenvalue(&ztz)) {
        return Err(Error::SingularSchur);
    }
    covariance_from_schur(&schur, fit.rss0, design).ok_or_else(|| {
        Error::InvalidParameter("no residual degrees of freedom for the variance".into())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{sort_and_group, Dataset};

    fn semi_design(n: usize, group_size: usize, noise: f64) -> GroupedDesign {
        let u: Vec<f64> = (0..n).map(|i| (i as f64 * 0.618).fract()).collect();
        let x = DMatrix::from_fn(n, 2, |i, j| ((i * (j + 3)) as f64 * 0.37).sin() + j as f64);
        let z = DMatrix::from_fn(n, 1, |i, _| ((i * 11) as f64 * 0.13).cos());
        let y = (0..n)
            .map(|i| 2.0 * x[(i, 0)] - x[(i, 1)] + 1.5 * z[(i, 0)] + noise * ((i * 7) as f64).sin())
            .collect();
        sort_and_group(&Dataset::new(u, x, Some(z), y).unwrap(), group_size).unwrap()
    }

    #[test]
    fn exact_model_recovers_b() {
        let d = semi_design(200, 5, 0.0);
        let j = fit_joint(&d).unwrap();
        let l = fit_lape(&d, true).unwrap();
        assert!((j.b_hat[0] - 1.5).abs() < 1e-8);
        assert!((l.b_hat[0] - 1.5).abs() < 1e-8);
        let a = j.a_hat.unwrap();
        for i in 0..d.k() {
            assert!((a[(i, 0)] - 2.0).abs() < 1e-8 && (a[(i, 1)] + 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn routes_agree_with_noise() {
        let d = semi_design(120, 6, 0.3);
        let j = fit_joint(&d).unwrap();
        let l = fit_lape(&d, true).unwrap();
        assert!((j.b_hat[0] - l.b_hat[0]).abs() < 1e-10);
        assert!((j.rss0 - l.rss0).abs() < 1e-9);
        assert!((j.a_hat.as_ref().unwrap() - l.a_hat.as_ref().unwrap()).norm() < 1e-9);
        let cov = covariance_b(&d, &l).unwrap();
        assert!((cov - l.sigma_b.unwrap()).norm() < 1e-9);
    }

    #[test]
    fn z_equal_to_x_column_is_singular() {
        let n = 40;
        let u: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { (i as f64).sqrt() });
        let z = x.columns(1, 1).clone_owned();
        let y = vec![1.0; n];
        let d = sort_and_group(&Dataset::new(u, x, Some(z), y).unwrap(), 4).unwrap();
        assert_eq!(fit_joint(&d).unwrap_err(), Error::SingularSchur);
        assert_eq!(fit_lape(&d, false).unwrap_err(), Error::SingularSchur);
    }

    #[test]
    fn group_of_one_annihilates_everything() {
        let n = 10;
        let u: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let x = DMatrix::from_fn(n, 1, |i, _| 1.0 + i as f64);
        let z = DMatrix::from_fn(n, 1, |i, _| (i as f64).cos());
        let d = sort_and_group(&Dataset::new(u, x, Some(z), vec![0.5; n]).unwrap(), 1).unwrap();
        assert_eq!(fit_lape(&d, false).unwrap_err(), Error::SingularSchur);
        assert_eq!(fit_joint(&d).unwrap_err(), Error::SingularSchur);
    }

    #[test]
    fn constant_z_is_singular_with_intercept() {
        let n = 30;
        let u: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let x = DMatrix::from_element(n, 1, 1.0);
        let z = DMatrix::from_element(n, 1, 3.0);
        let d = sort_and_group(&Dataset::new(u, x, Some(z), vec![0.5; n]).unwrap(), 10).unwrap();
        let fake = SemiVaryingFit {
            b_hat: DVector::zeros(1),
            sigma_b: None,
            a_hat: None,
            method: SemiMethod::Projection,
            rss0: 1.0,
            n,
        };
        assert_eq!(covariance_b(&d, &fake).unwrap_err(), Error::SingularSchur);
    }

    #[test]
    fn projection_blocks_are_orthogonal_projectors() {
        let d = semi_design(60, 6, 0.1);
        let proj = ProjectionOperator::new(&d).unwrap();
        for (i, g) in d.groups().iter().enumerate() {
            let h = proj.hat_matrix(i);
            assert!((&h * &h - &h).norm() < 1e-8);
            assert!((&h - h.transpose()).norm() < 1e-12);
            assert!((&h * &g.x - &g.x).norm() < 1e-8);
            assert!(proj.apply_block(i, &g.x).norm() < 1e-8);
        }
    }
}
