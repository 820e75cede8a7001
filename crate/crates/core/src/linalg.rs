//! Small dense least-squares kernels shared by the per-group solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest accepted condition number of a per-group Gram matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Householder QR of one group's `I × p` design.
#[derive(Debug, Clone)]
pub struct GroupQr {
    /// Thin orthonormal factor (`I × p`); `None` when a ridge term was added.
    q: Option<DMatrix<f64>>,
    r: DMatrix<f64>,
}

impl GroupQr {
    /// Factors `x`, optionally augmented with `√ridge · I` rows so that the
    /// implied Gram matrix is `XᵀX + ridge · I`.
    pub fn new(x: &DMatrix<f64>, ridge: Option<f64>, group: usize) -> Result<Self> {
        let p = x.ncols();
        let (q, r) = match ridge {
            Some(eps) if eps > 0.0 => {
                let mut aug = x.clone().resize_vertically(x.nrows() + p, 0.0);
                for j in 0..p {
                    aug[(x.nrows() + j, j)] = eps.sqrt();
                }
                (None, aug.qr().r())
            }
            _ => {
                let qr = x.clone().qr();
                (Some(qr.q()), qr.r())
            }
        };
        let gram = r.transpose() * &r;
        let condition = condition_number(&gram);
        if !(condition.is_finite() && condition < MAX_CONDITION) {
            return Err(Error::SingularGroup { group, condition });
        }
        Ok(GroupQr { q, r })
    }

    /// Least-squares coefficients for the right-hand side `rhs`.
    pub fn solve(&self, x: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
        let qt_rhs = match &self.q {
            Some(q) => q.tr_mul(rhs),
            // ridge: Rᵀ R β = Xᵀ y
            None => {
                let xty = x.tr_mul(rhs);
                self.r
                    .transpose()
                    .solve_lower_triangular(&xty)
                    .expect("R has a nonzero diagonal")
            }
        };
        self.r
            .solve_upper_triangular(&qt_rhs)
            .expect("R has a nonzero diagonal")
    }

    /// `(XᵀX)⁻¹ = R⁻¹ R⁻ᵀ`, symmetrized.
    pub fn gram_inverse(&self) -> DMatrix<f64> {
        let p = self.r.ncols();
        let rinv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(p, p))
            .expect("R has a nonzero diagonal");
        let g = &rinv * rinv.transpose();
        (&g + g.transpose()) * 0.5
    }
}

/// Spectral condition number of a symmetric positive semidefinite matrix.
pub fn condition_number(sym: &DMatrix<f64>) -> f64 {
    if sym.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(sym.clone()).eigenvalues;
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 || max <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Orthonormal basis of the column space of `x` (thin Householder `Q`).
/// Returns `None` for an empty design.
pub fn column_basis(x: &DMatrix<f64>, group: usize) -> Result<Option<DMatrix<f64>>> {
    if x.ncols() == 0 {
        return Ok(None);
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let condition = condition_number(&(r.transpose() * &r));
    if !(condition.is_finite() && condition < MAX_CONDITION) {
        return Err(Error::SingularGroup { group, condition });
    }
    Ok(Some(qr.q()))
}

/// `(I − QQᵀ) m`, the residual of `m` after projecting on `span(Q)`.
pub fn annihilate(basis: Option<&DMatrix<f64>>, m: &DMatrix<f64>) -> DMatrix<f64> {
    match basis {
        Some(q) => m - q * q.tr_mul(m),
        None => m.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_and_inverts() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0]);
        let qr = GroupQr::new(&x, None, 0).unwrap();
        let b = qr.solve(&x, &y);
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
        let gi = qr.gram_inverse();
        let id = gi * (x.transpose() * &x);
        assert!((id - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn rank_deficient_is_singular() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(
            GroupQr::new(&x, None, 7),
            Err(Error::SingularGroup { group: 7, .. })
        ));
        // a ridge term makes it solvable
        let qr = GroupQr::new(&x, Some(1e-3), 7).unwrap();
        let gi = qr.gram_inverse();
        let g = x.transpose() * &x + DMatrix::<f64>::identity(2, 2) * 1e-3;
        assert!((gi * g - DMatrix::<f64>::identity(2, 2)).norm() < 1e-8);
    }
}
