//! Tests of `H₀: a_l(u) ≡ c` for a single varying coefficient.
//!
//! * T1 is a kernel-weighted U-statistic of the centred pointwise estimates,
//!   standardized to `N(0, 1)`.
//! * T2 is a generalized-likelihood-ratio statistic comparing a constant fit
//!   with a local linear (or Nadaraya–Watson) fit of the pointwise estimates,
//!   referred to a scaled chi-square. The weighted form uses inverse-variance weights.
//! * T3 compares the residual sums of squares of the grouped fits with the
//!   target coefficient varying and held constant, standardized with a
//!   kurtosis-corrected variance; a chi-square referral valid for normal
//!   errors is reported alongside.
//!
//! All tests reject for large values.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::design::GroupedDesign;
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::linalg::{column_basis, GroupQr};
use crate::local_average::{fit_groups, gamma_hat, to_pointwise_model, GammaHat, LocalAverageFit, SelectionVector};
use crate::semivarying::fit_lape;
use crate::smoothing::{check_bandwidth, local_poly, nadaraya_watson, SmootherSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    T1,
    T2,
    T3,
}

impl std::str::FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t1" => Ok(TestKind::T1),
            "t2" => Ok(TestKind::T2),
            "t3" => Ok(TestKind::T3),
            other => Err(Error::InvalidParameter(format!("unknown test `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum NullLaw {
    StdNormal,
    ChiSquared { df: f64 },
}

impl NullLaw {
    /// Upper-tail probability of `x`.
    pub fn upper_tail(&self, x: f64) -> Result<f64> {
        let p = match *self {
            NullLaw::StdNormal => 1.0 - Normal::standard().cdf(x),
            NullLaw::ChiSquared { df } => {
                if !(df > 0.0) {
                    return Err(Error::InvalidParameter(format!("chi-square df must be positive, got {df}")));
                }
                if x <= 0.0 {
                    1.0
                } else {
                    ChiSquared::new(df)
                        .map_err(|e| Error::InvalidParameter(e.to_string()))?
                        .sf(x)
                }
            }
        };
        Ok(p.clamp(0.0, 1.0))
    }
}

/// A statistic referred to a particular null law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Referral {
    pub statistic: f64,
    pub null_law: NullLaw,
    pub p_value: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub group_size: usize,
    pub bandwidth: Option<f64>,
    pub kernel: Option<Kernel>,
    /// 0-based coefficient index, when the test was run from a design.
    pub target: Option<usize>,
    pub weighted: Option<bool>,
    pub smoother: Option<T2Smoother>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: TestKind,
    /// Raw statistic (`T₁`, `T₂` or `T₃`).
    pub statistic: f64,
    /// The value referred to `null_law`.
    pub standardized: f64,
    pub null_law: NullLaw,
    pub p_value: f64,
    pub nuisance: BTreeMap<String, f64>,
    pub config: TestConfig,
    /// Secondary referral (T3: chi-square under mesokurtic errors).
    pub alternative: Option<Referral>,
    pub caveat: Option<String>,
}

impl TestResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

fn sorted_points(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut v = points.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    v
}

/// Sum over ordered pairs `i ≠ j` with `|uᵢ − uⱼ| ≤ h` of `f(i, j)`;
/// `points` must be sorted by `u`. Reduction order is fixed.
fn windowed_pair_sum<F>(points: &[(f64, f64)], h: f64, f: F) -> f64
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let k = points.len();
    let partial: Vec<f64> = (0..k)
        .into_par_iter()
        .with_min_len(64)
        .map(|i| {
            let ui = points[i].0;
            let mut s = 0.0;
            let mut j = i;
            while j > 0 && ui - points[j - 1].0 <= h {
                j -= 1;
                s += f(i, j);
            }
            let mut j = i + 1;
            while j < k && points[j].0 - ui <= h {
                s += f(i, j);
                j += 1;
            }
            s
        })
        .collect();
    partial.iter().sum()
}

/// Moment-based test on the pointwise estimates `(Ū_i·, â_l(Ū_i·))`.
pub fn test_t1(points: &[(f64, f64)], kernel: Kernel, h: f64, group_size: usize) -> Result<TestResult> {
    check_bandwidth(h)?;
    let k = points.len();
    if k < 3 {
        return Err(Error::InvalidParameter(format!("T1 needs at least 3 points, got {k}")));
    }
    let pts = sorted_points(points);
    let c_hat = pts.iter().map(|p| p.1).sum::<f64>() / k as f64;
    let e: Vec<f64> = pts.iter().map(|p| p.1 - c_hat).collect();
    let kf = k as f64;
    let pairs = kf * (kf - 1.0);
    let t1 = windowed_pair_sum(&pts, h, |i, j| kernel.eval((pts[i].0 - pts[j].0) / h) / h * e[i] * e[j])
        / pairs;
    let i2 = (group_size * group_size) as f64;
    let sigma1_sq = 2.0 * i2 / pairs
        * windowed_pair_sum(&pts, h, |i, j| {
            let w = kernel.eval((pts[i].0 - pts[j].0) / h);
            w * w / h * e[i] * e[i] * e[j] * e[j]
        });
    if !(sigma1_sq > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let n = (k * group_size) as f64;
    let v1 = n * h.sqrt() * t1 / sigma1_sq.sqrt();
    let null_law = NullLaw::StdNormal;
    let nuisance = BTreeMap::from([
        ("c_hat".to_string(), c_hat),
        ("sigma1_sq".to_string(), sigma1_sq),
        ("k".to_string(), kf),
        ("n".to_string(), n),
    ]);
    Ok(TestResult {
        test: TestKind::T1,
        statistic: t1,
        standardized: v1,
        null_law,
        p_value: null_law.upper_tail(v1)?,
        nuisance,
        config: TestConfig {
            group_size,
            bandwidth: Some(h),
            kernel: Some(kernel),
            target: None,
            weighted: None,
            smoother: None,
        },
        alternative: None,
        caveat: None,
    })
}

/// Smoother fitted to the pointwise estimates under the alternative of T2.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum T2Smoother {
    /// Local linear; its null distribution tracks the chi-square referral
    /// near the ends of the range.
    #[default]
    LocalLinear,
    NadarayaWatson,
}

/// How T2 weights the residual sums of squares.
#[derive(Debug, Clone, Copy)]
pub enum T2Weighting<'a> {
    /// Plain sums. `gamma`, when given, is used only to report the
    /// heteroscedastic referral constants as diagnostics.
    Unweighted { gamma: Option<&'a GammaHat> },
    /// Weights `w(u) = 1 / (Γ̂_ll(u) σ̂²)`.
    Weighted { gamma: &'a GammaHat, sigma2: f64 },
}

const T2_UNWEIGHTED_CAVEAT: &str = "unweighted T2 is referred to the weighted-form chi-square \
     constants; the pointwise estimates are heteroscedastic, so the referral is approximate";

/// GLR-type test comparing a constant fit with a kernel smooth of the
/// pointwise estimates.
pub fn test_t2(
    points: &[(f64, f64)],
    kernel: Kernel,
    h: f64,
    group_size: usize,
    smoother: T2Smoother,
    weighting: T2Weighting<'_>,
) -> Result<TestResult> {
    check_bandwidth(h)?;
    let k = points.len();
    if k < 5 {
        return Err(Error::InvalidParameter(format!("T2 needs at least 5 points, got {k}")));
    }
    let pts = sorted_points(points);
    let weights: Vec<f64> = match weighting {
        T2Weighting::Unweighted { .. } => vec![1.0; k],
        T2Weighting::Weighted { gamma, sigma2 } => {
            if !(sigma2 > 0.0) {
                return Err(Error::DegenerateVariance);
            }
            pts.iter()
                .map(|&(u, _)| {
                    let g = gamma.eval(u)?;
                    if g > 0.0 {
                        Ok(1.0 / (g * sigma2))
                    } else {
                        Err(Error::DegenerateVariance)
                    }
                })
                .collect::<Result<_>>()?
        }
    };
    let c_hat = pts.iter().map(|p| p.1).sum::<f64>() / k as f64;
    let linear = SmootherSpec::new(kernel, h, 1)?;
    let smooth: Vec<f64> = pts
        .par_iter()
        .map(|&(u, _)| match smoother {
            T2Smoother::LocalLinear => local_poly(&pts, &linear, u),
            T2Smoother::NadarayaWatson => nadaraya_watson(&pts, kernel, h, u),
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let mut rss0 = 0.0;
    let mut rss1 = 0.0;
    let mut scale = 0.0;
    for ((&(_, a), &m), &w) in pts.iter().zip(&smooth).zip(&weights) {
        rss0 += w * (a - c_hat).powi(2);
        rss1 += w * (a - m).powi(2);
        scale += w * a * a;
    }
    if rss1 <= 1e-24 * scale || rss1 == 0.0 {
        return Err(Error::ZeroRss1);
    }
    let t2 = k as f64 / 2.0 * (rss0 / rss1).ln();

    let constants = kernel.constants();
    let omega = pts[k - 1].0 - pts[0].0;
    if !(omega > 0.0) {
        return Err(Error::InvalidParameter("the group centres span no range".into()));
    }
    let r_n = constants.kappa1 / constants.kappa2;
    let a_n = constants.kappa1 * constants.kappa1 / constants.kappa2 / h * omega;
    let null_law = NullLaw::ChiSquared { df: a_n };
    let standardized = r_n * t2;

    let mut nuisance = BTreeMap::from([
        ("c_hat".to_string(), c_hat),
        ("rss0".to_string(), rss0),
        ("rss1".to_string(), rss1),
        ("r_n".to_string(), r_n),
        ("a_n".to_string(), a_n),
        ("omega".to_string(), omega),
        ("kappa1".to_string(), constants.kappa1),
        ("kappa2".to_string(), constants.kappa2),
    ]);
    let weighted = matches!(weighting, T2Weighting::Weighted { .. });
    if let T2Weighting::Unweighted { gamma: Some(gamma) } = weighting {
        let (r, a) = heteroscedastic_constants(&pts, gamma, constants.kappa1, constants.kappa2, h)?;
        nuisance.insert("r_n_heteroscedastic".into(), r);
        nuisance.insert("a_n_heteroscedastic".into(), a);
    }
    if let T2Weighting::Weighted { sigma2, .. } = weighting {
        nuisance.insert("sigma2_hat".into(), sigma2);
    }
    Ok(TestResult {
        test: TestKind::T2,
        statistic: t2,
        standardized,
        null_law,
        p_value: null_law.upper_tail(standardized)?,
        nuisance,
        config: TestConfig {
            group_size,
            bandwidth: Some(h),
            kernel: Some(kernel),
            target: None,
            weighted: Some(weighted),
            smoother: Some(smoother),
        },
        alternative: None,
        caveat: (!weighted).then(|| T2_UNWEIGHTED_CAVEAT.to_string()),
    })
}

/// The unweighted-form constants written in terms of `g(u) = Γ̂_ll(u)`:
/// `r = (κ₁/κ₂) ∫g² · ∫g²f · (∫g⁴)⁻¹`, `a = (κ₁²/κ₂) h⁻¹ (∫g²)² (∫g⁴)⁻¹`.
/// Integrals over `u` use the trapezoid rule on the sorted group centres;
/// the `f`-weighted one is the sample mean over centres.
fn heteroscedastic_constants(
    pts: &[(f64, f64)],
    gamma: &GammaHat,
    kappa1: f64,
    kappa2: f64,
    h: f64,
) -> Result<(f64, f64)> {
    let g: Vec<f64> = pts.iter().map(|&(u, _)| gamma.eval(u)).collect::<Result<_>>()?;
    let trap = |f: &dyn Fn(f64) -> f64| -> f64 {
        pts.windows(2)
            .zip(g.windows(2))
            .map(|(p, gv)| 0.5 * (f(gv[0]) + f(gv[1])) * (p[1].0 - p[0].0))
            .sum()
    };
    let int_g2 = trap(&|v| v * v);
    let int_g4 = trap(&|v| v.powi(4));
    let int_g2_f = g.iter().map(|v| v * v).sum::<f64>() / g.len() as f64;
    let r = kappa1 / kappa2 * int_g2 * int_g2_f / int_g4;
    let a = kappa1 * kappa1 / kappa2 / h * int_g2 * int_g2 / int_g4;
    Ok((r, a))
}

/// Per-group quantities of the null design with `Ẋ` the non-target columns
/// and `X_p` the target column.
#[derive(Debug, Clone, PartialEq)]
pub struct T3Internals {
    /// `A_t = Σ ẊẊᵀ`.
    pub a: DMatrix<f64>,
    /// `B_t = Σ X_p²`.
    pub b: f64,
    /// `C_t = Σ Ẋ X_p`.
    pub c: DVector<f64>,
    /// `M_t = B_t − C_tᵀA_t⁻¹C_t`.
    pub m_scalar: f64,
    /// `m_ti = C_tᵀA_t⁻¹Ẋᵢ − X_{i,p}`.
    pub m: DVector<f64>,
}

impl T3Internals {
    /// `M_t⁻² Σᵢ m_ti⁴`, always within `[1/I, 1]`.
    pub fn ratio(&self) -> f64 {
        self.m.iter().map(|v| v.powi(4)).sum::<f64>() / (self.m_scalar * self.m_scalar)
    }
}

pub fn t3_internals(design: &GroupedDesign, target: usize) -> Result<Vec<T3Internals>> {
    if target >= design.p() {
        return Err(Error::InvalidParameter(format!(
            "target column {target} out of range for p = {}",
            design.p()
        )));
    }
    let per_group: Vec<Result<T3Internals>> = design
        .groups()
        .par_iter()
        .enumerate()
        .with_min_len(32)
        .map(|(i, g)| {
            let xp = g.x.column(target).clone_owned();
            let xdot = g.x.clone().remove_column(target);
            let b = xp.norm_squared();
            let a = xdot.tr_mul(&xdot);
            let c = xdot.tr_mul(&xp);
            let m = if xdot.ncols() == 0 {
                -&xp
            } else {
                let qr = GroupQr::new(&xdot, None, i)?;
                let coef = qr.solve(&xdot, &xp);
                &xdot * coef - &xp
            };
            let m_scalar = m.norm_squared();
            if !(m_scalar > 1e-12 * b.max(f64::MIN_POSITIVE)) {
                return Err(Error::SingularGroup {
                    group: i,
                    condition: f64::INFINITY,
                });
            }
            Ok(T3Internals { a, b, c, m_scalar, m })
        })
        .collect();
    per_group.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiN {
    pub value: f64,
    /// Per-group `M_t⁻² Σᵢ m_ti⁴`.
    pub ratios: Vec<f64>,
}

/// `Ψₙ = Σ_t M_t⁻² Σᵢ m_ti⁴`, the fourth-moment design functional of T3.
pub fn psi_n(design: &GroupedDesign, target: usize) -> Result<PsiN> {
    let ratios: Vec<f64> = t3_internals(design, target)?.iter().map(T3Internals::ratio).collect();
    Ok(PsiN {
        value: ratios.iter().sum(),
        ratios,
    })
}

/// Sums `Σ M_ii²` and `Σ M_ij⁴` of the residual makers `M = I − Hᵢ` of the
/// unrestricted design.
fn residual_maker_moments(design: &GroupedDesign) -> Result<(f64, f64)> {
    let size = design.group_size();
    let per_group: Vec<Result<(f64, f64)>> = design
        .groups()
        .par_iter()
        .enumerate()
        .with_min_len(32)
        .map(|(i, g)| {
            let q = column_basis(&g.x, i)?;
            let h = match q {
                Some(q) => &q * q.transpose(),
                None => DMatrix::zeros(size, size),
            };
            let m = DMatrix::identity(size, size) - h;
            let diag_sq = (0..size).map(|j| m[(j, j)].powi(2)).sum();
            let fourth = m.iter().map(|v| v.powi(4)).sum();
            Ok((diag_sq, fourth))
        })
        .collect();
    per_group
        .into_iter()
        .try_fold((0.0, 0.0), |(a, b), r| r.map(|(x, y)| (a + x, b + y)))
}

/// Residual-sum-of-squares test of `a_target ≡ c` on a pure varying design.
pub fn test_t3(design: &GroupedDesign, target: usize) -> Result<TestResult> {
    let (p, size, k) = (design.p(), design.group_size(), design.k());
    if design.q() > 0 {
        return Err(Error::InvalidParameter(
            "T3 expects a pure varying design; fold constant columns into X first".into(),
        ));
    }
    if size <= p {
        return Err(Error::InvalidParameter(format!(
            "T3 needs group size > p (I = {size}, p = {p})"
        )));
    }
    if target >= p {
        return Err(Error::InvalidParameter(format!("target column {target} out of range for p = {p}")));
    }
    let full = fit_groups(design)?;
    let rss1 = full.rss1;
    let null_design = design.move_to_constant(target)?;
    let rss0 = fit_lape(&null_design, false)?.rss0;
    if rss0 < rss1 - 1e-8 * rss1.max(1.0) {
        return Err(Error::NonNested { rss0, rss1 });
    }
    if !(rss1 > 0.0) {
        return Err(Error::ZeroRss1);
    }
    let n = design.n() as f64;
    let kf = k as f64;
    let t3 = n / 2.0 * (rss0 - rss1) / rss1;

    let dof = (k * (size - p)) as f64;
    let sigma2 = rss1 / dof;
    let sum_r4: f64 = full.residuals.iter().map(|r| r.powi(4)).sum();
    let (diag_sq, fourth) = residual_maker_moments(design)?;
    // E Σr⁴ = (μ₄ − 3σ⁴) Σ M_ij⁴ + 3σ⁴ Σ M_ii²
    let excess = (sum_r4 / (sigma2 * sigma2) - 3.0 * diag_sq) / fourth;
    let mu4 = (3.0 + excess) * sigma2 * sigma2;
    let psi = psi_n(design, target)?;
    let sigma3_sq = psi.value * excess + 2.0 * kf;
    if !(sigma3_sq > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let scale = 2.0 * (size - p) as f64 / size as f64;
    let scaled = scale * t3;
    let standardized = (scaled - kf) / sigma3_sq.sqrt();
    let null_law = NullLaw::StdNormal;
    let chi = NullLaw::ChiSquared { df: kf };

    let nuisance = BTreeMap::from([
        ("rss0".to_string(), rss0),
        ("rss1".to_string(), rss1),
        ("sigma2_hat".to_string(), sigma2),
        ("mu4_hat".to_string(), mu4),
        ("mu4_naive".to_string(), sum_r4 / dof),
        ("excess_kurtosis".to_string(), excess),
        ("psi_n".to_string(), psi.value),
        ("sigma3_sq".to_string(), sigma3_sq),
        ("scaled_t3".to_string(), scaled),
        ("n".to_string(), n),
        ("k".to_string(), kf),
    ]);
    Ok(TestResult {
        test: TestKind::T3,
        statistic: t3,
        standardized,
        null_law,
        p_value: null_law.upper_tail(standardized)?,
        nuisance,
        config: TestConfig {
            group_size: size,
            bandwidth: None,
            kernel: None,
            target: Some(target),
            weighted: None,
            smoother: None,
        },
        alternative: Some(Referral {
            statistic: scaled,
            null_law: chi,
            p_value: chi.upper_tail(scaled)?,
            note: "valid when the errors are mesokurtic (e.g. normal)".into(),
        }),
        caveat: None,
    })
}

/// Which test to run and with what smoothing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub kind: TestKind,
    /// 0-based index of the tested coefficient.
    pub target: usize,
    pub kernel: Kernel,
    /// Required by T1 and T2.
    pub bandwidth: Option<f64>,
    /// T2 only.
    pub weighted: bool,
    /// T2 only.
    #[serde(default)]
    pub smoother: T2Smoother,
}

/// Runs several tests on one design, sharing the local average fit.
pub fn run_tests(design: &GroupedDesign, specs: &[TestSpec]) -> Vec<Result<TestResult>> {
    let needs_fit = specs.iter().any(|s| s.kind != TestKind::T3);
    let fit = needs_fit.then(|| fit_groups(design));
    specs
        .iter()
        .map(|spec| {
            let mut result = match spec.kind {
                TestKind::T3 => test_t3(design, spec.target)?,
                _ => match &fit {
                    Some(Ok(fit)) => run_pointwise_test(fit, spec)?,
                    Some(Err(e)) => return Err(e.clone()),
                    None => unreachable!("fit computed for T1/T2"),
                },
            };
            result.config.target = Some(spec.target);
            Ok(result)
        })
        .collect()
}

pub fn run_test(design: &GroupedDesign, spec: &TestSpec) -> Result<TestResult> {
    run_tests(design, std::slice::from_ref(spec)).remove(0)
}

fn run_pointwise_test(fit: &LocalAverageFit, spec: &TestSpec) -> Result<TestResult> {
    let h = spec.bandwidth.ok_or_else(|| {
        Error::InvalidParameter(format!("{:?} needs a bandwidth", spec.kind))
    })?;
    let sel = SelectionVector::new(spec.target, fit.p())?;
    let points = to_pointwise_model(fit, sel)?;
    match spec.kind {
        TestKind::T1 => test_t1(&points, spec.kernel, h, fit.group_size),
        TestKind::T2 => {
            let gamma = gamma_hat(fit, sel, spec.kernel, h)?;
            let weighting = if spec.weighted {
                T2Weighting::Weighted {
                    gamma: &gamma,
                    sigma2: fit.sigma2()?,
                }
            } else {
                T2Weighting::Unweighted { gamma: Some(&gamma) }
            };
            test_t2(&points, spec.kernel, h, fit.group_size, spec.smoother, weighting)
        }
        TestKind::T3 => unreachable!("T3 is run from the design"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{sort_and_group, Dataset};

    #[test]
    fn t1_constant_points_degenerate() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 / 10.0, 1.5)).collect();
        assert_eq!(
            test_t1(&pts, Kernel::Epanechnikov, 0.3, 5).unwrap_err(),
            Error::DegenerateVariance
        );
    }

    #[test]
    fn t1_three_points_by_enumeration() {
        let pts = [(0.0, 1.0), (0.25, 4.0), (0.6, -2.0)];
        let h = 0.5;
        let c = 1.0;
        let e = [0.0, 3.0, -3.0];
        let k = |d: f64| Kernel::Uniform.eval(d / h) / h;
        // six ordered pairs; only |Δu| < 0.5 contribute
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    s += k(pts[i].0 - pts[j].0) * e[i] * e[j];
                }
            }
        }
        let oracle = s / 6.0;
        let r = test_t1(&pts, Kernel::Uniform, h, 4).unwrap();
        assert!((r.statistic - oracle).abs() < 1e-14);
        assert!((r.nuisance["c_hat"] - c).abs() < 1e-15);
        // only the pair (0.25, 0.6) is inside the window
        assert!((oracle - (2.0 * 1.0 * 3.0 * -3.0) / 6.0).abs() < 1e-14);
    }

    #[test]
    fn t1_invariant_to_relabeling_and_scale() {
        let pts: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let u = (i as f64 * 0.37).fract();
                (u, (u * 9.0).sin() + 0.1 * (i as f64).cos())
            })
            .collect();
        let a = test_t1(&pts, Kernel::Epanechnikov, 0.2, 10).unwrap();
        let mut rev = pts.clone();
        rev.reverse();
        let b = test_t1(&rev, Kernel::Epanechnikov, 0.2, 10).unwrap();
        assert!((a.statistic - b.statistic).abs() < 1e-15);
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(u, v)| (u, 3.0 * v + 7.0)).collect();
        let c = test_t1(&scaled, Kernel::Epanechnikov, 0.2, 10).unwrap();
        assert!((a.standardized - c.standardized).abs() < 1e-9);
        assert!((c.statistic - 9.0 * a.statistic).abs() < 1e-9 * a.statistic.abs().max(1.0));
    }

    #[test]
    fn t2_constant_points_zero_rss() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 / 10.0, 2.0)).collect();
        let err = test_t2(&pts, Kernel::Epanechnikov, 0.3, 5, T2Smoother::LocalLinear, T2Weighting::Unweighted { gamma: None });
        assert_eq!(err.unwrap_err(), Error::ZeroRss1);
    }

    #[test]
    fn t2_referral_constants() {
        let pts: Vec<(f64, f64)> = (0..=20)
            .map(|i| (i as f64 / 20.0, ((i * 13) % 7) as f64))
            .collect();
        let r = test_t2(&pts, Kernel::Epanechnikov, 0.2, 5, T2Smoother::NadarayaWatson, T2Weighting::Unweighted { gamma: None }).unwrap();
        let c = Kernel::Epanechnikov.constants();
        assert!((r.nuisance["r_n"] - 0.45 / c.kappa2).abs() < 1e-12);
        assert!((r.nuisance["a_n"] - 0.45 * 0.45 / c.kappa2 / 0.2).abs() < 1e-9);
        assert!(r.caveat.is_some());
        assert!(r.nuisance["rss0"] >= 0.0 && r.nuisance["rss1"] >= 0.0);
        assert!(r.p_value >= 0.0 && r.p_value <= 1.0);
    }

    #[test]
    fn psi_single_regressor() {
        // X = (1, 1): m = −X, M = 2, ratio = 2/4
        let u = vec![0.1, 0.2, 0.3, 0.4];
        let x = DMatrix::from_element(4, 1, 1.0);
        let d = sort_and_group(&Dataset::new(u, x, None, vec![0.0; 4]).unwrap(), 2).unwrap();
        let psi = psi_n(&d, 0).unwrap();
        assert_eq!(psi.ratios.len(), 2);
        for r in &psi.ratios {
            assert!((r - 0.5).abs() < 1e-15);
        }
        assert!((psi.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn psi_additive_over_identical_groups() {
        let block = [1.0, 0.3, 1.0, -1.2, 1.0, 0.7, 1.0, 2.0, 1.0, -0.4];
        let reps = 4;
        let n = 5 * reps;
        let u = (0..n).map(|i| i as f64).collect();
        let x = DMatrix::from_fn(n, 2, |i, j| block[(i % 5) * 2 + j]);
        let d = sort_and_group(&Dataset::new(u, x, None, vec![0.0; n]).unwrap(), 5).unwrap();
        let psi = psi_n(&d, 1).unwrap();
        assert!((psi.value - reps as f64 * psi.ratios[0]).abs() < 1e-12);
        for r in psi.ratios {
            assert!((0.2..=1.0).contains(&r));
        }
    }

    #[test]
    fn psi_ratio_reaches_the_lower_bound() {
        // X = (1, x) with x = (−1, −1, 1, 1): m = −(x − x̄), Σm⁴ = 4, M = 4
        let u = vec![0.1, 0.2, 0.3, 0.4];
        let x = DMatrix::from_row_slice(4, 2, &[1.0, -1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0]);
        let d = sort_and_group(&Dataset::new(u, x, None, vec![0.0; 4]).unwrap(), 4).unwrap();
        let psi = psi_n(&d, 1).unwrap();
        assert!((psi.ratios[0] - 0.25).abs() < 1e-15);
        let internals = t3_internals(&d, 1).unwrap();
        assert!((internals[0].m_scalar - 4.0).abs() < 1e-14);
        assert!((internals[0].b - 4.0).abs() < 1e-15);
        assert!((internals[0].c[0]).abs() < 1e-15);
    }

    #[test]
    fn t3_exact_null_has_nonnegative_statistic() {
        let n = 60;
        let u: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { ((i * 7) as f64).sin() });
        let y = (0..n).map(|i| x[(i, 1)] * 2.0 + ((i * 3) as f64).cos() * 0.1 + u[i]).collect();
        let d = sort_and_group(&Dataset::new(u, x, None, y).unwrap(), 6).unwrap();
        let r = test_t3(&d, 1).unwrap();
        assert!(r.statistic >= -1e-8);
        let alt = r.alternative.unwrap();
        assert_eq!(alt.null_law, NullLaw::ChiSquared { df: 10.0 });
        assert!((alt.statistic - 2.0 * 4.0 / 6.0 * r.statistic).abs() < 1e-9);
    }

    #[test]
    fn t3_requires_spare_rows() {
        let n = 20;
        let u: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let x = DMatrix::from_fn(n, 2, |i, j| ((i + j) as f64).sin());
        let d = sort_and_group(&Dataset::new(u, x, None, vec![0.0; n]).unwrap(), 2).unwrap();
        assert!(matches!(test_t3(&d, 0), Err(Error::InvalidParameter(_))));
    }
}
