//! Second-stage smoothing of the pointwise estimates: local polynomial
//! regression, Nadaraya–Watson, kernel density estimation and pointwise
//! confidence bands for the smoothed coefficient curve.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::local_average::{gamma_hat, to_pointwise_model, LocalAverageFit, SelectionVector};

/// Maximum number of bandwidth doublings when window expansion is enabled.
pub const MAX_WINDOW_DOUBLINGS: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum Degree {
    Linear,
    Cubic,
}

impl Degree {
    pub fn order(self) -> usize {
        match self {
            Degree::Linear => 1,
            Degree::Cubic => 3,
        }
    }
}

impl TryFrom<usize> for Degree {
    type Error = Error;

    fn try_from(d: usize) -> Result<Self> {
        match d {
            1 => Ok(Degree::Linear),
            3 => Ok(Degree::Cubic),
            other => Err(Error::InvalidParameter(format!(
                "smoothing degree must be 1 or 3, got {other}"
            ))),
        }
    }
}

impl From<Degree> for usize {
    fn from(d: Degree) -> usize {
        d.order()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherSpec {
    pub kernel: Kernel,
    pub bandwidth: f64,
    pub degree: Degree,
}

impl SmootherSpec {
    pub fn new(kernel: Kernel, bandwidth: f64, degree: usize) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        Ok(SmootherSpec {
            kernel,
            bandwidth,
            degree: Degree::try_from(degree)?,
        })
    }
}

pub(crate) fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("bandwidth must be positive, got {h}")))
    }
}

/// Local polynomial estimate at `u`: the intercept of a kernel-weighted
/// polynomial fit in the centred variable `(Ū − u)`.
pub fn local_poly(points: &[(f64, f64)], spec: &SmootherSpec, u: f64) -> Result<f64> {
    check_bandwidth(spec.bandwidth)?;
    local_poly_coefficients(points, spec.kernel, spec.bandwidth, spec.degree.order(), u)
        .map(|c| c[0])
}

/// As [`local_poly`], but when the window at `u` is empty or rank deficient
/// the bandwidth is doubled, at most [`MAX_WINDOW_DOUBLINGS`] times.
pub fn local_poly_expanding(points: &[(f64, f64)], spec: &SmootherSpec, u: f64) -> Result<f64> {
    check_bandwidth(spec.bandwidth)?;
    let mut h = spec.bandwidth;
    let mut attempt = 0;
    loop {
        match local_poly_coefficients(points, spec.kernel, h, spec.degree.order(), u) {
            Ok(c) => return Ok(c[0]),
            Err(Error::EmptyWindow(_) | Error::RankDeficientWindow { .. })
                if attempt < MAX_WINDOW_DOUBLINGS =>
            {
                attempt += 1;
                h *= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Coefficients of the local polynomial in the scaled variable `(Ū − u)/h`.
/// Entry `j` times `j!/hʲ` estimates the `j`-th derivative at `u`.
pub(crate) fn local_poly_coefficients(
    points: &[(f64, f64)],
    kernel: Kernel,
    h: f64,
    degree: usize,
    u: f64,
) -> Result<DVector<f64>> {
    let cols = degree + 1;
    let window: Vec<(f64, f64, f64)> = points
        .iter()
        .filter_map(|&(x, y)| {
            let t = (x - u) / h;
            let w = kernel.eval(t);
            (w > 0.0).then_some((t, y, w.sqrt()))
        })
        .collect();
    if window.is_empty() {
        return Err(Error::EmptyWindow(u));
    }
    let rank_err = Error::RankDeficientWindow { u, needed: cols };
    if window.len() < cols {
        return Err(rank_err);
    }
    let m = window.len();
    let a = DMatrix::from_fn(m, cols, |i, j| window[i].2 * window[i].0.powi(j as i32));
    let b = DVector::from_fn(m, |i, _| window[i].2 * window[i].1);
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

/// Kernel-weighted local average `Σ K_h(Ūⱼ − u) âⱼ / Σ K_h(Ūⱼ − u)`.
pub fn nadaraya_watson(points: &[(f64, f64)], kernel: Kernel, h: f64, u: f64) -> Result<f64> {
    check_bandwidth(h)?;
    let (num, den) = points.iter().fold((0.0, 0.0), |(num, den), &(x, y)| {
        let w = kernel.eval((x - u) / h);
        (num + w * y, den + w)
    });
    if den > 0.0 {
        Ok(num / den)
    } else {
        Err(Error::EmptyWindow(u))
    }
}

/// Kernel density estimate `(1/(mh)) Σ K((u − vⱼ)/h)`.
pub fn kde(values: &[f64], kernel: Kernel, h: f64, u: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let s: f64 = values.iter().map(|&v| kernel.eval((u - v) / h)).sum();
    s / (values.len() as f64 * h)
}

/// Rule-of-thumb bandwidth `1.06 · sd · m^{-1/5}`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let m = values.len() as f64;
    if m < 2.0 {
        return 1.0;
    }
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    1.06 * var.sqrt() * m.powf(-0.2)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SmoothOptions {
    pub expand_window: bool,
}

/// A smoothed coefficient curve on an evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedCurve {
    pub grid: Vec<f64>,
    pub value: Vec<f64>,
    /// Pointwise normal-quantile half-width at the requested level.
    pub band_halfwidth: Option<Vec<f64>>,
    /// Plug-in asymptotic bias (not subtracted from `value`); `None` where the
    /// derivative pilot fit failed.
    pub bias_est: Option<Vec<Option<f64>>>,
}

impl SmoothedCurve {
    /// Writes `u,value,lower,upper,bias_est`; missing entries are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["u", "value", "lower", "upper", "bias_est"])
            .map_err(io)?;
        for (i, (&u, &v)) in self.grid.iter().zip(&self.value).enumerate() {
            let (lo, hi) = match &self.band_halfwidth {
                Some(b) => ((v - b[i]).to_string(), (v + b[i]).to_string()),
                None => (String::new(), String::new()),
            };
            let bias = self
                .bias_est
                .as_ref()
                .and_then(|b| b[i])
                .map(|b| b.to_string())
                .unwrap_or_default();
            w.write_record([u.to_string(), v.to_string(), lo, hi, bias])
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Smooths the pointwise estimates of coefficient `sel` over `grid`.
///
/// With `alpha` set, adds pointwise bands `± z_{1−α/2} · sd(u)` where the
/// variance is the plug-in asymptotic variance of the local linear (degree 1)
/// or local cubic (degree 3) smoother, using `σ̂²`, the kernel-smoothed
/// `Γ̂_ll(u)` at bandwidth `h` and a rule-of-thumb density estimate of the
/// group centres. Bias estimates use a pilot local polynomial of degree
/// `degree + 2` at the same bandwidth.
pub fn smooth_coefficient(
    fit: &LocalAverageFit,
    sel: SelectionVector,
    spec: &SmootherSpec,
    grid: &[f64],
    alpha: Option<f64>,
    opts: &SmoothOptions,
) -> Result<SmoothedCurve> {
    check_bandwidth(spec.bandwidth)?;
    let points = to_pointwise_model(fit, sel)?;
    let lo = fit.u_bar.first().copied().unwrap_or(f64::NAN);
    let hi = fit.u_bar.last().copied().unwrap_or(f64::NAN);
    let slack = 1e-12 * (hi - lo).abs().max(1.0);
    if let Some(&u) = grid.iter().find(|&&u| !(u >= lo - slack && u <= hi + slack)) {
        return Err(Error::OutOfRange { u, lo, hi });
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
    }

    let value = grid
        .par_iter()
        .map(|&u| {
            if opts.expand_window {
                local_poly_expanding(&points, spec, u)
            } else {
                local_poly(&points, spec, u)
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;

    let band_halfwidth = match alpha {
        Some(alpha) => Some(band_halfwidths(fit, sel, spec, grid, alpha)?),
        None => None,
    };

    let constants = spec.kernel.constants();
    let h = spec.bandwidth;
    let bias_est = grid
        .iter()
        .map(|&u| {
            let (pilot_degree, factor, order) = match spec.degree {
                Degree::Linear => (3, constants.linear_bias_factor(), 2),
                Degree::Cubic => (5, constants.cubic_bias_factor(), 4),
            };
            local_poly_coefficients(&points, spec.kernel, h, pilot_degree, u)
                .ok()
                .map(|c| {
                    // c[order] · order! / h^order is the derivative; times h^order
                    let fact: f64 = (1..=order).map(|j| j as f64).product();
                    factor * c[order] * fact
                })
        })
        .collect();

    Ok(SmoothedCurve {
        grid: grid.to_vec(),
        value,
        band_halfwidth,
        bias_est: Some(bias_est),
    })
}

/// Plug-in pointwise variance of the smoothed coefficient at each grid point.
pub fn plug_in_variance(
    fit: &LocalAverageFit,
    sel: SelectionVector,
    spec: &SmootherSpec,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let sigma2 = fit.sigma2()?;
    let gamma = gamma_hat(fit, sel, spec.kernel, spec.bandwidth)?;
    let f_bw = silverman_bandwidth(&fit.u_bar);
    let constants = spec.kernel.constants();
    let factor = match spec.degree {
        Degree::Linear => constants.linear_variance_factor(),
        Degree::Cubic => constants.cubic_variance_factor(),
    };
    let n = fit.n() as f64;
    let group_size = fit.group_size as f64;
    grid.iter()
        .map(|&u| {
            let density = kde(&fit.u_bar, spec.kernel, f_bw, u);
            if density <= 0.0 {
                return Err(Error::EmptyWindow(u));
            }
            let g = gamma.eval(u)?;
            Ok(factor * sigma2 * group_size / (n * spec.bandwidth * density) * g)
        })
        .collect()
}

fn band_halfwidths(
    fit: &LocalAverageFit,
    sel: SelectionVector,
    spec: &SmootherSpec,
    grid: &[f64],
    alpha: f64,
) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let z = normal_upper_quantile(alpha / 2.0);
    Ok(plug_in_variance(fit, sel, spec, grid)?
        .into_iter()
        .map(|v| z * v.sqrt())
        .collect())
}

/// `z` with `P(N(0,1) > z) = tail`.
pub fn normal_upper_quantile(tail: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - tail)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_points(m: usize, f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        (0..m)
            .map(|i| {
                let u = i as f64 / (m - 1) as f64;
                (u, f(u))
            })
            .collect()
    }

    #[test]
    fn reproduces_cubic() {
        let q = |u: f64| 1.0 + u - 2.0 * u.powi(3);
        let pts = grid_points(40, q);
        for h in [0.15, 0.4, 2.0] {
            let spec = SmootherSpec::new(Kernel::Epanechnikov, h, 3).unwrap();
            for &u in &[0.2, 0.5, 0.77] {
                assert!((local_poly(&pts, &spec, u).unwrap() - q(u)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn linear_on_constants() {
        let pts = grid_points(10, |_| 4.5);
        let spec = SmootherSpec::new(Kernel::Uniform, 0.3, 1).unwrap();
        assert!((local_poly(&pts, &spec, 0.41).unwrap() - 4.5).abs() < 1e-12);
    }

    #[test]
    fn seven_points_against_weighted_normal_equations() {
        let pts = [
            (0.10, 1.3),
            (0.25, -0.2),
            (0.40, 0.8),
            (0.52, 2.1),
            (0.61, 1.7),
            (0.70, 0.4),
            (0.95, 3.0),
        ];
        let (u, h) = (0.5, 0.3);
        // oracle: solve (XᵀWX) β = XᵀWy by Cramer's rule on the 2×2 system
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(x, y) in &pts {
            let d = x - u;
            let w = Kernel::Epanechnikov.eval(d / h) / h;
            s0 += w;
            s1 += w * d;
            s2 += w * d * d;
            t0 += w * y;
            t1 += w * d * y;
        }
        let oracle = (s2 * t0 - s1 * t1) / (s0 * s2 - s1 * s1);
        let spec = SmootherSpec::new(Kernel::Epanechnikov, h, 1).unwrap();
        assert!((local_poly(&pts, &spec, u).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn window_errors_and_expansion() {
        let pts = grid_points(11, |u| u);
        let spec = SmootherSpec::new(Kernel::Epanechnikov, 0.05, 3).unwrap();
        assert!(matches!(local_poly(&pts, &spec, 5.0), Err(Error::EmptyWindow(_))));
        assert!(matches!(
            local_poly(&pts, &spec, 0.5),
            Err(Error::RankDeficientWindow { needed: 4, .. })
        ));
        let v = local_poly_expanding(&pts, &spec, 0.5).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        // four doublings are not enough this far out
        assert!(local_poly_expanding(&pts, &spec, 3.0).is_err());
    }

    #[test]
    fn degree_validation() {
        assert!(SmootherSpec::new(Kernel::Epanechnikov, 0.2, 2).is_err());
        assert!(SmootherSpec::new(Kernel::Epanechnikov, 0.0, 1).is_err());
    }

    #[test]
    fn nw_examples() {
        let pts = grid_points(9, |_| 2.5);
        assert!((nadaraya_watson(&pts, Kernel::Biweight, 0.2, 0.33).unwrap() - 2.5).abs() < 1e-12);
        let two = [(0.4, 1.0), (0.6, 3.0)];
        assert!((nadaraya_watson(&two, Kernel::Epanechnikov, 0.3, 0.5).unwrap() - 2.0).abs() < 1e-12);
        let five = [(0.0, 1.0), (0.1, 2.0), (0.2, 4.0), (0.3, 8.0), (0.9, 100.0)];
        // weights at u = 0.15, h = 0.25: K(−0.6), K(−0.2), K(0.2), K(0.6), 0
        let w = [0.48, 0.72, 0.72, 0.48];
        let oracle = (w[0] * 1.0 + w[1] * 2.0 + w[2] * 4.0 + w[3] * 8.0) / 2.4;
        let v = nadaraya_watson(&five, Kernel::Epanechnikov, 0.25, 0.15).unwrap();
        assert!((v - oracle).abs() < 1e-12);
        assert!(nadaraya_watson(&five, Kernel::Epanechnikov, 0.25, 2.0).is_err());
    }

    #[test]
    fn kde_examples() {
        assert!((kde(&[0.3], Kernel::Epanechnikov, 0.5, 0.3) - 1.5).abs() < 1e-15);
        let values: Vec<f64> = (0..10_000).map(|i| (i as f64 + 0.5) / 1e4).collect();
        assert!((kde(&values, Kernel::Epanechnikov, 0.05, 0.5) - 1.0).abs() < 0.02);
        assert_eq!(kde(&values, Kernel::Epanechnikov, 0.05, 3.0), 0.0);
        // integrates to one
        let m = 2000;
        let grid: Vec<f64> = (0..=m).map(|i| -0.5 + 2.0 * i as f64 / m as f64).collect();
        let f: Vec<f64> = grid.iter().map(|&u| kde(&values[..500], Kernel::Epanechnikov, 0.02, u)).collect();
        let integral: f64 = f.windows(2).map(|w| 0.5 * (w[0] + w[1]) * 0.001).sum();
        assert!((integral - 1.0).abs() < 0.01);
    }

    #[test]
    fn normal_quantile() {
        assert!((normal_upper_quantile(0.025) - 1.959964).abs() < 1e-6);
    }

    #[test]
    fn curve_csv_layout() {
        let c = SmoothedCurve {
            grid: vec![0.1, 0.2],
            value: vec![1.0, 2.0],
            band_halfwidth: Some(vec![0.5, 0.25]),
            bias_est: Some(vec![Some(0.01), None]),
        };
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "u,value,lower,upper,bias_est\n0.1,1,0.5,1.5,0.01\n0.2,2,1.75,2.25,\n");
    }
}
