//! Compactly supported smoothing kernels and the integral constants derived
//! from them.
//!
//! Every kernel is a symmetric density on `[-1, 1]`. On `[0, 1]` each one is a
//! polynomial in `|t|`, which gives exact moments of `K` and `K²`. The
//! self-convolution constant `κ₂` has no tabulated closed form here and is
//! computed by nested adaptive Simpson quadrature.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::quadrature::integrate_pieces;

const QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Epanechnikov,
    Uniform,
    Triangular,
    Biweight,
}

impl Kernel {
    pub const ALL: [Kernel; 4] = [
        Kernel::Epanechnikov,
        Kernel::Uniform,
        Kernel::Triangular,
        Kernel::Biweight,
    ];

    /// Coefficients of `K(t)` as a polynomial in `|t|` on `[0, 1]`.
    fn poly(self) -> &'static [f64] {
        match self {
            Kernel::Epanechnikov => &[0.75, 0.0, -0.75],
            Kernel::Uniform => &[0.5],
            Kernel::Triangular => &[1.0, -1.0],
            Kernel::Biweight => &[15.0 / 16.0, 0.0, -30.0 / 16.0, 0.0, 15.0 / 16.0],
        }
    }

    /// `K(t)`; zero outside `[-1, 1]`.
    #[inline]
    pub fn eval(self, t: f64) -> f64 {
        let a = t.abs();
        if a > 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Epanechnikov => 0.75 * (1.0 - a * a),
            Kernel::Uniform => 0.5,
            Kernel::Triangular => 1.0 - a,
            Kernel::Biweight => {
                let s = 1.0 - a * a;
                15.0 / 16.0 * s * s
            }
        }
    }

    /// Scaled kernel `K_h(x) = K(x / h) / h`.
    #[inline]
    pub fn eval_scaled(self, x: f64, h: f64) -> f64 {
        self.eval(x / h) / h
    }

    /// Self-convolution `(K * K)(t)`, supported on `[-2, 2]`.
    pub fn convolution(self, t: f64) -> f64 {
        let lo = (t - 1.0).max(-1.0);
        let hi = (t + 1.0).min(1.0);
        if lo >= hi {
            return 0.0;
        }
        let mut breaks = vec![lo];
        for kink in [0.0, t] {
            if kink > lo && kink < hi {
                breaks.push(kink);
            }
        }
        breaks.push(hi);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        integrate_pieces(&|s| self.eval(s) * self.eval(t - s), &breaks, 1e-13)
    }

    /// Kernel constants, computed once per kernel and cached.
    pub fn constants(self) -> &'static KernelConstants {
        static CACHE: [OnceLock<KernelConstants>; 4] =
            [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
        let slot = match self {
            Kernel::Epanechnikov => 0,
            Kernel::Uniform => 1,
            Kernel::Triangular => 2,
            Kernel::Biweight => 3,
        };
        CACHE[slot].get_or_init(|| KernelConstants::compute(self))
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Uniform => "uniform",
            Kernel::Triangular => "triangular",
            Kernel::Biweight => "biweight",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "epanechnikov" | "epa" => Ok(Kernel::Epanechnikov),
            "uniform" | "box" => Ok(Kernel::Uniform),
            "triangular" | "triangle" => Ok(Kernel::Triangular),
            "biweight" | "quartic" | "bisquare" => Ok(Kernel::Biweight),
            other => Err(Error::InvalidParameter(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Moments and test constants of a kernel.
///
/// `xi[i] = ∫ tⁱ K(t) dt` for `i = 0..=6`, `nu[i] = ∫ tⁱ K²(t) dt` for
/// `i = 0..=4`, `kappa1 = K(0) − ½∫K²` and `kappa2 = ∫ (K − ½ K*K)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub xi: [f64; 7],
    pub nu: [f64; 5],
    pub kappa1: f64,
    pub kappa2: f64,
}

impl KernelConstants {
    fn compute(kernel: Kernel) -> Self {
        let c = kernel.poly();
        let sq = poly_square(c);
        let mut xi = [0.0; 7];
        for (i, v) in xi.iter_mut().enumerate() {
            *v = even_moment(c, i);
        }
        let mut nu = [0.0; 5];
        for (i, v) in nu.iter_mut().enumerate() {
            *v = even_moment(&sq, i);
        }
        let kappa1 = kernel.eval(0.0) - 0.5 * nu[0];
        let integrand = |t: f64| {
            let d = kernel.eval(t) - 0.5 * kernel.convolution(t);
            d * d
        };
        // symmetric in t
        let kappa2 = 2.0 * integrate_pieces(&integrand, &[0.0, 1.0, 2.0], QUAD_TOL);
        KernelConstants {
            xi,
            nu,
            kappa1,
            kappa2,
        }
    }

    /// Variance constant of the local cubic smoother,
    /// `(ξ₄²ν₀ − 2ξ₄ξ₂ν₂ + ξ₂²ν₄) / (ξ₄ − ξ₂²)²`.
    pub fn cubic_variance_factor(&self) -> f64 {
        let (x2, x4) = (self.xi[2], self.xi[4]);
        let num = x4 * x4 * self.nu[0] - 2.0 * x4 * x2 * self.nu[2] + x2 * x2 * self.nu[4];
        num / (x4 - x2 * x2).powi(2)
    }

    /// Bias constant of the local cubic smoother, multiplying `a⁽⁴⁾(u) h⁴`.
    pub fn cubic_bias_factor(&self) -> f64 {
        let (x2, x4, x6) = (self.xi[2], self.xi[4], self.xi[6]);
        (x4 * x4 - x2 * x6) / (x4 - x2 * x2) / 24.0
    }

    /// Variance constant of the local linear smoother, `ν₀`.
    pub fn linear_variance_factor(&self) -> f64 {
        self.nu[0]
    }

    /// Bias constant of the local linear smoother, multiplying `a''(u) h²`.
    pub fn linear_bias_factor(&self) -> f64 {
        0.5 * self.xi[2]
    }
}

/// `∫_{-1}^{1} tⁱ P(|t|) dt` for a polynomial `P` given by coefficients.
fn even_moment(coeffs: &[f64], i: usize) -> f64 {
    if i % 2 == 1 {
        return 0.0;
    }
    2.0 * coeffs
        .iter()
        .enumerate()
        .map(|(m, c)| c / (i + m + 1) as f64)
        .sum::<f64>()
}

fn poly_square(c: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; 2 * c.len() - 1];
    for (i, a) in c.iter().enumerate() {
        for (j, b) in c.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}
