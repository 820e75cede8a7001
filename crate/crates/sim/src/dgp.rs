//! Data-generating processes of the simulation examples.
//!
//! Examples 1–3 are varying coefficient models with correlated covariates,
//! 4–6 add a constant coefficient `b = 1` on an independent `X₃`, and 7–8 are
//! the alternative families `a₂ = a·g(u) + (1 − a)` used for power curves
//! (`a = 0` is the null model). `PartiallyLinear` is `Y = sin(2πU) + Z + σε`.
//! The noise scale is `σ² = 0.2 · Var[m(U, X)]`, computed once per model by
//! Monte Carlo and cached.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use lavc::Dataset;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};

/// Draws used to calibrate the noise scale.
pub const CALIBRATION_DRAWS: usize = 1_000_000;
const CALIBRATION_SEED: u64 = 0x5EED_CA11_B8A7_E000;
const SNR_FACTOR: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    Example { id: u8, a_param: Option<f64> },
    PartiallyLinear,
}

impl Model {
    pub fn example(id: u8) -> SimResult<Self> {
        let m = Model::Example { id, a_param: None };
        m.validate()?;
        Ok(m)
    }

    pub fn alternative(id: u8, a: f64) -> SimResult<Self> {
        let m = Model::Example { id, a_param: Some(a) };
        m.validate()?;
        Ok(m)
    }

    /// Example 7 with `a = 0`: `a₁ = sin(60u)`, `a₂ ≡ 1`.
    pub fn null_model() -> Self {
        Model::Example { id: 7, a_param: Some(0.0) }
    }

    pub fn validate(&self) -> SimResult<()> {
        match *self {
            Model::Example { id, a_param } => {
                if !(1..=8).contains(&id) {
                    return Err(SimError::Config(format!("example id must be 1..8, got {id}")));
                }
                match (id >= 7, a_param) {
                    (true, Some(a)) if (0.0..=1.0).contains(&a) => Ok(()),
                    (true, Some(a)) => Err(SimError::Config(format!("a_param must be in [0, 1], got {a}"))),
                    (true, None) => Err(SimError::Config(format!("example {id} needs a_param"))),
                    (false, Some(_)) => Err(SimError::Config(format!("example {id} takes no a_param"))),
                    (false, None) => Ok(()),
                }
            }
            Model::PartiallyLinear => Ok(()),
        }
    }

    /// Number of varying coefficients.
    pub fn p(&self) -> usize {
        match self {
            Model::Example { .. } => 2,
            Model::PartiallyLinear => 1,
        }
    }

    /// Number of constant coefficients.
    pub fn q(&self) -> usize {
        match self {
            Model::Example { id: 4..=6, .. } | Model::PartiallyLinear => 1,
            Model::Example { .. } => 0,
        }
    }

    pub fn b(&self) -> Option<f64> {
        (self.q() > 0).then_some(1.0)
    }

    /// Varying coefficients at `u`.
    pub fn coefficients(&self, u: f64) -> [f64; 2] {
        let bump = || 3.5 * ((-(4.0 * u - 1.0).powi(2)).exp() + (-(4.0 * u - 3.0).powi(2)).exp()) - 1.5;
        match *self {
            Model::Example { id: 1, .. } => [(60.0 * u).sin(), 4.0 * u * (1.0 - u)],
            Model::Example { id: 2, .. } => [(6.0 * PI * u).sin(), (2.0 * PI * u).sin()],
            Model::Example { id: 3, .. } => [(8.0 * PI * (u - 0.5)).sin(), bump()],
            Model::Example { id: 4, .. } => [(2.0 * PI * u).sin(), (2.0 * PI * u).cos()],
            Model::Example { id: 5, .. } => [(2.0 * PI * u).sin(), bump()],
            Model::Example { id: 6, .. } => [(6.0 * PI * (u - 0.5)).sin(), (2.0 * PI * u).sin()],
            Model::Example { id: 7, a_param } => {
                let a = a_param.unwrap_or(0.0);
                [(60.0 * u).sin(), a * 4.0 * u * (1.0 - u) + (1.0 - a)]
            }
            Model::Example { a_param, .. } => {
                let a = a_param.unwrap_or(0.0);
                [(6.0 * PI * u).sin(), a * (2.0 * PI * u).sin() + (1.0 - a)]
            }
            Model::PartiallyLinear => [(2.0 * PI * u).sin(), 0.0],
        }
    }

    /// The coefficient studied in MISE comparisons and tests: `a₂`, or `a₁`
    /// for the single-coefficient model.
    pub fn target(&self) -> usize {
        self.p() - 1
    }

    pub fn target_coefficient(&self, u: f64) -> f64 {
        self.coefficients(u)[self.target()]
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Row {
        let u: f64 = rng.random();
        let n1: f64 = rng.sample(StandardNormal);
        let n2: f64 = rng.sample(StandardNormal);
        match self {
            Model::Example { id: 1..=3, .. } => {
                let rho = std::f64::consts::FRAC_1_SQRT_2;
                Row {
                    u,
                    x: [n1, rho * n1 + (1.0 - rho * rho).sqrt() * n2],
                    z: None,
                }
            }
            Model::Example { id: 4..=6, .. } => {
                let n3: f64 = rng.sample(StandardNormal);
                Row { u, x: [n1, n2], z: Some(n3) }
            }
            Model::Example { .. } => Row { u, x: [n1, n2], z: None },
            Model::PartiallyLinear => Row { u, x: [1.0, 0.0], z: Some(n1) },
        }
    }

    fn mean(&self, row: &Row) -> f64 {
        let a = self.coefficients(row.u);
        let varying: f64 = (0..self.p()).map(|l| a[l] * row.x[l]).sum();
        varying + row.z.map_or(0.0, |z| z * self.b().unwrap_or(0.0))
    }

    fn cache_key(&self) -> (u8, u64) {
        match *self {
            Model::Example { id, a_param } => (id, a_param.map_or(u64::MAX, f64::to_bits)),
            Model::PartiallyLinear => (0, 0),
        }
    }

    /// `Var[m(U, X)]` by Monte Carlo; computed once per model and cached.
    pub fn signal_variance(&self) -> f64 {
        static CACHE: OnceLock<Mutex<HashMap<(u8, u64), f64>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let key = self.cache_key();
        if let Some(&v) = cache.lock().expect("calibration cache poisoned").get(&key) {
            return v;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(CALIBRATION_SEED);
        let (mut mean, mut m2) = (0.0, 0.0);
        for i in 0..CALIBRATION_DRAWS {
            let v = self.mean(&self.draw(&mut rng));
            let delta = v - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (v - mean);
        }
        let var = m2 / (CALIBRATION_DRAWS - 1) as f64;
        *cache.lock().expect("calibration cache poisoned").entry(key).or_insert(var)
    }

    /// Noise scale giving a 5:1 signal-to-noise ratio.
    pub fn calibrated_sigma(&self) -> f64 {
        (SNR_FACTOR * self.signal_variance()).sqrt()
    }
}

struct Row {
    u: f64,
    x: [f64; 2],
    z: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDist {
    #[default]
    Normal,
    /// Uniform on `[−√3, √3]` (unit variance, kurtosis 1.8).
    Uniform,
}

impl NoiseDist {
    fn sample<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            NoiseDist::Normal => rng.sample(StandardNormal),
            NoiseDist::Uniform => {
                let s = 3f64.sqrt();
                Uniform::new_inclusive(-s, s).expect("valid bounds").sample(rng)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dgp {
    pub model: Model,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseDist,
    /// Replaces the calibrated noise scale (e.g. `0` for noiseless data).
    #[serde(default)]
    pub sigma_override: Option<f64>,
}

impl Dgp {
    pub fn new(model: Model, n: usize, seed: u64) -> Self {
        Dgp {
            model,
            n,
            seed,
            noise: NoiseDist::Normal,
            sigma_override: None,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_override.unwrap_or_else(|| self.model.calibrated_sigma())
    }

    pub fn validate(&self) -> SimResult<()> {
        self.model.validate()?;
        if self.n < 2 {
            return Err(SimError::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if let Some(s) = self.sigma_override {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(SimError::Config(format!("sigma must be nonnegative, got {s}")));
            }
        }
        Ok(())
    }

    /// Draws the dataset of replication `rep` from its own stream of the
    /// master `seed`.
    pub fn generate_replication(&self, rep: usize) -> SimResult<Dataset> {
        self.validate()?;
        let mut rng = replication_rng(self.seed, rep);
        let sigma = self.sigma();
        let mut u = Vec::with_capacity(self.n);
        let mut y = Vec::with_capacity(self.n);
        let p = self.model.p();
        let q = self.model.q();
        let mut x = DMatrix::zeros(self.n, p);
        let mut z = DMatrix::zeros(self.n, q);
        for i in 0..self.n {
            let row = self.model.draw(&mut rng);
            let eps = self.noise.sample(&mut rng);
            y.push(self.model.mean(&row) + sigma * eps);
            u.push(row.u);
            for l in 0..p {
                x[(i, l)] = row.x[l];
            }
            if let Some(v) = row.z {
                z[(i, 0)] = v;
            }
        }
        let x_names = (1..=p).map(|l| format!("x{l}")).collect();
        let z_names = (1..=q).map(|l| format!("z{l}")).collect();
        Ok(Dataset::with_names(u, x, (q > 0).then_some(z), y, x_names, z_names)?)
    }
}

/// Same as `dgp.generate_replication(0)`.
pub fn generate(dgp: &Dgp) -> SimResult<Dataset> {
    dgp.generate_replication(0)
}

/// Independent stream `rep` of the master seed; identical however the
/// replications are scheduled.
pub fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}
