//! Simulators X1 to X6 with their oracle one-step predictors.
//!
//! Every path decomposes exactly as `x_t = oracle_t + innovation_t`, where
//! `oracle_t = E(x_t | F_{t-1})` under the generating law.
//!
//! | kind | deterministic part | innovation |
//! |------|--------------------|------------|
//! | X1 `ArmaIid` | ARMA(1,1) | iid Normal(0, 9) |
//! | X2 `ArmaAsym` | ARMA(1,1) | iid draws from a recentered X3 innovation pool |
//! | X3 `GarchSquared` | GARCH(1,1) conditional variance | `sigma_t^2 (z_t^2 - 1)` |
//! | X4 `NonlinIid` | Gaussian bump `g` | as X1 |
//! | X5 `NonlinAsym` | Gaussian bump `g` | as X2 |
//! | X6 `NonlinGarch` | Gaussian bump `g` | innovations of an auxiliary X3 path |
//!
//! The ARMA recursion is `x_t = phi0 + phi1 x_{t-1} - theta1 e_{t-1} + e_t`,
//! whose AR(inf) form is `x_t = phi0/(1-theta1) + sum_i (phi1-theta1) theta1^(i-1) x_{t-i} + e_t`.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{degenerate, invalid_arg, Result};
use crate::rng;
use crate::stats::mean;

pub const DEFAULT_LENGTH: usize = 6360;
pub const DEFAULT_BURN_IN: usize = 1000;
pub const MIN_BURN_IN: usize = 500;
/// Length of the X3 path whose innovations feed X2 and X5.
pub const POOL_LENGTH: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DgpKind {
    #[serde(rename = "x1")]
    ArmaIid,
    #[serde(rename = "x2")]
    ArmaAsym,
    #[serde(rename = "x3")]
    GarchSquared,
    #[serde(rename = "x4")]
    NonlinIid,
    #[serde(rename = "x5")]
    NonlinAsym,
    #[serde(rename = "x6")]
    NonlinGarch,
}

impl DgpKind {
    pub const ALL: [DgpKind; 6] = [
        DgpKind::ArmaIid,
        DgpKind::ArmaAsym,
        DgpKind::GarchSquared,
        DgpKind::NonlinIid,
        DgpKind::NonlinAsym,
        DgpKind::NonlinGarch,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DgpKind::ArmaIid => "x1",
            DgpKind::ArmaAsym => "x2",
            DgpKind::GarchSquared => "x3",
            DgpKind::NonlinIid => "x4",
            DgpKind::NonlinAsym => "x5",
            DgpKind::NonlinGarch => "x6",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label().eq_ignore_ascii_case(s))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmaParams {
    pub phi0: f64,
    pub phi1: f64,
    pub theta1: f64,
    pub innovation_variance: f64,
}

impl Default for ArmaParams {
    fn default() -> Self {
        Self { phi0: 0.18, phi1: 0.9, theta1: 0.74, innovation_variance: 9.0 }
    }
}

impl ArmaParams {
    /// One-step conditional mean given the previous observation and innovation.
    pub fn predict(&self, x_prev: f64, e_prev: f64) -> f64 {
        self.phi0 + self.phi1 * x_prev - self.theta1 * e_prev
    }

    pub fn unconditional_mean(&self) -> f64 {
        self.phi0 / (1.0 - self.phi1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta1: f64,
}

impl Default for GarchParams {
    fn default() -> Self {
        Self { alpha0: 0.18, alpha1: 0.16, beta1: 0.74 }
    }
}

impl GarchParams {
    pub fn is_stationary(&self) -> bool {
        self.alpha0 > 0.0 && self.alpha1 >= 0.0 && self.beta1 >= 0.0 && self.alpha1 + self.beta1 < 1.0
    }

    /// `alpha0 / (1 - alpha1 - beta1)`.
    pub fn unconditional_variance(&self) -> f64 {
        self.alpha0 / (1.0 - self.alpha1 - self.beta1)
    }

    /// Next conditional variance.
    #[inline]
    pub fn step(&self, y_prev: f64, var_prev: f64) -> f64 {
        self.alpha0 + self.alpha1 * y_prev + self.beta1 * var_prev
    }

    /// Conditional variances of `y` with `s_0 = initial` and
    /// `s_t = alpha0 + alpha1 y_{t-1} + beta1 s_{t-1}`.
    pub fn filter(&self, y: &[f64], initial: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(y.len());
        if y.is_empty() {
            return out;
        }
        out.push(initial);
        for t in 1..y.len() {
            out.push(self.step(y[t - 1], out[t - 1]));
        }
        out
    }
}

/// `g(x) = c + a exp(-(x - m)^2 / (2 s^2)) + b x`.
///
/// The defaults were calibrated with [`calibrate_nonlinear`] so that the
/// oracle of X4 has the same mean (1.8) and variance ratio
/// `var(oracle)/var(e)` as X1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinParams {
    pub c: f64,
    pub a: f64,
    pub m: f64,
    pub s: f64,
    pub b: f64,
}

impl Default for NonlinParams {
    fn default() -> Self {
        Self { c: NONLIN_C, a: NONLIN_A, m: 1.8, s: 2.0, b: 0.2 }
    }
}

const NONLIN_C: f64 = 0.088_812_238_751_620_6;
const NONLIN_A: f64 = 2.544_148_758_940_992;

impl NonlinParams {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.m) / self.s;
        self.c + self.a * (-0.5 * u * u).exp() + self.b * x
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DgpParams {
    #[serde(default)]
    pub arma: ArmaParams,
    #[serde(default)]
    pub garch: GarchParams,
    #[serde(default)]
    pub nonlin: NonlinParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    #[serde(default)]
    pub params: DgpParams,
    pub length: usize,
    pub seed: u64,
    pub burn_in: usize,
}

impl DgpSpec {
    pub fn new(kind: DgpKind, seed: u64) -> Self {
        Self { kind, params: DgpParams::default(), length: DEFAULT_LENGTH, seed, burn_in: DEFAULT_BURN_IN }
    }

    pub fn with_length(mut self, length: usize) -> Self {
        self.length = length;
        self
    }

    pub fn with_params(mut self, params: DgpParams) -> Self {
        self.params = params;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(invalid_arg("path length must be positive"));
        }
        if self.burn_in < MIN_BURN_IN {
            return Err(invalid_arg(format!("burn-in {} below {MIN_BURN_IN}", self.burn_in)));
        }
        let uses_garch = !matches!(self.kind, DgpKind::ArmaIid | DgpKind::NonlinIid);
        if uses_garch && !self.params.garch.is_stationary() {
            let g = self.params.garch;
            return Err(invalid_arg(format!(
                "GARCH parameters ({}, {}, {}) are not covariance stationary",
                g.alpha0, g.alpha1, g.beta1
            )));
        }
        let arma = self.params.arma;
        if matches!(self.kind, DgpKind::ArmaIid | DgpKind::ArmaAsym) {
            if !(arma.phi1.abs() < 1.0) {
                return Err(invalid_arg(format!("ARMA phi1 = {} is not stationary", arma.phi1)));
            }
            if !(arma.theta1.abs() < 1.0) {
                return Err(invalid_arg(format!("ARMA theta1 = {} is not invertible", arma.theta1)));
            }
        }
        if matches!(self.kind, DgpKind::ArmaIid | DgpKind::NonlinIid)
            && !(arma.innovation_variance > 0.0 && arma.innovation_variance.is_finite())
        {
            return Err(invalid_arg("innovation variance must be positive"));
        }
        let nl = self.params.nonlin;
        if matches!(self.kind, DgpKind::NonlinIid | DgpKind::NonlinAsym | DgpKind::NonlinGarch)
            && (!(nl.b.abs() < 1.0) || !(nl.s > 0.0))
        {
            return Err(invalid_arg("nonlinear g needs |b| < 1 and s > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPath {
    pub observations: Vec<f64>,
    pub oracle: Vec<f64>,
    pub innovations: Vec<f64>,
}

impl SimulatedPath {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// CSV with header `t,x,oracle,innovation`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "oracle", "innovation"]).map_err(csv_err)?;
        for t in 0..self.len() {
            w.write_record([
                t.to_string(),
                self.observations[t].to_string(),
                self.oracle[t].to_string(),
                self.innovations[t].to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => crate::Error::Io(io),
        other => crate::Error::InvalidData(format!("{other:?}")),
    }
}

/// Keeps the steps after the burn-in.
struct Recorder {
    keep_from: usize,
    path: SimulatedPath,
}

impl Recorder {
    fn new(burn_in: usize, n: usize) -> Self {
        Self {
            keep_from: burn_in,
            path: SimulatedPath {
                observations: Vec::with_capacity(n),
                oracle: Vec::with_capacity(n),
                innovations: Vec::with_capacity(n),
            },
        }
    }

    #[inline]
    fn push(&mut self, step: usize, oracle: f64, innovation: f64) -> f64 {
        let x = oracle + innovation;
        if step >= self.keep_from {
            self.path.observations.push(x);
            self.path.oracle.push(oracle);
            self.path.innovations.push(innovation);
        }
        x
    }
}

/// GARCH squared-return path: `(y_t, sigma_t^2)` with `sigma^2` started at
/// its unconditional value.
fn garch_squared(g: &GarchParams, steps: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let mut var = g.unconditional_variance();
    let mut y_prev = var;
    let mut ys = Vec::with_capacity(steps);
    let mut vars = Vec::with_capacity(steps);
    for _ in 0..steps {
        var = g.step(y_prev, var);
        let z: f64 = StandardNormal.sample(rng);
        let y = var * z * z;
        ys.push(y);
        vars.push(var);
        y_prev = y;
    }
    (ys, vars)
}

/// Recentered innovations `sigma_t^2 (z_t^2 - 1)` of a long X3 path.
pub fn innovation_pool(g: &GarchParams, len: usize, seed: u64) -> Result<Vec<f64>> {
    if !g.is_stationary() {
        return Err(invalid_arg("GARCH parameters are not covariance stationary"));
    }
    let mut rng = rng::stream(seed, 0);
    let (ys, vars) = garch_squared(g, len + DEFAULT_BURN_IN, &mut rng);
    let mut pool: Vec<f64> = ys[DEFAULT_BURN_IN..].iter().zip(&vars[DEFAULT_BURN_IN..]).map(|(y, v)| y - v).collect();
    let m = mean(&pool);
    pool.iter_mut().for_each(|e| *e -= m);
    Ok(pool)
}

enum Innovations {
    Normal(f64),
    Pool(Vec<f64>),
    Series(Vec<f64>),
}

impl Innovations {
    fn for_spec(spec: &DgpSpec) -> Result<Self> {
        let steps = spec.length + spec.burn_in;
        let garch = &spec.params.garch;
        Ok(match spec.kind {
            DgpKind::ArmaIid | DgpKind::NonlinIid => Innovations::Normal(spec.params.arma.innovation_variance.sqrt()),
            DgpKind::ArmaAsym | DgpKind::NonlinAsym => {
                Innovations::Pool(innovation_pool(garch, POOL_LENGTH, rng::derive_seed(spec.seed, "pool"))?)
            }
            DgpKind::NonlinGarch => {
                let mut aux = rng::stream(rng::derive_seed(spec.seed, "auxiliary"), 0);
                let (ys, vars) = garch_squared(garch, steps, &mut aux);
                Innovations::Series(ys.iter().zip(&vars).map(|(y, v)| y - v).collect())
            }
            DgpKind::GarchSquared => unreachable!("X3 draws its own innovations"),
        })
    }

    #[inline]
    fn draw(&self, step: usize, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Innovations::Normal(sd) => {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            }
            Innovations::Pool(pool) => pool[rng.random_range(0..pool.len() as u32) as usize],
            Innovations::Series(e) => e[step],
        }
    }
}

/// Simulates one path. Deterministic given `spec.seed`.
pub fn simulate(spec: &DgpSpec) -> Result<SimulatedPath> {
    spec.validate()?;
    let steps = spec.length + spec.burn_in;
    let mut rng = rng::stream(spec.seed, 0);
    let mut rec = Recorder::new(spec.burn_in, spec.length);
    let p = &spec.params;

    match spec.kind {
        DgpKind::GarchSquared => {
            let (ys, vars) = garch_squared(&p.garch, steps, &mut rng);
            for (step, (y, v)) in ys.iter().zip(&vars).enumerate() {
                rec.push(step, *v, y - v);
            }
        }
        DgpKind::ArmaIid | DgpKind::ArmaAsym => {
            let innov = Innovations::for_spec(spec)?;
            let arma = &p.arma;
            let (mut x, mut e) = (arma.unconditional_mean(), 0.0);
            for step in 0..steps {
                let oracle = arma.predict(x, e);
                e = innov.draw(step, &mut rng);
                x = rec.push(step, oracle, e);
            }
        }
        DgpKind::NonlinIid | DgpKind::NonlinAsym | DgpKind::NonlinGarch => {
            let innov = Innovations::for_spec(spec)?;
            let mut x = p.nonlin.m;
            for step in 0..steps {
                let oracle = p.nonlin.eval(x);
                let e = innov.draw(step, &mut rng);
                x = rec.push(step, oracle, e);
            }
        }
    }
    Ok(rec.path)
}

/// `sum(oracle^2) / sum(innovation^2)`.
pub fn signal_to_noise(path: &SimulatedPath) -> Result<f64> {
    if path.is_empty() {
        return Err(invalid_arg("empty path"));
    }
    let noise: f64 = path.innovations.iter().map(|e| e * e).sum();
    if noise == 0.0 {
        return Err(degenerate("zero innovation energy"));
    }
    Ok(path.oracle.iter().map(|o| o * o).sum::<f64>() / noise)
}

/// `var(oracle) / var(e)` of X1 in closed form.
pub fn arma_variance_ratio(p: &ArmaParams) -> f64 {
    let (phi, theta) = (p.phi1, p.theta1);
    (1.0 + theta * theta - 2.0 * phi * theta) / (1.0 - phi * phi) - 1.0
}

/// Solves for `(c, a)` with `m`, `s`, `b` fixed so that a long X4 path has
/// oracle mean `target_mean` and `var(oracle)/var(e) = target_ratio`.
///
/// Uses one common set of Normal draws for every trial, so both conditions
/// are smooth in `(c, a)`.
pub fn calibrate_nonlinear(
    base: NonlinParams,
    innovation_variance: f64,
    target_mean: f64,
    target_ratio: f64,
    steps: usize,
    seed: u64,
) -> Result<NonlinParams> {
    let sd = innovation_variance.sqrt();
    let mut rng = rng::stream(seed, 0);
    let shocks: Vec<f64> = (0..steps + DEFAULT_BURN_IN)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    let moments = |p: &NonlinParams| {
        let mut x = p.m;
        let (mut s1, mut s2) = (0.0, 0.0);
        for (step, e) in shocks.iter().enumerate() {
            let o = p.eval(x);
            if step >= DEFAULT_BURN_IN {
                s1 += o;
                s2 += o * o;
            }
            x = o + e;
        }
        let n = steps as f64;
        let m = s1 / n;
        (m, s2 / n - m * m)
    };
    // Mean is increasing in c; variance ratio is increasing in a near the
    // target. Alternate one-dimensional secant solves until both settle.
    let mut p = base;
    for _ in 0..500 {
        p.c = solve_increasing(|c| moments(&NonlinParams { c, ..p }).0 - target_mean, p.c, 1.0)?;
        p.a = solve_increasing(|a| moments(&NonlinParams { a, ..p }).1 / innovation_variance - target_ratio, p.a, 0.5)?;
        let (m, v) = moments(&p);
        if (m - target_mean).abs() < 1e-9 && (v / innovation_variance - target_ratio).abs() < 1e-9 {
            return Ok(p);
        }
    }
    Err(crate::Error::EstimationFailed("nonlinear g calibration did not converge".into()))
}

/// Root of an increasing function by bracketing then bisection.
fn solve_increasing(f: impl Fn(f64) -> f64, start: f64, step: f64) -> Result<f64> {
    let (mut lo, mut hi) = (start - step, start + step);
    let mut expand = 0;
    while f(lo) > 0.0 {
        lo -= step * 2f64.powi(expand);
        expand += 1;
        if expand > 40 {
            return Err(crate::Error::EstimationFailed("could not bracket root".into()));
        }
    }
    expand = 0;
    while f(hi) < 0.0 {
        hi += step * 2f64.powi(expand);
        expand += 1;
        if expand > 40 {
            return Err(crate::Error::EstimationFailed("could not bracket root".into()));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
