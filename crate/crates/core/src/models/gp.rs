//! Gaussian-process posterior mean on lagged inputs.
//!
//! Inputs are the `d` previous observations, standardized with the training
//! mean and standard deviation; the target is centered at its training
//! mean. The squared-exponential kernel
//! `k(a, b) = signal * exp(-|a - b|^2 / (2 l^2))` is used in its
//! subset-of-regressors form with `m` inducing inputs `U` taken at evenly
//! spaced training rows:
//!
//! ```text
//! mean(z) = k(z, U) (noise K_UU + K_UX K_XU)^-1 K_UX y
//! ```

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::stats::{mean, variance};

pub const DEFAULT_INDUCING: usize = 100;
const JITTER: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpGrid {
    pub lengthscales: Vec<f64>,
    pub signal_variances: Vec<f64>,
    pub noise_variances: Vec<f64>,
    pub lags: Vec<usize>,
    pub inducing: usize,
}

impl Default for GpGrid {
    fn default() -> Self {
        Self {
            lengthscales: vec![0.5, 1.0, 2.0, 4.0],
            signal_variances: vec![1.0],
            noise_variances: vec![0.5, 2.0, 8.0, 32.0, 128.0],
            lags: (1..=10).collect(),
            inducing: DEFAULT_INDUCING,
        }
    }
}

impl GpGrid {
    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty()
            || self.signal_variances.is_empty()
            || self.noise_variances.is_empty()
            || self.lags.is_empty()
        {
            return Err(invalid_arg("GP grid has an empty axis"));
        }
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !positive(&self.lengthscales) || !positive(&self.signal_variances) || !positive(&self.noise_variances) {
            return Err(invalid_arg("GP hyperparameters must be positive"));
        }
        if self.lags.contains(&0) {
            return Err(invalid_arg("GP lag order must be at least 1"));
        }
        if self.inducing < 2 {
            return Err(invalid_arg("GP needs at least 2 inducing inputs"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub lag: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub hyper: GpHyper,
    pub input_mean: f64,
    pub input_sd: f64,
    pub target_mean: f64,
    /// Inducing inputs, one row of `lag` standardized values each.
    pub inducing: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub validation_mse: f64,
}

impl GpModel {
    /// Posterior mean for the observation following `history` (which must
    /// hold at least `lag` values; the last one is the most recent).
    pub fn predict_next(&self, history: &[f64]) -> f64 {
        let z = self.standardized_lags(history, history.len());
        self.predict_standardized(&z)
    }

    fn standardized_lags(&self, x: &[f64], t: usize) -> Vec<f64> {
        (1..=self.hyper.lag).map(|k| (x[t - k] - self.input_mean) / self.input_sd).collect()
    }

    fn predict_standardized(&self, z: &[f64]) -> f64 {
        let h = &self.hyper;
        let k: f64 = self
            .inducing
            .iter()
            .zip(&self.weights)
            .map(|(u, w)| w * kernel(z, u, h.lengthscale, h.signal_variance))
            .sum();
        self.target_mean + k
    }

    /// One-step predictions for `x[start..]`.
    pub fn predictions(&self, x: &[f64], start: usize) -> Vec<f64> {
        (start..x.len()).map(|t| self.predict_standardized(&self.standardized_lags(x, t))).collect()
    }
}

fn kernel(a: &[f64], b: &[f64], lengthscale: f64, signal: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    signal * (-0.5 * d2 / (lengthscale * lengthscale)).exp()
}

struct Design {
    lag: usize,
    input_mean: f64,
    input_sd: f64,
    target_mean: f64,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    inducing: Vec<Vec<f64>>,
}

impl Design {
    fn new(train: &[f64], lag: usize, inducing: usize) -> Result<Self> {
        if train.len() <= lag + inducing {
            return Err(Error::InsufficientData(format!(
                "GP training span {} too short for lag {lag} with {inducing} inducing inputs",
                train.len()
            )));
        }
        let input_mean = mean(train);
        let input_sd = variance(train).sqrt();
        if !(input_sd > 0.0) {
            return Err(Error::EstimationFailed("GP training series is constant".into()));
        }
        let targets_raw = &train[lag..];
        let target_mean = mean(targets_raw);
        let inputs: Vec<Vec<f64>> = (lag..train.len())
            .map(|t| (1..=lag).map(|k| (train[t - k] - input_mean) / input_sd).collect())
            .collect();
        let n = inputs.len();
        let inducing_rows: Vec<Vec<f64>> =
            (0..inducing).map(|i| inputs[i * (n - 1) / (inducing - 1)].clone()).collect();
        Ok(Self {
            lag,
            input_mean,
            input_sd,
            target_mean,
            inputs,
            targets: targets_raw.iter().map(|v| v - target_mean).collect(),
            inducing: inducing_rows,
        })
    }

    /// Weights for every `(signal, noise)` pair at one lengthscale.
    fn weights(&self, lengthscale: f64, pairs: &[(f64, f64)]) -> Vec<Option<Vec<f64>>> {
        let m = self.inducing.len();
        let n = self.inputs.len();
        // Unit-signal kernels; the signal variance rescales them.
        let kmn = DMatrix::from_fn(m, n, |i, j| kernel(&self.inducing[i], &self.inputs[j], lengthscale, 1.0));
        let kmm = DMatrix::from_fn(m, m, |i, j| kernel(&self.inducing[i], &self.inducing[j], lengthscale, 1.0));
        let gram = &kmn * kmn.transpose();
        let rhs = &kmn * DVector::from_column_slice(&self.targets);
        pairs
            .iter()
            .map(|&(signal, noise)| {
                // noise K_UU + K_UX K_XU with K = signal * unit kernel
                let a = &kmm * (noise / signal) + &gram + DMatrix::identity(m, m) * (JITTER * (1.0 + noise / signal));
                let chol = a.cholesky()?;
                let w = chol.solve(&rhs) / signal;
                Some(w.iter().copied().collect())
            })
            .collect()
    }
}

/// Grid search over lag, lengthscale, signal and noise variance by
/// validation MSE. Validation inputs may reach back into `train`.
pub fn fit_with_validation(train: &[f64], validation: &[f64], grid: &GpGrid) -> Result<GpModel> {
    grid.validate()?;
    if validation.is_empty() {
        return Err(invalid_arg("empty validation span"));
    }
    let full: Vec<f64> = train.iter().chain(validation).copied().collect();
    let pairs: Vec<(f64, f64)> = grid
        .signal_variances
        .iter()
        .flat_map(|&s| grid.noise_variances.iter().map(move |&n| (s, n)))
        .collect();
    let designs: Vec<Design> = grid.lags.iter().map(|&d| Design::new(train, d, grid.inducing)).collect::<Result<_>>()?;
    let cells: Vec<(usize, f64)> = (0..designs.len())
        .flat_map(|i| grid.lengthscales.iter().map(move |&l| (i, l)))
        .collect();
    let candidates: Vec<GpModel> = cells
        .par_iter()
        .flat_map_iter(|&(i, lengthscale)| {
            let design = &designs[i];
            let weights = design.weights(lengthscale, &pairs);
            let full = &full;
            pairs.iter().zip(weights).filter_map(move |(&(signal, noise), w)| {
                let mut model = GpModel {
                    hyper: GpHyper { lengthscale, signal_variance: signal, noise_variance: noise, lag: design.lag },
                    input_mean: design.input_mean,
                    input_sd: design.input_sd,
                    target_mean: design.target_mean,
                    inducing: design.inducing.clone(),
                    weights: w?,
                    validation_mse: f64::NAN,
                };
                let preds = model.predictions(full, train.len());
                let mse = preds.iter().zip(validation).map(|(p, v)| (v - p) * (v - p)).sum::<f64>()
                    / validation.len() as f64;
                model.validation_mse = mse;
                mse.is_finite().then_some(model)
            })
        })
        .collect();
    // Earliest grid point wins ties, so the choice does not depend on scheduling.
    candidates
        .into_iter()
        .reduce(|best, c| if c.validation_mse < best.validation_mse { c } else { best })
        .ok_or_else(|| Error::EstimationFailed("no GP grid point produced a finite validation error".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut r = rng::stream(seed, 0);
        (0..n).map(|_| StandardNormal.sample(&mut r)).collect()
    }

    #[test]
    fn single_point_grid_is_selected() {
        let x = noise(1, 600);
        let grid = GpGrid {
            lengthscales: vec![1.5],
            signal_variances: vec![2.0],
            noise_variances: vec![3.0],
            lags: vec![2],
            inducing: 20,
        };
        let m = fit_with_validation(&x[..400], &x[400..], &grid).unwrap();
        assert_eq!(m.hyper, GpHyper { lengthscale: 1.5, signal_variance: 2.0, noise_variance: 3.0, lag: 2 });
        assert_eq!(m.inducing.len(), 20);
    }

    #[test]
    fn learns_a_deterministic_map() {
        // x_t = sin(2 x_{t-1}) + small noise
        let e = noise(2, 800);
        let mut x = vec![0.3];
        for t in 1..800 {
            let prev: f64 = x[t - 1];
            x.push((2.0 * prev).sin() + 0.05 * e[t]);
        }
        let grid = GpGrid { lags: vec![1, 2], noise_variances: vec![0.01, 1.0], inducing: 40, ..GpGrid::default() };
        let m = fit_with_validation(&x[..600], &x[600..], &grid).unwrap();
        assert!(m.validation_mse < 0.01, "{}", m.validation_mse);
        let p = m.predict_next(&x[..700]);
        assert!((p - (2.0 * x[699]).sin()).abs() < 0.2);
    }

    #[test]
    fn rejects_bad_grids() {
        let x = noise(3, 300);
        let empty = GpGrid { lags: vec![], ..GpGrid::default() };
        assert!(matches!(fit_with_validation(&x[..200], &x[200..], &empty), Err(Error::InvalidArgument(_))));
        let flat = vec![1.0; 300];
        let grid = GpGrid { inducing: 10, ..GpGrid::default() };
        assert!(matches!(fit_with_validation(&flat[..200], &flat[200..], &grid), Err(Error::EstimationFailed(_))));
    }
}
