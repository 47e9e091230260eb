//! Critical values for the K statistics.
//!
//! * [`calibrate_independence`]: Monte Carlo threshold for K between
//!   independent iid series. `P` paths are split into [`CALIBRATION_BATCHES`]
//!   batches and the critical value is the mean of the per-batch upper
//!   quantiles.
//! * [`block_bootstrap_difference`]: moving-block bootstrap of the
//!   difference `K(x, e) - K(e, e)` over jointly resampled `(x_t, e_t)`
//!   pairs. Replicates are centered at their bootstrap mean before the upper
//!   quantile is taken, and every replicate reuses the surrogate seed of the
//!   observed statistic.
//! * [`block_length_sensitivity`]: Kolmogorov-Smirnov distance between the
//!   block-bootstrap distribution of K on one realization and the Monte
//!   Carlo distribution over fresh realizations.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dependence::{k_pair, k_self, k_statistic, EnsembleConfig};
use crate::dgp::{simulate, DgpSpec};
use crate::error::{invalid_arg, Error, Result};
use crate::ordinal::SegmentConfig;
use crate::rng;
use crate::stats::{ks_distance, mean, quantile, quantile_sorted};

pub const DEFAULT_QUANTILE: f64 = 0.95;
pub const CALIBRATION_BATCHES: usize = 10;
pub const MIN_CALIBRATION_PATHS: usize = 100;
pub const DEFAULT_BLOCK_LENGTH: usize = 20;
pub const DEFAULT_BOOTSTRAP_REPLICATIONS: usize = 500;
pub const MIN_BOOTSTRAP_REPLICATIONS: usize = 100;
pub const FIXTURE_VERSION: u32 = 1;

/// Marginal law of the iid pairs simulated under the null.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NullMarginal {
    #[default]
    Gaussian,
    Uniform,
    Exponential,
}

impl NullMarginal {
    fn draw(self, rng: &mut impl Rng) -> f64 {
        match self {
            NullMarginal::Gaussian => StandardNormal.sample(rng),
            NullMarginal::Uniform => rng.random(),
            NullMarginal::Exponential => Exp1.sample(rng),
        }
    }
}

/// Cached Monte Carlo threshold for K under independence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependenceCalibration {
    pub version: u32,
    pub cfg: SegmentConfig,
    pub series_length: usize,
    pub paths: usize,
    pub quantile: f64,
    pub critical_value: f64,
    pub seed: u64,
    pub ensemble: EnsembleConfig,
    pub marginal: NullMarginal,
    /// K for each simulated path, in path order.
    pub k_draws: Vec<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Inputs that determine a calibration; their hash names the fixture.
#[derive(Serialize)]
struct CalibrationKey<'a> {
    version: u32,
    cfg: &'a SegmentConfig,
    series_length: usize,
    paths: usize,
    quantile: f64,
    seed: u64,
    ensemble: &'a EnsembleConfig,
    marginal: NullMarginal,
}

impl IndependenceCalibration {
    /// Identifier derived from the calibration inputs.
    pub fn id(&self) -> String {
        calibration_id(
            &self.cfg,
            self.series_length,
            self.paths,
            self.quantile,
            &self.ensemble,
            self.marginal,
            self.seed,
        )
    }

    /// Batched critical value recomputed from the stored draws at level `q`.
    pub fn critical_value_at(&self, q: f64) -> f64 {
        batched_quantile(&self.k_draws, q)
    }

    /// Whether this fixture was produced from exactly these inputs.
    pub fn matches(
        &self,
        cfg: &SegmentConfig,
        series_length: usize,
        paths: usize,
        ens: &EnsembleConfig,
        seed: u64,
    ) -> bool {
        self.version == FIXTURE_VERSION
            && self.cfg == *cfg
            && self.series_length == series_length
            && self.paths == paths
            && self.ensemble == *ens
            && self.seed == seed
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cal: Self = serde_json::from_str(&text)?;
        if cal.version != FIXTURE_VERSION {
            return Err(Error::InvalidData(format!(
                "calibration fixture version {} (expected {FIXTURE_VERSION})",
                cal.version
            )));
        }
        Ok(cal)
    }
}

pub fn calibration_id(
    cfg: &SegmentConfig,
    series_length: usize,
    paths: usize,
    quantile: f64,
    ens: &EnsembleConfig,
    marginal: NullMarginal,
    seed: u64,
) -> String {
    let key = CalibrationKey {
        version: FIXTURE_VERSION,
        cfg,
        series_length,
        paths,
        quantile,
        seed,
        ensemble: ens,
        marginal,
    };
    let json = serde_json::to_vec(&key).expect("calibration key serializes");
    let digest = Sha256::digest(&json);
    hex::encode(&digest[..8])
}

/// Mean over [`CALIBRATION_BATCHES`] contiguous batches of the type-7
/// quantile of `draws`.
pub fn batched_quantile(draws: &[f64], q: f64) -> f64 {
    let p = draws.len();
    let batches = CALIBRATION_BATCHES.min(p.max(1));
    let per_batch: Vec<f64> = (0..batches)
        .map(|b| {
            let (lo, hi) = (b * p / batches, (b + 1) * p / batches);
            quantile(&draws[lo..hi], q)
        })
        .collect();
    mean(&per_batch)
}

/// Simulates `paths` independent iid Gaussian pairs of length `n` and
/// returns the batched 95th percentile of their K statistics.
pub fn calibrate_independence(
    cfg: &SegmentConfig,
    n: usize,
    paths: usize,
    ens: &EnsembleConfig,
    seed: u64,
) -> Result<IndependenceCalibration> {
    calibrate_independence_with(cfg, n, paths, ens, NullMarginal::Gaussian, DEFAULT_QUANTILE, seed)
}

pub fn calibrate_independence_with(
    cfg: &SegmentConfig,
    n: usize,
    paths: usize,
    ens: &EnsembleConfig,
    marginal: NullMarginal,
    q: f64,
    seed: u64,
) -> Result<IndependenceCalibration> {
    cfg.check_length(n)?;
    if paths < MIN_CALIBRATION_PATHS {
        return Err(invalid_arg(format!("calibration needs at least {MIN_CALIBRATION_PATHS} paths, got {paths}")));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid_arg(format!("quantile {q} outside (0, 1)")));
    }
    let data_seed = rng::derive_seed(seed, "paths");
    let surrogate_seed = rng::derive_seed(seed, "surrogate");
    let k_draws = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(data_seed, i as u64);
            let x: Vec<f64> = (0..n).map(|_| marginal.draw(&mut r)).collect();
            let y: Vec<f64> = (0..n).map(|_| marginal.draw(&mut r)).collect();
            k_statistic(&x, &y, cfg, ens, rng::index_seed(surrogate_seed, i as u64)).map(|k| k.k_value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let critical_value = batched_quantile(&k_draws, q);
    let mut warnings = Vec::new();
    if paths < 1000 {
        warnings.push(format!("only {paths} calibration paths; the critical value carries extra Monte Carlo noise"));
    }
    Ok(IndependenceCalibration {
        version: FIXTURE_VERSION,
        cfg: *cfg,
        series_length: n,
        paths,
        quantile: q,
        critical_value,
        seed,
        ensemble: *ens,
        marginal,
        k_draws,
        warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub block_length: usize,
    pub replications: usize,
    pub quantile: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            block_length: DEFAULT_BLOCK_LENGTH,
            replications: DEFAULT_BOOTSTRAP_REPLICATIONS,
            quantile: DEFAULT_QUANTILE,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    /// Checks `1 <= l <= n/10` and `B >= 100` for a series of length `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.block_length == 0 || self.block_length > n / 10 {
            return Err(invalid_arg(format!(
                "block length {} outside 1..={} for series length {n}",
                self.block_length,
                n / 10
            )));
        }
        if self.replications < MIN_BOOTSTRAP_REPLICATIONS {
            return Err(invalid_arg(format!(
                "bootstrap needs at least {MIN_BOOTSTRAP_REPLICATIONS} replications, got {}",
                self.replications
            )));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(invalid_arg(format!("quantile {} outside (0, 1)", self.quantile)));
        }
        Ok(())
    }
}

/// Indices of one moving-block resample: blocks of `l` consecutive indices
/// with starts uniform on `0..=n-l`, concatenated and cut to `n`.
pub fn moving_block_indices(n: usize, l: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if l == 0 || l > n {
        return Err(invalid_arg(format!("block length {l} outside 1..={n}")));
    }
    let mut idx = Vec::with_capacity(n + l);
    let starts = (n - l + 1) as u64;
    while idx.len() < n {
        let s = rng.random_range(0..starts) as usize;
        idx.extend(s..s + l);
    }
    idx.truncate(n);
    Ok(idx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferenceBootstrap {
    /// Upper quantile of the centered replicates.
    pub critical_value: f64,
    pub bootstrap_mean: f64,
    pub block_length: usize,
    pub quantile: f64,
    /// Uncentered replicate differences `K(x*, e*) - K(e*, e*)`.
    pub replicates: Vec<f64>,
    pub centered: bool,
}

/// Bootstrap critical value for `K(x, e) - K(e, e)`.
///
/// Replicate `b` draws its block starts from stream `b` of `bcfg.seed`;
/// every replicate evaluates K with `surrogate_seed`.
pub fn block_bootstrap_difference(
    x: &[f64],
    residuals: &[f64],
    cfg: &SegmentConfig,
    bcfg: &BootstrapConfig,
    ens: &EnsembleConfig,
    surrogate_seed: u64,
) -> Result<DifferenceBootstrap> {
    let n = x.len();
    if residuals.len() != n {
        return Err(invalid_arg(format!("series lengths differ: {n} vs {}", residuals.len())));
    }
    if bcfg.block_length == 0 || bcfg.block_length > n {
        return Err(invalid_arg(format!("block length {} outside 1..={n}", bcfg.block_length)));
    }
    if bcfg.replications < 2 {
        return Err(invalid_arg("bootstrap needs at least 2 replications"));
    }
    if !(bcfg.quantile > 0.0 && bcfg.quantile < 1.0) {
        return Err(invalid_arg(format!("quantile {} outside (0, 1)", bcfg.quantile)));
    }
    let replicates = (0..bcfg.replications)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(bcfg.seed, b as u64);
            let idx = moving_block_indices(n, bcfg.block_length, &mut r)?;
            let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
            let es: Vec<f64> = idx.iter().map(|&i| residuals[i]).collect();
            let (cross, own) = k_pair(&xs, &es, cfg, ens, surrogate_seed)?;
            Ok(cross.k_value - own.k_value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let bootstrap_mean = mean(&replicates);
    let mut centered: Vec<f64> = replicates.iter().map(|d| d - bootstrap_mean).collect();
    centered.sort_by(f64::total_cmp);
    Ok(DifferenceBootstrap {
        critical_value: quantile_sorted(&centered, bcfg.quantile),
        bootstrap_mean,
        block_length: bcfg.block_length,
        quantile: bcfg.quantile,
        replicates,
        centered: true,
    })
}

/// Block lengths `round(n^(1/k))` for `k = 2, 3, 4, 5`.
pub fn root_block_lengths(n: usize) -> Vec<usize> {
    (2..=5).map(|k| ((n as f64).powf(1.0 / k as f64).round() as usize).max(1)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub block_length: usize,
    pub ks_distance: f64,
    pub bootstrap_k: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub series_length: usize,
    pub reference_k: Vec<f64>,
    pub rows: Vec<SensitivityRow>,
}

/// `K(e, e)` on the innovations of `paths` fresh realizations of `spec`.
pub fn reference_k_distribution(
    spec: &DgpSpec,
    cfg: &SegmentConfig,
    paths: usize,
    ens: &EnsembleConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let path_seed = rng::derive_seed(seed, "reference");
    let surrogate_seed = rng::derive_seed(seed, "reference-surrogate");
    (0..paths)
        .into_par_iter()
        .map(|i| {
            let fresh = DgpSpec { seed: rng::index_seed(path_seed, i as u64), ..*spec };
            let path = simulate(&fresh)?;
            k_self(&path.innovations, cfg, ens, rng::index_seed(surrogate_seed, i as u64)).map(|k| k.k_value)
        })
        .collect()
}

/// `K(e*, e*)` over `replications` moving-block resamples of `series`.
/// Each replicate uses its own surrogate seed.
pub fn bootstrap_k_self(
    series: &[f64],
    cfg: &SegmentConfig,
    block_length: usize,
    replications: usize,
    ens: &EnsembleConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let block_seed = rng::derive_seed(seed, "blocks");
    let surrogate_seed = rng::derive_seed(seed, "surrogate");
    (0..replications)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(block_seed, b as u64);
            let idx = moving_block_indices(series.len(), block_length, &mut r)?;
            let es: Vec<f64> = idx.iter().map(|&i| series[i]).collect();
            k_self(&es, cfg, ens, rng::index_seed(surrogate_seed, b as u64)).map(|k| k.k_value)
        })
        .collect()
}

/// Sensitivity rows for one realization against a precomputed reference.
pub fn sensitivity_against(
    reference_k: &[f64],
    series: &[f64],
    cfg: &SegmentConfig,
    lengths: &[usize],
    replications: usize,
    ens: &EnsembleConfig,
    seed: u64,
) -> Result<Vec<SensitivityRow>> {
    if lengths.is_empty() {
        return Err(invalid_arg("no block lengths given"));
    }
    lengths
        .iter()
        .map(|&l| {
            let bootstrap_k = bootstrap_k_self(series, cfg, l, replications, ens, rng::index_seed(seed, l as u64))?;
            Ok(SensitivityRow { block_length: l, ks_distance: ks_distance(&bootstrap_k, reference_k), bootstrap_k })
        })
        .collect()
}

/// Compares, per block length, the block-bootstrap distribution of
/// `K(e, e)` on the innovations of `spec` with the distribution over
/// `paths` fresh realizations.
pub fn block_length_sensitivity(
    spec: &DgpSpec,
    cfg: &SegmentConfig,
    lengths: &[usize],
    paths: usize,
    replications: usize,
    ens: &EnsembleConfig,
    seed: u64,
) -> Result<SensitivityReport> {
    if lengths.is_empty() {
        return Err(invalid_arg("no block lengths given"));
    }
    let reference_k = reference_k_distribution(spec, cfg, paths, ens, seed)?;
    let path = simulate(spec)?;
    let rows = sensitivity_against(&reference_k, &path.innovations, cfg, lengths, replications, ens, seed)?;
    Ok(SensitivityReport { series_length: path.len(), reference_k, rows })
}
