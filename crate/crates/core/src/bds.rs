//! BDS test of iid-ness, and the contrast experiment against the
//! ordinal-pattern sufficiency test on an inadequate GARCH predictor.
//!
//! With `I(i, j) = 1[|x_i - x_j| < r]`, the correlation integral `C_m(r)`
//! is the fraction of unordered pairs of `m`-histories whose entries are all
//! within `r`. The statistic for embedding dimension `m` is
//!
//! ```text
//! W_m = sqrt(N - m + 1) (C_m - C_1^m) / sigma_m
//! sigma_m^2 = 4 [k^m + 2 sum_{j=1}^{m-1} k^(m-j) C^(2j) + (m-1)^2 C^(2m) - m^2 k C^(2m-2)]
//! ```
//!
//! where `C_1` in the numerator is taken over the last `N - m + 1`
//! observations, `C` and `k` over the full sample, and `k` is the fraction
//! of ordered triples `(i, j, l)` with `j != l` both within `r` of `x_i`.
//!
//! Pairs are counted along diagonals `j - i = d`: a run of `L` consecutive
//! close pairs on one diagonal contributes `L - m + 1` close `m`-history
//! pairs, so one `O(N^2)` pass yields `C_m` for every `m`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dependence::EnsembleConfig;
use crate::dgp::{simulate, DgpKind, DgpSpec, GarchParams};
use crate::error::{degenerate, invalid_arg, Result};
use crate::inference::{BootstrapConfig, IndependenceCalibration};
use crate::ordinal::SegmentConfig;
use crate::stats::variance;
use crate::sufftest::{run_sufficiency_test, SufficiencyVerdict};

/// Two-sided 5% and 1% normal critical values.
pub const Z_05: f64 = 1.959_963_984_540_054;
pub const Z_01: f64 = 2.575_829_303_548_901;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BdsConfig {
    pub dims: Vec<usize>,
    pub r_multipliers: Vec<f64>,
}

impl Default for BdsConfig {
    fn default() -> Self {
        Self { dims: (2..=10).collect(), r_multipliers: vec![0.25, 0.5, 0.75, 1.0, 1.25] }
    }
}

impl BdsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.r_multipliers.is_empty() {
            return Err(invalid_arg("BDS grid is empty"));
        }
        if let Some(m) = self.dims.iter().find(|&&m| m < 2) {
            return Err(invalid_arg(format!("embedding dimension {m} must be at least 2")));
        }
        if let Some(r) = self.r_multipliers.iter().find(|&&r| !(r > 0.0 && r.is_finite())) {
            return Err(invalid_arg(format!("radius multiplier {r} must be positive")));
        }
        Ok(())
    }
}

/// Pair counts for one radius, enough for every embedding dimension.
struct PairCounts {
    n: usize,
    /// `runs[L]`: number of maximal diagonal runs of close pairs of length `L`.
    runs: Vec<u64>,
    /// `forward[i]`: close pairs `(i, j)` with `j > i`.
    forward: Vec<u64>,
    /// Close pairs per row, self excluded.
    row: Vec<u64>,
}

impl PairCounts {
    fn new(x: &[f64], r: f64) -> Self {
        let n = x.len();
        let mut runs = vec![0u64; n + 1];
        let mut forward = vec![0u64; n];
        let mut row = vec![0u64; n];
        for d in 1..n {
            let mut run = 0usize;
            for i in 0..n - d {
                if (x[i] - x[i + d]).abs() < r {
                    run += 1;
                    forward[i] += 1;
                    row[i] += 1;
                    row[i + d] += 1;
                } else if run > 0 {
                    runs[run] += 1;
                    run = 0;
                }
            }
            if run > 0 {
                runs[run] += 1;
            }
        }
        Self { n, runs, forward, row }
    }

    /// `C_m` over the `N - m + 1` histories.
    fn c_m(&self, m: usize) -> f64 {
        let close: u64 = self.runs.iter().enumerate().skip(m).map(|(len, &c)| c * (len - m + 1) as u64).sum();
        let h = (self.n - m + 1) as f64;
        close as f64 / (h * (h - 1.0) / 2.0)
    }

    /// `C_1` over observations `start..N`.
    fn c_1_from(&self, start: usize) -> f64 {
        let close: u64 = self.forward[start..].iter().sum();
        let h = (self.n - start) as f64;
        close as f64 / (h * (h - 1.0) / 2.0)
    }

    fn k(&self) -> f64 {
        let n = self.n as f64;
        let triples: f64 = self.row.iter().map(|&s| (s * s.saturating_sub(1)) as f64).sum();
        triples / (n * (n - 1.0) * (n - 2.0))
    }

    fn statistic(&self, m: usize) -> Result<f64> {
        let c = self.c_1_from(0);
        let k = self.k();
        let mf = m as f64;
        let cross: f64 = (1..m).map(|j| k.powi((m - j) as i32) * c.powi(2 * j as i32)).sum();
        let var = 4.0
            * (k.powi(m as i32) + 2.0 * cross + (mf - 1.0).powi(2) * c.powi(2 * m as i32)
                - mf * mf * k * c.powi(2 * m as i32 - 2));
        let effect = self.c_m(m) - self.c_1_from(m - 1).powi(m as i32);
        if !(var > 0.0) {
            return Err(degenerate(format!("BDS variance {var} is not positive (C = {c}, k = {k})")));
        }
        Ok(((self.n - m + 1) as f64).sqrt() * effect / var.sqrt())
    }
}

fn check_series(series: &[f64], m: usize, r: f64) -> Result<()> {
    if m < 2 {
        return Err(invalid_arg(format!("embedding dimension {m} must be at least 2")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid_arg(format!("radius {r} must be positive")));
    }
    if series.len() <= m + 10 {
        return Err(invalid_arg(format!("series of length {} too short for dimension {m}", series.len())));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(crate::Error::InvalidData("non-finite value in BDS input".into()));
    }
    Ok(())
}

/// Correlation integral `C_m(r)` over the `N - m + 1` histories.
pub fn correlation_integral(series: &[f64], m: usize, r: f64) -> Result<f64> {
    if m == 0 || series.len() < m + 1 {
        return Err(invalid_arg("need at least two histories"));
    }
    if !(r > 0.0) {
        return Err(invalid_arg(format!("radius {r} must be positive")));
    }
    Ok(PairCounts::new(series, r).c_m(m))
}

/// BDS statistic for embedding dimension `m` and absolute radius `r`.
pub fn bds_statistic(series: &[f64], m: usize, r: f64) -> Result<f64> {
    check_series(series, m, r)?;
    PairCounts::new(series, r).statistic(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BdsCell {
    pub dim: usize,
    pub multiplier: f64,
    pub radius: f64,
    pub statistic: f64,
}

impl BdsCell {
    pub fn significant_at_5(&self) -> bool {
        self.statistic.abs() > Z_05
    }

    pub fn significant_at_1(&self) -> bool {
        self.statistic.abs() > Z_01
    }

    fn starred(&self) -> String {
        let stars = if self.significant_at_1() {
            "**"
        } else if self.significant_at_5() {
            "*"
        } else {
            ""
        };
        format!("{:.2}{stars}", self.statistic)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BdsTable {
    pub n: usize,
    /// Population standard deviation of the series.
    pub sd: f64,
    pub dims: Vec<usize>,
    pub r_multipliers: Vec<f64>,
    /// Row-major by dimension, then multiplier.
    pub cells: Vec<BdsCell>,
}

impl BdsTable {
    pub fn cell(&self, dim: usize, multiplier: f64) -> Option<&BdsCell> {
        self.cells.iter().find(|c| c.dim == dim && c.multiplier == multiplier)
    }

    pub fn insignificant_fraction(&self) -> f64 {
        let quiet = self.cells.iter().filter(|c| !c.significant_at_5()).count();
        quiet as f64 / self.cells.len() as f64
    }

    /// CSV with one row per dimension and one column per multiplier;
    /// `*` marks 5% and `**` 1% significance.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["M".to_string()];
        header.extend(self.r_multipliers.iter().map(|m| format!("{m}sd")));
        w.write_record(&header).map_err(|e| crate::Error::InvalidData(e.to_string()))?;
        for &dim in &self.dims {
            let mut rec = vec![dim.to_string()];
            for &mult in &self.r_multipliers {
                rec.push(self.cell(dim, mult).map(BdsCell::starred).unwrap_or_default());
            }
            w.write_record(&rec).map_err(|e| crate::Error::InvalidData(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// BDS statistics over the grid, radii scaled by the series' standard
/// deviation.
pub fn bds_table(series: &[f64], cfg: &BdsConfig) -> Result<BdsTable> {
    cfg.validate()?;
    let max_dim = *cfg.dims.iter().max().expect("validated nonempty");
    let sd = variance(series).sqrt();
    check_series(series, max_dim, sd.max(f64::MIN_POSITIVE))?;
    if sd == 0.0 {
        return Err(degenerate("constant series"));
    }
    let per_radius: Vec<Vec<BdsCell>> = cfg
        .r_multipliers
        .par_iter()
        .map(|&mult| {
            let radius = mult * sd;
            let counts = PairCounts::new(series, radius);
            cfg.dims
                .iter()
                .map(|&dim| Ok(BdsCell { dim, multiplier: mult, radius, statistic: counts.statistic(dim)? }))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut cells = Vec::with_capacity(cfg.dims.len() * cfg.r_multipliers.len());
    for &dim in &cfg.dims {
        for column in &per_radius {
            cells.extend(column.iter().filter(|c| c.dim == dim).cloned());
        }
    }
    Ok(BdsTable { n: series.len(), sd, dims: cfg.dims.clone(), r_multipliers: cfg.r_multipliers.clone(), cells })
}

/// Inputs of the inadequate-GARCH contrast experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppendixConfig {
    pub truth: GarchParams,
    pub predictor: GarchParams,
    pub length: usize,
    pub bds: BdsConfig,
}

impl Default for AppendixConfig {
    fn default() -> Self {
        Self {
            truth: GarchParams::default(),
            predictor: GarchParams { alpha0: 0.18, alpha1: 0.03, beta1: 0.87 },
            length: crate::dgp::DEFAULT_LENGTH,
            bds: BdsConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppendixReport {
    pub seed: u64,
    pub table: BdsTable,
    pub verdict: SufficiencyVerdict,
}

/// Squared returns from the true GARCH and the variance path of the
/// inadequate predictor, started at its unconditional variance.
pub fn appendix_series(cfg: &AppendixConfig, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !cfg.predictor.is_stationary() {
        return Err(invalid_arg("predictor GARCH parameters are not covariance stationary"));
    }
    let spec = DgpSpec::new(DgpKind::GarchSquared, seed).with_length(cfg.length).with_params(crate::dgp::DgpParams {
        garch: cfg.truth,
        ..Default::default()
    });
    let path = simulate(&spec)?;
    let predicted = cfg.predictor.filter(&path.observations, cfg.predictor.unconditional_variance());
    Ok((path.observations, predicted))
}

/// BDS on `ln(y / y_hat)` and the sufficiency test on `y - y_hat`, where
/// `y` are GARCH squared returns and `y_hat` the inadequate predictor.
#[allow(clippy::too_many_arguments)]
pub fn appendix_experiment(
    cfg: &AppendixConfig,
    seg: &SegmentConfig,
    calib: &IndependenceCalibration,
    bcfg: &BootstrapConfig,
    ens: &EnsembleConfig,
    seed: u64,
) -> Result<AppendixReport> {
    let (y, y_hat) = appendix_series(cfg, seed)?;
    let log_ratio: Vec<f64> = y.iter().zip(&y_hat).map(|(a, b)| (a / b).ln()).collect();
    let table = bds_table(&log_ratio, &cfg.bds)?;
    let verdict = run_sufficiency_test(&y, &y_hat, seg, calib, bcfg, ens, seed)?;
    Ok(AppendixReport { seed, table, verdict })
}
