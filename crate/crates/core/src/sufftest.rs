//! Accept / Reject / Inconclusive decision for a point forecast.
//!
//! With residuals `e = x - x_hat`, `K_self = K(e-block, e_{t+tau})` and
//! `K_cross = K(x-block, e_{t+tau})`:
//!
//! * Accept when both are below the independence critical value.
//! * Reject when `K_cross` reaches it and `K_cross - K_self` exceeds the
//!   bootstrap critical value of the difference.
//! * Inconclusive otherwise.

use serde::{Deserialize, Serialize};

use crate::dependence::{k_pair, EnsembleConfig};
use crate::error::{invalid_arg, Error, Result};
use crate::inference::{block_bootstrap_difference, BootstrapConfig, IndependenceCalibration};
use crate::ordinal::SegmentConfig;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
    Inconclusive,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Accept => "accept",
            Decision::Reject => "reject",
            Decision::Inconclusive => "inconclusive",
        }
    }
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Three-way rule. Reaching a critical value counts as exceeding it.
pub fn decide(k_self: f64, k_cross: f64, c_ind: f64, c_diff: f64) -> Decision {
    if k_self < c_ind && k_cross < c_ind {
        Decision::Accept
    } else if k_cross >= c_ind && k_cross - k_self > c_diff {
        Decision::Reject
    } else {
        Decision::Inconclusive
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub surrogate_seed: u64,
    pub bootstrap_seed: u64,
    pub calibration_id: String,
    /// Bootstrap replicates were centered at their mean.
    pub bootstrap_centered: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyVerdict {
    pub decision: Decision,
    pub k_self: f64,
    pub k_cross: f64,
    pub difference: f64,
    pub c_independence: f64,
    /// Absent when `k_cross` stayed below `c_independence`.
    pub c_difference: Option<f64>,
    pub cfg: SegmentConfig,
    pub ensemble: EnsembleConfig,
    pub bootstrap: BootstrapConfig,
    pub series_length: usize,
    pub provenance: Provenance,
}

/// Residuals `x - predictions`.
pub fn residuals(x: &[f64], predictions: &[f64]) -> Result<Vec<f64>> {
    if x.len() != predictions.len() {
        return Err(invalid_arg(format!(
            "observations and predictions are misaligned: {} vs {}",
            x.len(),
            predictions.len()
        )));
    }
    if let Some(t) = predictions.iter().position(|p| !p.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite prediction at index {t}")));
    }
    Ok(x.iter().zip(predictions).map(|(a, p)| a - p).collect())
}

/// Runs the sufficiency test of `predictions` for `x`.
///
/// `predictions[t]` is the forecast of `x[t]`. Surrogates use
/// `derive_seed(seed, "surrogate")`; bootstrap blocks use `bcfg.seed`.
pub fn run_sufficiency_test(
    x: &[f64],
    predictions: &[f64],
    cfg: &SegmentConfig,
    calib: &IndependenceCalibration,
    bcfg: &BootstrapConfig,
    ens: &EnsembleConfig,
    seed: u64,
) -> Result<SufficiencyVerdict> {
    if calib.cfg != *cfg {
        return Err(invalid_arg(format!(
            "calibration was computed for D={}, tau={} but the test uses D={}, tau={}",
            calib.cfg.dim(),
            calib.cfg.delay(),
            cfg.dim(),
            cfg.delay()
        )));
    }
    let res = residuals(x, predictions)?;
    bcfg.validate(x.len())?;
    let surrogate_seed = rng::derive_seed(seed, "surrogate");
    let (cross, own) = k_pair(x, &res, cfg, ens, surrogate_seed)?;
    let (k_cross, k_self) = (cross.k_value, own.k_value);
    let c_ind = calib.critical_value;
    let c_difference = if k_cross >= c_ind {
        Some(block_bootstrap_difference(x, &res, cfg, bcfg, ens, surrogate_seed)?.critical_value)
    } else {
        None
    };
    let decision = decide(k_self, k_cross, c_ind, c_difference.unwrap_or(f64::INFINITY));
    Ok(SufficiencyVerdict {
        decision,
        k_self,
        k_cross,
        difference: k_cross - k_self,
        c_independence: c_ind,
        c_difference,
        cfg: *cfg,
        ensemble: *ens,
        bootstrap: *bcfg,
        series_length: x.len(),
        provenance: Provenance {
            seed,
            surrogate_seed,
            bootstrap_seed: bcfg.seed,
            calibration_id: calib.id(),
            bootstrap_centered: true,
        },
    })
}
