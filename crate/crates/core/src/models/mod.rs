//! Baseline forecasters and accuracy metrics.
//!
//! [`fit`] estimates one of three one-step forecasters on a training span
//! and [`FittedModel::forecast`] produces rolling one-step predictions over
//! a later span using true past observations, without refitting.

pub mod arma;
pub mod garch;
pub mod gp;
pub mod metrics;
pub mod optim;

use serde::{Deserialize, Serialize};

use crate::dgp::{ArmaParams, GarchParams};
use crate::error::{invalid_arg, Error, Result};
use crate::stats::variance;

pub use gp::{GpGrid, GpHyper, GpModel};
pub use metrics::{metrics, MetricsReport, PredictionClass};
pub use optim::ConvergenceReport;

pub const MIN_TRAIN_LENGTH: usize = 200;
/// Share of a GP training span used for fitting; the rest is validation.
pub const GP_TRAIN_SHARE: f64 = 4000.0 / 5160.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "arma11")]
    Arma11,
    #[serde(rename = "garch11")]
    Garch11,
    #[serde(rename = "gp")]
    GpMean,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Arma11, ModelKind::Garch11, ModelKind::GpMean];

    pub fn label(self) -> &'static str {
        match self {
            Self::Arma11 => "arma11",
            Self::Garch11 => "garch11",
            Self::GpMean => "gp",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedModel {
    Arma(ArmaParams),
    Garch { params: GarchParams, initial_variance: f64 },
    Gp(GpModel),
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Arma(_) => ModelKind::Arma11,
            Self::Garch { .. } => ModelKind::Garch11,
            Self::Gp(_) => ModelKind::GpMean,
        }
    }

    /// Observations needed before the first forecast.
    pub fn warmup(&self) -> usize {
        match self {
            Self::Arma(_) | Self::Garch { .. } => 1,
            Self::Gp(m) => m.hyper.lag,
        }
    }

    /// One-step predictions of `series[start..]`. ARMA and GARCH filters run
    /// over the whole of `series` so that their state at `start` reflects the
    /// history.
    pub fn forecast(&self, series: &[f64], start: usize) -> Result<Vec<f64>> {
        if start < self.warmup() {
            return Err(invalid_arg(format!("forecast start {start} needs at least {} past observations", self.warmup())));
        }
        if start > series.len() {
            return Err(invalid_arg(format!("forecast start {start} beyond series length {}", series.len())));
        }
        Ok(match self {
            Self::Arma(p) => arma::predictions(p, series).0.split_off(start),
            Self::Garch { params, initial_variance } => params.filter(series, *initial_variance).split_off(start),
            Self::Gp(m) => m.predictions(series, start),
        })
    }

    /// Named estimates in reporting order.
    pub fn estimates(&self) -> Vec<(&'static str, f64)> {
        match self {
            Self::Arma(p) => vec![("phi0", p.phi0), ("phi1", p.phi1), ("theta1", p.theta1)],
            Self::Garch { params, .. } => {
                vec![("alpha0", params.alpha0), ("alpha1", params.alpha1), ("beta1", params.beta1)]
            }
            Self::Gp(m) => vec![
                ("lag", m.hyper.lag as f64),
                ("lengthscale", m.hyper.lengthscale),
                ("signal_variance", m.hyper.signal_variance),
                ("noise_variance", m.hyper.noise_variance),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: ModelKind,
    pub model: FittedModel,
    /// One-step predictions over the training span from the model's first
    /// usable index on.
    pub in_sample_predictions: Vec<f64>,
    pub convergence: ConvergenceReport,
}

fn check_train(train: &[f64]) -> Result<()> {
    if train.len() < MIN_TRAIN_LENGTH {
        return Err(Error::InsufficientData(format!(
            "training span has {} observations, need at least {MIN_TRAIN_LENGTH}",
            train.len()
        )));
    }
    if let Some(t) = train.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite training value at index {t}")));
    }
    if !(variance(train) > 0.0) {
        return Err(Error::EstimationFailed("training series has zero variance".into()));
    }
    Ok(())
}

fn finish(model: FittedModel, train: &[f64], convergence: ConvergenceReport) -> Result<FitResult> {
    let in_sample_predictions = model.forecast(train, model.warmup())?;
    Ok(FitResult { kind: model.kind(), model, in_sample_predictions, convergence })
}

/// Estimates `kind` on `train`. A GP fit holds out the last part of `train`
/// (see [`GP_TRAIN_SHARE`]) for grid selection over [`GpGrid::default`].
pub fn fit(kind: ModelKind, train: &[f64], seed: u64) -> Result<FitResult> {
    check_train(train)?;
    match kind {
        ModelKind::Arma11 => {
            let (p, report) = arma::fit(train, seed)?;
            finish(FittedModel::Arma(p), train, report)
        }
        ModelKind::Garch11 => {
            let (params, initial_variance, report) = garch::fit(train, seed)?;
            finish(FittedModel::Garch { params, initial_variance }, train, report)
        }
        ModelKind::GpMean => {
            let split = (train.len() as f64 * GP_TRAIN_SHARE).round() as usize;
            fit_with_validation(&train[..split], &train[split..], &GpGrid::default())
        }
    }
}

/// GP grid search: fits on `train`, selects by MSE on `validation`.
pub fn fit_with_validation(train: &[f64], validation: &[f64], grid: &GpGrid) -> Result<FitResult> {
    grid.validate()?;
    check_train(train)?;
    let points = grid.lags.len() * grid.lengthscales.len() * grid.signal_variances.len() * grid.noise_variances.len();
    let m = gp::fit_with_validation(train, validation, grid)?;
    let report = ConvergenceReport {
        converged: true,
        restarts: 0,
        converged_restarts: 0,
        iterations: points as u64,
        objective: m.validation_mse,
        message: format!("grid search over {points} points"),
    };
    let full: Vec<f64> = train.iter().chain(validation).copied().collect();
    finish(FittedModel::Gp(m), &full, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{simulate, DgpKind, DgpSpec};

    #[test]
    fn garch_forecast_matches_oracle_at_true_params() {
        let path = simulate(&DgpSpec::new(DgpKind::GarchSquared, 11).with_length(2000)).unwrap();
        let model = FittedModel::Garch { params: GarchParams::default(), initial_variance: path.oracle[0] };
        let f = model.forecast(&path.observations, 1).unwrap();
        assert_eq!(f.len(), 1999);
        for (a, b) in f.iter().zip(&path.oracle[1..]) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn arma_forecast_matches_oracle_at_true_params() {
        let path = simulate(&DgpSpec::new(DgpKind::ArmaIid, 12).with_length(3000)).unwrap();
        let f = FittedModel::Arma(ArmaParams::default()).forecast(&path.observations, 1000).unwrap();
        // the e_0 = 0 start washes out geometrically at rate theta1
        let worst = f.iter().zip(&path.oracle[1000..]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn forecast_lengths_and_bounds() {
        let x: Vec<f64> = (0..300).map(|t| (t as f64 * 0.7).sin()).collect();
        let m = FittedModel::Arma(ArmaParams { phi0: 0.2, phi1: 0.0, theta1: 0.0, innovation_variance: 1.0 });
        assert_eq!(m.forecast(&x, 250).unwrap(), vec![0.2; 50]);
        assert!(m.forecast(&x, 300).unwrap().is_empty());
        assert!(matches!(m.forecast(&x, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(m.forecast(&x, 301), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn fit_rejects_degenerate_training() {
        for kind in ModelKind::ALL {
            assert!(matches!(fit(kind, &[3.0; 500], 0), Err(Error::EstimationFailed(_))), "{kind:?}");
            assert!(matches!(fit(kind, &[1.0; 50], 0), Err(Error::InsufficientData(_))));
        }
    }

    #[test]
    fn arma_fit_on_x1() {
        let path = simulate(&DgpSpec::new(DgpKind::ArmaIid, 3).with_length(5160)).unwrap();
        let r = fit(ModelKind::Arma11, &path.observations, 3).unwrap();
        let FittedModel::Arma(p) = r.model else { panic!() };
        assert!((p.phi1 - 0.9).abs() < 0.05 && (p.theta1 - 0.74).abs() < 0.1, "{p:?}");
        assert!((p.innovation_variance - 9.0).abs() < 1.0);
        assert_eq!(r.in_sample_predictions.len(), 5159);
    }

    #[test]
    fn garch_fit_on_x3() {
        let path = simulate(&DgpSpec::new(DgpKind::GarchSquared, 4).with_length(5160)).unwrap();
        let r = fit(ModelKind::Garch11, &path.observations, 4).unwrap();
        let FittedModel::Garch { params, .. } = r.model else { panic!() };
        assert!(params.is_stationary() && params.alpha0 > 0.0);
        assert!((params.alpha1 + params.beta1 - 0.9).abs() < 0.1, "{params:?}");
    }

    #[test]
    fn garch_recursion_on_x1_matches_arma_filter() {
        // phi0 + (phi1 - theta1) x + theta1 s is the X1 oracle filter
        let path = simulate(&DgpSpec::new(DgpKind::ArmaIid, 5).with_length(5160)).unwrap();
        let r = fit(ModelKind::Garch11, &path.observations, 5).unwrap();
        let FittedModel::Garch { params, .. } = r.model else { panic!() };
        assert!(r.convergence.message.starts_with("least squares"));
        assert!((params.alpha1 - 0.16).abs() < 0.04 && (params.beta1 - 0.74).abs() < 0.08, "{params:?}");
    }

    #[test]
    fn labels_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(ModelKind::from_label(k.label()), Some(k));
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.label()));
        }
    }
}
