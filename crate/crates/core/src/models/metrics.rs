//! Forecast accuracy metrics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::stats::{mean, variance};

pub const SUFFICIENT_RATE: f64 = 0.05;
pub const ACCEPTABLE_RATE: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionClass {
    Sufficient,
    Acceptable,
    Inadequate,
}

impl PredictionClass {
    pub fn from_rate(rate: f64) -> Self {
        if rate <= SUFFICIENT_RATE {
            Self::Sufficient
        } else if rate <= ACCEPTABLE_RATE {
            Self::Acceptable
        } else {
            Self::Inadequate
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sufficient => "sufficient",
            Self::Acceptable => "acceptable",
            Self::Inadequate => "inadequate",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    /// Centered mean squared error over the target variance.
    pub adj_mse_ratio: f64,
    /// Squared mean error over the target variance.
    pub bias_ratio: f64,
    /// Sum of squared errors over the sum of squared targets.
    pub mse_over_sumsq: f64,
    pub prediction_error_rate: Option<f64>,
    pub prediction_class: Option<PredictionClass>,
}

pub fn metrics(actual: &[f64], predicted: &[f64], oracle: Option<&[f64]>) -> Result<MetricsReport> {
    if actual.len() != predicted.len() {
        return Err(invalid_arg(format!("{} actual values but {} predictions", actual.len(), predicted.len())));
    }
    if actual.is_empty() {
        return Err(Error::InsufficientData("no observations to score".into()));
    }
    let var_x = variance(actual);
    if !(var_x > 0.0) {
        return Err(Error::DegenerateData("target has zero variance".into()));
    }
    let err: Vec<f64> = actual.iter().zip(predicted).map(|(a, p)| a - p).collect();
    let bias = mean(&err);
    let centered = variance(&err);
    let sumsq: f64 = actual.iter().map(|a| a * a).sum();
    let sse: f64 = err.iter().map(|e| e * e).sum();

    let rate = match oracle {
        None => None,
        Some(o) => {
            if o.len() != actual.len() {
                return Err(invalid_arg(format!("{} actual values but {} oracle values", actual.len(), o.len())));
            }
            let var_o = variance(o);
            if !(var_o > 0.0) {
                return Err(Error::DegenerateData("oracle has zero variance".into()));
            }
            let dev: Vec<f64> = predicted.iter().zip(o).map(|(p, o)| p - o).collect();
            Some(variance(&dev) / var_o)
        }
    };

    Ok(MetricsReport {
        n: actual.len(),
        adj_mse_ratio: centered / var_x,
        bias_ratio: bias * bias / var_x,
        mse_over_sumsq: sse / sumsq,
        prediction_error_rate: rate,
        prediction_class: rate.map(PredictionClass::from_rate),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const X: [f64; 6] = [1.0, 3.0, 2.0, 5.0, 4.0, 6.0];

    #[test]
    fn perfect_prediction() {
        let m = metrics(&X, &X, Some(&X)).unwrap();
        assert_eq!((m.adj_mse_ratio, m.bias_ratio, m.mse_over_sumsq), (0.0, 0.0, 0.0));
        assert_eq!(m.prediction_error_rate, Some(0.0));
        assert_eq!(m.prediction_class, Some(PredictionClass::Sufficient));
    }

    #[test]
    fn constant_mean_predictor() {
        let p = vec![mean(&X); X.len()];
        let m = metrics(&X, &p, None).unwrap();
        assert!((m.adj_mse_ratio - 1.0).abs() < 1e-9);
        assert!(m.bias_ratio < 1e-24);
        assert!(m.prediction_error_rate.is_none() && m.prediction_class.is_none());
    }

    #[test]
    fn hand_computed_ratios() {
        let actual = [1.0, 2.0, 3.0];
        let pred = [0.0, 2.0, 2.0];
        // errors 1, 0, 1: mean 2/3, centered variance 2/9; var(x) = 2/3
        let m = metrics(&actual, &pred, None).unwrap();
        assert!((m.adj_mse_ratio - (2.0 / 9.0) / (2.0 / 3.0)).abs() < 1e-12);
        assert!((m.bias_ratio - (4.0 / 9.0) / (2.0 / 3.0)).abs() < 1e-12);
        assert!((m.mse_over_sumsq - 2.0 / 14.0).abs() < 1e-12);
    }

    #[test]
    fn classification_bands() {
        assert_eq!(PredictionClass::from_rate(0.05), PredictionClass::Sufficient);
        assert_eq!(PredictionClass::from_rate(0.1), PredictionClass::Acceptable);
        assert_eq!(PredictionClass::from_rate(0.15), PredictionClass::Acceptable);
        assert_eq!(PredictionClass::from_rate(0.2), PredictionClass::Inadequate);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(metrics(&[2.0; 4], &[1.0; 4], None), Err(Error::DegenerateData(_))));
        assert!(matches!(metrics(&X, &X[..3], None), Err(Error::InvalidArgument(_))));
        assert!(matches!(metrics(&X, &X, Some(&[1.0; 6])), Err(Error::DegenerateData(_))));
    }
}
