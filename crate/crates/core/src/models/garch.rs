//! GARCH(1,1) on squared returns by Gaussian quasi-maximum likelihood.
//!
//! `y_t` is a squared return; the conditional variance path is
//! `s_t = alpha0 + alpha1 y_{t-1} + beta1 s_{t-1}` and the per-observation
//! loss is `ln s_t + y_t / s_t`. Parameters are searched as
//! `alpha0 = mean(y) softplus(u)`, `alpha1 + beta1 = logistic(p)` and
//! `alpha1 / (alpha1 + beta1) = logistic(q)`, so every candidate is positive
//! and covariance stationary.
//!
//! A series with negative values has no likelihood under this model; the
//! same recursion is then fitted as a conditional mean by least squares.

use crate::dgp::GarchParams;
use crate::error::{Error, Result};
use crate::stats::mean;

use super::optim::{logistic, logit, minimize, softplus, softplus_inv, ConvergenceReport, DEFAULT_RESTARTS};

fn unpack(v: &[f64], level: f64) -> GarchParams {
    let persistence = logistic(v[1]);
    let share = logistic(v[2]);
    GarchParams {
        alpha0: level * softplus(v[0]),
        alpha1: persistence * share,
        beta1: persistence * (1.0 - share),
    }
}

/// Mean Gaussian quasi-log-likelihood loss of `y` with `s_0 = initial`.
pub fn qmle_loss(p: &GarchParams, y: &[f64], initial: f64) -> f64 {
    let mut var = initial;
    let mut loss = 0.0;
    for t in 0..y.len() {
        if t > 0 {
            var = p.step(y[t - 1], var);
        }
        loss += var.ln() + y[t] / var;
    }
    loss / y.len() as f64
}

/// Mean squared deviation of `y` from the variance path, scaled by the
/// squared level.
pub fn least_squares_loss(p: &GarchParams, y: &[f64], initial: f64) -> f64 {
    let mut var = initial;
    let mut sse = 0.0;
    for t in 0..y.len() {
        if t > 0 {
            var = p.step(y[t - 1], var);
        }
        sse += (y[t] - var) * (y[t] - var);
    }
    sse / (y.len() as f64 * initial * initial)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    QuasiLikelihood,
    LeastSquares,
}

impl Estimator {
    pub fn for_series(y: &[f64]) -> Self {
        if y.iter().all(|v| *v >= 0.0) {
            Self::QuasiLikelihood
        } else {
            Self::LeastSquares
        }
    }

    fn label(self) -> &'static str {
        match self {
            Self::QuasiLikelihood => "quasi-likelihood",
            Self::LeastSquares => "least squares",
        }
    }
}

pub(super) fn fit(y: &[f64], seed: u64) -> Result<(GarchParams, f64, ConvergenceReport)> {
    let level = mean(y);
    if !(level > 0.0) {
        return Err(Error::EstimationFailed(format!("GARCH recursion needs a positive mean level, got {level}")));
    }
    let estimator = Estimator::for_series(y);
    let start = [softplus_inv(0.1), logit(0.9), logit(0.1)];
    let objective = |v: &[f64]| {
        let p = unpack(v, level);
        match estimator {
            Estimator::QuasiLikelihood => qmle_loss(&p, y, level),
            Estimator::LeastSquares => least_squares_loss(&p, y, level),
        }
    };
    let (best, mut report) = minimize(objective, &start, 1.0, DEFAULT_RESTARTS, seed)?;
    report.message = format!("{}: {}", estimator.label(), report.message);
    Ok((unpack(&best, level), level, report))
}
