//! ARMA(1,1) by conditional sum of squares.
//!
//! Convention: `x_t = phi0 + phi1 x_{t-1} - theta1 e_{t-1} + e_t`, the same
//! as the simulator. The recursion starts with `e_0 = 0` and the first
//! prediction is the unconditional mean.

use crate::dgp::ArmaParams;
use crate::error::Result;
use crate::stats::{autocorrelation, mean};

use super::optim::{minimize, ConvergenceReport, DEFAULT_RESTARTS};

/// One-step predictions over `x` and the sum of squared residuals from
/// `t = 1` on.
pub fn predictions(p: &ArmaParams, x: &[f64]) -> (Vec<f64>, f64) {
    let mut preds = Vec::with_capacity(x.len());
    if x.is_empty() {
        return (preds, 0.0);
    }
    preds.push(p.unconditional_mean());
    let mut e = 0.0;
    let mut sse = 0.0;
    for t in 1..x.len() {
        let pred = p.predict(x[t - 1], e);
        e = x[t] - pred;
        sse += e * e;
        preds.push(pred);
    }
    (preds, sse)
}

fn unpack(v: &[f64]) -> ArmaParams {
    ArmaParams { phi0: v[0], phi1: v[1].tanh(), theta1: v[2].tanh(), innovation_variance: f64::NAN }
}

pub(super) fn fit(x: &[f64], seed: u64) -> Result<(ArmaParams, ConvergenceReport)> {
    let m = mean(x);
    let scale = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    let rho = autocorrelation(x, 1).clamp(-0.95, 0.95);
    let start = [m * (1.0 - rho), rho.atanh(), 0.0];
    let objective = |v: &[f64]| predictions(&unpack(v), x).1 / scale;
    let (best, report) = minimize(objective, &start, 0.5, DEFAULT_RESTARTS, seed)?;
    let mut params = unpack(&best);
    let (_, sse) = predictions(&params, x);
    params.innovation_variance = sse / (x.len() - 1) as f64;
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_params_give_constant_forecast() {
        let p = ArmaParams { phi0: 0.7, phi1: 0.0, theta1: 0.0, innovation_variance: 1.0 };
        let (preds, _) = predictions(&p, &[1.0, -3.0, 2.0, 5.0]);
        assert!(preds.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn recursion_by_hand() {
        let p = ArmaParams { phi0: 1.0, phi1: 0.5, theta1: 0.25, innovation_variance: 1.0 };
        let x = [2.0, 3.0, 1.0];
        let (preds, sse) = predictions(&p, &x);
        // t=1: 1 + 0.5*2 - 0.25*0 = 2, e=1; t=2: 1 + 1.5 - 0.25 = 2.25, e=-1.25
        assert_eq!(preds, vec![2.0, 2.0, 2.25]);
        assert!((sse - (1.0 + 1.5625)).abs() < 1e-12);
    }
}
