//! Nelder-Mead minimization with random restarts.

use argmin::core::{CostFunction, Error as ArgminError, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_RESTARTS: usize = 5;
const MAX_ITERS: u64 = 4000;
const SD_TOLERANCE: f64 = 1e-12;
/// Stand-in for non-finite objective values.
const PENALTY: f64 = 1e300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub restarts: usize,
    pub converged_restarts: usize,
    pub iterations: u64,
    pub objective: f64,
    pub message: String,
}

struct Objective<'a, F>(&'a F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Objective<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, ArgminError> {
        let v = (self.0)(p);
        Ok(if v.is_finite() { v } else { PENALTY })
    }
}

struct Run {
    params: Vec<f64>,
    value: f64,
    iterations: u64,
    converged: bool,
}

fn simplex_around(start: &[f64], step: f64) -> Vec<Vec<f64>> {
    let mut simplex = vec![start.to_vec()];
    for i in 0..start.len() {
        let mut v = start.to_vec();
        v[i] += if v[i].abs() > 1.0 { step * v[i].abs() } else { step };
        simplex.push(v);
    }
    simplex
}

fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64], step: f64) -> Option<Run> {
    let solver = NelderMead::new(simplex_around(start, step)).with_sd_tolerance(SD_TOLERANCE).ok()?;
    let res = Executor::new(Objective(f), solver).configure(|s| s.max_iters(MAX_ITERS)).run().ok()?;
    let state = res.state();
    let params = state.get_best_param()?.clone();
    let converged = matches!(state.get_termination_status(), TerminationStatus::Terminated(TerminationReason::SolverConverged));
    Some(Run { params, value: state.get_best_cost(), iterations: state.get_iter(), converged })
}

/// Minimizes `f` from `start` and from `restarts - 1` Gaussian
/// perturbations of it (scale `spread`). Each run is restarted once from
/// its own optimum with a fresh simplex.
pub fn minimize<F>(f: F, start: &[f64], spread: f64, restarts: usize, seed: u64) -> Result<(Vec<f64>, ConvergenceReport)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let restarts = restarts.max(1);
    let runs: Vec<Option<Run>> = (0..restarts)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let x0: Vec<f64> = if i == 0 {
                start.to_vec()
            } else {
                start
                    .iter()
                    .map(|v| {
                        let z: f64 = StandardNormal.sample(&mut r);
                        v + spread * z
                    })
                    .collect()
            };
            let first = nelder_mead(&f, &x0, 0.1)?;
            let polish = nelder_mead(&f, &first.params, 0.02)?;
            Some(Run {
                iterations: first.iterations + polish.iterations,
                converged: polish.converged,
                ..if polish.value <= first.value { polish } else { first }
            })
        })
        .collect();
    let converged_restarts = runs.iter().flatten().filter(|r| r.converged).count();
    let iterations = runs.iter().flatten().map(|r| r.iterations).sum();
    let best = runs
        .into_iter()
        .flatten()
        .filter(|r| r.value < PENALTY)
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| Error::EstimationFailed(format!("no finite objective in {restarts} restarts")))?;
    let report = ConvergenceReport {
        converged: best.converged,
        restarts,
        converged_restarts,
        iterations,
        objective: best.value,
        message: if best.converged {
            "simplex converged".into()
        } else {
            format!("iteration limit reached ({converged_restarts}/{restarts} restarts converged)")
        },
    };
    Ok((best.params, report))
}

pub(crate) fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub(crate) fn softplus(v: f64) -> f64 {
    if v > 30.0 {
        v
    } else {
        v.exp().ln_1p()
    }
}

pub(crate) fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}
