//! The K dependence statistic.
//!
//! K compares the ordinal-pattern distribution of the observed mixed
//! segments with an ensemble of surrogate distributions in which the final
//! entry is replaced by an independent draw from the target's empirical
//! distribution:
//!
//! ```text
//! K = sum_i ((p_obs(i) - mean_rand(i)) / sd_rand(i))^2
//! ```
//!
//! Patterns whose surrogate standard deviation is below [`SD_FLOOR`] are
//! excluded from the sum and listed in [`KResult::excluded_patterns`].

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{degenerate, invalid_arg, Result};
use crate::ordinal::{validate_pair, LagBlocks, PatternDistribution, SegmentConfig};
use crate::rng;
use crate::stats::mean;

/// Surrogate standard deviations below this are treated as zero.
pub const SD_FLOOR: f64 = 1e-12;

pub const DEFAULT_REPLICATIONS: usize = 500;

/// How surrogate target series are drawn from the observed target values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurrogateScheme {
    /// iid resample with replacement.
    WithReplacement,
    /// Random permutation (resample without replacement).
    #[default]
    Permutation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub replications: usize,
    #[serde(default)]
    pub scheme: SurrogateScheme,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { replications: DEFAULT_REPLICATIONS, scheme: SurrogateScheme::Permutation }
    }
}

impl EnsembleConfig {
    pub fn with_replications(replications: usize) -> Self {
        Self { replications, ..Self::default() }
    }
}

/// Per-pattern mean and sample standard deviation of surrogate pattern
/// probabilities, indexed by lexicographic pattern index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateEnsemble {
    pub replications: usize,
    pub scheme: SurrogateScheme,
    pub per_pattern_mean: Vec<f64>,
    pub per_pattern_sd: Vec<f64>,
    pub rng_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KResult {
    pub k_value: f64,
    pub contributions: Vec<f64>,
    pub observed: PatternDistribution,
    pub ensemble: SurrogateEnsemble,
    pub excluded_patterns: Vec<usize>,
}

/// Surrogate ensembles for several lag blocks sharing one target `y`.
///
/// Every block sees the same surrogate draws, so the result for each block
/// equals what a separate call with the same seed would produce.
fn ensembles_from_blocks(
    blocks: &[&LagBlocks],
    y: &[f64],
    patterns: usize,
    ens: &EnsembleConfig,
    seed: u64,
) -> Result<Vec<SurrogateEnsemble>> {
    if ens.replications < 2 {
        return Err(invalid_arg(format!("need at least 2 surrogate replications, got {}", ens.replications)));
    }
    let n = y.len();
    let nb = blocks.len();
    // probs[rep][block * patterns + i]
    let probs: Vec<Vec<f64>> = (0..ens.replications)
        .into_par_iter()
        .map_init(
            || (vec![0.0f64; n], vec![0u64; patterns]),
            |(surrogate, counts), rep| {
                let mut rng = rng::stream(seed, rep as u64);
                match ens.scheme {
                    SurrogateScheme::WithReplacement => {
                        for s in surrogate.iter_mut() {
                            *s = y[rng.random_range(0..n as u32) as usize];
                        }
                    }
                    SurrogateScheme::Permutation => {
                        surrogate.copy_from_slice(y);
                        surrogate.shuffle(&mut rng);
                    }
                }
                let shift = mean(surrogate);
                let mut out = Vec::with_capacity(nb * patterns);
                for blocks in blocks {
                    counts.fill(0);
                    blocks.accumulate(surrogate, shift, counts);
                    let segs = blocks.len() as f64;
                    out.extend(counts.iter().map(|&c| c as f64 / segs));
                }
                out
            },
        )
        .collect();

    let r = ens.replications as f64;
    Ok((0..nb)
        .map(|b| {
            let col = |i: usize| probs.iter().map(move |p| p[b * patterns + i]);
            let per_pattern_mean: Vec<f64> = (0..patterns).map(|i| col(i).sum::<f64>() / r).collect();
            let per_pattern_sd = (0..patterns)
                .map(|i| {
                    let m = per_pattern_mean[i];
                    (col(i).map(|p| (p - m) * (p - m)).sum::<f64>() / (r - 1.0)).sqrt()
                })
                .collect();
            SurrogateEnsemble {
                replications: ens.replications,
                scheme: ens.scheme,
                per_pattern_mean,
                per_pattern_sd,
                rng_seed: seed,
            }
        })
        .collect())
}

fn ensemble_from_blocks(
    blocks: &LagBlocks,
    y: &[f64],
    patterns: usize,
    ens: &EnsembleConfig,
    seed: u64,
) -> Result<SurrogateEnsemble> {
    Ok(ensembles_from_blocks(&[blocks], y, patterns, ens, seed)?.remove(0))
}

/// Surrogate ensemble for the mixed segments of `(x, y)`.
///
/// Each replication draws a surrogate target from `y`'s values, independent
/// of `x`, and tabulates the pattern probabilities of the segments whose
/// final entry is the centered surrogate value. Replication `r` uses RNG
/// stream `r` of `seed`.
pub fn surrogate_ensemble(
    x: &[f64],
    y: &[f64],
    cfg: &SegmentConfig,
    ens: &EnsembleConfig,
    seed: u64,
) -> Result<SurrogateEnsemble> {
    validate_pair(x, y, cfg)?;
    let blocks = LagBlocks::new(x, cfg);
    ensemble_from_blocks(&blocks, y, cfg.pattern_count(), ens, seed)
}

/// Combines an observed distribution with a surrogate ensemble.
pub fn k_from_parts(observed: PatternDistribution, ensemble: SurrogateEnsemble) -> Result<KResult> {
    let mut contributions = vec![0.0; observed.probabilities.len()];
    let mut excluded_patterns = Vec::new();
    for (i, c) in contributions.iter_mut().enumerate() {
        let sd = ensemble.per_pattern_sd[i];
        if sd < SD_FLOOR {
            excluded_patterns.push(i);
            continue;
        }
        let z = (observed.probabilities[i] - ensemble.per_pattern_mean[i]) / sd;
        *c = z * z;
    }
    if excluded_patterns.len() == contributions.len() {
        return Err(degenerate("every pattern has zero surrogate variance"));
    }
    let k_value = contributions.iter().sum();
    Ok(KResult { k_value, contributions, observed, ensemble, excluded_patterns })
}

/// K statistic between the `D - 1` lag block of `x` and `y` delayed by tau.
pub fn k_statistic(x: &[f64], y: &[f64], cfg: &SegmentConfig, ens: &EnsembleConfig, seed: u64) -> Result<KResult> {
    validate_pair(x, y, cfg)?;
    cfg.check_length(x.len())?;
    let blocks = LagBlocks::new(x, cfg);
    let mut counts = vec![0u64; cfg.pattern_count()];
    blocks.accumulate(y, mean(y), &mut counts);
    let observed = PatternDistribution::from_counts(cfg.dim(), counts);
    let ensemble = ensemble_from_blocks(&blocks, y, cfg.pattern_count(), ens, seed)?;
    k_from_parts(observed, ensemble)
}

/// K statistic of a series against its own delayed value.
pub fn k_self(residuals: &[f64], cfg: &SegmentConfig, ens: &EnsembleConfig, seed: u64) -> Result<KResult> {
    k_statistic(residuals, residuals, cfg, ens, seed)
}

/// Cross and self statistics of a forecast, `(K(x, e), K(e, e))`.
///
/// Both share the surrogate draws of `seed`, and each equals the result of
/// [`k_statistic`] / [`k_self`] called with that seed.
pub fn k_pair(
    x: &[f64],
    residuals: &[f64],
    cfg: &SegmentConfig,
    ens: &EnsembleConfig,
    seed: u64,
) -> Result<(KResult, KResult)> {
    validate_pair(x, residuals, cfg)?;
    cfg.check_length(x.len())?;
    let cross = LagBlocks::new(x, cfg);
    let own = LagBlocks::new(residuals, cfg);
    let shift = mean(residuals);
    let observed = |blocks: &LagBlocks| {
        let mut counts = vec![0u64; cfg.pattern_count()];
        blocks.accumulate(residuals, shift, &mut counts);
        PatternDistribution::from_counts(cfg.dim(), counts)
    };
    let (obs_cross, obs_self) = (observed(&cross), observed(&own));
    let mut ensembles = ensembles_from_blocks(&[&cross, &own], residuals, cfg.pattern_count(), ens, seed)?;
    let ens_self = ensembles.pop().expect("two ensembles");
    let ens_cross = ensembles.pop().expect("two ensembles");
    Ok((k_from_parts(obs_cross, ens_cross)?, k_from_parts(obs_self, ens_self)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::ordinal::{mixed_distribution, mixed_segments, pattern_distribution};
    use rand_distr::{Distribution, StandardNormal};

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut r = rng::stream(seed, 0);
        (0..n).map(|_| StandardNormal.sample(&mut r)).collect()
    }

    #[test]
    fn ensemble_is_deterministic_and_normalized() {
        let cfg = SegmentConfig::new(3, 1).unwrap();
        let (x, y) = (noise(1, 400), noise(2, 400));
        let ens = EnsembleConfig::with_replications(50);
        let a = surrogate_ensemble(&x, &y, &cfg, &ens, 9).unwrap();
        let b = surrogate_ensemble(&x, &y, &cfg, &ens, 9).unwrap();
        assert_eq!(a, b);
        assert!((a.per_pattern_mean.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(a.per_pattern_sd.iter().all(|&s| s > 0.0));
        assert!(matches!(
            surrogate_ensemble(&x, &y, &cfg, &EnsembleConfig::with_replications(1), 9),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn permutation_scheme_keeps_target_values() {
        let cfg = SegmentConfig::new(3, 1).unwrap();
        let (x, y) = (noise(3, 300), noise(4, 300));
        let ens = EnsembleConfig { replications: 20, scheme: SurrogateScheme::Permutation };
        let e = surrogate_ensemble(&x, &y, &cfg, &ens, 1).unwrap();
        assert!((e.per_pattern_mean.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_numerators_give_zero() {
        let observed = PatternDistribution::from_counts(3, vec![1, 1, 1, 1, 1, 1]);
        let ensemble = SurrogateEnsemble {
            replications: 10,
            scheme: SurrogateScheme::WithReplacement,
            per_pattern_mean: vec![1.0 / 6.0; 6],
            per_pattern_sd: vec![0.01; 6],
            rng_seed: 0,
        };
        let k = k_from_parts(observed, ensemble).unwrap();
        assert!(k.k_value.abs() < 1e-20);
    }

    #[test]
    fn zero_sd_patterns_are_excluded() {
        let observed = PatternDistribution::from_counts(2, vec![3, 1]);
        let ensemble = SurrogateEnsemble {
            replications: 10,
            scheme: SurrogateScheme::WithReplacement,
            per_pattern_mean: vec![0.5, 0.5],
            per_pattern_sd: vec![0.1, 0.0],
            rng_seed: 0,
        };
        let k = k_from_parts(observed.clone(), ensemble.clone()).unwrap();
        assert_eq!(k.excluded_patterns, vec![1]);
        assert!((k.k_value - 6.25).abs() < 1e-12);
        assert_eq!(k.contributions[1], 0.0);
        let all_zero = SurrogateEnsemble { per_pattern_sd: vec![0.0, 0.0], ..ensemble };
        assert!(matches!(k_from_parts(observed, all_zero), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn constant_residuals_are_degenerate() {
        let cfg = SegmentConfig::new(4, 1).unwrap();
        let r = vec![0.3; 1000];
        let err = k_self(&r, &cfg, &EnsembleConfig::with_replications(20), 1).unwrap_err();
        assert!(matches!(err, Error::DegenerateData(_)));
    }

    #[test]
    fn k_statistic_rejects_short_series() {
        let cfg = SegmentConfig::new(4, 1).unwrap();
        let x = noise(5, 100);
        assert!(matches!(
            k_self(&x, &cfg, &EnsembleConfig::with_replications(20), 1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn observed_distribution_matches_slow_path() {
        let cfg = SegmentConfig::new(4, 1).unwrap();
        let (x, y) = (noise(6, 500), noise(7, 500));
        let k = k_statistic(&x, &y, &cfg, &EnsembleConfig::with_replications(10), 3).unwrap();
        let slow = pattern_distribution(&mixed_segments(&x, &y, &cfg).unwrap(), cfg.tie_rule()).unwrap();
        assert_eq!(k.observed, slow);
        assert_eq!(mixed_distribution(&x, &y, &cfg).unwrap(), slow);
    }

    #[test]
    fn surrogate_mean_agrees_with_direct_resample() {
        // Rebuild replications 0 and 1 by hand through the slow segment path.
        let cfg = SegmentConfig::new(3, 1).unwrap();
        let (x, y) = (noise(8, 200), noise(9, 200));
        for scheme in [SurrogateScheme::WithReplacement, SurrogateScheme::Permutation] {
            let ens = EnsembleConfig { replications: 2, scheme };
            let e = surrogate_ensemble(&x, &y, &cfg, &ens, 77).unwrap();
            let draw = |rep: u64| {
                let mut r = rng::stream(77, rep);
                let s: Vec<f64> = match scheme {
                    SurrogateScheme::WithReplacement => {
                        (0..y.len()).map(|_| y[r.random_range(0..y.len() as u32) as usize]).collect()
                    }
                    SurrogateScheme::Permutation => {
                        let mut s = y.clone();
                        s.shuffle(&mut r);
                        s
                    }
                };
                pattern_distribution(&mixed_segments(&x, &s, &cfg).unwrap(), cfg.tie_rule()).unwrap().probabilities
            };
            let (p0, p1) = (draw(0), draw(1));
            for i in 0..6 {
                assert!((e.per_pattern_mean[i] - (p0[i] + p1[i]) / 2.0).abs() < 1e-12);
                let sd = ((p0[i] - p1[i]).abs()) / 2f64.sqrt();
                assert!((e.per_pattern_sd[i] - sd).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pair_matches_separate_calls() {
        let cfg = SegmentConfig::new(3, 1).unwrap();
        let (x, e) = (noise(3, 500), noise(4, 500));
        let ens = EnsembleConfig::with_replications(40);
        let (cross, own) = k_pair(&x, &e, &cfg, &ens, 5).unwrap();
        assert_eq!(cross, k_statistic(&x, &e, &cfg, &ens, 5).unwrap());
        assert_eq!(own, k_self(&e, &cfg, &ens, 5).unwrap());
    }

    #[test]
    fn shifted_copy_gives_identical_statistics() {
        // residuals of a constant forecast: every comparison, including
        // surrogate draws meeting their own lag, must agree exactly
        let cfg = SegmentConfig::new(4, 1).unwrap();
        let x: Vec<f64> = noise(6, 2000).iter().map(|v| 1.8 + 3.0 * v).collect();
        let e: Vec<f64> = x.iter().map(|v| v - 1.7999999).collect();
        let ens = EnsembleConfig::with_replications(60);
        let (cross, own) = k_pair(&x, &e, &cfg, &ens, 7).unwrap();
        assert_eq!(cross.k_value, own.k_value);
    }
}
