//! Ordinal patterns over mixed segments.
//!
//! A segment of `D` reals is mapped to its rank word: entry `i` receives the
//! rank (1 = smallest, `D` = largest) of its value within the segment.
//! Rank words are indexed lexicographically, so for `D = 3` the index runs
//! `(1 2 3) -> 0, (1 3 2) -> 1, ..., (3 2 1) -> 5`.
//!
//! A *mixed* segment combines `D - 1` consecutive, mean-centered entries of a
//! lag series `x` ending at time `t` with the mean-centered entry `y[t + tau]`
//! of a target series. For a pair of length `N` there are `N - D - tau + 2`
//! such segments (`t = D - 2 ..= N - 1 - tau`, zero-based).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{insufficient, invalid_arg, Error, Result};
use crate::stats::mean;

pub const MAX_DIM: usize = 7;

const FACTORIAL: [usize; MAX_DIM + 1] = [1, 1, 2, 6, 24, 120, 720, 5040];

pub fn factorial(n: usize) -> usize {
    FACTORIAL[n]
}

/// How equal values inside a segment are ranked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    /// The earlier entry receives the lower rank.
    #[default]
    EarlierWins,
    /// The later entry receives the lower rank.
    LaterWins,
}

#[derive(Deserialize)]
struct RawSegmentConfig {
    dim: usize,
    delay: usize,
    #[serde(default = "default_ratio")]
    length_ratio: usize,
    #[serde(default)]
    tie_rule: TieRule,
}

fn default_ratio() -> usize {
    10
}

/// Segment length `D` and forecast delay `tau`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSegmentConfig")]
pub struct SegmentConfig {
    dim: usize,
    delay: usize,
    length_ratio: usize,
    tie_rule: TieRule,
}

impl TryFrom<RawSegmentConfig> for SegmentConfig {
    type Error = Error;

    fn try_from(raw: RawSegmentConfig) -> Result<Self> {
        let cfg = if raw.dim == 2 {
            SegmentConfig::minimal(raw.delay)?
        } else {
            SegmentConfig::new(raw.dim, raw.delay)?
        };
        Ok(cfg.with_length_ratio(raw.length_ratio).with_tie_rule(raw.tie_rule))
    }
}

impl SegmentConfig {
    /// Segment length in `3..=7`, delay `>= 1`.
    pub fn new(dim: usize, delay: usize) -> Result<Self> {
        if !(3..=MAX_DIM).contains(&dim) {
            return Err(invalid_arg(format!("segment length {dim} outside 3..=7")));
        }
        Self::build(dim, delay)
    }

    /// `D = 2`: below the usual range, kept for minimal worked examples.
    pub fn minimal(delay: usize) -> Result<Self> {
        Self::build(2, delay)
    }

    fn build(dim: usize, delay: usize) -> Result<Self> {
        if delay == 0 {
            return Err(invalid_arg("delay must be at least 1"));
        }
        Ok(Self { dim, delay, length_ratio: default_ratio(), tie_rule: TieRule::EarlierWins })
    }

    /// Required multiple of `D!` for `N - (D-1) tau` (default 10).
    pub fn with_length_ratio(mut self, ratio: usize) -> Self {
        self.length_ratio = ratio.max(1);
        self
    }

    pub fn with_tie_rule(mut self, tie_rule: TieRule) -> Self {
        self.tie_rule = tie_rule;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn tie_rule(&self) -> TieRule {
        self.tie_rule
    }

    pub fn length_ratio(&self) -> usize {
        self.length_ratio
    }

    /// Number of distinct ordinal patterns, `D!`.
    pub fn pattern_count(&self) -> usize {
        factorial(self.dim)
    }

    /// Number of mixed segments for a pair of length `n`, if any.
    pub fn segment_count(&self, n: usize) -> Option<usize> {
        (n + 2).checked_sub(self.dim + self.delay).filter(|&c| c >= 1)
    }

    /// Enforces `N - (D-1) tau >= ratio * D!`.
    pub fn check_length(&self, n: usize) -> Result<()> {
        let need = self.length_ratio * self.pattern_count();
        let have = n.saturating_sub((self.dim - 1) * self.delay);
        if have < need {
            return Err(insufficient(format!(
                "series length {n} too short for D={}, tau={}: N-(D-1)tau={have} < {need}",
                self.dim, self.delay
            )));
        }
        Ok(())
    }
}

/// Rank word of a segment; entries are `1..=D`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OrdinalPattern {
    ranks: Vec<u8>,
}

impl OrdinalPattern {
    pub fn from_ranks(ranks: Vec<u8>) -> Result<Self> {
        let d = ranks.len();
        if !(2..=MAX_DIM).contains(&d) {
            return Err(invalid_arg(format!("rank word of length {d}")));
        }
        let mut seen = [false; MAX_DIM + 1];
        for &r in &ranks {
            let r = r as usize;
            if r == 0 || r > d || seen[r] {
                return Err(invalid_arg(format!("{ranks:?} is not a permutation of 1..={d}")));
            }
            seen[r] = true;
        }
        Ok(Self { ranks })
    }

    /// Inverse of [`OrdinalPattern::index`].
    pub fn from_index(dim: usize, index: usize) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&dim) || index >= factorial(dim) {
            return Err(invalid_arg(format!("pattern index {index} for D={dim}")));
        }
        let mut pool: Vec<u8> = (1..=dim as u8).collect();
        let mut rem = index;
        let mut ranks = Vec::with_capacity(dim);
        for i in 0..dim {
            let f = factorial(dim - 1 - i);
            ranks.push(pool.remove(rem / f));
            rem %= f;
        }
        Ok(Self { ranks })
    }

    pub fn ranks(&self) -> &[u8] {
        &self.ranks
    }

    pub fn dim(&self) -> usize {
        self.ranks.len()
    }

    /// Lexicographic position among all rank words of the same length.
    pub fn index(&self) -> usize {
        lehmer_index(&self.ranks)
    }
}

impl fmt::Display for OrdinalPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, r) in self.ranks.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{r}")?;
        }
        write!(f, ")")
    }
}

fn lehmer_index(ranks: &[u8]) -> usize {
    let d = ranks.len();
    let mut idx = 0;
    for i in 0..d {
        let smaller_after = ranks[i + 1..].iter().filter(|&&r| r < ranks[i]).count();
        idx += smaller_after * factorial(d - 1 - i);
    }
    idx
}

fn rank_word(values: &[f64], tie: TieRule, out: &mut [u8]) {
    for (i, &v) in values.iter().enumerate() {
        let mut r = 1u8;
        for (j, &w) in values.iter().enumerate() {
            let below = match tie {
                TieRule::EarlierWins => w < v || (w == v && j < i),
                TieRule::LaterWins => w < v || (w == v && j > i),
            };
            r += below as u8;
        }
        out[i] = r;
    }
}

/// Rank word of `values` (length `2..=7`).
pub fn encode_segment(values: &[f64], tie: TieRule) -> Result<OrdinalPattern> {
    let d = values.len();
    if !(2..=MAX_DIM).contains(&d) {
        return Err(invalid_arg(format!("segment of length {d}; expected 2..=7")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("segment contains a non-finite value".into()));
    }
    let mut ranks = vec![0u8; d];
    rank_word(values, tie, &mut ranks);
    Ok(OrdinalPattern { ranks })
}

impl SegmentConfig {
    /// Encodes a segment that must have exactly `D` entries.
    pub fn encode(&self, values: &[f64]) -> Result<OrdinalPattern> {
        if values.len() != self.dim {
            return Err(invalid_arg(format!("segment has {} entries, expected D={}", values.len(), self.dim)));
        }
        encode_segment(values, self.tie_rule)
    }
}

fn check_pair(x: &[f64], y: &[f64], cfg: &SegmentConfig) -> Result<usize> {
    if x.len() != y.len() {
        return Err(invalid_arg(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("series contains a non-finite value".into()));
    }
    cfg.segment_count(x.len()).ok_or_else(|| {
        insufficient(format!("length {} yields no segments for D={}, tau={}", x.len(), cfg.dim, cfg.delay))
    })
}

/// Mixed segments `(x_{t-D+2} - x̄, ..., x_t - x̄, y_{t+tau} - ȳ)`.
pub fn mixed_segments(x: &[f64], y: &[f64], cfg: &SegmentConfig) -> Result<Vec<Vec<f64>>> {
    let count = check_pair(x, y, cfg)?;
    let (mx, my) = (mean(x), mean(y));
    let first = cfg.dim - 2;
    Ok((first..first + count)
        .map(|t| {
            let mut seg: Vec<f64> = x[t + 2 - cfg.dim..=t].iter().map(|v| v - mx).collect();
            seg.push(y[t + cfg.delay] - my);
            seg
        })
        .collect())
}

/// Empirical distribution over the `D!` ordinal patterns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternDistribution {
    pub dim: usize,
    pub counts: Vec<u64>,
    pub total: u64,
    pub probabilities: Vec<f64>,
}

impl PatternDistribution {
    pub(crate) fn from_counts(dim: usize, counts: Vec<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        let probabilities = counts
            .iter()
            .map(|&c| if total > 0 { c as f64 / total as f64 } else { 0.0 })
            .collect();
        Self { dim, counts, total, probabilities }
    }

    pub fn probability(&self, pattern: &OrdinalPattern) -> f64 {
        self.probabilities[pattern.index()]
    }

    /// `(pattern, probability)` in lexicographic pattern order.
    pub fn iter(&self) -> impl Iterator<Item = (OrdinalPattern, f64)> + '_ {
        self.probabilities
            .iter()
            .enumerate()
            .map(move |(i, &p)| (OrdinalPattern::from_index(self.dim, i).expect("valid index"), p))
    }
}

/// Tabulates the ordinal patterns of equal-arity segments.
pub fn pattern_distribution(segments: &[Vec<f64>], tie: TieRule) -> Result<PatternDistribution> {
    let first = segments.first().ok_or_else(|| insufficient("no segments"))?;
    let d = first.len();
    if !(2..=MAX_DIM).contains(&d) {
        return Err(invalid_arg(format!("segment arity {d} outside 2..=7")));
    }
    let mut counts = vec![0u64; factorial(d)];
    for seg in segments {
        if seg.len() != d {
            return Err(invalid_arg("segments have differing arity"));
        }
        counts[encode_segment(seg, tie)?.index()] += 1;
    }
    Ok(PatternDistribution::from_counts(d, counts))
}

/// Precomputed lag blocks of one series.
///
/// For each segment the `D - 1` centered lag values are stored sorted, with
/// a row of `D` pattern indices: the pattern produced when the final entry
/// falls into insertion slot `s` (the number of lag values ranked below it).
/// This turns every surrogate draw into a handful of comparisons.
/// Per-segment sorted lag blocks (`D - 1` centered lags each, ascending)
/// and, for each insertion slot of the final entry, the resulting pattern
/// index (`patterns[seg * D + slot]`).
pub(crate) struct LagBlocks {
    dim: usize,
    delay: usize,
    tie: TieRule,
    /// Largest absolute raw value of the series.
    scale: f64,
    sorted: Vec<f64>,
    patterns: Vec<u16>,
}

/// Final-entry and lag values closer than this, relative to the magnitude of
/// the raw data, count as tied. Keeps K exactly invariant when the target
/// is a shifted copy of the lagged series and the same observation meets
/// itself in a segment (surrogate draws, block resamples).
pub const TIE_TOLERANCE: f64 = 1e-10;

impl LagBlocks {
    pub(crate) fn new(x: &[f64], cfg: &SegmentConfig) -> Self {
        let d = cfg.dim;
        let lags = d - 1;
        let count = cfg.segment_count(x.len()).unwrap_or(0);
        let mx = mean(x);
        let table = slot_table(d, cfg.tie_rule);
        let mut sorted = Vec::with_capacity(count * lags);
        let mut patterns = Vec::with_capacity(count * d);
        let mut block = [0.0f64; MAX_DIM];
        let mut order = [0usize; MAX_DIM];
        let mut ranks = [0u8; MAX_DIM];
        for t in d - 2..d - 2 + count {
            for (k, v) in x[t + 2 - d..=t].iter().enumerate() {
                block[k] = v - mx;
            }
            rank_word(&block[..lags], cfg.tie_rule, &mut ranks[..lags]);
            for k in 0..lags {
                order[ranks[k] as usize - 1] = k;
            }
            sorted.extend(order[..lags].iter().map(|&k| block[k]));
            let code = lehmer_index(&ranks[..lags]);
            patterns.extend_from_slice(&table[code * d..(code + 1) * d]);
        }
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Self { dim: d, delay: cfg.delay, tie: cfg.tie_rule, scale, sorted, patterns }
    }

    pub(crate) fn len(&self) -> usize {
        self.patterns.len() / self.dim
    }

    /// Adds the pattern counts of the segments whose final entries are
    /// `y[t + tau] - shift`.
    pub(crate) fn accumulate(&self, y: &[f64], shift: f64, counts: &mut [u64]) {
        match self.dim - 1 {
            1 => self.accumulate_lags::<1>(y, shift, counts),
            2 => self.accumulate_lags::<2>(y, shift, counts),
            3 => self.accumulate_lags::<3>(y, shift, counts),
            4 => self.accumulate_lags::<4>(y, shift, counts),
            5 => self.accumulate_lags::<5>(y, shift, counts),
            6 => self.accumulate_lags::<6>(y, shift, counts),
            l => unreachable!("{l} lags"),
        }
    }

    fn accumulate_lags<const L: usize>(&self, y: &[f64], shift: f64, counts: &mut [u64]) {
        let start = self.dim - 2 + self.delay;
        let targets = &y[start..start + self.len()];
        let rows = self.sorted.chunks_exact(L).zip(self.patterns.chunks_exact(L + 1));
        let tol = TIE_TOLERANCE * (self.scale + shift.abs());
        // EarlierWins places a tied final entry above the lag value.
        let offset = match self.tie {
            TieRule::EarlierWins => tol,
            TieRule::LaterWins => -tol,
        };
        for ((block, row), &target) in rows.zip(targets) {
            let v = target - shift + offset;
            let slot: usize = match self.tie {
                TieRule::EarlierWins => (0..L).map(|k| (block[k] <= v) as usize).sum(),
                TieRule::LaterWins => (0..L).map(|k| (block[k] < v) as usize).sum(),
            };
            counts[row[slot] as usize] += 1;
        }
    }
}

/// `table[block_code * D + slot]` = full pattern index.
fn slot_table(d: usize, _tie: TieRule) -> Vec<u16> {
    let lags = d - 1;
    let mut table = vec![0u16; factorial(lags) * d];
    let mut full = [0u8; MAX_DIM];
    for code in 0..factorial(lags) {
        let block = if lags >= 2 {
            OrdinalPattern::from_index(lags, code).expect("valid").ranks
        } else {
            vec![1]
        };
        for slot in 0..d {
            // Lag entries ranked at or above the slot shift up by one; the
            // final entry takes rank slot + 1. Holds for either tie rule
            // because the stable sort order places the final entry after
            // exactly `slot` lag values.
            for (k, &r) in block.iter().enumerate() {
                full[k] = if (r as usize) > slot { r + 1 } else { r };
            }
            full[lags] = slot as u8 + 1;
            table[code * d + slot] = lehmer_index(&full[..d]) as u16;
        }
    }
    table
}

/// Pattern distribution of the mixed segments of `(x, y)`.
pub fn mixed_distribution(x: &[f64], y: &[f64], cfg: &SegmentConfig) -> Result<PatternDistribution> {
    check_pair(x, y, cfg)?;
    let blocks = LagBlocks::new(x, cfg);
    let my = mean(y);
    let mut counts = vec![0u64; cfg.pattern_count()];
    blocks.accumulate(y, my, &mut counts);
    Ok(PatternDistribution::from_counts(cfg.dim, counts))
}

pub(crate) fn validate_pair(x: &[f64], y: &[f64], cfg: &SegmentConfig) -> Result<usize> {
    check_pair(x, y, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_permutations(d: usize) -> Vec<Vec<usize>> {
        if d == 1 {
            return vec![vec![0]];
        }
        let mut out = Vec::new();
        for p in all_permutations(d - 1) {
            for pos in 0..d {
                let mut q = p.clone();
                q.insert(pos, d - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn table_one_examples() {
        let p = encode_segment(&[2.1, 0.5, 3.3], TieRule::EarlierWins).unwrap();
        assert_eq!(p.ranks(), &[2, 1, 3]);
        // π4 in the D = 3 listing ordered (321),(312),(231),(213),(132),(123).
        assert_eq!(p.to_string(), "(2 1 3)");
        let p = encode_segment(&[1.0, 2.0, 3.0], TieRule::EarlierWins).unwrap();
        assert_eq!(p.ranks(), &[1, 2, 3]);
        assert_eq!(p.index(), 0);
    }

    #[test]
    fn ties_follow_rule() {
        let p = encode_segment(&[5.0, 5.0], TieRule::EarlierWins).unwrap();
        assert_eq!(p.ranks(), &[1, 2]);
        let p = encode_segment(&[5.0, 5.0], TieRule::LaterWins).unwrap();
        assert_eq!(p.ranks(), &[2, 1]);
    }

    #[test]
    fn encode_errors() {
        assert!(matches!(encode_segment(&[1.0], TieRule::EarlierWins), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            encode_segment(&[1.0, f64::NAN], TieRule::EarlierWins),
            Err(Error::InvalidData(_))
        ));
        let cfg = SegmentConfig::new(3, 1).unwrap();
        assert!(matches!(cfg.encode(&[1.0, 2.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn config_bounds() {
        assert!(SegmentConfig::new(2, 1).is_err());
        assert!(SegmentConfig::new(8, 1).is_err());
        assert!(SegmentConfig::new(4, 0).is_err());
        assert!(SegmentConfig::minimal(1).is_ok());
        let cfg = SegmentConfig::new(4, 1).unwrap();
        assert!(cfg.check_length(6360).is_ok());
        assert!(matches!(cfg.check_length(200), Err(Error::InsufficientData(_))));
        assert!(SegmentConfig::new(7, 1).unwrap().check_length(6360).is_err());
    }

    #[test]
    fn index_is_lexicographic_bijection() {
        for d in 2..=5 {
            let mut words: Vec<Vec<u8>> = all_permutations(d)
                .into_iter()
                .map(|p| p.into_iter().map(|r| r as u8 + 1).collect())
                .collect();
            words.sort();
            for (i, w) in words.iter().enumerate() {
                let p = OrdinalPattern::from_ranks(w.clone()).unwrap();
                assert_eq!(p.index(), i);
                assert_eq!(OrdinalPattern::from_index(d, i).unwrap(), p);
            }
        }
    }

    #[test]
    fn segment_counts() {
        let cfg = SegmentConfig::new(3, 1).unwrap();
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(mixed_segments(&x, &x, &cfg).unwrap().len(), 8);
        let cfg4 = SegmentConfig::new(4, 1).unwrap();
        assert_eq!(cfg4.segment_count(6360), Some(6357));
        assert!(matches!(mixed_segments(&x, &x[..9], &cfg), Err(Error::InvalidArgument(_))));
        assert!(matches!(mixed_segments(&x[..2], &x[..2], &cfg), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn minimal_segments_by_hand() {
        let cfg = SegmentConfig::minimal(1).unwrap();
        let x = [1.0, 2.0, 3.0, 4.0];
        let segs = mixed_segments(&x, &x, &cfg).unwrap();
        assert_eq!(segs, vec![vec![-1.5, -0.5], vec![-0.5, 0.5], vec![0.5, 1.5]]);
    }

    #[test]
    fn monotone_series_concentrate() {
        let cfg = SegmentConfig::new(3, 1).unwrap();
        let up: Vec<f64> = (0..10).map(f64::from).collect();
        let dist = pattern_distribution(&mixed_segments(&up, &up, &cfg).unwrap(), TieRule::EarlierWins).unwrap();
        assert_eq!(dist.total, 8);
        assert_eq!(dist.probabilities[0], 1.0);
        let down: Vec<f64> = up.iter().map(|v| -v).collect();
        let dist = pattern_distribution(&mixed_segments(&down, &down, &cfg).unwrap(), TieRule::EarlierWins).unwrap();
        let desc = OrdinalPattern::from_ranks(vec![3, 2, 1]).unwrap();
        assert_eq!(dist.probability(&desc), 1.0);
        assert!(pattern_distribution(&[], TieRule::EarlierWins).is_err());
    }

    #[test]
    fn slot_table_agrees_with_direct_encoding() {
        // Includes heavy ties so both tie rules are exercised.
        let x = [0.0, 1.0, 1.0, 0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 2.0, 2.0, 0.0];
        let y = [1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 2.0, 1.0, 0.0, 1.0];
        for d in 2..=5 {
            for tie in [TieRule::EarlierWins, TieRule::LaterWins] {
                let cfg = if d == 2 { SegmentConfig::minimal(1) } else { SegmentConfig::new(d, 2) }
                    .unwrap()
                    .with_tie_rule(tie);
                let slow = pattern_distribution(&mixed_segments(&x, &y, &cfg).unwrap(), tie).unwrap();
                let fast = mixed_distribution(&x, &y, &cfg).unwrap();
                assert_eq!(slow.counts, fast.counts, "d={d} tie={tie:?}");
            }
        }
    }
}
