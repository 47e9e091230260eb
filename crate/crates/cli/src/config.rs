//! Experiment configuration: a TOML file, then command-line overrides.
//!
//! Every key is optional; missing keys take the defaults below. Unknown keys
//! are rejected so that typos surface as configuration errors.
//!
//! ```toml
//! seed = 20240601
//! out_dir = "out"
//! quick = false
//!
//! [segment]            # D and tau
//! dim = 4
//! delay = 1
//!
//! [surrogates]
//! replications = 500
//! scheme = "permutation"        # or "with-replacement"
//!
//! [calibration]
//! paths = 1000
//! quantile = 0.95
//! length = 6360
//! marginal = "gaussian"         # "uniform", "exponential"
//! # cache_dir = "out/calibration"
//!
//! [bootstrap]
//! block_length = 20
//! replications = 500
//! quantile = 0.95
//!
//! [data]
//! dgps = ["x1", "x2", "x3", "x4", "x5", "x6"]
//! length = 6360
//! train_length = 5160
//! gp_train_length = 4000
//! warmup = 10
//! # input = "series.csv"       # columns: x, optional oracle and others
//!
//! [models]
//! kinds = ["arma11", "garch11", "gp"]
//! predictor = "oracle"          # mean, arma11, garch11, gp, column:<name>
//!
//! [bds]
//! seeds = 1
//! length = 6360
//! dims = [2, 3, 4, 5, 6, 7, 8, 9, 10]
//! r_multipliers = [0.25, 0.5, 0.75, 1.0, 1.25]
//! truth = [0.18, 0.16, 0.74]
//! predictor = [0.18, 0.03, 0.87]
//!
//! [rv]
//! year = 2013
//! train_length = 5160
//! # input = "ticks.csv"        # timestamp,close_bid; synthetic quotes otherwise
//! synthetic_vol = 0.0002
//! synthetic_cycle = 0.5
//! ```

use std::path::{Path, PathBuf};

use pesuff::dependence::SurrogateScheme;
use pesuff::inference::NullMarginal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const QUICK_PATHS: usize = 100;
pub const QUICK_REPLICATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub quick: bool,
    pub segment: SegmentSection,
    pub surrogates: SurrogateSection,
    pub calibration: CalibrationSection,
    pub bootstrap: BootstrapSection,
    pub data: DataSection,
    pub models: ModelSection,
    pub bds: BdsSection,
    pub rv: RvSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 20240601,
            out_dir: PathBuf::from("out"),
            quick: false,
            segment: SegmentSection::default(),
            surrogates: SurrogateSection::default(),
            calibration: CalibrationSection::default(),
            bootstrap: BootstrapSection::default(),
            data: DataSection::default(),
            models: ModelSection::default(),
            bds: BdsSection::default(),
            rv: RvSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSection {
    pub dim: usize,
    pub delay: usize,
}

impl Default for SegmentSection {
    fn default() -> Self {
        Self { dim: 4, delay: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateSection {
    pub replications: usize,
    pub scheme: SurrogateScheme,
}

impl Default for SurrogateSection {
    fn default() -> Self {
        Self { replications: 500, scheme: SurrogateScheme::Permutation }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub paths: usize,
    pub quantile: f64,
    pub length: usize,
    pub marginal: NullMarginal,
    pub cache_dir: Option<PathBuf>,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self { paths: 1000, quantile: 0.95, length: 6360, marginal: NullMarginal::Gaussian, cache_dir: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub block_length: usize,
    pub replications: usize,
    pub quantile: f64,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self { block_length: 20, replications: 500, quantile: 0.95 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub dgps: Vec<String>,
    pub length: usize,
    pub train_length: usize,
    pub gp_train_length: usize,
    pub warmup: usize,
    pub input: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            dgps: ["x1", "x2", "x3", "x4", "x5", "x6"].map(String::from).to_vec(),
            length: 6360,
            train_length: 5160,
            gp_train_length: 4000,
            warmup: 10,
            input: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kinds: Vec<String>,
    pub predictor: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { kinds: ["arma11", "garch11", "gp"].map(String::from).to_vec(), predictor: "oracle".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BdsSection {
    pub seeds: usize,
    pub length: usize,
    pub dims: Vec<usize>,
    pub r_multipliers: Vec<f64>,
    pub truth: [f64; 3],
    pub predictor: [f64; 3],
}

impl Default for BdsSection {
    fn default() -> Self {
        Self {
            seeds: 1,
            length: 6360,
            dims: (2..=10).collect(),
            r_multipliers: vec![0.25, 0.5, 0.75, 1.0, 1.25],
            truth: [0.18, 0.16, 0.74],
            predictor: [0.18, 0.03, 0.87],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RvSection {
    pub year: i32,
    pub train_length: usize,
    pub input: Option<PathBuf>,
    pub synthetic_vol: f64,
    pub synthetic_cycle: f64,
}

impl Default for RvSection {
    fn default() -> Self {
        Self { year: 2013, train_length: 5160, input: None, synthetic_vol: 2e-4, synthetic_cycle: 0.5 }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Reduces Monte Carlo sizes for smoke runs.
    pub fn apply_quick(&mut self) {
        if !self.quick {
            return;
        }
        self.calibration.paths = self.calibration.paths.min(QUICK_PATHS);
        self.surrogates.replications = self.surrogates.replications.min(QUICK_REPLICATIONS);
        self.bootstrap.replications = self.bootstrap.replications.min(QUICK_REPLICATIONS);
    }

    pub fn calibration_dir(&self) -> PathBuf {
        self.calibration.cache_dir.clone().unwrap_or_else(|| self.out_dir.join("calibration"))
    }

    /// Hash of the effective configuration, excluding the output location.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        canonical.calibration.cache_dir = None;
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c: Config = toml::from_str("").unwrap();
        assert_eq!(c, Config::default());
    }

    #[test]
    fn doc_example_parses() {
        let doc = include_str!("config.rs");
        let example: String = doc
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start_matches(' '))
            .collect::<Vec<_>>()
            .join("\n");
        let c: Config = toml::from_str(&example).unwrap();
        assert_eq!(c, Config::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<Config>("sed = 1").is_err());
        assert!(toml::from_str::<Config>("[segment]\ndimension = 4").is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = Config::default();
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
