use std::str::FromStr;

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Tolerance on the ratio sum, and slack for `floor(n * r)` so that e.g.
/// `0.29 * 100` floors to 29.
const RATIO_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("cannot split an empty id list")]
    EmptyInput,
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.8, validation: 0.1, test: 0.1 }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self, SplitError> {
        let r = SplitRatios { train, validation, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), SplitError> {
        for (name, v) in [("train", self.train), ("validation", self.validation), ("test", self.test)] {
            if !(0.0..=1.0).contains(&v) || v.is_nan() {
                return Err(SplitError::InvalidRatios(format!("{name} ratio {v} outside [0, 1]")));
            }
        }
        let sum = self.train + self.validation + self.test;
        if (sum - 1.0).abs() > RATIO_EPS {
            return Err(SplitError::InvalidRatios(format!("ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// (train, validation, test) sizes for `n` items: validation and test are
    /// floored, train takes the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |r: f64| ((n as f64) * r + RATIO_EPS).floor() as usize;
        let validation = floor(self.validation).min(n);
        let test = floor(self.test).min(n - validation);
        (n - validation - test, validation, test)
    }
}

impl FromStr for SplitRatios {
    type Err = SplitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| SplitError::InvalidRatios(format!("{s:?}: {e}")))?;
        match parts.as_slice() {
            [a, b, c] => SplitRatios::new(*a, *b, *c),
            _ => Err(SplitError::InvalidRatios(format!("expected three comma-separated fractions, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
    pub ratios: SplitRatios,
}

impl DatasetSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }
}

/// Deterministically partitions `ids` (treated as a set) into train,
/// validation and test. The ids are sorted, shuffled with a ChaCha8 stream
/// seeded by `seed`, then cut into contiguous blocks.
pub fn split_dataset(ids: &[String], ratios: SplitRatios, seed: u64) -> Result<DatasetSplit, SplitError> {
    ratios.validate()?;
    let mut ids: Vec<String> = ids.to_vec();
    ids.sort();
    ids.dedup();
    if ids.is_empty() {
        return Err(SplitError::EmptyInput);
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (n_train, n_val, _) = ratios.sizes(ids.len());
    let test = ids.split_off(n_train + n_val);
    let validation = ids.split_off(n_train);
    Ok(DatasetSplit { train: ids, validation, test, seed, ratios })
}
