use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChrfConfig {
    pub char_ngram_order: usize,
    pub beta: f64,
    pub remove_whitespace: bool,
}

impl Default for ChrfConfig {
    fn default() -> Self {
        ChrfConfig { char_ngram_order: 6, beta: 2.0, remove_whitespace: true }
    }
}

impl ChrfConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.char_ngram_order < 1 {
            return Err(MetricError::InvalidConfig("chrF order must be >= 1".into()));
        }
        if !(self.beta > 0.0) {
            return Err(MetricError::InvalidConfig("chrF beta must be positive".into()));
        }
        Ok(())
    }
}

/// Per-order character n-gram counts; additive across segments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChrfStats {
    pub matches: Vec<u64>,
    pub hyp: Vec<u64>,
    pub reference: Vec<u64>,
}

fn char_ngrams(chars: &[char], n: usize) -> HashMap<&[char], u64> {
    let mut counts = HashMap::new();
    if chars.len() >= n {
        for w in chars.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

impl ChrfStats {
    pub fn from_segment(hyp: &str, reference: &str, cfg: &ChrfConfig) -> Self {
        let prep = |s: &str| -> Vec<char> {
            if cfg.remove_whitespace { s.chars().filter(|c| !c.is_whitespace()).collect() } else { s.chars().collect() }
        };
        let (h, r) = (prep(hyp), prep(reference));
        let order = cfg.char_ngram_order;
        let mut stats = ChrfStats { matches: vec![0; order], hyp: vec![0; order], reference: vec![0; order] };
        for n in 1..=order {
            let hc = char_ngrams(&h, n);
            let rc = char_ngrams(&r, n);
            stats.hyp[n - 1] = hc.values().sum();
            stats.reference[n - 1] = rc.values().sum();
            stats.matches[n - 1] = hc.iter().map(|(g, c)| (*c).min(rc.get(g).copied().unwrap_or(0))).sum();
        }
        stats
    }

    pub fn accumulate(&mut self, other: &ChrfStats) {
        let n = self.matches.len().max(other.matches.len());
        self.matches.resize(n, 0);
        self.hyp.resize(n, 0);
        self.reference.resize(n, 0);
        for i in 0..other.matches.len() {
            self.matches[i] += other.matches[i];
            self.hyp[i] += other.hyp[i];
            self.reference[i] += other.reference[i];
        }
    }

    /// Averages precision and recall over the orders where either side has
    /// n-grams, then combines them as F-beta. A side with no n-grams of some
    /// order contributes 0 for that order.
    pub fn score(&self, beta: f64) -> f64 {
        let (mut p_sum, mut r_sum, mut orders) = (0.0, 0.0, 0usize);
        for i in 0..self.matches.len() {
            let (m, h, r) = (self.matches[i] as f64, self.hyp[i], self.reference[i]);
            if h == 0 && r == 0 {
                continue;
            }
            p_sum += if h > 0 { m / h as f64 } else { 0.0 };
            r_sum += if r > 0 { m / r as f64 } else { 0.0 };
            orders += 1;
        }
        if orders == 0 {
            return 0.0;
        }
        let p = p_sum / orders as f64;
        let r = r_sum / orders as f64;
        let b2 = beta * beta;
        let denom = b2 * p + r;
        if denom == 0.0 {
            return 0.0;
        }
        (100.0 * (1.0 + b2) * p * r / denom).clamp(0.0, 100.0)
    }
}

pub fn chrf(hyp: &str, reference: &str, cfg: &ChrfConfig) -> Result<f64, MetricError> {
    cfg.validate()?;
    if reference.trim().is_empty() {
        return Err(MetricError::EmptyReference);
    }
    Ok(ChrfStats::from_segment(hyp, reference, cfg).score(cfg.beta))
}
