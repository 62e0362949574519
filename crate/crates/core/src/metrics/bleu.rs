use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BleuSmoothing {
    None,
    /// Zero n-gram numerators are replaced by `epsilon` (segment level only).
    AddEpsilon { epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_ngram_order: usize,
    pub smoothing: BleuSmoothing,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig { max_ngram_order: 4, smoothing: BleuSmoothing::AddEpsilon { epsilon: 0.1 } }
    }
}

impl BleuConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.max_ngram_order < 1 {
            return Err(MetricError::InvalidConfig("BLEU max_ngram_order must be >= 1".into()));
        }
        if let BleuSmoothing::AddEpsilon { epsilon } = self.smoothing {
            if !(epsilon > 0.0) {
                return Err(MetricError::InvalidConfig("BLEU epsilon must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Sufficient statistics for BLEU. Summing these across segments and
/// scoring once gives corpus BLEU.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BleuStats {
    /// Clipped n-gram matches, index 0 = unigrams.
    pub matches: Vec<u64>,
    /// Hypothesis n-gram counts, index 0 = unigrams.
    pub totals: Vec<u64>,
    pub hyp_len: u64,
    pub ref_len: u64,
}

fn ngram_counts<'a, S: AsRef<str>>(tokens: &'a [S], n: usize) -> HashMap<Vec<&'a str>, u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

impl BleuStats {
    pub fn from_segment<S: AsRef<str>>(hyp: &[S], reference: &[S], max_order: usize) -> Self {
        let mut stats = BleuStats {
            matches: vec![0; max_order],
            totals: vec![0; max_order],
            hyp_len: hyp.len() as u64,
            ref_len: reference.len() as u64,
        };
        for n in 1..=max_order {
            let hyp_counts = ngram_counts(hyp, n);
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in &hyp_counts {
                stats.totals[n - 1] += count;
                stats.matches[n - 1] += (*count).min(ref_counts.get(gram).copied().unwrap_or(0));
            }
        }
        stats
    }

    pub fn accumulate(&mut self, other: &BleuStats) {
        if self.matches.len() < other.matches.len() {
            self.matches.resize(other.matches.len(), 0);
            self.totals.resize(other.totals.len(), 0);
        }
        for (i, (m, t)) in other.matches.iter().zip(&other.totals).enumerate() {
            self.matches[i] += m;
            self.totals[i] += t;
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// BLEU on a 0-100 scale. Orders with no hypothesis n-grams at all are
    /// left out of the geometric mean (effective order), so short but
    /// perfect hypotheses still score 100.
    pub fn score(&self, smoothing: BleuSmoothing) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut orders = 0usize;
        for (&m, &t) in self.matches.iter().zip(&self.totals) {
            if t == 0 {
                continue;
            }
            let numerator = match (m, smoothing) {
                (0, BleuSmoothing::None) => return 0.0,
                (0, BleuSmoothing::AddEpsilon { epsilon }) => epsilon,
                (m, _) => m as f64,
            };
            log_sum += (numerator / t as f64).ln();
            orders += 1;
        }
        if orders == 0 {
            return 0.0;
        }
        let c = self.hyp_len as f64;
        let r = self.ref_len as f64;
        let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        (100.0 * bp * (log_sum / orders as f64).exp()).clamp(0.0, 100.0)
    }
}

/// Corpus BLEU from pooled n-gram statistics; never smoothed.
pub fn bleu<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<S>], cfg: &BleuConfig) -> Result<f64, MetricError> {
    cfg.validate()?;
    if hypotheses.len() != references.len() {
        return Err(MetricError::LengthMismatch { hypotheses: hypotheses.len(), references: references.len() });
    }
    if hypotheses.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let mut total = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        total.accumulate(&BleuStats::from_segment(h, r, cfg.max_ngram_order));
    }
    Ok(total.score(BleuSmoothing::None))
}

/// Segment BLEU with the configured smoothing.
pub fn sentence_bleu<S: AsRef<str>>(hyp: &[S], reference: &[S], cfg: &BleuConfig) -> f64 {
    BleuStats::from_segment(hyp, reference, cfg.max_ngram_order).score(cfg.smoothing)
}
