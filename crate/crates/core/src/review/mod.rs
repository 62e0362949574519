//! Expert review gate: four-criterion scores, the inclusion threshold,
//! per-criterion aggregates and the extended-corpus export.
//!
//! A record's gate average is the mean of its reviewers' averages; it is
//! accepted when that value reaches the threshold. Averages are always
//! recomputed here from the submitted scores.

pub mod api;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Lang, PairRecord, Provenance, ReviewState, Store, StoreError, TextFragment};
use crate::filters::FilterFlag;
use crate::jsonl;
use crate::normalize::{NormalizationConfig, normalize_text};

pub const CRITERIA: [&str; 4] = ["inflection", "word_order", "lexical_choice", "semantic_coherence"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateRule {
    /// Overall average against the threshold.
    #[default]
    Average,
    /// Every criterion mean against the threshold.
    EveryCriterion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReviewPolicy {
    pub threshold: f64,
    pub rule: GateRule,
    pub allow_rereview: bool,
}

impl Default for ReviewPolicy {
    fn default() -> Self {
        ReviewPolicy { threshold: 7.0, rule: GateRule::Average, allow_rereview: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub inflection: f64,
    pub word_order: f64,
    pub lexical_choice: f64,
    pub semantic_coherence: f64,
}

impl Scores {
    pub fn new(inflection: f64, word_order: f64, lexical_choice: f64, semantic_coherence: f64) -> Self {
        Scores { inflection, word_order, lexical_choice, semantic_coherence }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.inflection, self.word_order, self.lexical_choice, self.semantic_coherence]
    }

    pub fn mean(&self) -> f64 {
        self.as_array().iter().sum::<f64>() / 4.0
    }

    /// Scores must be whole or half points in [0, 10].
    pub fn validate(&self) -> Result<(), ReviewError> {
        for (criterion, value) in CRITERIA.iter().zip(self.as_array()) {
            let doubled = value * 2.0;
            if !(0.0..=10.0).contains(&value) || doubled != doubled.round() {
                return Err(ReviewError::ScoreOutOfRange { criterion, value });
            }
        }
        Ok(())
    }
}

/// Review as submitted by a client. Any `average` field in the payload is
/// ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSubmission {
    pub record_id: String,
    pub reviewer: String,
    #[serde(flatten)]
    pub scores: Scores,
    #[serde(default)]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accepted,
    Rejected,
}

impl Decision {
    pub fn state(self) -> ReviewState {
        match self {
            Decision::Accepted => ReviewState::Accepted,
            Decision::Rejected => ReviewState::Rejected,
        }
    }
}

/// Stored review with the gate outcome it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub record_id: String,
    pub reviewer: String,
    #[serde(flatten)]
    pub scores: Scores,
    pub average: f64,
    #[serde(default)]
    pub comment: Option<String>,
    /// Unix seconds.
    pub timestamp: u64,
    /// Gate inputs and result at the time of this review.
    pub gate_average: f64,
    pub threshold: f64,
    #[serde(default)]
    pub rule: GateRule,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub record_id: String,
    pub decision: Decision,
    /// Mean of the record's reviewer averages.
    pub average: f64,
    pub threshold: f64,
    pub rule: GateRule,
    pub reviews: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("unknown record {0:?}")]
    UnknownRecord(String),
    #[error("{criterion} score {value} is not a whole or half point in [0, 10]")]
    ScoreOutOfRange { criterion: &'static str, value: f64 },
    #[error("record {record_id:?} already reviewed by {reviewer:?}")]
    AlreadyReviewed { record_id: String, reviewer: String },
    #[error("record {0:?} carries a fatal filter flag and cannot be reviewed")]
    FatalFlag(String),
    #[error("reviewer name is empty")]
    EmptyReviewer,
    #[error("no reviews")]
    NoReviews,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] crate::jsonl::JsonlError),
}

fn gate(reviews: &[&ReviewRecord], policy: &ReviewPolicy) -> (f64, Decision) {
    let average = reviews.iter().map(|r| r.average).sum::<f64>() / reviews.len() as f64;
    let passed = match policy.rule {
        GateRule::Average => average >= policy.threshold,
        GateRule::EveryCriterion => {
            let refs: Vec<ReviewRecord> = reviews.iter().map(|r| (*r).clone()).collect();
            let stats = aggregate_reviews(&refs).expect("non-empty");
            stats.criterion_means().iter().all(|m| *m >= policy.threshold)
        }
    };
    (average, if passed { Decision::Accepted } else { Decision::Rejected })
}

/// Validates and stores a review, re-applies the gate to the record and
/// updates its review state. The caller persists the store.
pub fn submit_review(store: &mut Store, sub: ReviewSubmission, timestamp: u64) -> Result<GateDecision, ReviewError> {
    sub.scores.validate()?;
    if sub.reviewer.trim().is_empty() {
        return Err(ReviewError::EmptyReviewer);
    }
    let record = store.pair(&sub.record_id).ok_or_else(|| ReviewError::UnknownRecord(sub.record_id.clone()))?;
    if record.has_fatal_flag() {
        return Err(ReviewError::FatalFlag(sub.record_id));
    }
    let policy = store.review_policy().clone();
    let existing = store
        .reviews()
        .iter()
        .position(|r| r.record_id == sub.record_id && r.reviewer == sub.reviewer);
    if existing.is_some() && !policy.allow_rereview {
        return Err(ReviewError::AlreadyReviewed { record_id: sub.record_id, reviewer: sub.reviewer });
    }

    let mut review = ReviewRecord {
        average: sub.scores.mean(),
        record_id: sub.record_id,
        reviewer: sub.reviewer,
        scores: sub.scores,
        comment: sub.comment,
        timestamp,
        gate_average: 0.0,
        threshold: policy.threshold,
        rule: policy.rule,
        decision: Decision::Rejected,
    };
    let mut current: Vec<&ReviewRecord> = store
        .reviews()
        .iter()
        .enumerate()
        .filter(|(i, r)| r.record_id == review.record_id && Some(*i) != existing)
        .map(|(_, r)| r)
        .collect();
    current.push(&review);
    let (average, decision) = gate(&current, &policy);
    let count = current.len();
    review.gate_average = average;
    review.decision = decision;

    store.set_review_state(&review.record_id, decision.state())?;
    let out = GateDecision {
        record_id: review.record_id.clone(),
        decision,
        average,
        threshold: policy.threshold,
        rule: policy.rule,
        reviews: count,
    };
    let reviews = store.reviews_mut();
    match existing {
        Some(i) => {
            reviews.remove(i);
            reviews.push(review);
        }
        None => reviews.push(review),
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewStats {
    pub reviews: usize,
    pub inflection: f64,
    pub word_order: f64,
    pub lexical_choice: f64,
    pub semantic_coherence: f64,
    /// Mean of the four criterion means.
    pub overall: f64,
}

impl ReviewStats {
    pub fn criterion_means(&self) -> [f64; 4] {
        [self.inflection, self.word_order, self.lexical_choice, self.semantic_coherence]
    }
}

pub fn aggregate_reviews(reviews: &[ReviewRecord]) -> Result<ReviewStats, ReviewError> {
    if reviews.is_empty() {
        return Err(ReviewError::NoReviews);
    }
    let n = reviews.len() as f64;
    let mut sums = [0.0; 4];
    for r in reviews {
        for (s, v) in sums.iter_mut().zip(r.scores.as_array()) {
            *s += v;
        }
    }
    let [inflection, word_order, lexical_choice, semantic_coherence] = sums.map(|s| s / n);
    Ok(ReviewStats {
        reviews: reviews.len(),
        inflection,
        word_order,
        lexical_choice,
        semantic_coherence,
        overall: (inflection + word_order + lexical_choice + semantic_coherence) / 4.0,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AuditReport {
    pub reviews_checked: usize,
    pub records_checked: usize,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Rescans every stored review and record against the gate law.
pub fn audit_gate(store: &Store) -> AuditReport {
    let mut report = AuditReport::default();
    let mut by_record: BTreeMap<&str, Vec<&ReviewRecord>> = BTreeMap::new();
    for r in store.reviews() {
        report.reviews_checked += 1;
        if (r.average - r.scores.mean()).abs() > 1e-9 {
            report.violations.push(format!("{}/{}: stored average {} != score mean", r.record_id, r.reviewer, r.average));
        }
        if r.rule == GateRule::Average && (r.decision == Decision::Accepted) != (r.gate_average >= r.threshold) {
            report.violations.push(format!(
                "{}/{}: decision {:?} inconsistent with {} vs {}",
                r.record_id, r.reviewer, r.decision, r.gate_average, r.threshold
            ));
        }
        by_record.entry(&r.record_id).or_default().push(r);
    }
    let policy = store.review_policy();
    for (id, reviews) in by_record {
        report.records_checked += 1;
        let Some(rec) = store.pair(id) else {
            report.violations.push(format!("{id}: review for unknown record"));
            continue;
        };
        let (_, decision) = gate(&reviews, policy);
        if rec.review_state != decision.state() {
            report
                .violations
                .push(format!("{id}: state {:?} but gate over stored reviews gives {:?}", rec.review_state, decision));
        }
    }
    for rec in store.pairs() {
        if rec.review_state == ReviewState::Accepted && rec.has_fatal_flag() {
            report.violations.push(format!("{}: accepted with a fatal flag", rec.id));
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleExample {
    pub id: String,
    pub text: String,
}

/// One reviewable record as served to the review UI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub record_id: String,
    pub provenance: Provenance,
    pub en_text: String,
    pub ang_text: String,
    pub flags: Vec<FilterFlag>,
    pub style_examples: Vec<StyleExample>,
    pub review_state: ReviewState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePage {
    pub total: usize,
    pub page: usize,
    pub per_page: usize,
    pub items: Vec<Candidate>,
}

fn candidate(store: &Store, rec: &PairRecord) -> Candidate {
    let text = |id: &str| store.fragment(id).map(|f| f.text.clone()).unwrap_or_default();
    Candidate {
        record_id: rec.id.clone(),
        provenance: rec.provenance,
        en_text: text(&rec.en_id),
        ang_text: text(&rec.ang_id),
        flags: rec.flags.clone(),
        style_examples: rec
            .style_example_ids
            .iter()
            .map(|id| StyleExample { id: id.clone(), text: text(id) })
            .collect(),
        review_state: rec.review_state,
    }
}

/// Machine-produced records in the given state, paginated from page 1.
pub fn list_candidates(store: &Store, state: Option<ReviewState>, page: usize, per_page: usize) -> CandidatePage {
    let page = page.max(1);
    let per_page = per_page.clamp(1, 500);
    let matching: Vec<&PairRecord> = store
        .pairs()
        .filter(|p| p.provenance != Provenance::Human)
        .filter(|p| state.is_none_or(|s| p.review_state == s))
        .collect();
    let items = matching
        .iter()
        .skip((page - 1) * per_page)
        .take(per_page)
        .map(|rec| candidate(store, rec))
        .collect();
    CandidatePage { total: matching.len(), page, per_page, items }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportSummary {
    pub exported: usize,
    pub path: String,
    pub warning: Option<String>,
}

/// Writes the ANG side of every accepted machine-produced record as
/// normalized fragments, keeping their `source`. An empty export still
/// writes the (empty) file and returns a warning.
pub fn export_extended_corpus(
    store: &Store,
    destination: &Path,
    norm: &NormalizationConfig,
) -> Result<ExportSummary, ReviewError> {
    let mut out: Vec<TextFragment> = Vec::new();
    for rec in store.pairs() {
        if rec.review_state != ReviewState::Accepted || rec.provenance == Provenance::Human {
            continue;
        }
        let ang = store.fragment(&rec.ang_id).ok_or_else(|| StoreError::UnknownFragment(rec.ang_id.clone()))?;
        debug_assert_eq!(ang.lang, Lang::Ang);
        let mut frag = ang.clone();
        frag.text = normalize_text(&ang.text, norm);
        frag.normalized = true;
        out.push(frag);
    }
    jsonl::write(destination, &out)?;
    let warning = out.is_empty().then(|| "no accepted records; wrote an empty extended corpus".to_string());
    if let Some(w) = &warning {
        tracing::warn!("{w}");
    }
    Ok(ExportSummary { exported: out.len(), path: destination.display().to_string(), warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ParallelPair, StoreConfig};
    use crate::filters::FlagKind;

    fn store_with(n: usize) -> Store {
        let mut store = Store::in_memory(StoreConfig::default());
        for i in 0..n {
            let en = TextFragment::new(format!("en{i}"), Lang::En, format!("english {i}"), "agent");
            let ang = TextFragment::new(format!("ang{i}"), Lang::Ang, format!("Engliscgereord {i}"), "agent");
            let pair = ParallelPair::new(format!("r{i}"), en, ang, Provenance::DualAgent).unwrap();
            store.insert_pair(&pair).unwrap();
        }
        store
    }

    fn sub(id: &str, who: &str, s: [f64; 4]) -> ReviewSubmission {
        ReviewSubmission {
            record_id: id.into(),
            reviewer: who.into(),
            scores: Scores::new(s[0], s[1], s[2], s[3]),
            comment: None,
        }
    }

    #[test]
    fn example_scores_accept_at_eight_and_a_half() {
        let mut store = store_with(1);
        let d = submit_review(&mut store, sub("r0", "a", [9.0, 8.0, 10.0, 7.0]), 0).unwrap();
        assert_eq!(d.average, 8.5);
        assert_eq!(d.decision, Decision::Accepted);
        assert_eq!(store.pair("r0").unwrap().review_state, ReviewState::Accepted);
    }

    #[test]
    fn below_threshold_rejects() {
        let mut store = store_with(1);
        let d = submit_review(&mut store, sub("r0", "a", [6.0; 4]), 0).unwrap();
        assert_eq!((d.average, d.decision), (6.0, Decision::Rejected));
    }

    #[test]
    fn threshold_is_inclusive() {
        let mut store = store_with(1);
        let d = submit_review(&mut store, sub("r0", "a", [7.0; 4]), 0).unwrap();
        assert_eq!(d.decision, Decision::Accepted);
    }

    #[test]
    fn validation_errors() {
        let mut store = store_with(1);
        assert!(matches!(
            submit_review(&mut store, sub("r0", "a", [11.0, 8.0, 8.0, 8.0]), 0),
            Err(ReviewError::ScoreOutOfRange { criterion: "inflection", .. })
        ));
        assert!(matches!(
            submit_review(&mut store, sub("r0", "a", [8.0, 8.25, 8.0, 8.0]), 0),
            Err(ReviewError::ScoreOutOfRange { criterion: "word_order", .. })
        ));
        assert!(matches!(
            submit_review(&mut store, sub("r0", "a", [8.0, 8.0, -0.5, 8.0]), 0),
            Err(ReviewError::ScoreOutOfRange { .. })
        ));
        assert!(matches!(submit_review(&mut store, sub("nope", "a", [8.0; 4]), 0), Err(ReviewError::UnknownRecord(_))));
        assert!(matches!(submit_review(&mut store, sub("r0", " ", [8.0; 4]), 0), Err(ReviewError::EmptyReviewer)));
        assert!(store.reviews().is_empty());
    }

    #[test]
    fn one_review_per_reviewer_unless_allowed() {
        let mut store = store_with(1);
        submit_review(&mut store, sub("r0", "a", [6.0; 4]), 0).unwrap();
        assert!(matches!(
            submit_review(&mut store, sub("r0", "a", [9.0; 4]), 1),
            Err(ReviewError::AlreadyReviewed { .. })
        ));
        store.set_review_policy(ReviewPolicy { allow_rereview: true, ..Default::default() });
        let d = submit_review(&mut store, sub("r0", "a", [9.0; 4]), 1).unwrap();
        assert_eq!((d.reviews, d.decision), (1, Decision::Accepted));
        assert_eq!(store.reviews().len(), 1);
    }

    #[test]
    fn gate_uses_mean_of_reviewer_averages() {
        let mut store = store_with(1);
        submit_review(&mut store, sub("r0", "a", [9.0; 4]), 0).unwrap();
        let d = submit_review(&mut store, sub("r0", "b", [4.0; 4]), 0).unwrap();
        assert_eq!((d.average, d.reviews, d.decision), (6.5, 2, Decision::Rejected));
        assert!(audit_gate(&store).passed());
    }

    #[test]
    fn every_criterion_rule() {
        let mut store = store_with(1);
        store.set_review_policy(ReviewPolicy { rule: GateRule::EveryCriterion, ..Default::default() });
        let d = submit_review(&mut store, sub("r0", "a", [9.0, 8.0, 10.0, 6.5]), 0).unwrap();
        assert_eq!(d.decision, Decision::Rejected);
    }

    #[test]
    fn fatal_flag_blocks_review() {
        let mut store = store_with(1);
        store.set_pair_flags("r0", vec![FilterFlag::new(FlagKind::LoopedGeneration, vec![])]).unwrap();
        assert!(matches!(submit_review(&mut store, sub("r0", "a", [9.0; 4]), 0), Err(ReviewError::FatalFlag(_))));
    }

    #[test]
    fn aggregate_by_hand() {
        let mk = |s: f64| ReviewRecord {
            record_id: "r".into(),
            reviewer: "x".into(),
            scores: Scores::new(s, s, s, s),
            average: s,
            comment: None,
            timestamp: 0,
            gate_average: s,
            threshold: 7.0,
            rule: GateRule::Average,
            decision: Decision::Accepted,
        };
        let one = aggregate_reviews(&[mk(10.0)]).unwrap();
        assert_eq!(one.criterion_means(), [10.0; 4]);
        let two = aggregate_reviews(&[mk(8.0), mk(6.0)]).unwrap();
        assert_eq!(two.criterion_means(), [7.0; 4]);
        assert_eq!(two.overall, 7.0);
        assert!(matches!(aggregate_reviews(&[]), Err(ReviewError::NoReviews)));
    }

    #[test]
    fn bogus_client_average_is_ignored() {
        let mut store = store_with(1);
        let body = r#"{"record_id":"r0","reviewer":"a","inflection":9,"word_order":8,"lexical_choice":10,
                       "semantic_coherence":7,"average":2.0}"#;
        let s: ReviewSubmission = serde_json::from_str(body).unwrap();
        submit_review(&mut store, s, 0).unwrap();
        assert_eq!(store.reviews()[0].average, 8.5);
    }

    #[test]
    fn export_writes_accepted_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = store_with(5);
        for (i, s) in [9.0, 8.0, 3.0, 2.0, 1.0].iter().enumerate() {
            submit_review(&mut store, sub(&format!("r{i}"), "a", [*s; 4]), 0).unwrap();
        }
        let path = dir.path().join("ext.jsonl");
        let summary = export_extended_corpus(&store, &path, &NormalizationConfig::default()).unwrap();
        assert_eq!(summary.exported, 2);
        let frags: Vec<TextFragment> = jsonl::read(&path).unwrap();
        assert_eq!(frags.iter().map(|f| f.text.as_str()).collect::<Vec<_>>(), vec!["engliscgereord 0", "engliscgereord 1"]);
        assert!(frags.iter().all(|f| f.normalized && f.source == "agent"));
        let first = std::fs::read(&path).unwrap();
        export_extended_corpus(&store, &path, &NormalizationConfig::default()).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());

        let empty = store_with(2);
        let summary = export_extended_corpus(&empty, &path, &NormalizationConfig::default()).unwrap();
        assert_eq!(summary.exported, 0);
        assert!(summary.warning.is_some());
        assert_eq!(std::fs::read(&path).unwrap(), b"");
    }

    #[test]
    fn candidates_paginate() {
        let store = store_with(5);
        let page = list_candidates(&store, Some(ReviewState::Unreviewed), 2, 2);
        assert_eq!(page.total, 5);
        assert_eq!(page.items.iter().map(|c| c.record_id.as_str()).collect::<Vec<_>>(), vec!["r2", "r3"]);
        assert!(list_candidates(&store, Some(ReviewState::Accepted), 1, 10).items.is_empty());
    }
}
