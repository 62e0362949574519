//! Backtranslation: monolingual ANG fragments are translated to EN with a
//! greedy back-translation prompt, filtered, and merged with human pairs.

use std::collections::{BTreeMap, HashSet};

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::DatasetSplit;
use crate::corpus::{Lang, ParallelPair, Provenance, TextFragment};
use crate::filters::{FilterConfig, FilterFlag, FlagHistogram, apply_filters};
use crate::infer::{Client, DecodeMode, FewShotPrompt, InferError};
use crate::par::ExecMode;
use crate::prompts::{self, TaskKind};

#[derive(Debug, thiserror::Error)]
pub enum BacktransError {
    #[error("source fragment {id:?}: {reason}")]
    InvalidSource { id: String, reason: String },
    #[error("source fragment {0:?} is in the training split")]
    SeenInTraining(String),
    #[error("duplicate source fragment {0:?}")]
    DuplicateSource(String),
    #[error("backtranslation requires greedy decoding")]
    NotGreedy,
    #[error("pair {0:?} carries a fatal filter flag")]
    FatalFlag(String),
}

#[derive(Debug, Clone, Default)]
pub struct BacktransJob {
    pub filters: FilterConfig,
    /// When set, no source may appear in its train set.
    pub split: Option<DatasetSplit>,
    pub exec: ExecMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub source_id: String,
    pub flags: Vec<FilterFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub source_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BacktransReport {
    pub sources: usize,
    pub emitted: usize,
    pub excluded: Vec<Excluded>,
    pub skipped: Vec<Skipped>,
    pub flag_histogram: FlagHistogram,
}

impl BacktransReport {
    /// Emitted, excluded and skipped add up to the number of sources.
    pub fn balanced(&self) -> bool {
        self.emitted + self.excluded.len() + self.skipped.len() == self.sources
    }
}

#[derive(Debug, Clone)]
pub struct BacktransOutcome {
    pub pairs: Vec<ParallelPair>,
    pub report: BacktransReport,
}

pub fn pair_id(source_id: &str) -> String {
    format!("bt-{source_id}")
}

fn check_sources(job: &BacktransJob, sources: &[TextFragment]) -> Result<(), BacktransError> {
    let train: HashSet<&str> = job.split.iter().flat_map(|s| s.train.iter().map(String::as_str)).collect();
    let mut seen = HashSet::new();
    for f in sources {
        let invalid = |reason: &str| BacktransError::InvalidSource { id: f.id.clone(), reason: reason.into() };
        f.validate().map_err(|e| invalid(&e.to_string()))?;
        if f.lang != Lang::Ang {
            return Err(invalid("not an ANG fragment"));
        }
        if !f.normalized {
            return Err(invalid("not normalized"));
        }
        if train.contains(f.id.as_str()) {
            return Err(BacktransError::SeenInTraining(f.id.clone()));
        }
        if !seen.insert(f.id.as_str()) {
            return Err(BacktransError::DuplicateSource(f.id.clone()));
        }
    }
    Ok(())
}

/// EN text of a back-translation reply: the `[EN]` span, or the whole
/// reply when it carries no tags at all.
fn english_from(reply: &str) -> Result<String, InferError> {
    if let Some(span) = prompts::extract_span(reply, Lang::En) {
        return Ok(span);
    }
    let raw = reply.trim();
    if raw.is_empty() || prompts::contains_tag(raw) {
        return Err(InferError::MalformedResponse("no [EN] span in reply".into()));
    }
    tracing::warn!("reply has no [EN] tags, using it verbatim");
    Ok(raw.to_string())
}

/// Translates every source fragment and pairs the result with it. Backend
/// failures skip the fragment; fatal filter flags exclude the pair. Output
/// follows source order.
pub fn run_backtranslation(
    job: &BacktransJob,
    sources: &[TextFragment],
    client: &Client,
) -> Result<BacktransOutcome, BacktransError> {
    if client.config().decode.mode != DecodeMode::Greedy {
        return Err(BacktransError::NotGreedy);
    }
    check_sources(job, sources)?;

    let queries: Vec<FewShotPrompt> = sources
        .iter()
        .map(|f| {
            prompts::render_query(TaskKind::BackTranslation, &f.text)
                .map(FewShotPrompt::zero_shot)
                .map_err(|e| BacktransError::InvalidSource { id: f.id.clone(), reason: e.to_string() })
        })
        .collect::<Result<_, _>>()?;
    let replies = client.complete_many(&queries, job.exec);

    let mut report = BacktransReport { sources: sources.len(), ..Default::default() };
    let mut pairs = Vec::new();
    for (frag, reply) in sources.iter().zip(replies) {
        let en_text = match reply.and_then(|r| english_from(&r)) {
            Ok(t) => t,
            Err(e) => {
                tracing::warn!(source = %frag.id, "skipped: {e}");
                report.skipped.push(Skipped { source_id: frag.id.clone(), error: e.to_string() });
                continue;
            }
        };
        let flags = apply_filters(&frag.text, &en_text, Lang::En, &job.filters);
        report.flag_histogram.add(&flags);
        if flags.iter().any(FilterFlag::is_fatal) {
            let kinds: Vec<&str> = flags.iter().map(|f| f.kind.as_str()).collect();
            tracing::info!(source = %frag.id, ?kinds, "excluded by filters");
            report.excluded.push(Excluded { source_id: frag.id.clone(), flags });
            continue;
        }
        let id = pair_id(&frag.id);
        let en = TextFragment::new(format!("{id}-en"), Lang::En, en_text, Provenance::Backtranslation.as_str());
        let mut pair = ParallelPair::new(id, en, frag.clone(), Provenance::Backtranslation)
            .expect("languages checked above");
        pair.flags = flags;
        pairs.push(pair);
    }
    report.emitted = pairs.len();
    debug_assert!(report.balanced());
    Ok(BacktransOutcome { pairs, report })
}

/// What counts as the same pair when merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupPolicy {
    /// Identical EN and ANG text.
    #[default]
    ExactPair,
    /// Identical ANG text, whatever the EN side says.
    AngText,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MergeReport {
    pub human_in: usize,
    pub synthetic_in: usize,
    pub merged: usize,
    pub dropped_duplicates: usize,
    pub seed: u64,
}

/// Union of both lists with exact-text dedup, human pairs winning any
/// collision, in an order shuffled from `seed`.
pub fn merge_training_sets(
    human: &[ParallelPair],
    synthetic: &[ParallelPair],
    policy: DedupPolicy,
    seed: u64,
) -> Result<(Vec<ParallelPair>, MergeReport), BacktransError> {
    if let Some(bad) = human.iter().chain(synthetic).find(|p| p.has_fatal_flag()) {
        return Err(BacktransError::FatalFlag(bad.id.clone()));
    }
    let key = |p: &ParallelPair| match policy {
        DedupPolicy::ExactPair => (p.en.text.clone(), p.ang.text.clone()),
        DedupPolicy::AngText => (String::new(), p.ang.text.clone()),
    };
    let mut kept: BTreeMap<(String, String), ParallelPair> = BTreeMap::new();
    let mut order = Vec::new();
    // Human pairs go first so a later synthetic duplicate never displaces one.
    let mut ranked: Vec<&ParallelPair> = human.iter().collect();
    ranked.extend(synthetic);
    ranked.sort_by_key(|p| p.provenance != Provenance::Human);
    for p in ranked {
        let k = key(p);
        if !kept.contains_key(&k) {
            order.push(k.clone());
            kept.insert(k, p.clone());
        }
    }
    let mut merged: Vec<ParallelPair> = order.into_iter().map(|k| kept.remove(&k).expect("inserted")).collect();
    merged.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let report = MergeReport {
        human_in: human.len(),
        synthetic_in: synthetic.len(),
        merged: merged.len(),
        dropped_duplicates: human.len() + synthetic.len() - merged.len(),
        seed,
    };
    Ok((merged, report))
}
