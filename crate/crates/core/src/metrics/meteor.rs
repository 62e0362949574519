//! METEOR with staged unigram alignment (exact, then stem).
//!
//! Among alignments that maximize matches stage by stage, the aligner picks
//! one with the fewest chunks. It does so with a memoized search over hypothesis
//! positions that tracks only the reference positions more than one
//! hypothesis token could claim, which keeps it exact for sentence-sized
//! input. Above [`EXACT_SEARCH_MAX_AMBIGUOUS`] contested positions, or once
//! the search visits [`EXACT_SEARCH_MAX_STATES`] states, it falls back to a
//! greedy left-to-right pass.

use std::borrow::Cow;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::MetricError;

pub const EXACT_SEARCH_MAX_AMBIGUOUS: usize = 24;
pub const EXACT_SEARCH_MAX_STATES: usize = 1 << 14;
const MAX_STAGES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStage {
    Exact,
    Stem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeteorConfig {
    pub stages: Vec<MatchStage>,
    /// Fmean = (1+w)PR / (R + wP); w = 9 weights recall nine times precision.
    pub fmean_recall_weight: f64,
    pub penalty_gamma: f64,
    pub penalty_exponent: f64,
}

impl Default for MeteorConfig {
    fn default() -> Self {
        MeteorConfig {
            stages: vec![MatchStage::Exact, MatchStage::Stem],
            fmean_recall_weight: 9.0,
            penalty_gamma: 0.5,
            penalty_exponent: 3.0,
        }
    }
}

impl MeteorConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.stages.is_empty() {
            return Err(MetricError::InvalidConfig("METEOR needs at least one stage".into()));
        }
        for (name, v) in [
            ("fmean_recall_weight", self.fmean_recall_weight),
            ("penalty_gamma", self.penalty_gamma),
            ("penalty_exponent", self.penalty_exponent),
        ] {
            if !(v > 0.0) {
                return Err(MetricError::InvalidConfig(format!("METEOR {name} must be positive")));
            }
        }
        Ok(())
    }

    fn stage_list(&self) -> Vec<MatchStage> {
        let mut out = Vec::new();
        for s in &self.stages {
            if !out.contains(s) {
                out.push(*s);
            }
        }
        out.truncate(MAX_STAGES);
        out
    }
}

pub trait Stemmer: Send + Sync {
    fn stem<'a>(&self, token: &'a str) -> Cow<'a, str>;
}

/// Leaves tokens untouched. Default for Old English, which has no stemmer
/// worth trusting.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdentityStemmer;

impl Stemmer for IdentityStemmer {
    fn stem<'a>(&self, token: &'a str) -> Cow<'a, str> {
        Cow::Borrowed(token)
    }
}

/// Light Modern English suffix stripper (plural, -ing, -ed, -ly).
#[derive(Debug, Default, Clone, Copy)]
pub struct EnglishSuffixStemmer;

impl Stemmer for EnglishSuffixStemmer {
    fn stem<'a>(&self, token: &'a str) -> Cow<'a, str> {
        let lower = token.to_lowercase();
        let len = lower.chars().count();
        let strip = |suffix: &str, min_stem: usize| -> Option<String> {
            lower
                .strip_suffix(suffix)
                .filter(|s| s.chars().count() >= min_stem)
                .map(str::to_string)
        };
        if len > 4 {
            if let Some(s) = strip("ies", 2) {
                return Cow::Owned(s + "y");
            }
        }
        for (suffix, min_stem) in [("ing", 3), ("ed", 3), ("ly", 3)] {
            if let Some(s) = strip(suffix, min_stem) {
                return Cow::Owned(s);
            }
        }
        if let Some(s) = strip("es", 3) {
            if ["s", "x", "z", "ch", "sh"].iter().any(|e| s.ends_with(e)) {
                return Cow::Owned(s);
            }
        }
        if !lower.ends_with("ss") {
            if let Some(s) = strip("s", 3) {
                return Cow::Owned(s);
            }
        }
        Cow::Owned(lower)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Link {
    pub hyp: usize,
    pub reference: usize,
    pub stage: MatchStage,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Alignment {
    /// Sorted by hypothesis position.
    pub links: Vec<Link>,
}

impl Alignment {
    /// Maximal runs of links adjacent in both hypothesis and reference.
    pub fn chunks(&self) -> usize {
        let mut chunks = 0;
        let mut prev: Option<&Link> = None;
        for link in &self.links {
            let continues = prev.is_some_and(|p| p.hyp + 1 == link.hyp && p.reference + 1 == link.reference);
            if !continues {
                chunks += 1;
            }
            prev = Some(link);
        }
        chunks
    }

    pub fn stage_counts(&self, stages: &[MatchStage]) -> Vec<usize> {
        stages.iter().map(|s| self.links.iter().filter(|l| l.stage == *s).count()).collect()
    }
}

/// For each hypothesis position, the reference positions it can link to and
/// the index of the first stage under which the tokens match.
pub(crate) fn candidates<S: AsRef<str>>(
    hyp: &[S],
    reference: &[S],
    stages: &[MatchStage],
    stemmer: &dyn Stemmer,
) -> Vec<Vec<(usize, usize)>> {
    let hyp_stems: Vec<Cow<'_, str>> = hyp.iter().map(|t| stemmer.stem(t.as_ref())).collect();
    let ref_stems: Vec<Cow<'_, str>> = reference.iter().map(|t| stemmer.stem(t.as_ref())).collect();
    hyp.iter()
        .enumerate()
        .map(|(i, h)| {
            reference
                .iter()
                .enumerate()
                .filter_map(|(j, r)| {
                    stages
                        .iter()
                        .position(|stage| match stage {
                            MatchStage::Exact => h.as_ref() == r.as_ref(),
                            MatchStage::Stem => hyp_stems[i] == ref_stems[j],
                        })
                        .map(|rank| (j, rank))
                })
                .collect()
        })
        .collect()
}

type Value = ([u32; MAX_STAGES], u32);

fn better(a: &Value, b: &Value) -> bool {
    a > b
}

struct Search<'c> {
    cands: &'c [Vec<(usize, usize)>],
    bit_of: Vec<Option<u32>>,
    live: Vec<u64>,
    memo: HashMap<(usize, u64, usize), (Value, Option<usize>)>,
    exhausted: bool,
}

impl Search<'_> {
    fn best(&mut self, i: usize, mask: u64, prev: Option<usize>) -> Value {
        if i == self.cands.len() || self.exhausted {
            return ([0; MAX_STAGES], 0);
        }
        if self.memo.len() >= EXACT_SEARCH_MAX_STATES {
            self.exhausted = true;
            return ([0; MAX_STAGES], 0);
        }
        let mask = mask & self.live[i];
        let prev = prev.filter(|p| self.cands[i].iter().any(|(j, _)| *j == p + 1));
        let key = (i, mask, prev.map_or(0, |p| p + 1));
        if let Some((v, _)) = self.memo.get(&key) {
            return *v;
        }
        let mut best_value = self.best(i + 1, mask, None);
        let mut best_choice = None;
        for idx in 0..self.cands[i].len() {
            let (j, rank) = self.cands[i][idx];
            let bit = self.bit_of[j].map(|b| 1u64 << b);
            if bit.is_some_and(|b| mask & b != 0) {
                continue;
            }
            let mut v = self.best(i + 1, mask | bit.unwrap_or(0), Some(j));
            v.0[rank] += 1;
            if prev.is_some_and(|p| p + 1 == j) {
                v.1 += 1;
            }
            if better(&v, &best_value) {
                best_value = v;
                best_choice = Some(idx);
            }
        }
        self.memo.insert(key, (best_value, best_choice));
        best_value
    }
}

/// Aligns hypothesis and reference tokens. See the module docs for the
/// objective.
pub fn align<S: AsRef<str>>(
    hyp: &[S],
    reference: &[S],
    stages: &[MatchStage],
    stemmer: &dyn Stemmer,
) -> Alignment {
    let stages: Vec<MatchStage> = {
        let mut s = Vec::new();
        for st in stages {
            if !s.contains(st) {
                s.push(*st);
            }
        }
        s.truncate(MAX_STAGES);
        s
    };
    let cands = candidates(hyp, reference, &stages, stemmer);

    // Reference positions reachable from more than one hypothesis position
    // are the only ones whose use must be remembered.
    let mut claimants = vec![0usize; reference.len()];
    let mut last_claim = vec![0usize; reference.len()];
    for (i, cs) in cands.iter().enumerate() {
        for &(j, _) in cs {
            claimants[j] += 1;
            last_claim[j] = i;
        }
    }
    let mut bit_of = vec![None; reference.len()];
    let mut next_bit = 0u32;
    for j in 0..reference.len() {
        if claimants[j] > 1 {
            bit_of[j] = Some(next_bit);
            next_bit += 1;
        }
    }
    if next_bit as usize > EXACT_SEARCH_MAX_AMBIGUOUS {
        return greedy_align(&cands, reference.len(), &stages);
    }
    let live: Vec<u64> = (0..=hyp.len())
        .map(|i| {
            (0..reference.len())
                .filter_map(|j| bit_of[j].filter(|_| last_claim[j] >= i).map(|b| 1u64 << b))
                .fold(0, |acc, b| acc | b)
        })
        .collect();

    let mut search = Search { cands: &cands, bit_of, live, memo: HashMap::new(), exhausted: false };
    search.best(0, 0, None);
    if search.exhausted {
        return greedy_align(&cands, reference.len(), &stages);
    }

    let mut links = Vec::new();
    let (mut mask, mut prev) = (0u64, None);
    for i in 0..hyp.len() {
        mask &= search.live[i];
        let prev_key = prev.filter(|p: &usize| cands[i].iter().any(|(j, _)| *j == p + 1));
        let key = (i, mask, prev_key.map_or(0, |p| p + 1));
        let choice = search.memo.get(&key).and_then(|(_, c)| *c);
        match choice {
            Some(idx) => {
                let (j, rank) = cands[i][idx];
                if let Some(b) = search.bit_of[j] {
                    mask |= 1 << b;
                }
                links.push(Link { hyp: i, reference: j, stage: stages[rank] });
                prev = Some(j);
            }
            None => prev = None,
        }
    }
    Alignment { links }
}

fn greedy_align(cands: &[Vec<(usize, usize)>], ref_len: usize, stages: &[MatchStage]) -> Alignment {
    let hyp_len = cands.len();
    let mut ref_used = vec![false; ref_len];
    let mut link_of: Vec<Option<(usize, usize)>> = vec![None; hyp_len];
    for rank in 0..stages.len() {
        for i in 0..hyp_len {
            if link_of[i].is_some() {
                continue;
            }
            let prev = i.checked_sub(1).and_then(|p| link_of[p]).map(|(j, _)| j);
            let expected = i as f64 * ref_len as f64 / hyp_len.max(1) as f64;
            let pick = cands[i]
                .iter()
                .filter(|(j, r)| *r == rank && !ref_used[*j])
                .min_by(|(a, _), (b, _)| {
                    let key = |j: usize| (prev.map_or(true, |p| p + 1 != j), (j as f64 - expected).abs());
                    let (ka, kb) = (key(*a), key(*b));
                    ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(a.cmp(b))
                })
                .copied();
            if let Some((j, r)) = pick {
                ref_used[j] = true;
                link_of[i] = Some((j, r));
            }
        }
    }
    let links = link_of
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|(j, r)| Link { hyp: i, reference: j, stage: stages[r] }))
        .collect();
    Alignment { links }
}

/// Additive METEOR statistics; pooled across segments for corpus scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MeteorStats {
    pub matches: u64,
    pub chunks: u64,
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl MeteorStats {
    pub fn from_segment<S: AsRef<str>>(hyp: &[S], reference: &[S], cfg: &MeteorConfig, stemmer: &dyn Stemmer) -> Self {
        let alignment = align(hyp, reference, &cfg.stage_list(), stemmer);
        MeteorStats {
            matches: alignment.links.len() as u64,
            chunks: alignment.chunks() as u64,
            hyp_len: hyp.len() as u64,
            ref_len: reference.len() as u64,
        }
    }

    pub fn accumulate(&mut self, other: &MeteorStats) {
        self.matches += other.matches;
        self.chunks += other.chunks;
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    pub fn score(&self, cfg: &MeteorConfig) -> f64 {
        if self.matches == 0 || self.hyp_len == 0 || self.ref_len == 0 {
            return 0.0;
        }
        let m = self.matches as f64;
        let p = m / self.hyp_len as f64;
        let r = m / self.ref_len as f64;
        let w = cfg.fmean_recall_weight;
        let fmean = (1.0 + w) * p * r / (r + w * p);
        let penalty = cfg.penalty_gamma * (self.chunks as f64 / m).powf(cfg.penalty_exponent);
        (100.0 * fmean * (1.0 - penalty)).clamp(0.0, 100.0)
    }
}

pub fn meteor<S: AsRef<str>>(
    hyp: &[S],
    reference: &[S],
    cfg: &MeteorConfig,
    stemmer: &dyn Stemmer,
) -> Result<f64, MetricError> {
    cfg.validate()?;
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    Ok(MeteorStats::from_segment(hyp, reference, cfg, stemmer).score(cfg))
}
