//! Detectors for the failure modes seen in machine-generated Old English:
//! looped generation, untranslated output and out-of-lexicon vocabulary.
//!
//! Loops and untranslated output are fatal (the pair is excluded or
//! rejected). Hallucination is only evidence and sends the pair to review.

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::Lang;
use crate::metrics::{PunctTokenizer, Tokenizer, is_word_char};
use crate::par::{self, ExecMode};

const STOPWORDS: &str = include_str!("../data/modern_stopwords.txt");

/// Words that occur as spellings in normalized Old English and so must never
/// count as evidence of untranslated Modern English.
pub const ATTESTED_ANG_WORDS: &[&str] = &[
    "and", "on", "he", "him", "his", "is", "in", "from", "be", "we", "me", "was", "her", "man", "to", "for", "under",
    "no", "were", "hit", "of", "an", "a", "or", "not", "into", "can", "will", "do", "us", "full", "wide",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    LoopedGeneration,
    NonTranslated,
    VocabularyHallucination,
}

impl FlagKind {
    pub fn is_fatal(self) -> bool {
        !matches!(self, FlagKind::VocabularyHallucination)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FlagKind::LoopedGeneration => "looped_generation",
            FlagKind::NonTranslated => "non_translated",
            FlagKind::VocabularyHallucination => "vocabulary_hallucination",
        }
    }
}

/// Byte range into the flagged text together with the text it covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSpan {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl EvidenceSpan {
    fn at(text: &str, range: Range<usize>) -> Self {
        EvidenceSpan { text: text[range.clone()].to_string(), start: range.start, end: range.end }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterFlag {
    pub kind: FlagKind,
    #[serde(default)]
    pub evidence: Vec<EvidenceSpan>,
}

impl FilterFlag {
    pub fn new(kind: FlagKind, evidence: Vec<EvidenceSpan>) -> Self {
        FilterFlag { kind, evidence }
    }

    pub fn is_fatal(&self) -> bool {
        self.kind.is_fatal()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterConfigError {
    #[error("{name} = {value} must lie in (0, 1]")]
    Threshold { name: &'static str, value: f64 },
    #[error("loop_token_run must be at least 2")]
    TokenRun,
    #[error("loop_ngram_n and loop_ngram_min_repeats must be at least 1 and 2")]
    Ngram,
    #[error("stopword list contains {0:?}, which is attested in Old English")]
    AttestedStopword(String),
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub loop_token_run: usize,
    pub loop_ngram_n: usize,
    pub loop_ngram_min_repeats: usize,
    pub nontranslated_stopword_ratio: f64,
    /// Share of tokens carrying þ, ð or æ above which an ANG-targeted output
    /// is never reported as untranslated, and at or above which an
    /// EN-targeted output is.
    pub ang_letter_guard_ratio: f64,
    pub modern_stopwords: BTreeSet<String>,
    pub lexicon: Option<BTreeSet<String>>,
    pub oov_ratio_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            loop_token_run: 4,
            loop_ngram_n: 3,
            loop_ngram_min_repeats: 3,
            nontranslated_stopword_ratio: 0.3,
            ang_letter_guard_ratio: 0.1,
            modern_stopwords: default_stopwords().clone(),
            lexicon: None,
            oov_ratio_threshold: 0.5,
        }
    }
}

pub fn default_stopwords() -> &'static BTreeSet<String> {
    static SET: OnceLock<BTreeSet<String>> = OnceLock::new();
    SET.get_or_init(|| parse_word_list(STOPWORDS))
}

/// One word per line, lowercased; blank lines and `#` comments skipped.
pub fn parse_word_list(src: &str) -> BTreeSet<String> {
    src.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// On-disk form: thresholds inline, word lists by path (relative paths
/// resolve against the config file's directory).
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterFile {
    loop_token_run: Option<usize>,
    loop_ngram_n: Option<usize>,
    loop_ngram_min_repeats: Option<usize>,
    nontranslated_stopword_ratio: Option<f64>,
    ang_letter_guard_ratio: Option<f64>,
    oov_ratio_threshold: Option<f64>,
    stopword_file: Option<String>,
    lexicon_file: Option<String>,
}

fn read_word_file(base: &Path, name: &str) -> Result<BTreeSet<String>, FilterConfigError> {
    let path = base.join(name);
    std::fs::read_to_string(&path)
        .map(|s| parse_word_list(&s))
        .map_err(|e| FilterConfigError::File { path: path.display().to_string(), message: e.to_string() })
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterConfigError> {
        for (name, value) in [
            ("nontranslated_stopword_ratio", self.nontranslated_stopword_ratio),
            ("ang_letter_guard_ratio", self.ang_letter_guard_ratio),
            ("oov_ratio_threshold", self.oov_ratio_threshold),
        ] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(FilterConfigError::Threshold { name, value });
            }
        }
        if self.loop_token_run < 2 {
            return Err(FilterConfigError::TokenRun);
        }
        if self.loop_ngram_n < 1 || self.loop_ngram_min_repeats < 2 {
            return Err(FilterConfigError::Ngram);
        }
        if let Some(w) = ATTESTED_ANG_WORDS.iter().find(|w| self.modern_stopwords.contains(**w)) {
            return Err(FilterConfigError::AttestedStopword(w.to_string()));
        }
        Ok(())
    }

    pub fn with_lexicon(mut self, lexicon: BTreeSet<String>) -> Self {
        self.lexicon = Some(lexicon);
        self
    }

    pub fn from_toml(src: &str, base_dir: &Path) -> Result<Self, FilterConfigError> {
        let file: FilterFile = toml::from_str(src).map_err(|e| FilterConfigError::Parse(e.to_string()))?;
        let mut cfg = FilterConfig::default();
        if let Some(v) = file.loop_token_run {
            cfg.loop_token_run = v;
        }
        if let Some(v) = file.loop_ngram_n {
            cfg.loop_ngram_n = v;
        }
        if let Some(v) = file.loop_ngram_min_repeats {
            cfg.loop_ngram_min_repeats = v;
        }
        if let Some(v) = file.nontranslated_stopword_ratio {
            cfg.nontranslated_stopword_ratio = v;
        }
        if let Some(v) = file.ang_letter_guard_ratio {
            cfg.ang_letter_guard_ratio = v;
        }
        if let Some(v) = file.oov_ratio_threshold {
            cfg.oov_ratio_threshold = v;
        }
        if let Some(name) = file.stopword_file {
            cfg.modern_stopwords = read_word_file(base_dir, &name)?;
        }
        if let Some(name) = file.lexicon_file {
            cfg.lexicon = Some(read_word_file(base_dir, &name)?);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// [`FilterConfig::from_toml`] on a file; word-list paths resolve
    /// against its directory.
    pub fn from_file(path: &Path) -> Result<Self, FilterConfigError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| FilterConfigError::File { path: path.display().to_string(), message: e.to_string() })?;
        FilterConfig::from_toml(&src, path.parent().unwrap_or(Path::new(".")))
    }
}

/// Lowercased word tokens, punctuation dropped.
pub fn word_tokens(text: &str) -> Vec<String> {
    word_spans(text).into_iter().map(|r| text[r].to_lowercase()).collect()
}

/// Word tokens (punctuation dropped) with their byte ranges.
fn word_spans(text: &str) -> Vec<Range<usize>> {
    PunctTokenizer
        .spans(text)
        .into_iter()
        .filter(|r| text[r.clone()].chars().any(is_word_char))
        .collect()
}

/// Flags a token repeated `loop_token_run` times in a row, or an
/// `loop_ngram_n`-gram repeated `loop_ngram_min_repeats` times back to back.
/// Punctuation is ignored; comparison is case-insensitive.
pub fn detect_loops(text: &str, cfg: &FilterConfig) -> Option<FilterFlag> {
    let spans = word_spans(text);
    let tokens: Vec<String> = spans.iter().map(|r| text[r.clone()].to_lowercase()).collect();
    let (start, end) = find_loop(&tokens, cfg)?;
    let range = spans[start].start..spans[end - 1].end;
    Some(FilterFlag::new(FlagKind::LoopedGeneration, vec![EvidenceSpan::at(text, range)]))
}

/// Token index range of the first loop found, linear in the token count.
fn find_loop<T: PartialEq>(tokens: &[T], cfg: &FilterConfig) -> Option<(usize, usize)> {
    let mut run = 1;
    for i in 1..tokens.len() {
        if tokens[i] == tokens[i - 1] {
            run += 1;
            if run >= cfg.loop_token_run {
                return Some((i + 1 - run, i + 1));
            }
        } else {
            run = 1;
        }
    }
    // k back-to-back copies of an n-gram starting at s exist iff
    // tokens[j] == tokens[j + n] for every j in s..s + (k - 1) * n.
    let n = cfg.loop_ngram_n;
    let need = (cfg.loop_ngram_min_repeats - 1) * n;
    let mut streak = 0;
    for j in 0..tokens.len().saturating_sub(n) {
        if tokens[j] == tokens[j + n] {
            streak += 1;
            if streak >= need {
                let s = j + 1 - streak;
                return Some((s, s + cfg.loop_ngram_min_repeats * n));
            }
        } else {
            streak = 0;
        }
    }
    None
}

fn has_ang_letter(token: &str) -> bool {
    token.chars().any(|c| matches!(c, 'þ' | 'Þ' | 'ð' | 'Ð' | 'æ' | 'Æ' | 'ƿ' | 'Ƿ'))
}

fn ang_letter_ratio(tokens: &[&str]) -> f64 {
    if tokens.is_empty() {
        return 0.0;
    }
    tokens.iter().filter(|t| has_ang_letter(t)).count() as f64 / tokens.len() as f64
}

fn same_words(a: &str, b: &str) -> bool {
    let words = |s: &str| word_spans(s).into_iter().map(|r| s[r].to_lowercase()).collect::<Vec<_>>();
    words(a) == words(b)
}

/// Flags output that was left in (or copied from) the source language.
///
/// For an ANG target the output is flagged when it repeats the source word
/// for word, or when the share of Modern English stopwords reaches the
/// configured ratio. Output whose tokens carry þ, ð or æ above the guard
/// ratio is never flagged. For an EN target (backtranslation) the output is
/// flagged when it repeats the source or when its share of þ/ð/æ tokens
/// reaches the guard ratio.
pub fn detect_non_translated(source: &str, output: &str, target: Lang, cfg: &FilterConfig) -> Option<FilterFlag> {
    let spans = word_spans(output);
    let tokens: Vec<&str> = spans.iter().map(|r| &output[r.clone()]).collect();
    if tokens.is_empty() {
        return None;
    }
    let ratio = ang_letter_ratio(&tokens);
    let whole = || vec![EvidenceSpan::at(output, spans[0].start..spans[spans.len() - 1].end)];
    match target {
        Lang::Ang => {
            if ratio > cfg.ang_letter_guard_ratio {
                return None;
            }
            if same_words(source, output) {
                return Some(FilterFlag::new(FlagKind::NonTranslated, whole()));
            }
            let hits: Vec<&Range<usize>> = spans
                .iter()
                .filter(|r| cfg.modern_stopwords.contains(&output[(*r).clone()].to_lowercase()))
                .collect();
            let share = hits.len() as f64 / tokens.len() as f64;
            (share >= cfg.nontranslated_stopword_ratio).then(|| {
                FilterFlag::new(
                    FlagKind::NonTranslated,
                    hits.into_iter().map(|r| EvidenceSpan::at(output, r.clone())).collect(),
                )
            })
        }
        Lang::En => {
            if same_words(source, output) {
                return Some(FilterFlag::new(FlagKind::NonTranslated, whole()));
            }
            (ratio >= cfg.ang_letter_guard_ratio).then(|| {
                FilterFlag::new(
                    FlagKind::NonTranslated,
                    spans
                        .iter()
                        .filter(|r| has_ang_letter(&output[(*r).clone()]))
                        .map(|r| EvidenceSpan::at(output, r.clone()))
                        .collect(),
                )
            })
        }
    }
}

fn is_latin_letter(c: char) -> bool {
    c.is_alphabetic()
        && matches!(c as u32, 0x41..=0x5A | 0x61..=0x7A | 0xC0..=0x24F | 0x1E00..=0x1EFF | 0xA720..=0xA7FF)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum HallucinationCheck {
    /// No lexicon configured.
    NotRun,
    Checked {
        /// Tokens counted (Latin letters only, no digits).
        considered: usize,
        oov: Vec<EvidenceSpan>,
        ratio: f64,
        flag: Option<FilterFlag>,
    },
}

impl HallucinationCheck {
    pub fn flag(&self) -> Option<&FilterFlag> {
        match self {
            HallucinationCheck::Checked { flag, .. } => flag.as_ref(),
            HallucinationCheck::NotRun => None,
        }
    }

    pub fn oov_words(&self) -> Vec<&str> {
        match self {
            HallucinationCheck::Checked { oov, .. } => oov.iter().map(|e| e.text.as_str()).collect(),
            HallucinationCheck::NotRun => Vec::new(),
        }
    }
}

/// Lists tokens missing from the lexicon and flags the output when their
/// share exceeds `oov_ratio_threshold`. Tokens containing digits or
/// non-Latin letters are left out of both counts.
pub fn detect_hallucination(output: &str, cfg: &FilterConfig) -> HallucinationCheck {
    let Some(lexicon) = cfg.lexicon.as_ref().filter(|l| !l.is_empty()) else {
        return HallucinationCheck::NotRun;
    };
    let mut considered = 0;
    let mut oov = Vec::new();
    for r in word_spans(output) {
        let tok = &output[r.clone()];
        if tok.chars().any(|c| c.is_numeric() || (c.is_alphabetic() && !is_latin_letter(c))) {
            continue;
        }
        considered += 1;
        if !lexicon.contains(&tok.to_lowercase()) {
            oov.push(EvidenceSpan::at(output, r));
        }
    }
    let ratio = if considered == 0 { 0.0 } else { oov.len() as f64 / considered as f64 };
    let flag = (ratio > cfg.oov_ratio_threshold).then(|| FilterFlag::new(FlagKind::VocabularyHallucination, oov.clone()));
    HallucinationCheck::Checked { considered, oov, ratio, flag }
}

/// Runs every detector on a generated `output` translated from `source`
/// into `target`. The lexicon check only applies to ANG output.
pub fn apply_filters(source: &str, output: &str, target: Lang, cfg: &FilterConfig) -> Vec<FilterFlag> {
    let mut flags = Vec::new();
    flags.extend(detect_loops(output, cfg));
    flags.extend(detect_non_translated(source, output, target, cfg));
    if target == Lang::Ang {
        flags.extend(detect_hallucination(output, cfg).flag().cloned());
    }
    flags
}

/// Texts of one pair as read by the batch filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairText {
    pub id: String,
    pub en: String,
    pub ang: String,
    /// Language the pair was generated into; ANG unless it came from
    /// backtranslation.
    #[serde(default = "default_target")]
    pub target: Lang,
    #[serde(default)]
    pub flags: Vec<FilterFlag>,
}

fn default_target() -> Lang {
    Lang::Ang
}

impl PairText {
    pub fn has_fatal_flag(&self) -> bool {
        self.flags.iter().any(FilterFlag::is_fatal)
    }
}

/// Flags every pair, replacing any flags it carried. Order is preserved.
pub fn filter_batch(pairs: &[PairText], cfg: &FilterConfig, mode: ExecMode) -> Vec<PairText> {
    par::map_slice(mode, pairs, |p| {
        let (source, output) = match p.target {
            Lang::Ang => (&p.en, &p.ang),
            Lang::En => (&p.ang, &p.en),
        };
        PairText { flags: apply_filters(source, output, p.target, cfg), ..p.clone() }
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FlagHistogram {
    pub looped_generation: usize,
    pub non_translated: usize,
    pub vocabulary_hallucination: usize,
}

impl FlagHistogram {
    pub fn add(&mut self, flags: &[FilterFlag]) {
        for f in flags {
            match f.kind {
                FlagKind::LoopedGeneration => self.looped_generation += 1,
                FlagKind::NonTranslated => self.non_translated += 1,
                FlagKind::VocabularyHallucination => self.vocabulary_hallucination += 1,
            }
        }
    }
}
