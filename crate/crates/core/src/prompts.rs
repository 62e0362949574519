//! The four adaptation task formats, their parser, and the seeded
//! multi-task dataset builder.
//!
//! Tags are flat: `[INST]`, `[EN]` and `[ANG]` spans never nest. Text
//! completion is the one format whose `[ANG]` span opens in the input and
//! closes in the output.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Lang, Provenance, ReviewState, Store};

pub const FORWARD_INSTRUCTION: &str = "Translate the following English fragment to Anglo-Saxon";
pub const BACK_INSTRUCTION: &str = "Translate the following Anglo-Saxon fragment to English";
pub const DEFINITION_INSTRUCTION: &str = "What is the English definition of the following word in Anglo-Saxon?";

pub const TAGS: [&str; 6] = ["[INST]", "[/INST]", "[EN]", "[/EN]", "[ANG]", "[/ANG]"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    TextCompletion,
    ForwardTranslation,
    BackTranslation,
    CrossedDefinition,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::TextCompletion,
        TaskKind::ForwardTranslation,
        TaskKind::BackTranslation,
        TaskKind::CrossedDefinition,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::TextCompletion => "text_completion",
            TaskKind::ForwardTranslation => "forward_translation",
            TaskKind::BackTranslation => "back_translation",
            TaskKind::CrossedDefinition => "crossed_definition",
        }
    }

    fn index(self) -> usize {
        TaskKind::ALL.iter().position(|t| *t == self).expect("listed")
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptExample {
    pub task: TaskKind,
    pub input: String,
    pub output: String,
    pub origin_ids: Vec<String>,
}

/// Raw material of one example. Which fields a task needs:
///
/// * forward / back translation: `en` and `ang`
/// * crossed definition: `ang` (the headword) and `definition`
/// * text completion: `ang` and `split_at`, the number of whitespace tokens
///   that go in the input
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fields {
    pub en: Option<String>,
    pub ang: Option<String>,
    pub definition: Option<String>,
    pub split_at: Option<usize>,
}

impl Fields {
    pub fn translation(en: &str, ang: &str) -> Self {
        Fields { en: Some(en.into()), ang: Some(ang.into()), ..Default::default() }
    }

    pub fn definition(headword: &str, definition: &str) -> Self {
        Fields { ang: Some(headword.into()), definition: Some(definition.into()), ..Default::default() }
    }

    pub fn completion(ang: &str, split_at: usize) -> Self {
        Fields { ang: Some(ang.into()), split_at: Some(split_at), ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("{task} needs the {operand} operand")]
    MissingOperand { task: TaskKind, operand: &'static str },
    #[error("completion text has {tokens} tokens; split point {split_at} must leave at least one on each side")]
    CompletionTooShort { tokens: usize, split_at: usize },
    #[error("{operand} contains a reserved tag")]
    TagInSpan { operand: &'static str },
    #[error("malformed tags: {0}")]
    MalformedTags(String),
    #[error("input/output do not match any task template")]
    UnknownTemplate,
    #[error("invalid mix: {0}")]
    InvalidMix(String),
    #[error("{task} has weight {weight} but {available} usable sources for {requested} examples")]
    InsufficientSourceData { task: TaskKind, weight: f64, available: usize, requested: usize },
}

fn operand<'a>(task: TaskKind, value: &'a Option<String>, name: &'static str) -> Result<&'a str, PromptError> {
    let v = value.as_deref().filter(|v| !v.trim().is_empty());
    let v = v.ok_or(PromptError::MissingOperand { task, operand: name })?;
    if TAGS.iter().any(|t| v.contains(t)) {
        return Err(PromptError::TagInSpan { operand: name });
    }
    Ok(v)
}

/// Renders one example. Fixed template text is byte-exact; operand text is
/// inserted verbatim except for completion, whose halves are re-joined
/// with single spaces.
pub fn render_example(task: TaskKind, fields: &Fields) -> Result<PromptExample, PromptError> {
    let (input, output) = match task {
        TaskKind::ForwardTranslation => {
            let en = operand(task, &fields.en, "en")?;
            let ang = operand(task, &fields.ang, "ang")?;
            (format!("[INST]{FORWARD_INSTRUCTION}[/INST][EN]{en}[/EN]"), format!("[ANG]{ang}[/ANG]"))
        }
        TaskKind::BackTranslation => {
            let ang = operand(task, &fields.ang, "ang")?;
            let en = operand(task, &fields.en, "en")?;
            (format!("[INST]{BACK_INSTRUCTION}[/INST][ANG]{ang}[/ANG]"), format!("[EN]{en}[/EN]"))
        }
        TaskKind::CrossedDefinition => {
            let headword = operand(task, &fields.ang, "ang")?;
            let definition = operand(task, &fields.definition, "definition")?;
            (format!("[INST]{DEFINITION_INSTRUCTION}[/INST][ANG]{headword}[/ANG]"), format!("[EN]{definition}[/EN]"))
        }
        TaskKind::TextCompletion => {
            let ang = operand(task, &fields.ang, "ang")?;
            let split_at = fields.split_at.ok_or(PromptError::MissingOperand { task, operand: "split_at" })?;
            let tokens: Vec<&str> = ang.split_whitespace().collect();
            if split_at == 0 || split_at >= tokens.len() {
                return Err(PromptError::CompletionTooShort { tokens: tokens.len(), split_at });
            }
            (format!("[ANG]{}", tokens[..split_at].join(" ")), format!("{}[/ANG]", tokens[split_at..].join(" ")))
        }
    };
    Ok(PromptExample { task, input, output, origin_ids: Vec::new() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Inst,
    En,
    Ang,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece<'a> {
    Open(Tag),
    Close(Tag),
    Text(&'a str),
}

fn lex(s: &str) -> Vec<Piece<'_>> {
    const TABLE: [(&str, Piece<'static>); 6] = [
        ("[INST]", Piece::Open(Tag::Inst)),
        ("[/INST]", Piece::Close(Tag::Inst)),
        ("[EN]", Piece::Open(Tag::En)),
        ("[/EN]", Piece::Close(Tag::En)),
        ("[ANG]", Piece::Open(Tag::Ang)),
        ("[/ANG]", Piece::Close(Tag::Ang)),
    ];
    let mut out = Vec::new();
    let mut text_start = 0;
    let mut i = 0;
    while i < s.len() {
        let rest = &s[i..];
        if let Some((lit, piece)) = TABLE.iter().find(|(lit, _)| rest.starts_with(lit)) {
            if text_start < i {
                out.push(Piece::Text(&s[text_start..i]));
            }
            out.push(piece.clone());
            i += lit.len();
            text_start = i;
        } else {
            i += rest.chars().next().map_or(1, char::len_utf8);
        }
    }
    if text_start < s.len() {
        out.push(Piece::Text(&s[text_start..]));
    }
    out
}

/// Checks that tags are balanced and never nested.
pub fn validate_tags(s: &str) -> Result<(), PromptError> {
    let mut open: Option<Tag> = None;
    for piece in lex(s) {
        match (piece, open) {
            (Piece::Open(t), None) => open = Some(t),
            (Piece::Open(t), Some(o)) => {
                return Err(PromptError::MalformedTags(format!("{t:?} opened inside {o:?}")));
            }
            (Piece::Close(t), Some(o)) if t == o => open = None,
            (Piece::Close(t), _) => return Err(PromptError::MalformedTags(format!("unexpected close of {t:?}"))),
            (Piece::Text(_), _) => {}
        }
    }
    match open {
        Some(t) => Err(PromptError::MalformedTags(format!("{t:?} never closed"))),
        None => Ok(()),
    }
}

/// Recovers task kind and fields from a rendered example. Inverse of
/// [`render_example`] for every valid input.
pub fn parse_example(input: &str, output: &str) -> Result<(TaskKind, Fields), PromptError> {
    validate_tags(&format!("{input}{output}"))?;
    let (inp, out) = (lex(input), lex(output));
    use Piece::*;
    match (inp.as_slice(), out.as_slice()) {
        (
            [Open(Tag::Inst), Text(inst), Close(Tag::Inst), Open(src_tag), Text(src), Close(_)],
            [Open(dst_tag), Text(dst), Close(_)],
        ) => {
            let task = match (*inst, src_tag, dst_tag) {
                (FORWARD_INSTRUCTION, Tag::En, Tag::Ang) => TaskKind::ForwardTranslation,
                (BACK_INSTRUCTION, Tag::Ang, Tag::En) => TaskKind::BackTranslation,
                (DEFINITION_INSTRUCTION, Tag::Ang, Tag::En) => TaskKind::CrossedDefinition,
                _ => return Err(PromptError::UnknownTemplate),
            };
            let fields = match task {
                TaskKind::ForwardTranslation => Fields::translation(src, dst),
                TaskKind::BackTranslation => Fields::translation(dst, src),
                _ => Fields::definition(src, dst),
            };
            Ok((task, fields))
        }
        ([Open(Tag::Ang), Text(prefix)], [Text(suffix), Close(Tag::Ang)]) => {
            let split_at = prefix.split_whitespace().count();
            Ok((TaskKind::TextCompletion, Fields::completion(&format!("{prefix} {suffix}"), split_at)))
        }
        _ => Err(PromptError::UnknownTemplate),
    }
}

/// The input half of `task` for a source text, ready to send as a query.
pub fn render_query(task: TaskKind, source: &str) -> Result<String, PromptError> {
    let src = Some(source.to_string());
    let input = match task {
        TaskKind::ForwardTranslation => {
            format!("[INST]{FORWARD_INSTRUCTION}[/INST][EN]{}[/EN]", operand(task, &src, "en")?)
        }
        TaskKind::BackTranslation => {
            format!("[INST]{BACK_INSTRUCTION}[/INST][ANG]{}[/ANG]", operand(task, &src, "ang")?)
        }
        TaskKind::CrossedDefinition => {
            format!("[INST]{DEFINITION_INSTRUCTION}[/INST][ANG]{}[/ANG]", operand(task, &src, "ang")?)
        }
        TaskKind::TextCompletion => format!("[ANG]{}", operand(task, &src, "ang")?),
    };
    Ok(input)
}

/// Trimmed text of the first `[EN]` or `[ANG]` span in a model output. An
/// unclosed span runs to the end of the text. `None` when the tag is
/// missing or the span is blank.
pub fn extract_span(output: &str, lang: Lang) -> Option<String> {
    let (open, close) = match lang {
        Lang::En => ("[EN]", "[/EN]"),
        Lang::Ang => ("[ANG]", "[/ANG]"),
    };
    let start = output.find(open)? + open.len();
    let rest = &output[start..];
    let inner = rest.find(close).map_or(rest, |end| &rest[..end]).trim();
    (!inner.is_empty()).then(|| inner.to_string())
}

/// True when `text` contains any of [`TAGS`].
pub fn contains_tag(text: &str) -> bool {
    TAGS.iter().any(|t| text.contains(t))
}

/// Share of each task in a built dataset, in [`TaskKind::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixConfig {
    pub weights: [f64; 4],
    pub shuffle_seed: u64,
    /// Total examples; by default the largest total every weighted task can
    /// supply without reusing a source.
    #[serde(default)]
    pub total: Option<usize>,
}

impl Default for MixConfig {
    fn default() -> Self {
        MixConfig { weights: [0.25; 4], shuffle_seed: 0, total: None }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(PromptError::InvalidMix("weights must be non-negative".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PromptError::InvalidMix(format!("weights sum to {sum}, not 1")));
        }
        Ok(())
    }

    pub fn weight(&self, task: TaskKind) -> f64 {
        self.weights[task.index()]
    }

    /// Parses "a,b,c,d".
    pub fn parse_weights(s: &str) -> Result<[f64; 4], PromptError> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| PromptError::InvalidMix(e.to_string()))?;
        parts.try_into().map_err(|_| PromptError::InvalidMix("expected four comma-separated weights".into()))
    }
}

/// Where the completion split point may fall, as fractions of the token
/// count. The point is drawn uniformly from the integers in range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionSplitPolicy {
    pub min_frac: f64,
    pub max_frac: f64,
}

impl Default for CompletionSplitPolicy {
    fn default() -> Self {
        CompletionSplitPolicy { min_frac: 0.3, max_frac: 0.7 }
    }
}

impl CompletionSplitPolicy {
    /// Inclusive token-index range for a text of `n` tokens, clamped to
    /// [1, n-1]. None when `n < 2`.
    pub fn range(&self, n: usize) -> Option<(usize, usize)> {
        if n < 2 {
            return None;
        }
        let lo = ((self.min_frac * n as f64) - 1e-9).ceil().max(1.0) as usize;
        let hi = ((self.max_frac * n as f64) + 1e-9).floor() as usize;
        let (lo, hi) = (lo.min(n - 1), hi.min(n - 1).max(1));
        Some((lo.min(hi), hi.max(lo)))
    }
}

impl FromStr for CompletionSplitPolicy {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PromptError::InvalidMix(format!("split policy {s:?} is not MIN,MAX"));
        let (a, b) = s.split_once(',').ok_or_else(bad)?;
        let p = CompletionSplitPolicy {
            min_frac: a.trim().parse().map_err(|_| bad())?,
            max_frac: b.trim().parse().map_err(|_| bad())?,
        };
        if !(0.0..=1.0).contains(&p.min_frac) || !(p.min_frac..=1.0).contains(&p.max_frac) {
            return Err(bad());
        }
        Ok(p)
    }
}

struct Source {
    fields: Fields,
    origin_ids: Vec<String>,
}

fn sources(store: &Store, task: TaskKind) -> Vec<Source> {
    match task {
        TaskKind::TextCompletion => {
            let paired = store.paired_fragment_ids();
            store
                .reference_fragments()
                .into_iter()
                .filter(|f| !paired.contains(f.id.as_str()) && f.text.split_whitespace().count() >= 2)
                .map(|f| Source {
                    fields: Fields { ang: Some(f.text.clone()), ..Default::default() },
                    origin_ids: vec![f.id.clone()],
                })
                .collect()
        }
        TaskKind::ForwardTranslation | TaskKind::BackTranslation => store
            .pairs()
            .filter(|p| {
                !p.has_fatal_flag()
                    && (p.provenance == Provenance::Human || p.review_state == ReviewState::Accepted)
            })
            .filter_map(|p| {
                let en = store.fragment(&p.en_id)?;
                let ang = store.fragment(&p.ang_id)?;
                debug_assert!(en.lang == Lang::En && ang.lang == Lang::Ang);
                Some(Source { fields: Fields::translation(&en.text, &ang.text), origin_ids: vec![p.id.clone()] })
            })
            .collect(),
        TaskKind::CrossedDefinition => store
            .dictionary()
            .map(|d| Source { fields: Fields::definition(&d.headword, &d.definition), origin_ids: vec![d.id.clone()] })
            .collect(),
    }
}

/// Splits `total` across weights by largest remainder; ties go to the
/// earlier task.
pub fn apportion(total: usize, weights: &[f64; 4]) -> [usize; 4] {
    let quotas = weights.map(|w| w * total as f64);
    let mut counts = quotas.map(|q| (q + 1e-9).floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - counts[a] as f64;
        let fb = quotas[b] - counts[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Builds the mixed adaptation dataset: per task, sources are shuffled on
/// their own seeded stream and the first `count` rendered; the union is
/// shuffled once more. Identical store + config give identical output.
pub fn build_adaptation_dataset(
    store: &Store,
    mix: &MixConfig,
    policy: CompletionSplitPolicy,
) -> Result<Vec<PromptExample>, PromptError> {
    build_adaptation_dataset_where(store, mix, policy, |_| true)
}

/// [`build_adaptation_dataset`] over the sources whose origin ids all
/// satisfy `keep`, e.g. to hold out validation and test items.
pub fn build_adaptation_dataset_where(
    store: &Store,
    mix: &MixConfig,
    policy: CompletionSplitPolicy,
    keep: impl Fn(&str) -> bool,
) -> Result<Vec<PromptExample>, PromptError> {
    mix.validate()?;
    let mut pools: Vec<Vec<Source>> = TaskKind::ALL
        .iter()
        .map(|t| sources(store, *t).into_iter().filter(|s| s.origin_ids.iter().all(|id| keep(id))).collect())
        .collect();
    for (task, pool) in TaskKind::ALL.iter().zip(&pools) {
        let weight = mix.weight(*task);
        if weight > 0.0 && pool.is_empty() {
            return Err(PromptError::InsufficientSourceData { task: *task, weight, available: 0, requested: 1 });
        }
    }
    let total = match mix.total {
        Some(t) => t,
        None => TaskKind::ALL
            .iter()
            .zip(&pools)
            .filter(|(t, _)| mix.weight(**t) > 0.0)
            .map(|(t, p)| (p.len() as f64 / mix.weight(*t) + 1e-9).floor() as usize)
            .min()
            .unwrap_or(0),
    };
    let counts = apportion(total, &mix.weights);

    let mut examples = Vec::with_capacity(total);
    for (i, task) in TaskKind::ALL.iter().enumerate() {
        let pool = &mut pools[i];
        if counts[i] > pool.len() {
            return Err(PromptError::InsufficientSourceData {
                task: *task,
                weight: mix.weight(*task),
                available: pool.len(),
                requested: counts[i],
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix.shuffle_seed);
        rng.set_stream(i as u64 + 1);
        pool.shuffle(&mut rng);
        for src in pool.drain(..).take(counts[i]) {
            let mut fields = src.fields;
            if *task == TaskKind::TextCompletion {
                let n = fields.ang.as_deref().unwrap_or("").split_whitespace().count();
                let (lo, hi) = policy.range(n).expect("sources have at least two tokens");
                fields.split_at = Some(rng.random_range(lo..=hi));
            }
            let mut ex = render_example(*task, &fields)?;
            ex.origin_ids = src.origin_ids;
            examples.push(ex);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix.shuffle_seed);
    examples.shuffle(&mut rng);
    Ok(examples)
}
