//! Two-agent synthetic generation. A fragment generator writes a new
//! Modern English sentence modelled on sampled reference ANG fragments; a
//! translator renders it into ANG with few-shot prompts built from human
//! pairs that share vocabulary with those fragments.
//!
//! Every record draws from its own ChaCha8 stream (`seed`, stream = record
//! index), so output does not depend on batch size or thread scheduling.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Lang, ParallelPair, Provenance, ReviewState, Store, StoreError, TextFragment};
use crate::filters::{FilterConfig, FilterFlag, FlagHistogram, apply_filters, word_tokens};
use crate::infer::{Client, DecodeMode, EndpointConfig, FewShotPrompt, InferError, Shot, assemble_fewshot};
use crate::par::{self, ExecMode};
use crate::prompts::{self, Fields, TaskKind};

const DEFAULT_TEMPLATE: &str = include_str!("../data/fragmentgen_prompt.toml");

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("reference corpus has {available} fragments, {needed} needed")]
    InsufficientReference { available: usize, needed: usize },
    #[error("pipeline config: {0}")]
    Config(String),
    #[error("both backends are unreachable: {fragmentgen}; {translator}")]
    Unreachable { fragmentgen: InferError, translator: InferError },
    #[error("empty English input")]
    EmptyInput,
    #[error("degenerate completion: {0}")]
    Degenerate(String),
    #[error("unparseable translation: {0}")]
    Unparseable(String),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Fragment-generator prompt, loaded from a versioned TOML file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub version: u32,
    pub body: String,
    pub compose: String,
    pub mutate: String,
}

impl PromptTemplate {
    pub fn bundled() -> Self {
        Self::from_toml(DEFAULT_TEMPLATE).expect("bundled template parses")
    }

    pub fn from_toml(src: &str) -> Result<Self, AgentError> {
        let t: PromptTemplate = toml::from_str(src).map_err(|e| AgentError::Config(e.to_string()))?;
        if !t.body.contains("{examples}") || !t.body.contains("{task}") {
            return Err(AgentError::Config("template body needs {examples} and {task}".into()));
        }
        Ok(t)
    }

    pub fn render(&self, examples: &[&str], mutation: bool) -> String {
        let list: Vec<String> = examples.iter().map(|e| format!("- {e}")).collect();
        let task = if mutation { &self.mutate } else { &self.compose };
        self.body.trim().replace("{examples}", &list.join("\n")).replace("{task}", task.trim())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentPipelineConfig {
    pub fragmentgen_endpoint: EndpointConfig,
    pub translator_endpoint: EndpointConfig,
    pub style_sample_size: usize,
    pub fewshot_pairs: usize,
    pub sample_seed: u64,
    /// Records generated concurrently per batch.
    pub batch_size: usize,
    /// Longest acceptable generated sentence, in characters.
    pub max_en_chars: usize,
    /// Cycle record by record through genre tags and sample style examples
    /// within one genre.
    pub stratify_by_genre: bool,
    /// Ask for a rewrite of the first style example instead of a fresh
    /// sentence. Experimental.
    pub mutation_mode: bool,
    pub template: PromptTemplate,
    pub filters: FilterConfig,
    pub exec: ExecMode,
}

impl Default for AgentPipelineConfig {
    fn default() -> Self {
        AgentPipelineConfig {
            fragmentgen_endpoint: EndpointConfig::default(),
            translator_endpoint: EndpointConfig::default(),
            style_sample_size: 5,
            fewshot_pairs: 3,
            sample_seed: 0,
            batch_size: 8,
            max_en_chars: 400,
            stratify_by_genre: false,
            mutation_mode: false,
            template: PromptTemplate::bundled(),
            filters: FilterConfig::default(),
            exec: ExecMode::default(),
        }
    }
}

/// On-disk form of [`AgentPipelineConfig`]. Paths are relative to the file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineFile {
    fragmentgen: EndpointConfig,
    translator: EndpointConfig,
    style_sample_size: Option<usize>,
    fewshot_pairs: Option<usize>,
    sample_seed: Option<u64>,
    batch_size: Option<usize>,
    max_en_chars: Option<usize>,
    #[serde(default)]
    stratify_by_genre: bool,
    #[serde(default)]
    mutation_mode: bool,
    prompt_template: Option<PathBuf>,
    filters: Option<PathBuf>,
}

impl AgentPipelineConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.style_sample_size == 0 {
            return Err(AgentError::Config("style_sample_size must be at least 1".into()));
        }
        if self.batch_size == 0 || self.max_en_chars == 0 {
            return Err(AgentError::Config("batch_size and max_en_chars must be at least 1".into()));
        }
        if self.translator_endpoint.decode.mode != DecodeMode::Greedy {
            return Err(AgentError::Config("translator must decode greedily".into()));
        }
        self.fragmentgen_endpoint.validate()?;
        self.translator_endpoint.validate()?;
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, AgentError> {
        let err = |m: String| AgentError::Config(format!("{}: {m}", path.display()));
        let src = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let file: PipelineFile = toml::from_str(&src).map_err(|e| err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = AgentPipelineConfig {
            fragmentgen_endpoint: file.fragmentgen,
            translator_endpoint: file.translator,
            stratify_by_genre: file.stratify_by_genre,
            mutation_mode: file.mutation_mode,
            ..Default::default()
        };
        cfg.fragmentgen_endpoint.resolve_paths(base);
        cfg.translator_endpoint.resolve_paths(base);
        if let Some(v) = file.style_sample_size {
            cfg.style_sample_size = v;
        }
        if let Some(v) = file.fewshot_pairs {
            cfg.fewshot_pairs = v;
        }
        if let Some(v) = file.sample_seed {
            cfg.sample_seed = v;
        }
        if let Some(v) = file.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = file.max_en_chars {
            cfg.max_en_chars = v;
        }
        if let Some(p) = file.prompt_template {
            let src = std::fs::read_to_string(base.join(&p)).map_err(|e| err(format!("{}: {e}", p.display())))?;
            cfg.template = PromptTemplate::from_toml(&src)?;
        }
        if let Some(p) = file.filters {
            cfg.filters = FilterConfig::from_file(&base.join(p)).map_err(|e| err(e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One generated pair. `en_seq < ang_seq` records that the English side
/// was produced first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub id: String,
    pub style_example_ids: Vec<String>,
    pub en_text: String,
    pub ang_text: String,
    pub flags: Vec<FilterFlag>,
    pub provenance: Provenance,
    pub review_state: ReviewState,
    pub en_seq: u64,
    pub ang_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub index: usize,
    pub id: String,
    pub stage: &'static str,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub template_version: u32,
    pub style_sample_size: usize,
    pub fewshot_pairs: usize,
    pub mutation_mode: bool,
    pub stratify_by_genre: bool,
    pub attempted: usize,
    pub emitted: usize,
    pub rejected: usize,
    pub failed: usize,
    pub flag_histogram: FlagHistogram,
    pub failures: Vec<Failure>,
}

impl PipelineReport {
    pub fn balanced(&self) -> bool {
        self.attempted == self.emitted + self.rejected + self.failed
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub records: Vec<GenerationRecord>,
    pub report: PipelineReport,
}

pub fn record_id(seed: u64, index: usize) -> String {
    format!("gen-{seed}-{index:05}")
}

/// The two backends.
pub struct Agents {
    pub fragmentgen: Client,
    pub translator: Client,
}

impl Agents {
    pub fn from_config(cfg: &AgentPipelineConfig) -> Result<Self, AgentError> {
        Ok(Agents {
            fragmentgen: Client::from_config(cfg.fragmentgen_endpoint.clone())?,
            translator: Client::from_config(cfg.translator_endpoint.clone())?,
        })
    }
}

/// Output of the fragment generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Draft {
    pub en_text: String,
    pub style_example_ids: Vec<String>,
}

fn clean_sentence(reply: &str) -> String {
    let line = reply.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    line.trim_matches(|c: char| c.is_whitespace() || matches!(c, '"' | '\'' | '“' | '”' | '‘' | '’' | '`'))
        .to_string()
}

/// Samples style examples from `pool` and asks the fragment generator for
/// one sentence. A degenerate reply (empty, too long, or tagged) is retried
/// once.
pub fn fragmentgen_step(
    cfg: &AgentPipelineConfig,
    client: &Client,
    pool: &[&TextFragment],
    rng: &mut ChaCha8Rng,
) -> Result<Draft, AgentError> {
    if pool.len() < cfg.style_sample_size {
        return Err(AgentError::InsufficientReference { available: pool.len(), needed: cfg.style_sample_size });
    }
    let style: Vec<&TextFragment> = pool.choose_multiple(rng, cfg.style_sample_size).copied().collect();
    let texts: Vec<&str> = style.iter().map(|f| f.text.as_str()).collect();
    let prompt = FewShotPrompt::zero_shot(cfg.template.render(&texts, cfg.mutation_mode));
    let mut last = String::new();
    for _ in 0..2 {
        let sentence = clean_sentence(&client.complete(&prompt)?);
        let chars = sentence.chars().count();
        if chars > 0 && chars <= cfg.max_en_chars && !prompts::contains_tag(&sentence) {
            return Ok(Draft { en_text: sentence, style_example_ids: style.iter().map(|f| f.id.clone()).collect() });
        }
        last = sentence;
    }
    Err(AgentError::Degenerate(format!("{} chars: {:.60}", last.chars().count(), last)))
}

/// Up to `k` human pairs ranked by how many distinct ANG word types they
/// share with the style examples; ties fall in a seeded random order. The
/// best-ranked shot comes last, next to the query.
pub fn select_shots(human: &[ParallelPair], style: &[&str], k: usize, rng: &mut ChaCha8Rng) -> Vec<Shot> {
    let vocab: HashSet<String> = style.iter().flat_map(|t| word_tokens(t)).collect();
    let mut ranked: Vec<(usize, &ParallelPair)> = human
        .iter()
        .map(|p| {
            let types: HashSet<String> = word_tokens(&p.ang.text).into_iter().collect();
            (types.intersection(&vocab).count(), p)
        })
        .collect();
    ranked.shuffle(rng);
    ranked.sort_by(|a, b| b.0.cmp(&a.0));
    ranked
        .into_iter()
        .take(k)
        .rev()
        .filter_map(|(_, p)| {
            prompts::render_example(TaskKind::ForwardTranslation, &Fields::translation(&p.en.text, &p.ang.text))
                .ok()
                .map(|ex| Shot::new(ex.input, ex.output))
        })
        .collect()
}

/// Translates `en_text` with a few-shot forward-translation prompt and
/// returns the `[ANG]` span. An untagged reply is used as is; a reply with
/// tags but no `[ANG]` span is retried once.
pub fn translate_step(client: &Client, en_text: &str, shots: &[Shot]) -> Result<String, AgentError> {
    if en_text.trim().is_empty() {
        return Err(AgentError::EmptyInput);
    }
    let query = prompts::render_query(TaskKind::ForwardTranslation, en_text)
        .map_err(|e| AgentError::Unparseable(e.to_string()))?;
    let prompt = assemble_fewshot("", shots, &query, client.config().context_budget)?;
    let mut last = String::new();
    for _ in 0..2 {
        let reply = client.complete(&prompt)?;
        if let Some(span) = prompts::extract_span(&reply, Lang::Ang) {
            return Ok(span);
        }
        let raw = reply.trim();
        if !raw.is_empty() && !prompts::contains_tag(raw) {
            tracing::warn!("translator reply has no [ANG] tags, using it verbatim");
            return Ok(raw.to_string());
        }
        last = raw.to_string();
    }
    Err(AgentError::Unparseable(format!("{last:.60}")))
}

fn style_pools<'s>(cfg: &AgentPipelineConfig, reference: &[&'s TextFragment]) -> Vec<Vec<&'s TextFragment>> {
    if !cfg.stratify_by_genre {
        return vec![reference.to_vec()];
    }
    let mut by_genre: BTreeMap<&str, Vec<&TextFragment>> = BTreeMap::new();
    for f in reference {
        by_genre.entry(f.genre.as_deref().unwrap_or("")).or_default().push(f);
    }
    by_genre.into_values().collect()
}

enum Outcome {
    Record(GenerationRecord),
    Failed(Failure),
}

fn generate_one(
    cfg: &AgentPipelineConfig,
    agents: &Agents,
    pools: &[Vec<&TextFragment>],
    human: &[ParallelPair],
    index: usize,
) -> Outcome {
    let id = record_id(cfg.sample_seed, index);
    let fail = |stage, e: AgentError| Outcome::Failed(Failure { index, id: id.clone(), stage, error: e.to_string() });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sample_seed);
    rng.set_stream(index as u64);
    let pool = &pools[index % pools.len()];

    let draft = match fragmentgen_step(cfg, &agents.fragmentgen, pool, &mut rng) {
        Ok(d) => d,
        Err(e) => return fail("fragmentgen", e),
    };
    let style_texts: Vec<&str> = draft
        .style_example_ids
        .iter()
        .filter_map(|sid| pool.iter().find(|f| &f.id == sid).map(|f| f.text.as_str()))
        .collect();
    let shots = select_shots(human, &style_texts, cfg.fewshot_pairs, &mut rng);
    let ang_text = match translate_step(&agents.translator, &draft.en_text, &shots) {
        Ok(t) => t,
        Err(e) => return fail("translate", e),
    };
    let flags = apply_filters(&draft.en_text, &ang_text, Lang::Ang, &cfg.filters);
    let review_state =
        if flags.iter().any(FilterFlag::is_fatal) { ReviewState::Rejected } else { ReviewState::Unreviewed };
    Outcome::Record(GenerationRecord {
        id,
        style_example_ids: draft.style_example_ids,
        en_text: draft.en_text,
        ang_text,
        flags,
        provenance: Provenance::DualAgent,
        review_state,
        en_seq: 2 * index as u64,
        ang_seq: 2 * index as u64 + 1,
    })
}

/// Attempts `count` records. Per-record failures are reported and skipped;
/// the job only fails up front, when the reference corpus is too small or
/// neither backend answers a probe.
pub fn run_pipeline(
    cfg: &AgentPipelineConfig,
    store: &Store,
    agents: &Agents,
    count: usize,
) -> Result<PipelineOutcome, AgentError> {
    cfg.validate()?;
    let mut reference = store.reference_fragments();
    reference.sort_by(|a, b| a.id.cmp(&b.id));
    let pools = style_pools(cfg, &reference);
    let smallest = pools.iter().map(Vec::len).min().unwrap_or(0);
    if count > 0 && smallest < cfg.style_sample_size {
        return Err(AgentError::InsufficientReference { available: smallest, needed: cfg.style_sample_size });
    }
    if count > 0 {
        match (agents.fragmentgen.probe(), agents.translator.probe()) {
            (Err(fragmentgen), Err(translator)) => return Err(AgentError::Unreachable { fragmentgen, translator }),
            (Err(e), Ok(())) | (Ok(()), Err(e)) => tracing::warn!("one backend is unreachable: {e}"),
            _ => {}
        }
    }
    let mut human: Vec<ParallelPair> = store
        .pairs()
        .filter(|p| p.provenance == Provenance::Human)
        .map(|p| store.resolve(p))
        .collect::<Result<_, _>>()?;
    human.sort_by(|a, b| a.id.cmp(&b.id));

    let mut report = PipelineReport {
        seed: cfg.sample_seed,
        template_version: cfg.template.version,
        style_sample_size: cfg.style_sample_size,
        fewshot_pairs: cfg.fewshot_pairs,
        mutation_mode: cfg.mutation_mode,
        stratify_by_genre: cfg.stratify_by_genre,
        attempted: count,
        ..Default::default()
    };
    let mut records = Vec::new();
    for start in (0..count).step_by(cfg.batch_size) {
        let end = (start + cfg.batch_size).min(count);
        let batch = par::map_range(cfg.exec, end - start, |k| generate_one(cfg, agents, &pools, &human, start + k));
        for outcome in batch {
            match outcome {
                Outcome::Record(r) => {
                    report.flag_histogram.add(&r.flags);
                    if r.review_state == ReviewState::Rejected {
                        report.rejected += 1;
                    } else {
                        report.emitted += 1;
                    }
                    records.push(r);
                }
                Outcome::Failed(f) => {
                    tracing::warn!(record = %f.id, stage = f.stage, "generation failed: {}", f.error);
                    report.failed += 1;
                    report.failures.push(f);
                }
            }
        }
    }
    Ok(PipelineOutcome { records, report })
}

/// Appends records to the store as dual-agent pairs.
pub fn persist_records(store: &mut Store, records: &[GenerationRecord]) -> Result<(), AgentError> {
    for r in records {
        let en = TextFragment::new(format!("{}-en", r.id), Lang::En, &r.en_text, "fragmentgen");
        let ang = TextFragment::new(format!("{}-ang", r.id), Lang::Ang, &r.ang_text, "translator");
        let mut pair = ParallelPair::new(r.id.clone(), en, ang, Provenance::DualAgent).expect("languages fixed");
        pair.flags = r.flags.clone();
        pair.review_state = r.review_state;
        store.insert_pair_with_styles(&pair, r.style_example_ids.clone())?;
    }
    Ok(())
}
