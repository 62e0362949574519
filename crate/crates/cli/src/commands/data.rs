use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use anyhow::Context as _;
use forge_core::corpus::DatasetSplit;
use forge_core::filters::{FilterConfig, FlagHistogram, PairText, filter_batch};
use forge_core::metrics::{EvalConfig, SegmentInput, evaluate_corpus};
use forge_core::normalize::{NormalizationConfig, QualityVerdict, normalize_text, quality_check};
use forge_core::prompts::{CompletionSplitPolicy, MixConfig, build_adaptation_dataset_where};
use forge_core::TextFragment;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{open_or_create, open_reader, read_json, read_jsonl, write_jsonl};
use crate::args::{BuildArgs, EvalArgs, FilterArgs, NormalizeArgs, PromptsCmd};
use crate::output::{emit, write_json_file};
use crate::settings::Context;

pub fn normalization_config(path: Option<&Path>) -> anyhow::Result<NormalizationConfig> {
    match path {
        Some(p) => {
            let src = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            NormalizationConfig::from_toml(&src).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(NormalizationConfig::default()),
    }
}

pub fn filter_config(path: Option<&Path>) -> anyhow::Result<FilterConfig> {
    match path {
        Some(p) => FilterConfig::from_file(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(FilterConfig::default()),
    }
}

#[derive(Serialize)]
struct Dropped {
    id: String,
    #[serde(flatten)]
    reason: forge_core::normalize::QualityFailure,
}

pub fn normalize(ctx: &Context, a: NormalizeArgs) -> anyhow::Result<()> {
    let cfg = normalization_config(a.config.as_deref())?;
    let raw: Vec<TextFragment> = read_jsonl(&a.input)?;
    let mut kept = Vec::with_capacity(raw.len());
    let mut dropped = Vec::new();
    for mut frag in raw {
        frag.text = normalize_text(&frag.text, &cfg);
        frag.normalized = true;
        match quality_check(&frag, &cfg) {
            QualityVerdict::Pass => kept.push(frag),
            QualityVerdict::Fail(reason) => {
                tracing::info!(id = %frag.id, "dropped: {reason:?}");
                dropped.push(Dropped { id: frag.id, reason });
            }
        }
    }
    write_jsonl(&a.output, &kept)?;
    let imported = if a.import {
        let mut store = open_or_create(ctx)?;
        let before = store.fragment_count();
        for frag in &kept {
            store.add_fragment(frag.clone())?;
        }
        store.save()?;
        Some(store.fragment_count() - before)
    } else {
        None
    };
    let summary = json!({"kept": kept.len(), "dropped": dropped, "imported": imported});
    emit(ctx.json, &summary, || {
        let mut s = format!("kept {}, dropped {}", kept.len(), dropped.len());
        if let Some(n) = imported {
            s.push_str(&format!(", imported {n} into the store"));
        }
        s
    })
}

pub fn prompts(ctx: &Context, cmd: PromptsCmd) -> anyhow::Result<()> {
    let PromptsCmd::Build(a) = cmd;
    build(ctx, a)
}

fn build(ctx: &Context, a: BuildArgs) -> anyhow::Result<()> {
    let mix = MixConfig {
        weights: MixConfig::parse_weights(&a.mix)?,
        shuffle_seed: a.seed.unwrap_or(ctx.seed),
        total: a.total,
    };
    let policy: CompletionSplitPolicy = a.split_policy.parse()?;
    let held_out: HashSet<String> = match &a.split {
        Some(p) => {
            let split: DatasetSplit = read_json(p)?;
            split.validation.into_iter().chain(split.test).collect()
        }
        None => HashSet::new(),
    };
    let store = open_reader(ctx)?;
    let examples = build_adaptation_dataset_where(&store, &mix, policy, |id| !held_out.contains(id))?;
    write_jsonl(&a.out, &examples)?;
    let mut per_task: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &examples {
        *per_task.entry(e.task.as_str()).or_default() += 1;
    }
    let summary = json!({"examples": examples.len(), "per_task": per_task, "held_out": held_out.len(), "seed": mix.shuffle_seed});
    emit(ctx.json, &summary, || format!("wrote {} examples to {}: {per_task:?}", examples.len(), a.out.display()))
}

#[derive(Debug, Deserialize)]
struct Segment {
    id: String,
    text: String,
}

pub fn eval(ctx: &Context, a: EvalArgs) -> anyhow::Result<()> {
    let hyps: Vec<Segment> = read_jsonl(&a.hyp)?;
    let refs: Vec<Segment> = read_jsonl(&a.reference)?;
    let mut by_id: HashMap<String, String> = HashMap::with_capacity(hyps.len());
    for h in hyps {
        if by_id.insert(h.id.clone(), h.text).is_some() {
            anyhow::bail!("duplicate hypothesis id {:?}", h.id);
        }
    }
    let mut segments = Vec::with_capacity(refs.len());
    for r in refs {
        let hypothesis = by_id.remove(&r.id).ok_or_else(|| anyhow::anyhow!("no hypothesis for reference {:?}", r.id))?;
        segments.push(SegmentInput { id: r.id, hypothesis, reference: r.text });
    }
    if let Some(extra) = by_id.keys().min() {
        anyhow::bail!("hypothesis {extra:?} has no reference ({} unmatched)", by_id.len());
    }
    let mut cfg = EvalConfig { target_lang: a.lang.into(), exec: ctx.exec, ..Default::default() };
    cfg.bleu.max_ngram_order = a.bleu_order;
    cfg.chrf.char_ngram_order = a.chrf_order;
    let report = evaluate_corpus(&segments, &cfg)?;
    if let Some(p) = &a.csv {
        let file = std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        report.write_csv(std::io::BufWriter::new(file))?;
    }
    if let Some(p) = &a.out {
        write_json_file(p, &report)?;
    }
    let c = &report.corpus;
    emit(ctx.json, &report, || {
        format!("segments {}\nBLEU   {:.2}\nchrF   {:.2}\nMETEOR {:.2}", segments.len(), c.bleu, c.chrf, c.meteor)
    })
}

pub fn filter(ctx: &Context, a: FilterArgs) -> anyhow::Result<()> {
    let cfg = filter_config(a.config.as_deref())?;
    let pairs: Vec<PairText> = read_jsonl(&a.input)?;
    let flagged = filter_batch(&pairs, &cfg, ctx.exec);
    write_jsonl(&a.output, &flagged)?;
    let mut histogram = FlagHistogram::default();
    for p in &flagged {
        histogram.add(&p.flags);
    }
    let fatal = flagged.iter().filter(|p| p.has_fatal_flag()).count();
    let summary = json!({"pairs": flagged.len(), "fatal": fatal, "flag_histogram": histogram});
    emit(ctx.json, &summary, || {
        format!(
            "{} pairs, {fatal} with fatal flags (looped {}, non-translated {}, hallucination {})",
            flagged.len(),
            histogram.looped_generation,
            histogram.non_translated,
            histogram.vocabulary_hallucination
        )
    })
}
