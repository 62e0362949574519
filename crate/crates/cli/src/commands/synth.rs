use std::path::PathBuf;

use anyhow::Context as _;
use forge_core::agents::{AgentPipelineConfig, Agents, persist_records, run_pipeline};
use forge_core::backtrans::{BacktransJob, DedupPolicy, merge_training_sets, run_backtranslation};
use forge_core::corpus::DatasetSplit;
use forge_core::infer::{Client, EndpointConfig};
use forge_core::{ParallelPair, Provenance, TextFragment};
use serde_json::json;

use super::data::filter_config;
use super::{open_reader, open_writer, read_json, read_jsonl, write_jsonl};
use crate::args::{BacktranslateArgs, DedupArg, GenerateArgs, MergeArgs};
use crate::output::{emit, write_json_file};
use crate::settings::Context;

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> anyhow::Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| anyhow::anyhow!("no {what}: pass it on the command line or set it in the settings file"))
}

pub fn backtranslate(ctx: &Context, a: BacktranslateArgs) -> anyhow::Result<()> {
    let endpoint_path = required(a.endpoint, &ctx.backtranslate_endpoint, "--endpoint")?;
    let endpoint = EndpointConfig::from_file(&endpoint_path)?;
    let client = Client::from_config(endpoint)?;
    let sources: Vec<TextFragment> = read_jsonl(&a.source)?;
    let split: Option<DatasetSplit> = a.split.as_deref().map(read_json).transpose()?;
    let job = BacktransJob { filters: filter_config(a.filters.as_deref())?, split, exec: ctx.exec };
    let outcome = run_backtranslation(&job, &sources, &client)?;
    write_jsonl(&a.out, &outcome.pairs)?;
    if let Some(p) = &a.report {
        write_json_file(p, &outcome.report)?;
    }
    if a.import {
        let mut store = open_writer(ctx)?;
        for pair in &outcome.pairs {
            store.insert_pair(pair)?;
        }
        store.save()?;
    }
    let r = &outcome.report;
    emit(ctx.json, r, || {
        format!(
            "{} sources: {} emitted, {} excluded by filters, {} skipped",
            r.sources,
            r.emitted,
            r.excluded.len(),
            r.skipped.len()
        )
    })
}

pub fn merge(ctx: &Context, a: MergeArgs) -> anyhow::Result<()> {
    let human: Vec<ParallelPair> = match &a.human {
        Some(p) => read_jsonl(p)?,
        None => {
            let store = open_reader(ctx)?;
            store
                .pairs()
                .filter(|p| p.provenance == Provenance::Human)
                .map(|p| store.resolve(p))
                .collect::<Result<_, _>>()?
        }
    };
    let mut synthetic: Vec<ParallelPair> = Vec::new();
    for p in &a.synthetic {
        synthetic.extend(read_jsonl::<ParallelPair>(p)?);
    }
    let policy = match a.dedup {
        DedupArg::ExactPair => DedupPolicy::ExactPair,
        DedupArg::AngText => DedupPolicy::AngText,
    };
    let (merged, report) = merge_training_sets(&human, &synthetic, policy, a.seed.unwrap_or(ctx.seed))?;
    write_jsonl(&a.out, &merged)?;
    if let Some(p) = &a.report {
        write_json_file(p, &report)?;
    }
    emit(ctx.json, &report, || {
        format!(
            "{} human + {} synthetic -> {} pairs ({} duplicates dropped)",
            report.human_in, report.synthetic_in, report.merged, report.dropped_duplicates
        )
    })
}

pub fn generate(ctx: &Context, a: GenerateArgs) -> anyhow::Result<()> {
    let path = required(a.config, &ctx.pipeline_config, "--config")?;
    let mut cfg = AgentPipelineConfig::from_file(&path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = a.seed {
        cfg.sample_seed = seed;
    }
    cfg.exec = ctx.exec;
    let agents = Agents::from_config(&cfg)?;
    let mut store = open_writer(ctx)?;
    let outcome = run_pipeline(&cfg, &store, &agents, a.count)?;
    persist_records(&mut store, &outcome.records)?;
    store.save()?;
    if let Some(p) = &a.out {
        write_jsonl(p, &outcome.records)?;
    }
    if let Some(p) = &a.report {
        write_json_file(p, &outcome.report)?;
    }
    let r = &outcome.report;
    let summary = json!({"report": r, "records": outcome.records.iter().map(|x| &x.id).collect::<Vec<_>>()});
    emit(ctx.json, &summary, || {
        format!("attempted {}: {} emitted, {} rejected by filters, {} failed", r.attempted, r.emitted, r.rejected, r.failed)
    })
}
