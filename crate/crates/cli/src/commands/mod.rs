mod corpus;
mod data;
mod review;
mod synth;

use std::path::Path;

use anyhow::Context as _;
use forge_core::Store;
use forge_core::corpus::StoreConfig;
use serde::de::DeserializeOwned;

use crate::args::Command;
use crate::settings::Context;

pub fn run(ctx: &Context, command: Command) -> anyhow::Result<()> {
    match command {
        Command::Corpus(cmd) => corpus::run(ctx, cmd),
        Command::Normalize(a) => data::normalize(ctx, a),
        Command::Prompts(cmd) => data::prompts(ctx, cmd),
        Command::Eval(a) => data::eval(ctx, a),
        Command::Filter(a) => data::filter(ctx, a),
        Command::Backtranslate(a) => synth::backtranslate(ctx, a),
        Command::Merge(a) => synth::merge(ctx, a),
        Command::Generate(a) => synth::generate(ctx, a),
        Command::Review(cmd) => review::run(ctx, cmd),
        Command::Serve(a) => review::serve(ctx, a),
    }
}

fn open_reader(ctx: &Context) -> anyhow::Result<Store> {
    Store::open(&ctx.store).with_context(|| format!("opening store {}", ctx.store.display()))
}

fn open_writer(ctx: &Context) -> anyhow::Result<Store> {
    Store::open_writer(&ctx.store).with_context(|| format!("opening store {} for writing", ctx.store.display()))
}

fn open_or_create(ctx: &Context) -> anyhow::Result<Store> {
    Store::open_or_create(&ctx.store, StoreConfig::default())
        .with_context(|| format!("opening store {} for writing", ctx.store.display()))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    forge_core::jsonl::read(path).with_context(|| format!("reading {}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let raw = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&raw).with_context(|| format!("parsing {}", path.display()))
}

fn write_jsonl<'a, T: serde::Serialize + 'a>(path: &Path, records: impl IntoIterator<Item = &'a T>) -> anyhow::Result<()> {
    forge_core::jsonl::write(path, records).with_context(|| format!("writing {}", path.display()))
}

/// Parses comma-separated floats, e.g. "0.8,0.1,0.1".
fn parse_floats<const N: usize>(s: &str, what: &str) -> anyhow::Result<[f64; N]> {
    let values: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("{what} {s:?}"))?;
    values.try_into().map_err(|_| anyhow::anyhow!("{what} {s:?}: expected {N} comma-separated numbers"))
}
