use anyhow::Context as _;
use forge_core::corpus::{ImportSummary, SplitRatios, split_dataset};
use forge_core::Lang;
use serde_json::json;

use super::{open_or_create, open_reader, parse_floats};
use crate::args::{CorpusCmd, ImportArgs, SplitArgs, SplitUnit};
use crate::output::{emit, write_json_file};
use crate::settings::Context;

pub fn run(ctx: &Context, cmd: CorpusCmd) -> anyhow::Result<()> {
    match cmd {
        CorpusCmd::Import(a) => import(ctx, a),
        CorpusCmd::Export { dir } => {
            let store = open_reader(ctx)?;
            store.export_all(&dir).with_context(|| format!("exporting to {}", dir.display()))?;
            let counts = json!({
                "fragments": store.fragment_count(),
                "pairs": store.pairs().count(),
                "dictionary": store.dictionary().count(),
            });
            emit(ctx.json, &counts, || format!("exported {counts} to {}", dir.display()))
        }
        CorpusCmd::Split(a) => split(ctx, a),
    }
}

fn import(ctx: &Context, a: ImportArgs) -> anyhow::Result<()> {
    if a.fragments.is_none() && a.pairs.is_none() && a.dictionary.is_none() && a.dir.is_none() {
        anyhow::bail!("nothing to import: pass --fragments, --pairs, --dictionary or --dir");
    }
    let mut store = open_or_create(ctx)?;
    let mut parts = serde_json::Map::new();
    let mut record = |name: &str, s: ImportSummary| {
        parts.insert(name.into(), json!({"read": s.read, "added": s.added, "deduplicated": s.deduplicated}));
    };
    if let Some(dir) = &a.dir {
        record("dir", store.import_all(dir).with_context(|| format!("importing {}", dir.display()))?);
    }
    // Fragments before dictionary before pairs: pairs reference fragment ids.
    if let Some(p) = &a.fragments {
        record("fragments", store.import_fragments(p).with_context(|| format!("importing {}", p.display()))?);
    }
    if let Some(p) = &a.dictionary {
        record("dictionary", store.import_dictionary(p).with_context(|| format!("importing {}", p.display()))?);
    }
    if let Some(p) = &a.pairs {
        record("pairs", store.import_pairs(p).with_context(|| format!("importing {}", p.display()))?);
    }
    store.save()?;
    let summary = serde_json::Value::Object(parts);
    emit(ctx.json, &summary, || format!("imported {summary}"))
}

fn split(ctx: &Context, a: SplitArgs) -> anyhow::Result<()> {
    let [train, validation, test] = parse_floats::<3>(&a.ratios, "ratios")?;
    let ratios = SplitRatios::new(train, validation, test)?;
    let store = open_reader(ctx)?;
    let ids: Vec<String> = match a.of {
        SplitUnit::Pairs => {
            if a.lang.is_some() {
                anyhow::bail!("--lang only applies to --of fragments");
            }
            store.pairs().map(|p| p.id.clone()).collect()
        }
        SplitUnit::Fragments => {
            let lang = a.lang.map(Lang::from);
            store.fragments().filter(|f| lang.is_none_or(|l| f.lang == l)).map(|f| f.id.clone()).collect()
        }
    };
    let split = split_dataset(&ids, ratios, a.seed.unwrap_or(ctx.seed))?;
    write_json_file(&a.out, &split)?;
    let (tr, va, te) = split.sizes();
    let summary = json!({"train": tr, "validation": va, "test": te, "seed": split.seed, "out": a.out});
    emit(ctx.json, &summary, || format!("split {} ids: {tr} train, {va} validation, {te} test", ids.len()))
}
