mod common;

use std::process::Command;

use common::{fixture, forge, forge_json, forge_ok, p, read_lines, seeded_store};
use serde_json::json;

const SUBCOMMANDS: &[&[&str]] = &[
    &["corpus"],
    &["corpus", "import"],
    &["corpus", "export"],
    &["corpus", "split"],
    &["normalize"],
    &["prompts"],
    &["prompts", "build"],
    &["eval"],
    &["backtranslate"],
    &["merge"],
    &["filter"],
    &["generate"],
    &["review"],
    &["review", "list"],
    &["review", "submit"],
    &["review", "stats"],
    &["review", "export"],
    &["review", "audit"],
    &["review", "policy"],
    &["serve"],
];

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = forge(dir.path(), &["nonsense"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonsense"));
    let out = forge(dir.path(), &["eval", "--hyp"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn every_subcommand_has_help() {
    let dir = tempfile::tempdir().unwrap();
    for sub in SUBCOMMANDS {
        let mut args = sub.to_vec();
        args.push("--help");
        let out = forge(dir.path(), &args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{args:?}");
    }
}

#[test]
fn domain_errors_exit_1_with_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = forge(&dir.path().join("missing"), &["--json", "review", "stats"]);
    assert_eq!(out.status.code(), Some(1));
    let body: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(body["error"].as_str().unwrap().contains("not a store"));
}

#[test]
fn eval_identity_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let seg = dir.path().join("seg.jsonl");
    std::fs::write(
        &seg,
        "{\"id\":\"a\",\"text\":\"se cyning cwæð to his þegnum\"}\n{\"id\":\"b\",\"text\":\"þa eode he ut on þæt land\"}\n",
    )
    .unwrap();
    let csv = dir.path().join("seg.csv");
    let report = forge_json(dir.path(), &["eval", "--hyp", p(&seg), "--ref", p(&seg), "--csv", p(&csv)]);
    for m in ["bleu", "chrf", "meteor"] {
        assert!(report["corpus"][m].as_f64().unwrap() > 99.0, "{m}");
    }
    assert_eq!(report["corpus"]["bleu"], 100.0);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 3);

    let other = dir.path().join("other.jsonl");
    std::fs::write(&other, "{\"id\":\"a\",\"text\":\"x\"}\n").unwrap();
    let out = forge(dir.path(), &["eval", "--hyp", p(&other), "--ref", p(&seg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no hypothesis for reference \"b\""));
}

#[test]
fn normalize_drops_low_quality_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("n.jsonl");
    let summary = forge_json(dir.path(), &["normalize", "--in", p(&fixture("raw_fragments.jsonl")), "--out", p(&out)]);
    assert_eq!(summary["kept"], 10);
    let dropped: Vec<&str> = summary["dropped"].as_array().unwrap().iter().map(|d| d["id"].as_str().unwrap()).collect();
    assert_eq!(dropped, ["m10", "m11"]);
    let rows = read_lines(&out);
    assert!(rows.iter().all(|r| r["normalized"] == true));
    assert_eq!(rows[6]["text"], "he wæs swiðe god cyning and wis");
}

#[test]
fn split_and_prompts_hold_out_items() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded_store(dir.path());
    let split_path = dir.path().join("split.json");
    let summary = forge_json(&store, &["corpus", "split", "--seed", "5", "--out", p(&split_path)]);
    assert_eq!((summary["train"].as_u64(), summary["validation"].as_u64(), summary["test"].as_u64()), (Some(8), Some(1), Some(1)));
    let split: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&split_path).unwrap()).unwrap();
    let held: Vec<String> = ["validation", "test"]
        .iter()
        .flat_map(|k| split[k].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()))
        .collect();

    let out = dir.path().join("prompts.jsonl");
    forge_ok(&store, &["prompts", "build", "--out", p(&out), "--split", p(&split_path), "--seed", "1"]);
    let rows = read_lines(&out);
    assert!(!rows.is_empty());
    for r in &rows {
        for id in r["origin_ids"].as_array().unwrap() {
            assert!(!held.contains(&id.as_str().unwrap().to_string()), "{id} was held out");
        }
    }
    let again = dir.path().join("again.jsonl");
    forge_ok(&store, &["prompts", "build", "--out", p(&again), "--split", p(&split_path), "--seed", "1"]);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn filter_command_flags_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let rows = [
        json!({"id": "ok", "en": "the king spoke", "ang": "se cyning spræc to his þegnum"}),
        json!({"id": "loop", "en": "x", "ang": "and thæt ic fræolice fræolice fræolice fræolice fræolice"}),
        json!({"id": "copy", "en": "the roman people first called it by that name", "ang": "the roman people first called it by that name"}),
    ];
    std::fs::write(&input, rows.iter().map(|r| format!("{r}\n")).collect::<String>()).unwrap();
    let out = dir.path().join("out.jsonl");
    let summary = forge_json(dir.path(), &["filter", "--in", p(&input), "--out", p(&out)]);
    assert_eq!(summary["fatal"], 2);
    let flagged = read_lines(&out);
    assert_eq!(flagged[0]["flags"], json!([]));
    assert_eq!(flagged[1]["flags"][0]["kind"], "looped_generation");
    assert_eq!(flagged[2]["flags"][0]["kind"], "non_translated");
}

#[test]
fn backtranslate_import_and_merge() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded_store(dir.path());
    let out = dir.path().join("bt.jsonl");
    let report = forge_json(&store, &[
        "backtranslate",
        "--source",
        p(&dir.path().join("normalized.jsonl")),
        "--endpoint",
        p(&fixture("backtranslate_endpoint.toml")),
        "--out",
        p(&out),
        "--import",
    ]);
    assert_eq!((report["sources"].as_u64(), report["emitted"].as_u64()), (Some(10), Some(9)));
    assert_eq!(report["excluded"][0]["source_id"], "m04");
    let listing = forge_json(&store, &["review", "list", "--state", "all", "--per-page", "50"]);
    assert_eq!(listing["total"], 9);

    let merged = dir.path().join("merged.jsonl");
    let report = forge_json(&store, &["merge", "--synthetic", p(&out), "--seed", "3", "--out", p(&merged)]);
    assert_eq!((report["human_in"].as_u64(), report["merged"].as_u64()), (Some(10), Some(19)));
    assert_eq!(read_lines(&merged).len(), 19);
}

#[test]
fn train_split_sources_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded_store(dir.path());
    let split = dir.path().join("split.json");
    forge_ok(&store, &["corpus", "split", "--of", "fragments", "--lang", "ang", "--out", p(&split)]);
    let out = forge(&store, &[
        "backtranslate",
        "--source",
        p(&dir.path().join("normalized.jsonl")),
        "--endpoint",
        p(&fixture("backtranslate_endpoint.toml")),
        "--out",
        p(&dir.path().join("bt.jsonl")),
        "--split",
        p(&split),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train"));
}

#[test]
fn settings_file_supplies_store_and_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded_store(dir.path());
    let settings = dir.path().join("forge.toml");
    std::fs::write(
        &settings,
        format!("store = \"store\"\nseed = 4\n[endpoints]\npipeline = {:?}\n", p(&fixture("pipeline.toml"))),
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_forge"))
        .args(["--settings", p(&settings), "--json", "generate", "--count", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["report"]["attempted"], 3);
    assert!(store.join("pairs.jsonl").exists());
}

#[test]
fn review_cli_round_trip_and_policy() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded_store(dir.path());
    forge_ok(&store, &["generate", "--count", "6", "--config", p(&fixture("pipeline.toml"))]);
    let listing = forge_json(&store, &["review", "list"]);
    let id = listing["items"][0]["record_id"].as_str().unwrap().to_string();
    assert_eq!(listing["items"][0]["style_examples"].as_array().unwrap().len(), 5);

    let policy = forge_json(&store, &["review", "policy", "--threshold", "9"]);
    assert_eq!(policy["threshold"], 9.0);
    let decision = forge_json(&store, &["review", "submit", "--record", &id, "--reviewer", "ann", "--scores", "9,8,10,7"]);
    assert_eq!(decision["decision"], "rejected");

    let out = forge(&store, &["review", "submit", "--record", &id, "--reviewer", "ann", "--scores", "9,9,9,9"]);
    assert_eq!(out.status.code(), Some(1));
    let out = forge(&store, &["review", "submit", "--record", &id, "--reviewer", "bob", "--scores", "9,9,9.3,9"]);
    assert_eq!(out.status.code(), Some(1));
    let out = forge(&store, &["review", "submit", "--record", &id, "--reviewer", "bob", "--scores", "9,9,9"]);
    assert_eq!(out.status.code(), Some(1));

    forge_ok(&store, &["review", "audit"]);
    let export = dir.path().join("ext.jsonl");
    let summary = forge_json(&store, &["review", "export", "--out", p(&export)]);
    assert_eq!(summary["exported"], 0);
    assert!(summary["warning"].is_string());
}

#[test]
fn corpus_export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded_store(dir.path());
    let out = dir.path().join("export");
    forge_ok(&store, &["corpus", "export", "--dir", p(&out)]);
    let copy = dir.path().join("copy");
    let summary = forge_json(&copy, &["corpus", "import", "--dir", p(&out)]);
    assert_eq!(summary["dir"]["added"], 45);
    assert_eq!(std::fs::read(out.join("pairs.jsonl")).unwrap(), std::fs::read(copy.join("pairs.jsonl")).unwrap());
}
