#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// `forge --store <store> args...`, run to completion.
pub fn forge(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forge"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn forge")
}

pub fn forge_ok(store: &Path, args: &[&str]) -> String {
    let out = forge(store, args);
    assert!(
        out.status.success(),
        "forge {args:?} exited {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn forge_json(store: &Path, args: &[&str]) -> serde_json::Value {
    let mut full = vec!["--json"];
    full.extend_from_slice(args);
    serde_json::from_str(&forge_ok(store, &full)).expect("stdout is JSON")
}

/// A store with the normalized raw fragments plus the seed corpus
/// (10 human pairs and a small dictionary).
pub fn seeded_store(dir: &Path) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let store = dir.join("store");
    let norm = dir.join("normalized.jsonl");
    forge_ok(&store, &["normalize", "--in", p(&fixture("raw_fragments.jsonl")), "--out", p(&norm), "--import"]);
    forge_ok(&store, &["corpus", "import", "--dir", p(&fixture("seed"))]);
    store
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn read_lines(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}
