use std::process::ExitCode;

use serde::Serialize;

/// Prints `value` as pretty JSON when `json` is set, otherwise the human
/// summary.
pub fn emit<T: Serialize>(json: bool, value: &T, human: impl FnOnce() -> String) -> anyhow::Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        println!("{}", human());
    }
    Ok(())
}

pub fn fail(json: bool, err: &anyhow::Error) -> ExitCode {
    if json {
        println!("{}", serde_json::json!({ "error": format!("{err:#}") }));
    }
    eprintln!("error: {err:#}");
    ExitCode::from(1)
}

/// Writes `value` as pretty JSON plus a trailing newline.
pub fn write_json_file<T: Serialize>(path: &std::path::Path, value: &T) -> anyhow::Result<()> {
    forge_core::jsonl::write_json(path, value)?;
    Ok(())
}
