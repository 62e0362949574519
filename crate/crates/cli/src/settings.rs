use std::path::{Path, PathBuf};

use anyhow::Context as _;
use forge_core::ExecMode;
use serde::Deserialize;

use crate::args::GlobalArgs;

const DEFAULT_STORE: &str = "forge-store";
const DEFAULT_LOG_LEVEL: &str = "warn";

/// Optional TOML file with defaults. Relative paths resolve against the
/// file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SettingsFile {
    store: Option<PathBuf>,
    log_level: Option<String>,
    seed: Option<u64>,
    sequential: Option<bool>,
    endpoints: Endpoints,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Endpoints {
    backtranslate: Option<PathBuf>,
    pipeline: Option<PathBuf>,
}

/// Global options after merging flags over the settings file over defaults.
#[derive(Debug, Clone)]
pub struct Context {
    pub json: bool,
    pub log_level: String,
    pub store: PathBuf,
    pub seed: u64,
    pub exec: ExecMode,
    pub backtranslate_endpoint: Option<PathBuf>,
    pub pipeline_config: Option<PathBuf>,
}

impl Context {
    pub fn resolve(args: &GlobalArgs) -> anyhow::Result<Self> {
        let (file, base) = match &args.settings {
            Some(path) => {
                let src = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let file: SettingsFile = toml::from_str(&src).with_context(|| format!("parsing {}", path.display()))?;
                (file, path.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (SettingsFile::default(), PathBuf::new()),
        };
        let rel = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        let sequential = args.sequential || file.sequential.unwrap_or(false);
        Ok(Context {
            json: args.json,
            log_level: args.log_level.clone().or(file.log_level).unwrap_or_else(|| DEFAULT_LOG_LEVEL.into()),
            store: args.store.clone().or(file.store.map(rel)).unwrap_or_else(|| DEFAULT_STORE.into()),
            seed: file.seed.unwrap_or(0),
            exec: if sequential { ExecMode::Sequential } else { ExecMode::Parallel },
            backtranslate_endpoint: file.endpoints.backtranslate.map(rel),
            pipeline_config: file.endpoints.pipeline.map(rel),
        })
    }
}
