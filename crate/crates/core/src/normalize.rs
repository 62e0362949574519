//! Orthographic normalization for Old and Modern English text, and the
//! low-quality sample check run after it.
//!
//! The character map lives in `data/ang_charmap.tsv` so that it can be
//! revised without touching code.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::TextFragment;

const CHARMAP: &str = include_str!("../data/ang_charmap.tsv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationConfig {
    pub strip_length_diacritics: bool,
    pub map_wynn_to_w: bool,
    pub map_yogh_to_g: bool,
    pub expand_tironian_note: bool,
    pub lowercase: bool,
    pub min_tokens: usize,
    pub max_nonletter_ratio: f64,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            strip_length_diacritics: true,
            map_wynn_to_w: true,
            map_yogh_to_g: true,
            expand_tironian_note: true,
            lowercase: true,
            min_tokens: 3,
            max_nonletter_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("min_tokens must be at least 1")]
    MinTokens,
    #[error("max_nonletter_ratio {0} outside [0, 1]")]
    NonletterRatio(f64),
    #[error("config parse error: {0}")]
    Parse(String),
}

impl NormalizationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.min_tokens < 1 {
            return Err(ConfigError::MinTokens);
        }
        if !(0.0..=1.0).contains(&self.max_nonletter_ratio) {
            return Err(ConfigError::NonletterRatio(self.max_nonletter_ratio));
        }
        Ok(())
    }

    /// Parses a flat TOML key-value document; missing keys keep defaults.
    pub fn from_toml(src: &str) -> Result<Self, ConfigError> {
        let cfg: NormalizationConfig = toml::from_str(src).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Group {
    Wynn,
    Yogh,
    Tironian,
    Mark,
    Quote,
}

struct CharMap {
    entries: HashMap<char, (Group, &'static str)>,
}

fn charmap() -> &'static CharMap {
    static MAP: OnceLock<CharMap> = OnceLock::new();
    MAP.get_or_init(|| {
        let mut entries = HashMap::new();
        for line in CHARMAP.lines() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let mut cols = line.splitn(3, '\t');
            let group = match cols.next() {
                Some("wynn") => Group::Wynn,
                Some("yogh") => Group::Yogh,
                Some("tironian") => Group::Tironian,
                Some("mark") => Group::Mark,
                Some("quote") => Group::Quote,
                other => panic!("charmap: unknown group {other:?}"),
            };
            let src = cols.next().expect("charmap: missing source column");
            let ch = match src.strip_prefix("U+") {
                Some(hex) => u32::from_str_radix(hex, 16).ok().and_then(char::from_u32),
                None => src.chars().next(),
            }
            .expect("charmap: bad source character");
            entries.insert(ch, (group, cols.next().unwrap_or("")));
        }
        CharMap { entries }
    })
}

impl NormalizationConfig {
    fn group_enabled(&self, group: Group) -> bool {
        match group {
            Group::Wynn => self.map_wynn_to_w,
            Group::Yogh => self.map_yogh_to_g,
            Group::Tironian => self.expand_tironian_note,
            Group::Mark => self.strip_length_diacritics,
            Group::Quote => true,
        }
    }
}

/// Normalizes `raw`: canonical decomposition, character map, optional
/// lowercasing, canonical recomposition and whitespace collapse. Idempotent.
pub fn normalize_text(raw: &str, cfg: &NormalizationConfig) -> String {
    let map = charmap();
    let mut mapped = String::with_capacity(raw.len());
    for c in raw.nfd() {
        match map.entries.get(&c) {
            Some((group, replacement)) if cfg.group_enabled(*group) => mapped.push_str(replacement),
            _ => mapped.push(c),
        }
    }
    let cased = if cfg.lowercase { mapped.to_lowercase() } else { mapped };
    let composed: String = cased.nfc().collect();
    let mut out = String::with_capacity(composed.len());
    for word in composed.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum QualityFailure {
    TooShort { tokens: usize, min_tokens: usize },
    NonletterRatio { ratio: f64, max: f64 },
    ControlCharacters,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum QualityVerdict {
    Pass,
    Fail(QualityFailure),
}

impl QualityVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, QualityVerdict::Pass)
    }
}

/// Share of non-whitespace characters that are not letters.
pub fn nonletter_ratio(text: &str) -> f64 {
    let (mut total, mut nonletters) = (0usize, 0usize);
    for c in text.chars().filter(|c| !c.is_whitespace()) {
        total += 1;
        if !c.is_alphabetic() {
            nonletters += 1;
        }
    }
    if total == 0 { 0.0 } else { nonletters as f64 / total as f64 }
}

pub fn quality_check(frag: &TextFragment, cfg: &NormalizationConfig) -> QualityVerdict {
    let text = frag.text.as_str();
    let tokens = text.split_whitespace().count();
    if tokens < cfg.min_tokens {
        return QualityVerdict::Fail(QualityFailure::TooShort { tokens, min_tokens: cfg.min_tokens });
    }
    let ratio = nonletter_ratio(text);
    if ratio > cfg.max_nonletter_ratio {
        return QualityVerdict::Fail(QualityFailure::NonletterRatio { ratio, max: cfg.max_nonletter_ratio });
    }
    if text.chars().any(char::is_control) {
        return QualityVerdict::Fail(QualityFailure::ControlCharacters);
    }
    QualityVerdict::Pass
}
