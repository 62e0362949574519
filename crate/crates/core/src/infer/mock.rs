//! Deterministic backend driven by a JSON fixture:
//!
//! ```json
//! {
//!   "by_hash": { "<sha256 hex of prompt>": "completion" },
//!   "by_substring": [ { "contains": "[EN]", "completion": "[ANG]...[/ANG]" } ],
//!   "fallback": { "kind": "echo" }
//! }
//! ```
//!
//! Rules are tried in that order; the first substring rule that matches
//! wins. Fallbacks: `echo` (last prompt line), `fixed` (`text`), `pick`
//! (one of `choices`, chosen by prompt hash) or `fail`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, CompletionRequest, InferError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstringRule {
    pub contains: String,
    pub completion: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fallback {
    #[default]
    Echo,
    Fixed {
        text: String,
    },
    Pick {
        choices: Vec<String>,
    },
    Fail,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockFixture {
    #[serde(default)]
    pub by_hash: BTreeMap<String, String>,
    #[serde(default)]
    pub by_substring: Vec<SubstringRule>,
    #[serde(default)]
    pub fallback: Fallback,
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    fixture: MockFixture,
}

impl MockBackend {
    pub fn new(fixture: MockFixture) -> Self {
        MockBackend { fixture }
    }

    pub fn echo() -> Self {
        MockBackend::default()
    }

    pub fn from_file(path: &Path) -> Result<Self, InferError> {
        let raw = std::fs::read(path).map_err(|e| InferError::Config(format!("{}: {e}", path.display())))?;
        let fixture =
            serde_json::from_slice(&raw).map_err(|e| InferError::Config(format!("{}: {e}", path.display())))?;
        Ok(MockBackend { fixture })
    }

    pub fn respond(&self, prompt: &str) -> Result<String, InferError> {
        let hash = prompt_hash(prompt);
        if let Some(text) = self.fixture.by_hash.get(&hash) {
            return Ok(text.clone());
        }
        if let Some(rule) = self.fixture.by_substring.iter().find(|r| prompt.contains(&r.contains)) {
            return Ok(rule.completion.clone());
        }
        match &self.fixture.fallback {
            Fallback::Echo => Ok(prompt.lines().last().unwrap_or("").to_string()),
            Fallback::Fixed { text } => Ok(text.clone()),
            Fallback::Pick { choices } if !choices.is_empty() => {
                let bytes: [u8; 8] = hex::decode(&hash[..16]).expect("hex").try_into().expect("8 bytes");
                Ok(choices[(u64::from_be_bytes(bytes) % choices.len() as u64) as usize].clone())
            }
            Fallback::Pick { .. } | Fallback::Fail => Err(InferError::MalformedResponse(format!(
                "mock fixture has no completion for prompt {}",
                &hash[..12]
            ))),
        }
    }
}

impl Backend for MockBackend {
    fn send(&self, req: &CompletionRequest, _idempotency_key: Option<&str>) -> Result<String, InferError> {
        self.respond(&req.prompt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_order() {
        let fixture = MockFixture {
            by_hash: BTreeMap::from([(prompt_hash("exact"), "from hash".to_string())]),
            by_substring: vec![SubstringRule { contains: "ex".into(), completion: "from rule".into() }],
            fallback: Fallback::Fixed { text: "fixed".into() },
        };
        let m = MockBackend::new(fixture);
        assert_eq!(m.respond("exact").unwrap(), "from hash");
        assert_eq!(m.respond("example").unwrap(), "from rule");
        assert_eq!(m.respond("other").unwrap(), "fixed");
    }

    #[test]
    fn echo_and_pick_are_deterministic() {
        assert_eq!(MockBackend::echo().respond("a\nb").unwrap(), "b");
        let m = MockBackend::new(MockFixture {
            fallback: Fallback::Pick { choices: vec!["x".into(), "y".into(), "z".into()] },
            ..Default::default()
        });
        let picks: Vec<String> = (0..20).map(|i| m.respond(&format!("p{i}")).unwrap()).collect();
        let again: Vec<String> = (0..20).map(|i| m.respond(&format!("p{i}")).unwrap()).collect();
        assert_eq!(picks, again);
        assert!(picks.iter().any(|p| p != &picks[0]));
    }

    #[test]
    fn fixture_parses() {
        let src = r#"{"by_substring":[{"contains":"a","completion":"b"}],"fallback":{"kind":"fail"}}"#;
        let f: MockFixture = serde_json::from_str(src).unwrap();
        assert!(MockBackend::new(f).respond("zzz").is_err());
    }
}
