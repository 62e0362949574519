//! Canonical data model for fragments, parallel pairs and dictionary
//! entries, plus the on-disk store and deterministic dataset splitting.

mod split;
mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::filters::FilterFlag;

pub use split::{DatasetSplit, SplitError, SplitRatios, split_dataset};
pub use store::{ImportSummary, PairRecord, Store, StoreConfig, StoreError, StoreIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lang {
    #[serde(rename = "ANG")]
    Ang,
    #[serde(rename = "EN")]
    En,
}

impl Lang {
    pub fn code(self) -> &'static str {
        match self {
            Lang::Ang => "ANG",
            Lang::En => "EN",
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Lang {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ANG" => Ok(Lang::Ang),
            "EN" => Ok(Lang::En),
            other => Err(CorpusError::InvalidLanguage(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("invalid language code {0:?} (expected ANG or EN)")]
    InvalidLanguage(String),
    #[error("fragment {0:?} has empty text")]
    EmptyText(String),
    #[error("empty identifier")]
    EmptyId,
    #[error("pair {pair}: {side} side has lang {found}")]
    PairLanguage { pair: String, side: &'static str, found: Lang },
    #[error("pair {0:?} carries a fatal filter flag and cannot be accepted")]
    AcceptedWithFatalFlag(String),
}

/// One monolingual text unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TextFragment {
    pub id: String,
    pub lang: Lang,
    pub text: String,
    pub source: String,
    pub genre: Option<String>,
    pub normalized: bool,
}

impl TextFragment {
    pub fn new(
        id: impl Into<String>,
        lang: Lang,
        text: impl Into<String>,
        source: impl Into<String>,
    ) -> Self {
        TextFragment {
            id: id.into(),
            lang,
            text: text.into(),
            source: source.into(),
            genre: None,
            normalized: false,
        }
    }

    pub fn with_genre(mut self, genre: impl Into<String>) -> Self {
        self.genre = Some(genre.into());
        self
    }

    pub fn normalized(mut self, normalized: bool) -> Self {
        self.normalized = normalized;
        self
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.id.trim().is_empty() {
            return Err(CorpusError::EmptyId);
        }
        if self.text.trim().is_empty() {
            return Err(CorpusError::EmptyText(self.id.clone()));
        }
        Ok(())
    }
}

/// Wire shape of a fragment record; the language code is checked on
/// conversion so a bad code surfaces as [`CorpusError::InvalidLanguage`]
/// rather than a generic parse failure.
#[derive(Deserialize)]
struct RawFragment {
    id: String,
    lang: String,
    text: String,
    source: String,
    #[serde(default)]
    genre: Option<String>,
    #[serde(default)]
    normalized: bool,
}

impl<'de> Deserialize<'de> for TextFragment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawFragment::deserialize(d)?;
        let lang = raw.lang.parse().map_err(serde::de::Error::custom)?;
        Ok(TextFragment {
            id: raw.id,
            lang,
            text: raw.text,
            source: raw.source,
            genre: raw.genre,
            normalized: raw.normalized,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Human,
    Backtranslation,
    DualAgent,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Human => "human",
            Provenance::Backtranslation => "backtranslation",
            Provenance::DualAgent => "dual_agent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewState {
    #[default]
    Unreviewed,
    Accepted,
    Rejected,
}

impl FromStr for ReviewState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unreviewed" => Ok(ReviewState::Unreviewed),
            "accepted" => Ok(ReviewState::Accepted),
            "rejected" => Ok(ReviewState::Rejected),
            other => Err(format!("unknown review state {other:?}")),
        }
    }
}

/// An aligned (EN, ANG) sentence pair with its fragments resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelPair {
    pub id: String,
    pub en: TextFragment,
    pub ang: TextFragment,
    pub provenance: Provenance,
    #[serde(default)]
    pub flags: Vec<FilterFlag>,
    #[serde(default)]
    pub review_state: ReviewState,
}

impl ParallelPair {
    pub fn new(
        id: impl Into<String>,
        en: TextFragment,
        ang: TextFragment,
        provenance: Provenance,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        if en.lang != Lang::En {
            return Err(CorpusError::PairLanguage { pair: id, side: "en", found: en.lang });
        }
        if ang.lang != Lang::Ang {
            return Err(CorpusError::PairLanguage { pair: id, side: "ang", found: ang.lang });
        }
        Ok(ParallelPair {
            id,
            en,
            ang,
            provenance,
            flags: Vec::new(),
            review_state: ReviewState::Unreviewed,
        })
    }

    pub fn has_fatal_flag(&self) -> bool {
        self.flags.iter().any(|f| f.kind.is_fatal())
    }

    pub fn set_review_state(&mut self, state: ReviewState) -> Result<(), CorpusError> {
        if state == ReviewState::Accepted && self.has_fatal_flag() {
            return Err(CorpusError::AcceptedWithFatalFlag(self.id.clone()));
        }
        self.review_state = state;
        Ok(())
    }
}

/// A headword with its Modern English definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictEntry {
    pub id: String,
    pub headword: String,
    pub definition: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{FilterFlag, FlagKind};

    #[test]
    fn lang_codes_round_trip_and_reject_others() {
        assert_eq!("ANG".parse::<Lang>().unwrap(), Lang::Ang);
        assert_eq!("EN".parse::<Lang>().unwrap(), Lang::En);
        assert_eq!("ENG".parse::<Lang>(), Err(CorpusError::InvalidLanguage("ENG".into())));
        assert!("ang".parse::<Lang>().is_err());
    }

    #[test]
    fn fragment_record_schema() {
        let frag = TextFragment::new("f1", Lang::Ang, "se oðer him andwirde", "doec").with_genre("gospel");
        let json = serde_json::to_string(&frag).unwrap();
        assert_eq!(
            json,
            r#"{"id":"f1","lang":"ANG","text":"se oðer him andwirde","source":"doec","genre":"gospel","normalized":false}"#
        );
        let back: TextFragment = serde_json::from_str(&json).unwrap();
        assert_eq!(back, frag);
        let bad = r#"{"id":"f1","lang":"OE","text":"x","source":"s"}"#;
        let err = serde_json::from_str::<TextFragment>(bad).unwrap_err();
        assert!(err.to_string().contains("invalid language code"));
    }

    #[test]
    fn empty_text_is_invalid() {
        let frag = TextFragment::new("f", Lang::En, "   ", "s");
        assert_eq!(frag.validate(), Err(CorpusError::EmptyText("f".into())));
    }

    #[test]
    fn pair_sides_must_match_languages() {
        let en = TextFragment::new("e", Lang::En, "he said", "s");
        let ang = TextFragment::new("a", Lang::Ang, "he cwæð", "s");
        assert!(ParallelPair::new("p", en.clone(), ang.clone(), Provenance::Human).is_ok());
        assert!(matches!(
            ParallelPair::new("p", ang, en, Provenance::Human),
            Err(CorpusError::PairLanguage { side: "en", .. })
        ));
    }

    #[test]
    fn accepted_state_forbids_fatal_flags() {
        let en = TextFragment::new("e", Lang::En, "he said", "s");
        let ang = TextFragment::new("a", Lang::Ang, "he cwæð", "s");
        let mut pair = ParallelPair::new("p", en, ang, Provenance::DualAgent).unwrap();
        pair.flags.push(FilterFlag::new(FlagKind::VocabularyHallucination, Vec::new()));
        pair.set_review_state(ReviewState::Accepted).unwrap();
        pair.flags.push(FilterFlag::new(FlagKind::LoopedGeneration, Vec::new()));
        assert!(pair.set_review_state(ReviewState::Accepted).is_err());
        pair.set_review_state(ReviewState::Rejected).unwrap();
    }
}
