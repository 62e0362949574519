//! Directory-backed store: one JSON-lines file per record kind plus an
//! `index.json`. Writers hold an advisory `.lock` file for their lifetime;
//! readers take an unlocked snapshot.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{CorpusError, DictEntry, Lang, ParallelPair, Provenance, ReviewState, TextFragment};
use crate::filters::FilterFlag;
use crate::jsonl::{self, JsonlError};
use crate::review::{ReviewPolicy, ReviewRecord};

const FRAGMENTS: &str = "fragments.jsonl";
const PAIRS: &str = "pairs.jsonl";
const DICTIONARY: &str = "dictionary.jsonl";
const REVIEWS: &str = "reviews.jsonl";
const INDEX: &str = "index.json";
const LOCK: &str = ".lock";
const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("unknown fragment {0:?}")]
    UnknownFragment(String),
    #[error("unknown pair {0:?}")]
    UnknownPair(String),
    #[error("store at {0} is locked by another writer (remove {0}/.lock if stale)")]
    Locked(PathBuf),
    #[error("store was opened read-only")]
    ReadOnly,
    #[error("a store already exists at {0}")]
    AlreadyExists(PathBuf),
    #[error("{0} is not a store (missing index.json)")]
    NotAStore(PathBuf),
    #[error("unsupported store schema version {0}")]
    SchemaVersion(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoreConfig {
    /// Identical (lang, text, source) fragments collapse onto the first id.
    pub dedup: bool,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig { dedup: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreIndex {
    pub schema_version: u32,
    pub config: StoreConfig,
    #[serde(default)]
    pub review_policy: ReviewPolicy,
    #[serde(default)]
    pub counts: IndexMap<String, usize>,
}

/// Stored form of a pair: fragments referenced by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub en_id: String,
    pub ang_id: String,
    pub provenance: Provenance,
    #[serde(default)]
    pub flags: Vec<FilterFlag>,
    #[serde(default)]
    pub review_state: ReviewState,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub style_example_ids: Vec<String>,
}

impl PairRecord {
    pub fn has_fatal_flag(&self) -> bool {
        self.flags.iter().any(|f| f.kind.is_fatal())
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ImportSummary {
    pub read: usize,
    pub added: usize,
    pub deduplicated: usize,
}

#[derive(Debug)]
struct LockGuard(PathBuf);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Access {
    Memory,
    ReadOnly,
    Writer,
}

#[derive(Debug)]
pub struct Store {
    root: Option<PathBuf>,
    access: Access,
    index: StoreIndex,
    fragments: IndexMap<String, TextFragment>,
    dedup_keys: HashMap<(Lang, String, String), String>,
    pairs: IndexMap<String, PairRecord>,
    dictionary: IndexMap<String, DictEntry>,
    reviews: Vec<ReviewRecord>,
    _lock: Option<LockGuard>,
}

impl PartialEq for Store {
    fn eq(&self, other: &Self) -> bool {
        self.fragments == other.fragments
            && self.pairs == other.pairs
            && self.dictionary == other.dictionary
            && self.reviews == other.reviews
    }
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

impl Store {
    pub fn in_memory(config: StoreConfig) -> Self {
        Store {
            root: None,
            access: Access::Memory,
            index: StoreIndex {
                schema_version: SCHEMA_VERSION,
                config,
                review_policy: ReviewPolicy::default(),
                counts: IndexMap::new(),
            },
            fragments: IndexMap::new(),
            dedup_keys: HashMap::new(),
            pairs: IndexMap::new(),
            dictionary: IndexMap::new(),
            reviews: Vec::new(),
            _lock: None,
        }
    }

    /// Creates an empty store at `root` and returns it opened for writing.
    pub fn create(root: impl AsRef<Path>, config: StoreConfig) -> Result<Self, StoreError> {
        let root = root.as_ref();
        if root.join(INDEX).exists() {
            return Err(StoreError::AlreadyExists(root.to_path_buf()));
        }
        fs::create_dir_all(root).map_err(io_at(root))?;
        let lock = acquire_lock(root)?;
        let mut store = Store::in_memory(config);
        store.root = Some(root.to_path_buf());
        store.access = Access::Writer;
        store._lock = Some(lock);
        store.save()?;
        Ok(store)
    }

    /// Opens a read-only snapshot. Does not take the lock.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::load(root.as_ref(), Access::ReadOnly, None)
    }

    pub fn open_writer(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref();
        if !root.join(INDEX).exists() {
            return Err(StoreError::NotAStore(root.to_path_buf()));
        }
        let lock = acquire_lock(root)?;
        Self::load(root, Access::Writer, Some(lock))
    }

    pub fn open_or_create(root: impl AsRef<Path>, config: StoreConfig) -> Result<Self, StoreError> {
        let root = root.as_ref();
        if root.join(INDEX).exists() {
            Self::open_writer(root)
        } else {
            Self::create(root, config)
        }
    }

    fn load(root: &Path, access: Access, lock: Option<LockGuard>) -> Result<Self, StoreError> {
        let index_path = root.join(INDEX);
        if !index_path.exists() {
            return Err(StoreError::NotAStore(root.to_path_buf()));
        }
        let raw = fs::read(&index_path).map_err(io_at(&index_path))?;
        let index: StoreIndex = serde_json::from_slice(&raw).map_err(|e| StoreError::Io {
            path: index_path.clone(),
            source: e.into(),
        })?;
        if index.schema_version != SCHEMA_VERSION {
            return Err(StoreError::SchemaVersion(index.schema_version));
        }
        let mut store = Store::in_memory(index.config);
        store.index = index;
        for frag in jsonl::read_optional::<TextFragment>(&root.join(FRAGMENTS))? {
            store.insert_fragment_unchecked(frag)?;
        }
        for entry in jsonl::read_optional::<DictEntry>(&root.join(DICTIONARY))? {
            store.add_dict_entry(entry)?;
        }
        for pair in jsonl::read_optional::<PairRecord>(&root.join(PAIRS))? {
            store.add_pair(pair)?;
        }
        store.reviews = jsonl::read_optional(&root.join(REVIEWS))?;
        store.root = Some(root.to_path_buf());
        store.access = access;
        store._lock = lock;
        Ok(store)
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn config(&self) -> StoreConfig {
        self.index.config
    }

    pub fn review_policy(&self) -> &ReviewPolicy {
        &self.index.review_policy
    }

    pub fn set_review_policy(&mut self, policy: ReviewPolicy) {
        self.index.review_policy = policy;
    }

    /// Rewrites every file of the store. No-op for in-memory stores.
    pub fn save(&mut self) -> Result<(), StoreError> {
        let root = match (self.access, &self.root) {
            (Access::Memory, _) => return Ok(()),
            (Access::ReadOnly, _) => return Err(StoreError::ReadOnly),
            (Access::Writer, Some(root)) => root.clone(),
            (Access::Writer, None) => return Ok(()),
        };
        jsonl::write(&root.join(FRAGMENTS), self.fragments.values())?;
        jsonl::write(&root.join(PAIRS), self.pairs.values())?;
        jsonl::write(&root.join(DICTIONARY), self.dictionary.values())?;
        jsonl::write(&root.join(REVIEWS), &self.reviews)?;
        self.index.counts = IndexMap::from([
            ("fragments".to_string(), self.fragments.len()),
            ("pairs".to_string(), self.pairs.len()),
            ("dictionary".to_string(), self.dictionary.len()),
            ("reviews".to_string(), self.reviews.len()),
        ]);
        jsonl::write_json(&root.join(INDEX), &self.index)?;
        Ok(())
    }

    // fragments

    /// Inserts a fragment. With dedup on, an exact (lang, text, source)
    /// duplicate returns the id already stored instead of failing.
    pub fn add_fragment(&mut self, frag: TextFragment) -> Result<String, StoreError> {
        frag.validate()?;
        if self.index.config.dedup {
            let key = (frag.lang, frag.text.clone(), frag.source.clone());
            if let Some(existing) = self.dedup_keys.get(&key) {
                return Ok(existing.clone());
            }
        }
        self.insert_fragment_unchecked(frag)
    }

    fn insert_fragment_unchecked(&mut self, frag: TextFragment) -> Result<String, StoreError> {
        frag.validate()?;
        if self.fragments.contains_key(&frag.id) {
            return Err(StoreError::DuplicateId(frag.id));
        }
        let id = frag.id.clone();
        self.dedup_keys
            .entry((frag.lang, frag.text.clone(), frag.source.clone()))
            .or_insert_with(|| id.clone());
        self.fragments.insert(id.clone(), frag);
        Ok(id)
    }

    pub fn fragment(&self, id: &str) -> Option<&TextFragment> {
        self.fragments.get(id)
    }

    pub fn fragments(&self) -> impl Iterator<Item = &TextFragment> {
        self.fragments.values()
    }

    pub fn fragment_count(&self) -> usize {
        self.fragments.len()
    }

    // pairs

    pub fn add_pair(&mut self, record: PairRecord) -> Result<String, StoreError> {
        if let Some(existing) = self.pairs.get(&record.id) {
            if self.index.config.dedup && *existing == record {
                return Ok(record.id);
            }
            return Err(StoreError::DuplicateId(record.id));
        }
        self.check_side(&record.id, &record.en_id, Lang::En, "en")?;
        self.check_side(&record.id, &record.ang_id, Lang::Ang, "ang")?;
        if record.review_state == ReviewState::Accepted && record.has_fatal_flag() {
            return Err(CorpusError::AcceptedWithFatalFlag(record.id).into());
        }
        let id = record.id.clone();
        self.pairs.insert(id.clone(), record);
        Ok(id)
    }

    fn check_side(&self, pair: &str, id: &str, lang: Lang, side: &'static str) -> Result<(), StoreError> {
        let frag = self.fragments.get(id).ok_or_else(|| StoreError::UnknownFragment(id.to_string()))?;
        if frag.lang != lang {
            return Err(CorpusError::PairLanguage { pair: pair.to_string(), side, found: frag.lang }.into());
        }
        Ok(())
    }

    /// Stores both fragments of `pair` (subject to dedup) and its record.
    pub fn insert_pair(&mut self, pair: &ParallelPair) -> Result<String, StoreError> {
        self.insert_pair_with_styles(pair, Vec::new())
    }

    pub fn insert_pair_with_styles(
        &mut self,
        pair: &ParallelPair,
        style_example_ids: Vec<String>,
    ) -> Result<String, StoreError> {
        if self.pairs.contains_key(&pair.id) {
            return Err(StoreError::DuplicateId(pair.id.clone()));
        }
        let en_id = self.add_fragment(pair.en.clone())?;
        let ang_id = self.add_fragment(pair.ang.clone())?;
        self.add_pair(PairRecord {
            id: pair.id.clone(),
            en_id,
            ang_id,
            provenance: pair.provenance,
            flags: pair.flags.clone(),
            review_state: pair.review_state,
            style_example_ids,
        })
    }

    pub fn pair(&self, id: &str) -> Option<&PairRecord> {
        self.pairs.get(id)
    }

    pub fn pairs(&self) -> impl Iterator<Item = &PairRecord> {
        self.pairs.values()
    }

    pub fn resolve_pair(&self, id: &str) -> Result<ParallelPair, StoreError> {
        let rec = self.pairs.get(id).ok_or_else(|| StoreError::UnknownPair(id.to_string()))?;
        self.resolve(rec)
    }

    pub fn resolve(&self, rec: &PairRecord) -> Result<ParallelPair, StoreError> {
        let get = |id: &str| {
            self.fragments.get(id).cloned().ok_or_else(|| StoreError::UnknownFragment(id.to_string()))
        };
        let mut pair = ParallelPair::new(rec.id.clone(), get(&rec.en_id)?, get(&rec.ang_id)?, rec.provenance)?;
        pair.flags = rec.flags.clone();
        pair.review_state = rec.review_state;
        Ok(pair)
    }

    pub fn set_review_state(&mut self, id: &str, state: ReviewState) -> Result<(), StoreError> {
        let rec = self.pairs.get_mut(id).ok_or_else(|| StoreError::UnknownPair(id.to_string()))?;
        if state == ReviewState::Accepted && rec.has_fatal_flag() {
            return Err(CorpusError::AcceptedWithFatalFlag(id.to_string()).into());
        }
        rec.review_state = state;
        Ok(())
    }

    pub fn set_pair_flags(&mut self, id: &str, flags: Vec<FilterFlag>) -> Result<(), StoreError> {
        let rec = self.pairs.get_mut(id).ok_or_else(|| StoreError::UnknownPair(id.to_string()))?;
        rec.flags = flags;
        Ok(())
    }

    /// Ids of fragments referenced by any pair.
    pub fn paired_fragment_ids(&self) -> std::collections::HashSet<&str> {
        self.pairs.values().flat_map(|p| [p.en_id.as_str(), p.ang_id.as_str()]).collect()
    }

    /// Authentic ANG fragments: not a side of any machine-produced pair.
    pub fn reference_fragments(&self) -> Vec<&TextFragment> {
        let synthetic: std::collections::HashSet<&str> = self
            .pairs
            .values()
            .filter(|p| p.provenance != Provenance::Human)
            .flat_map(|p| [p.en_id.as_str(), p.ang_id.as_str()])
            .collect();
        self.fragments
            .values()
            .filter(|f| f.lang == Lang::Ang && !synthetic.contains(f.id.as_str()))
            .collect()
    }

    // dictionary

    pub fn add_dict_entry(&mut self, entry: DictEntry) -> Result<String, StoreError> {
        if entry.id.trim().is_empty() {
            return Err(CorpusError::EmptyId.into());
        }
        if entry.headword.trim().is_empty() || entry.definition.trim().is_empty() {
            return Err(CorpusError::EmptyText(entry.id).into());
        }
        if let Some(existing) = self.dictionary.get(&entry.id) {
            if self.index.config.dedup && *existing == entry {
                return Ok(entry.id);
            }
            return Err(StoreError::DuplicateId(entry.id));
        }
        let id = entry.id.clone();
        self.dictionary.insert(id.clone(), entry);
        Ok(id)
    }

    pub fn dictionary(&self) -> impl Iterator<Item = &DictEntry> {
        self.dictionary.values()
    }

    // reviews

    pub fn reviews(&self) -> &[ReviewRecord] {
        &self.reviews
    }

    pub(crate) fn reviews_mut(&mut self) -> &mut Vec<ReviewRecord> {
        &mut self.reviews
    }

    // import / export

    pub fn import_fragments(&mut self, path: &Path) -> Result<ImportSummary, StoreError> {
        let records: Vec<TextFragment> = jsonl::read(path)?;
        let mut summary = ImportSummary { read: records.len(), ..Default::default() };
        for frag in records {
            let before = self.fragments.len();
            self.add_fragment(frag)?;
            if self.fragments.len() > before {
                summary.added += 1;
            } else {
                summary.deduplicated += 1;
            }
        }
        Ok(summary)
    }

    pub fn import_pairs(&mut self, path: &Path) -> Result<ImportSummary, StoreError> {
        let records: Vec<PairRecord> = jsonl::read(path)?;
        let mut summary = ImportSummary { read: records.len(), ..Default::default() };
        for rec in records {
            if self.pairs.contains_key(&rec.id) {
                self.add_pair(rec)?;
                summary.deduplicated += 1;
            } else {
                self.add_pair(rec)?;
                summary.added += 1;
            }
        }
        Ok(summary)
    }

    pub fn import_dictionary(&mut self, path: &Path) -> Result<ImportSummary, StoreError> {
        let records: Vec<DictEntry> = jsonl::read(path)?;
        let mut summary = ImportSummary { read: records.len(), ..Default::default() };
        for entry in records {
            if self.dictionary.contains_key(&entry.id) {
                self.add_dict_entry(entry)?;
                summary.deduplicated += 1;
            } else {
                self.add_dict_entry(entry)?;
                summary.added += 1;
            }
        }
        Ok(summary)
    }

    pub fn export_fragments(&self, path: &Path) -> Result<(), StoreError> {
        Ok(jsonl::write(path, self.fragments.values())?)
    }

    /// Writes fragments, pairs and dictionary entries into `dir` using the
    /// same file names as the store itself.
    pub fn export_all(&self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
        jsonl::write(&dir.join(FRAGMENTS), self.fragments.values())?;
        jsonl::write(&dir.join(PAIRS), self.pairs.values())?;
        jsonl::write(&dir.join(DICTIONARY), self.dictionary.values())?;
        Ok(())
    }

    /// Imports whichever of the three export files exist in `dir`.
    pub fn import_all(&mut self, dir: &Path) -> Result<ImportSummary, StoreError> {
        let mut total = ImportSummary::default();
        let parts = [
            (FRAGMENTS, Store::import_fragments as fn(&mut Store, &Path) -> _),
            (DICTIONARY, Store::import_dictionary),
            (PAIRS, Store::import_pairs),
        ];
        for (name, import) in parts {
            let path = dir.join(name);
            if path.exists() {
                let s = import(self, &path)?;
                total.read += s.read;
                total.added += s.added;
                total.deduplicated += s.deduplicated;
            }
        }
        Ok(total)
    }
}

fn acquire_lock(root: &Path) -> Result<LockGuard, StoreError> {
    let path = root.join(LOCK);
    match OpenOptions::new().write(true).create_new(true).open(&path) {
        Ok(mut f) => {
            let _ = writeln!(f, "{}", std::process::id());
            Ok(LockGuard(path))
        }
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
            if lock_is_stale(&path) {
                tracing::warn!("removing stale lock {}", path.display());
                fs::remove_file(&path).map_err(io_at(&path))?;
                return acquire_lock(root);
            }
            Err(StoreError::Locked(root.to_path_buf()))
        }
        Err(e) => Err(StoreError::Io { path, source: e }),
    }
}

/// A lock whose recorded pid no longer runs. Only detectable where
/// `/proc` exists; elsewhere every lock counts as live.
fn lock_is_stale(path: &Path) -> bool {
    let Ok(raw) = fs::read_to_string(path) else { return false };
    let Ok(pid) = raw.trim().parse::<u32>() else { return false };
    let proc_root = Path::new("/proc");
    proc_root.join("self").exists() && pid != std::process::id() && !proc_root.join(pid.to_string()).exists()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{FilterFlag, FlagKind};

    fn frag(id: &str, lang: Lang, text: &str) -> TextFragment {
        TextFragment::new(id, lang, text, "fixture")
    }

    fn ten_fragments() -> Vec<TextFragment> {
        (0..10).map(|i| frag(&format!("f{i}"), Lang::Ang, &format!("text number {}", i % 7))).collect()
    }

    #[test]
    fn insert_and_fetch() {
        let mut store = Store::in_memory(StoreConfig::default());
        let id = store.add_fragment(frag("a1", Lang::Ang, "se oðer him andwirde")).unwrap();
        assert_eq!(id, "a1");
        assert_eq!(store.fragment("a1").unwrap().text, "se oðer him andwirde");
    }

    #[test]
    fn empty_text_rejected() {
        let mut store = Store::in_memory(StoreConfig::default());
        assert!(matches!(
            store.add_fragment(frag("a1", Lang::Ang, "  ")),
            Err(StoreError::Corpus(CorpusError::EmptyText(_)))
        ));
    }

    #[test]
    fn duplicate_id_rejected() {
        let mut store = Store::in_memory(StoreConfig::default());
        store.add_fragment(frag("a1", Lang::Ang, "one")).unwrap();
        assert!(matches!(store.add_fragment(frag("a1", Lang::Ang, "two")), Err(StoreError::DuplicateId(_))));
    }

    #[test]
    fn dedup_matches_set_semantics_oracle() {
        // Oracle: first id seen for each (lang, text, source) key.
        let items = ten_fragments();
        let mut expected: Vec<(String, (Lang, String, String))> = Vec::new();
        for f in &items {
            let key = (f.lang, f.text.clone(), f.source.clone());
            let first = expected.iter().find(|(_, k)| *k == key).map(|(id, _)| id.clone());
            expected.push((first.unwrap_or_else(|| f.id.clone()), key));
        }
        let mut store = Store::in_memory(StoreConfig { dedup: true });
        for (f, (want, _)) in items.iter().zip(&expected) {
            assert_eq!(&store.add_fragment(f.clone()).unwrap(), want);
        }
        assert_eq!(store.fragment_count(), 7);
        // Second insert of the same content returns the first id.
        assert_eq!(store.add_fragment(frag("fresh", Lang::Ang, "text number 0")).unwrap(), "f0");
        // With dedup off every distinct id is kept.
        let mut plain = Store::in_memory(StoreConfig { dedup: false });
        for f in &items {
            plain.add_fragment(f.clone()).unwrap();
        }
        assert_eq!(plain.fragment_count(), 10);
    }

    #[test]
    fn pairs_validate_sides() {
        let mut store = Store::in_memory(StoreConfig::default());
        store.add_fragment(frag("e", Lang::En, "he said")).unwrap();
        store.add_fragment(frag("a", Lang::Ang, "he cwæð")).unwrap();
        let rec = PairRecord {
            id: "p".into(),
            en_id: "a".into(),
            ang_id: "e".into(),
            provenance: Provenance::Human,
            flags: vec![],
            review_state: ReviewState::Unreviewed,
            style_example_ids: vec![],
        };
        assert!(store.add_pair(rec.clone()).is_err());
        let ok = PairRecord { en_id: "e".into(), ang_id: "a".into(), ..rec };
        store.add_pair(ok.clone()).unwrap();
        assert_eq!(store.resolve_pair("p").unwrap().ang.text, "he cwæð");
        let missing = PairRecord { id: "q".into(), en_id: "zz".into(), ..ok };
        assert!(matches!(store.add_pair(missing), Err(StoreError::UnknownFragment(_))));
    }

    #[test]
    fn fatal_flag_blocks_acceptance() {
        let mut store = Store::in_memory(StoreConfig::default());
        let mut pair = ParallelPair::new("p", frag("e", Lang::En, "x y"), frag("a", Lang::Ang, "x y"), Provenance::DualAgent).unwrap();
        pair.flags.push(FilterFlag::new(FlagKind::NonTranslated, vec![]));
        store.insert_pair(&pair).unwrap();
        assert!(store.set_review_state("p", ReviewState::Accepted).is_err());
        store.set_review_state("p", ReviewState::Rejected).unwrap();
    }

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::in_memory(StoreConfig::default());
        for f in ten_fragments() {
            store.add_fragment(f).unwrap();
        }
        store.add_fragment(frag("e1", Lang::En, "the second answered him and said :").with_genre("gospel")).unwrap();
        store.add_fragment(frag("a1", Lang::Ang, "se oðer him andwirde and cwæð :").normalized(true)).unwrap();
        let pair = ParallelPair::new("p1", store.fragment("e1").unwrap().clone(), store.fragment("a1").unwrap().clone(), Provenance::Human).unwrap();
        store.insert_pair(&pair).unwrap();
        store
            .add_dict_entry(DictEntry { id: "d1".into(), headword: "getoge".into(), definition: "A tugging".into() })
            .unwrap();

        store.export_all(dir.path()).unwrap();
        let mut back = Store::in_memory(StoreConfig::default());
        back.import_all(dir.path()).unwrap();
        assert_eq!(back, store);

        // Importing a second time with dedup changes nothing.
        let summary = back.import_all(dir.path()).unwrap();
        assert_eq!(summary.added, 0);
        assert_eq!(back, store);
    }

    #[test]
    fn on_disk_store_persists_and_locks() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("store");
        {
            let mut store = Store::create(&root, StoreConfig::default()).unwrap();
            store.add_fragment(frag("a1", Lang::Ang, "ðæt is æt stoce twelf hida")).unwrap();
            assert!(matches!(Store::open_writer(&root), Err(StoreError::Locked(_))));
            store.save().unwrap();
        }
        let mut reader = Store::open(&root).unwrap();
        assert_eq!(reader.fragment_count(), 1);
        assert!(matches!(reader.save(), Err(StoreError::ReadOnly)));
        // Lock released on drop.
        let writer = Store::open_writer(&root).unwrap();
        assert_eq!(writer, reader);
        assert!(matches!(Store::create(&root, StoreConfig::default()), Err(StoreError::AlreadyExists(_))));
    }

    #[cfg(target_os = "linux")]
    #[test]
    fn lock_of_dead_process_is_reclaimed() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("store");
        drop(Store::create(&root, StoreConfig::default()).unwrap());
        std::fs::write(root.join(LOCK), format!("{}\n", u32::MAX - 1)).unwrap();
        assert!(Store::open_writer(&root).is_ok());
        std::fs::write(root.join(LOCK), format!("{}\n", std::process::id())).unwrap();
        assert!(matches!(Store::open_writer(&root), Err(StoreError::Locked(_))));
    }

    #[test]
    fn reference_fragments_exclude_synthetic_sides() {
        let mut store = Store::in_memory(StoreConfig::default());
        store.add_fragment(frag("m1", Lang::Ang, "mono one")).unwrap();
        let pair = ParallelPair::new("g1", frag("ge", Lang::En, "new text"), frag("ga", Lang::Ang, "niwe"), Provenance::DualAgent).unwrap();
        store.insert_pair(&pair).unwrap();
        let ids: Vec<_> = store.reference_fragments().iter().map(|f| f.id.clone()).collect();
        assert_eq!(ids, vec!["m1"]);
    }
}
