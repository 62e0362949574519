//! Toolkit for expanding a low-resource language corpus (Old English in the
//! bundled data files): text normalization, multi-task adaptation datasets,
//! backtranslation and dual-agent synthetic generation against pluggable
//! completion endpoints, failure-mode filters, automatic metrics and an
//! expert review gate.
//!
//! Data-parallel inner loops (per-segment metric evaluation, batch filtering,
//! backend fan-out) run on rayon when the default `parallel` feature is on and
//! fall back to plain iterators otherwise. See [`par`].

pub mod agents;
pub mod backtrans;
pub mod corpus;
pub mod filters;
pub mod infer;
pub mod jsonl;
pub mod metrics;
pub mod normalize;
pub mod par;
pub mod prompts;
pub mod review;

pub use corpus::{Lang, ParallelPair, Provenance, ReviewState, Store, TextFragment};
pub use par::ExecMode;
