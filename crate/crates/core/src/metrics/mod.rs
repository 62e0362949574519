//! BLEU, chrF and METEOR at segment and corpus level.
//!
//! Each metric exposes additive sufficient statistics (`*Stats`). Corpus
//! scores pool those statistics before scoring, so they are not the mean of
//! segment scores; [`MetricReport`] carries both.

mod bleu;
mod chrf;
mod meteor;
mod report;
mod tokenize;

pub use bleu::{BleuConfig, BleuSmoothing, BleuStats, bleu, sentence_bleu};
pub use chrf::{ChrfConfig, ChrfStats, chrf};
pub use meteor::{
    Alignment, EXACT_SEARCH_MAX_AMBIGUOUS, EXACT_SEARCH_MAX_STATES, EnglishSuffixStemmer, IdentityStemmer, Link, MatchStage, MeteorConfig,
    MeteorStats, Stemmer, align, meteor,
};
pub use report::{
    BoxStats, CorpusScores, Distribution, EvalConfig, MetricReport, SegmentInput, SegmentScores, evaluate_corpus,
    quantile,
};
pub use tokenize::{PunctTokenizer, Tokenizer, is_word_char};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("{hypotheses} hypotheses but {references} references")]
    LengthMismatch { hypotheses: usize, references: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty reference")]
    EmptyReference,
    #[error("invalid metric configuration: {0}")]
    InvalidConfig(String),
}

#[cfg(test)]
mod tests;
