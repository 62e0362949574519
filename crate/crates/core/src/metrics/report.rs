use serde::{Deserialize, Serialize};

use super::{
    BleuConfig, BleuSmoothing, BleuStats, ChrfConfig, ChrfStats, EnglishSuffixStemmer, IdentityStemmer, MeteorConfig,
    MeteorStats, MetricError, PunctTokenizer, Stemmer, Tokenizer,
};
use crate::corpus::Lang;
use crate::par::{self, ExecMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub bleu: BleuConfig,
    pub chrf: ChrfConfig,
    pub meteor: MeteorConfig,
    /// Language of hypotheses and references; picks the METEOR stemmer.
    pub target_lang: Lang,
    #[serde(default)]
    pub exec: ExecMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            bleu: BleuConfig::default(),
            chrf: ChrfConfig::default(),
            meteor: MeteorConfig::default(),
            target_lang: Lang::Ang,
            exec: ExecMode::default(),
        }
    }
}

impl EvalConfig {
    fn stemmer(&self) -> &'static dyn Stemmer {
        match self.target_lang {
            Lang::Ang => &IdentityStemmer,
            Lang::En => &EnglishSuffixStemmer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentInput {
    pub id: String,
    pub hypothesis: String,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentScores {
    pub id: String,
    pub bleu: f64,
    pub chrf: f64,
    pub meteor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusScores {
    pub bleu: f64,
    pub chrf: f64,
    pub meteor: f64,
}

/// Box-plot summary: linear-interpolated quartiles, outliers beyond
/// 1.5 IQR from the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub outliers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub bleu: BoxStats,
    pub chrf: BoxStats,
    pub meteor: BoxStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_segment: Vec<SegmentScores>,
    /// Scores from pooled statistics.
    pub corpus: CorpusScores,
    /// Per-metric distribution of segment scores; `mean` is the
    /// segment-averaged counterpart of `corpus`.
    pub distribution: Distribution,
}

/// Quantile with linear interpolation between closest ranks. `sorted` must be
/// ascending and non-empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn box_stats(ids: &[&str], values: &[f64]) -> BoxStats {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let outliers = ids
        .iter()
        .zip(values)
        .filter(|(_, v)| **v < lo || **v > hi)
        .map(|(id, _)| id.to_string())
        .collect();
    BoxStats {
        min: sorted[0],
        q1,
        median: quantile(&sorted, 0.5),
        q3,
        max: sorted[sorted.len() - 1],
        mean: values.iter().sum::<f64>() / values.len() as f64,
        outliers,
    }
}

struct SegmentStats {
    bleu: BleuStats,
    chrf: ChrfStats,
    meteor: MeteorStats,
}

/// Scores every segment (fanned out per `cfg.exec`) and pools the corpus
/// statistics. Output is identical in parallel and sequential mode.
pub fn evaluate_corpus(segments: &[SegmentInput], cfg: &EvalConfig) -> Result<MetricReport, MetricError> {
    cfg.bleu.validate()?;
    cfg.chrf.validate()?;
    cfg.meteor.validate()?;
    if segments.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    if segments.iter().any(|s| s.reference.trim().is_empty()) {
        return Err(MetricError::EmptyReference);
    }
    let stemmer = cfg.stemmer();
    let tokenizer = PunctTokenizer;
    let stats: Vec<SegmentStats> = par::map_slice(cfg.exec, segments, |seg| {
        let hyp = tokenizer.tokenize(&seg.hypothesis);
        let reference = tokenizer.tokenize(&seg.reference);
        SegmentStats {
            bleu: BleuStats::from_segment(&hyp, &reference, cfg.bleu.max_ngram_order),
            chrf: ChrfStats::from_segment(&seg.hypothesis, &seg.reference, &cfg.chrf),
            meteor: MeteorStats::from_segment(&hyp, &reference, &cfg.meteor, stemmer),
        }
    });

    let mut pooled_bleu = BleuStats::default();
    let mut pooled_chrf = ChrfStats::default();
    let mut pooled_meteor = MeteorStats::default();
    let mut per_segment = Vec::with_capacity(segments.len());
    for (seg, s) in segments.iter().zip(&stats) {
        pooled_bleu.accumulate(&s.bleu);
        pooled_chrf.accumulate(&s.chrf);
        pooled_meteor.accumulate(&s.meteor);
        per_segment.push(SegmentScores {
            id: seg.id.clone(),
            bleu: s.bleu.score(cfg.bleu.smoothing),
            chrf: s.chrf.score(cfg.chrf.beta),
            meteor: s.meteor.score(&cfg.meteor),
        });
    }

    let ids: Vec<&str> = per_segment.iter().map(|s| s.id.as_str()).collect();
    let column = |f: fn(&SegmentScores) -> f64| per_segment.iter().map(f).collect::<Vec<_>>();
    let distribution = Distribution {
        bleu: box_stats(&ids, &column(|s| s.bleu)),
        chrf: box_stats(&ids, &column(|s| s.chrf)),
        meteor: box_stats(&ids, &column(|s| s.meteor)),
    };
    Ok(MetricReport {
        corpus: CorpusScores {
            bleu: pooled_bleu.score(BleuSmoothing::None),
            chrf: pooled_chrf.score(cfg.chrf.beta),
            meteor: pooled_meteor.score(&cfg.meteor),
        },
        per_segment,
        distribution,
    })
}

impl MetricReport {
    /// Per-segment rows as CSV (`id,bleu,chrf,meteor`).
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["id", "bleu", "chrf", "meteor"])?;
        for s in &self.per_segment {
            w.write_record([s.id.clone(), format!("{:.4}", s.bleu), format!("{:.4}", s.chrf), format!("{:.4}", s.meteor)])?;
        }
        w.flush()?;
        Ok(())
    }
}
