use std::collections::HashMap;

use proptest::prelude::*;

use super::*;
use crate::corpus::Lang;
use crate::par::ExecMode;

fn toks(s: &str) -> Vec<&str> {
    PunctTokenizer.tokenize(s)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// Independent BLEU for one segment: plain nested loops, no shared helpers.
fn oracle_bleu(hyp: &[&str], reference: &[&str], max_order: usize) -> f64 {
    let mut log_p = 0.0;
    let mut orders = 0;
    for n in 1..=max_order {
        if hyp.len() < n {
            continue;
        }
        let hyp_grams: Vec<&[&str]> = hyp.windows(n).collect();
        let ref_grams: Vec<&[&str]> = if reference.len() >= n { reference.windows(n).collect() } else { vec![] };
        let mut used = vec![false; ref_grams.len()];
        let mut matched = 0;
        for g in &hyp_grams {
            if let Some(k) = (0..ref_grams.len()).find(|&k| !used[k] && ref_grams[k] == *g) {
                used[k] = true;
                matched += 1;
            }
        }
        if matched == 0 {
            return 0.0;
        }
        log_p += (matched as f64 / hyp_grams.len() as f64).ln();
        orders += 1;
    }
    let (c, r) = (hyp.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    100.0 * bp * (log_p / orders as f64).exp()
}

#[test]
fn bleu_identity_is_100() {
    let cfg = BleuConfig::default();
    let corpus = vec![toks("ðæt is æt stoce twelf hida"), toks("se oðer him andwirde and cwæð :")];
    assert_eq!(bleu(&corpus, &corpus, &cfg).unwrap(), 100.0);
    assert_eq!(sentence_bleu(&corpus[0], &corpus[0], &cfg), 100.0);
}

#[test]
fn bleu_brevity_case() {
    let cfg = BleuConfig { max_ngram_order: 3, smoothing: BleuSmoothing::None };
    let hyp = vec![toks("the cat sat")];
    let reference = vec![toks("the cat sat on the mat")];
    let got = bleu(&hyp, &reference, &cfg).unwrap();
    let by_hand = 100.0 * (-1.0f64).exp();
    assert!(close(got, 36.79, 0.01), "{got}");
    assert!(close(got, by_hand, 1e-9));
    assert!(close(got, oracle_bleu(&hyp[0], &reference[0], 3), 1e-9));
}

#[test]
fn bleu_disjoint_is_zero_and_errors() {
    let cfg = BleuConfig { max_ngram_order: 4, smoothing: BleuSmoothing::None };
    assert_eq!(bleu(&[toks("a b c")], &[toks("x y z")], &cfg).unwrap(), 0.0);
    assert_eq!(
        bleu(&[toks("a")], &[toks("a"), toks("b")], &cfg),
        Err(MetricError::LengthMismatch { hypotheses: 1, references: 2 })
    );
    assert_eq!(bleu::<&str>(&[], &[], &cfg), Err(MetricError::EmptyCorpus));
    assert!(BleuConfig { max_ngram_order: 0, ..cfg }.validate().is_err());
}

#[test]
fn segment_smoothing_only_lifts_zero_numerators() {
    let cfg = BleuConfig::default();
    let (h, r) = (toks("the cat sat on a mat"), toks("the cat lay on the mat"));
    let smoothed = sentence_bleu(&h, &r, &cfg);
    assert!(smoothed > 0.0);
    let stats = BleuStats::from_segment(&h, &r, 4);
    assert_eq!(stats.matches[3], 0);
    let by_hand = {
        let p: f64 = (0..4)
            .map(|i| {
                let m = if stats.matches[i] == 0 { 0.1 } else { stats.matches[i] as f64 };
                (m / stats.totals[i] as f64).ln()
            })
            .sum();
        100.0 * (p / 4.0).exp()
    };
    assert!(close(smoothed, by_hand, 1e-9));
    assert_eq!(bleu(&[h], &[r], &cfg).unwrap(), 0.0);
}

#[test]
fn chrf_hand_case() {
    let cfg = ChrfConfig { char_ngram_order: 2, ..Default::default() };
    let got = chrf("abcd", "abce", &cfg).unwrap();
    assert!(close(got, 70.83, 0.01), "{got}");
    assert!(close(got, 100.0 * 17.0 / 24.0, 1e-9));
}

// Brute-force chrF statistics: list every n-gram, strike matches one by one.
fn oracle_chrf(hyp: &str, reference: &str, order: usize, beta: f64) -> f64 {
    let h: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let (mut ps, mut rs, mut k) = (0.0, 0.0, 0);
    for n in 1..=order {
        let hg: Vec<String> = if h.len() >= n { h.windows(n).map(|w| w.iter().collect()).collect() } else { vec![] };
        let mut rg: Vec<String> = if r.len() >= n { r.windows(n).map(|w| w.iter().collect()).collect() } else { vec![] };
        if hg.is_empty() && rg.is_empty() {
            continue;
        }
        let total_r = rg.len();
        let mut m = 0;
        for g in &hg {
            if let Some(i) = rg.iter().position(|x| x == g) {
                rg.remove(i);
                m += 1;
            }
        }
        ps += if hg.is_empty() { 0.0 } else { m as f64 / hg.len() as f64 };
        rs += if total_r == 0 { 0.0 } else { m as f64 / total_r as f64 };
        k += 1;
    }
    if k == 0 {
        return 0.0;
    }
    let (p, r) = (ps / k as f64, rs / k as f64);
    let b2 = beta * beta;
    if p + r == 0.0 { 0.0 } else { 100.0 * (1.0 + b2) * p * r / (b2 * p + r) }
}

#[test]
fn chrf_identity_disjoint_and_errors() {
    let cfg = ChrfConfig::default();
    assert_eq!(chrf("ðæt is æt stoce", "ðæt is æt stoce", &cfg).unwrap(), 100.0);
    assert_eq!(chrf("abc", "xyz", &cfg).unwrap(), 0.0);
    assert_eq!(chrf("abc", "  ", &cfg), Err(MetricError::EmptyReference));
}

#[test]
fn meteor_hand_cases() {
    let cfg = MeteorConfig::default();
    let ten = toks("a b c d e f g h i j");
    let got = meteor(&ten, &ten, &cfg, &IdentityStemmer).unwrap();
    assert!(close(got, 99.95, 0.01), "{got}");
    assert!(close(got, 100.0 * (1.0 - 0.5 * 0.1f64.powi(3)), 1e-9));

    let got = meteor(&toks("the cat"), &toks("the black cat"), &cfg, &IdentityStemmer).unwrap();
    let (p, r) = (1.0, 2.0 / 3.0);
    let by_hand = 100.0 * (10.0 * p * r / (r + 9.0 * p)) * (1.0 - 0.5);
    assert!(close(got, 34.48, 0.05), "{got}");
    assert!(close(got, by_hand, 1e-9));

    assert_eq!(meteor(&toks("a b"), &toks("c d"), &cfg, &IdentityStemmer).unwrap(), 0.0);
    assert_eq!(meteor(&toks("a"), &[], &cfg, &IdentityStemmer), Err(MetricError::EmptyReference));
}

#[test]
fn meteor_stem_stage() {
    let cfg = MeteorConfig::default();
    let a = align(&toks("he walked home"), &toks("he walks home"), &cfg.stages, &EnglishSuffixStemmer);
    assert_eq!(a.stage_counts(&cfg.stages), vec![2, 1]);
    assert_eq!(a.chunks(), 1);
    let exact_only = MeteorConfig { stages: vec![MatchStage::Exact], ..Default::default() };
    let a = align(&toks("he walked home"), &toks("he walks home"), &exact_only.stages, &EnglishSuffixStemmer);
    assert_eq!(a.links.len(), 2);
}

#[test]
fn meteor_prefers_fewer_chunks() {
    // Greedy left-to-right would link the first "the" to ref 0 and split
    // "the mat" into two chunks.
    let a = align(&toks("the mat the"), &toks("on the mat"), &[MatchStage::Exact], &IdentityStemmer);
    assert_eq!(a.links.len(), 2);
    assert_eq!(a.chunks(), 1);
}

type BruteValue = (Vec<usize>, i64);

// Every partial one-to-one linking, scored by (matches per stage, -chunks).
fn brute_align(cands: &[Vec<(usize, usize)>], stages: usize) -> BruteValue {
    fn rec(
        i: usize,
        cands: &[Vec<(usize, usize)>],
        used: &mut Vec<bool>,
        links: &mut Vec<(usize, usize, usize)>,
        stages: usize,
        best: &mut Option<BruteValue>,
    ) {
        if i == cands.len() {
            let mut counts = vec![0; stages];
            let mut chunks = 0i64;
            let mut prev: Option<(usize, usize)> = None;
            for &(h, r, s) in links.iter() {
                counts[s] += 1;
                if prev != Some((h.wrapping_sub(1), r.wrapping_sub(1))) {
                    chunks += 1;
                }
                prev = Some((h, r));
            }
            let v = (counts, -chunks);
            if best.as_ref().is_none_or(|b| v > *b) {
                *best = Some(v);
            }
            return;
        }
        rec(i + 1, cands, used, links, stages, best);
        for &(j, s) in &cands[i] {
            if !used[j] {
                used[j] = true;
                links.push((i, j, s));
                rec(i + 1, cands, used, links, stages, best);
                links.pop();
                used[j] = false;
            }
        }
    }
    let width = cands.iter().flatten().map(|(j, _)| j + 1).max().unwrap_or(0);
    let mut best = None;
    rec(0, cands, &mut vec![false; width], &mut Vec::new(), stages, &mut best);
    best.unwrap()
}

#[test]
fn exact_search_handles_many_ambiguous_positions() {
    let hyp: Vec<String> = (0..30).map(|i| ["a", "b", "c"][i % 3].to_string()).collect();
    let reference: Vec<String> = (0..30).map(|i| ["a", "b", "c"][(i + 1) % 3].to_string()).collect();
    let a = align(&hyp, &reference, &[MatchStage::Exact], &IdentityStemmer);
    assert_eq!(a.links.len(), 30);
}

#[test]
fn report_single_identical_pair() {
    let seg = SegmentInput { id: "s".into(), hypothesis: "a b c d e f g h i j".into(), reference: "a b c d e f g h i j".into() };
    let r = evaluate_corpus(&[seg], &EvalConfig::default()).unwrap();
    assert_eq!(r.corpus.bleu, 100.0);
    assert_eq!(r.corpus.chrf, 100.0);
    assert!(close(r.corpus.meteor, 99.95, 0.01));
    assert!(matches!(evaluate_corpus(&[], &EvalConfig::default()), Err(MetricError::EmptyCorpus)));
}

fn segments(rows: &[(&str, &str)]) -> Vec<SegmentInput> {
    rows.iter()
        .enumerate()
        .map(|(i, (h, r))| SegmentInput { id: format!("s{i}"), hypothesis: h.to_string(), reference: r.to_string() })
        .collect()
}

#[test]
fn report_composes_segment_oracles() {
    let cfg = EvalConfig {
        bleu: BleuConfig { max_ngram_order: 3, smoothing: BleuSmoothing::AddEpsilon { epsilon: 0.1 } },
        chrf: ChrfConfig { char_ngram_order: 2, ..Default::default() },
        target_lang: Lang::En,
        ..Default::default()
    };
    let rows = [
        ("the cat sat", "the cat sat on the mat"),
        ("abcd", "abce"),
        ("the cat", "the black cat"),
        ("a b c d e f g h i j", "a b c d e f g h i j"),
        ("x y", "p q"),
    ];
    let report = evaluate_corpus(&segments(&rows), &cfg).unwrap();
    let s = &report.per_segment;
    assert!(close(s[0].bleu, 36.79, 0.01));
    assert!(close(s[1].chrf, 70.83, 0.01));
    assert!(close(s[2].meteor, 34.48, 0.05));
    assert!(close(s[3].meteor, 99.95, 0.01));
    assert_eq!((s[4].bleu > 0.0, s[4].chrf, s[4].meteor), (true, 0.0, 0.0));
    for (seg, (h, r)) in s.iter().zip(rows) {
        assert!(close(seg.chrf, oracle_chrf(h, r, 2, 2.0), 1e-9));
    }
    let means = &report.distribution;
    assert!(close(means.meteor.mean, s.iter().map(|x| x.meteor).sum::<f64>() / 5.0, 1e-12));
    assert!(means.meteor.min <= means.meteor.q1 && means.meteor.q3 <= means.meteor.max);
}

#[test]
fn pooled_bleu_differs_from_segment_mean() {
    let cfg = EvalConfig { bleu: BleuConfig { max_ngram_order: 2, smoothing: BleuSmoothing::None }, ..Default::default() };
    let rows = [("a b c d", "a b c d"), ("a x", "a y")];
    let r = evaluate_corpus(&segments(&rows), &cfg).unwrap();
    // Pooled: p1 = 5/6, p2 = 3/4, hyp and ref lengths equal.
    let pooled = 100.0 * ((5.0f64 / 6.0).ln() / 2.0 + (0.75f64).ln() / 2.0).exp();
    assert!(close(r.corpus.bleu, pooled, 1e-9));
    assert!(close(r.per_segment[0].bleu, 100.0, 1e-9));
    assert_eq!(r.per_segment[1].bleu, 0.0);
    assert!((r.corpus.bleu - r.distribution.bleu.mean).abs() > 1.0);
}

#[test]
fn quartiles_and_outliers() {
    let sorted = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(quantile(&sorted, 0.5), 2.5);
    assert_eq!(quantile(&sorted, 0.25), 1.75);
    let rows: Vec<(String, String)> = (0..9)
        .map(|i| if i == 8 { ("q r s".to_string(), "a b c".to_string()) } else { ("a b c".to_string(), "a b c".to_string()) })
        .collect();
    let refs: Vec<(&str, &str)> = rows.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let r = evaluate_corpus(&segments(&refs), &EvalConfig::default()).unwrap();
    assert_eq!(r.distribution.chrf.outliers, vec!["s8".to_string()]);
}

#[test]
fn parallel_and_sequential_reports_identical() {
    let rows: Vec<(String, String)> =
        (0..200).map(|i| (format!("w{} x{} y{}", i % 7, i % 3, i), format!("w{} x{} z{}", i % 5, i % 3, i))).collect();
    let refs: Vec<(&str, &str)> = rows.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let segs = segments(&refs);
    let par = evaluate_corpus(&segs, &EvalConfig { exec: ExecMode::Parallel, ..Default::default() }).unwrap();
    let seq = evaluate_corpus(&segs, &EvalConfig { exec: ExecMode::Sequential, ..Default::default() }).unwrap();
    assert_eq!(serde_json::to_string(&par).unwrap(), serde_json::to_string(&seq).unwrap());
}

#[test]
fn csv_export() {
    let r = evaluate_corpus(&segments(&[("a b", "a b")]), &EvalConfig::default()).unwrap();
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("id,bleu,chrf,meteor\ns0,100.0000,100.0000,"));
}

const WORDS: [&str; 6] = ["se", "cyning", "walk", "walks", "walked", "þa"];

fn sentence(max: usize) -> impl Strategy<Value = Vec<String>> {
    proptest::collection::vec(proptest::sample::select(WORDS.to_vec()).prop_map(String::from), 1..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn scores_are_bounded(h in "[a-cþ .,]{0,40}", r in "[a-cþ .,]{1,40}") {
        prop_assume!(!r.trim().is_empty());
        let (ht, rt) = (toks(&h), toks(&r));
        let b = sentence_bleu(&ht, &rt, &BleuConfig::default());
        let c = chrf(&h, &r, &ChrfConfig::default()).unwrap();
        prop_assert!((0.0..=100.0).contains(&b) && (0.0..=100.0).contains(&c));
        if !rt.is_empty() {
            let m = meteor(&ht, &rt, &MeteorConfig::default(), &EnglishSuffixStemmer).unwrap();
            prop_assert!((0.0..=100.0).contains(&m));
        }
    }

    #[test]
    fn identity_scores(words in proptest::collection::vec("[a-zþæ]{1,5}", 1..30)) {
        let text = words.join(" ");
        let t = toks(&text);
        prop_assert!(close(sentence_bleu(&t, &t, &BleuConfig::default()), 100.0, 1e-9));
        prop_assert!(close(bleu(&[t.clone()], &[t.clone()], &BleuConfig::default()).unwrap(), 100.0, 1e-9));
        prop_assert!(close(chrf(&text, &text, &ChrfConfig::default()).unwrap(), 100.0, 1e-9));
        if t.len() >= 10 {
            prop_assert!(meteor(&t, &t, &MeteorConfig::default(), &IdentityStemmer).unwrap() >= 99.9);
        }
    }

    #[test]
    fn replacing_a_match_never_helps(
        words in proptest::collection::vec("[a-d]{1,4}", 1..15),
        idx in any::<prop::sample::Index>(),
    ) {
        let reference = words.join(" ");
        let i = idx.index(words.len());
        let mut degraded = words.clone();
        degraded[i] = "ƿ".repeat(words[i].chars().count());
        let degraded = degraded.join(" ");
        let cfg1 = BleuConfig { max_ngram_order: 1, smoothing: BleuSmoothing::None };
        let before = sentence_bleu(&toks(&reference), &toks(&reference), &cfg1);
        let after = sentence_bleu(&toks(&degraded), &toks(&reference), &cfg1);
        prop_assert!(after <= before + 1e-12);
        let c_before = chrf(&reference, &reference, &ChrfConfig::default()).unwrap();
        let c_after = chrf(&degraded, &reference, &ChrfConfig::default()).unwrap();
        prop_assert!(c_after <= c_before + 1e-12);
    }

    #[test]
    fn degradation_from_any_hypothesis(
        hyp in proptest::collection::vec("[a-c]{1,3}", 1..12),
        reference in proptest::collection::vec("[a-c]{1,3}", 1..12),
        idx in any::<prop::sample::Index>(),
    ) {
        let i = idx.index(hyp.len());
        let mut worse = hyp.clone();
        worse[i] = "ƿ".repeat(hyp[i].chars().count());
        let (h, w, r) = (hyp.join(" "), worse.join(" "), reference.join(" "));
        let cfg1 = BleuConfig { max_ngram_order: 1, smoothing: BleuSmoothing::None };
        prop_assert!(sentence_bleu(&toks(&w), &toks(&r), &cfg1) <= sentence_bleu(&toks(&h), &toks(&r), &cfg1) + 1e-12);
        let cfg = ChrfConfig::default();
        prop_assert!(chrf(&w, &r, &cfg).unwrap() <= chrf(&h, &r, &cfg).unwrap() + 1e-12);
    }

    #[test]
    fn chunk_count_is_minimal(hyp in sentence(8), reference in sentence(8)) {
        let stages = [MatchStage::Exact, MatchStage::Stem];
        let a = align(&hyp, &reference, &stages, &EnglishSuffixStemmer);
        let cands = meteor::candidates(&hyp, &reference, &stages, &EnglishSuffixStemmer);
        let (counts, neg_chunks) = brute_align(&cands, 2);
        prop_assert_eq!(a.stage_counts(&stages), counts);
        prop_assert_eq!(a.chunks() as i64, -neg_chunks);
        let mut seen_h = HashMap::new();
        let mut seen_r = HashMap::new();
        for l in &a.links {
            prop_assert!(seen_h.insert(l.hyp, ()).is_none() && seen_r.insert(l.reference, ()).is_none());
        }
    }

    #[test]
    fn chrf_symmetric_at_beta_one(h in "[a-d ]{1,20}", r in "[a-d ]{1,20}") {
        prop_assume!(!h.trim().is_empty() && !r.trim().is_empty());
        let cfg = ChrfConfig { beta: 1.0, ..Default::default() };
        prop_assert!(close(chrf(&h, &r, &cfg).unwrap(), chrf(&r, &h, &cfg).unwrap(), 1e-9));
    }

    #[test]
    fn chrf_matches_brute_force(h in "[a-c ]{0,15}", r in "[a-c ]{1,15}") {
        prop_assume!(!r.trim().is_empty());
        let cfg = ChrfConfig::default();
        prop_assert!(close(chrf(&h, &r, &cfg).unwrap(), oracle_chrf(&h, &r, 6, 2.0), 1e-9));
    }

    #[test]
    fn bleu_matches_independent_oracle(
        hyp in proptest::collection::vec("[a-c]", 1..10),
        reference in proptest::collection::vec("[a-c]", 1..10),
    ) {
        let h: Vec<&str> = hyp.iter().map(String::as_str).collect();
        let r: Vec<&str> = reference.iter().map(String::as_str).collect();
        let cfg = BleuConfig { max_ngram_order: 4, smoothing: BleuSmoothing::None };
        prop_assert!(close(bleu(&[h.clone()], &[r.clone()], &cfg).unwrap(), oracle_bleu(&h, &r, 4), 1e-9));
    }
}
