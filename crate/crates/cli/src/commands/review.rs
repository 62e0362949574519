use std::io::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use forge_core::ReviewState;
use forge_core::review::{
    GateRule, ReviewSubmission, Scores, aggregate_reviews, api, audit_gate, export_extended_corpus, list_candidates,
    submit_review,
};
use serde_json::json;

use super::data::normalization_config;
use super::{open_or_create, open_reader, open_writer, parse_floats};
use crate::args::{ReviewCmd, RuleArg, ServeArgs, StateArg, SubmitArgs};
use crate::output::emit;
use crate::settings::Context;

pub fn run(ctx: &Context, cmd: ReviewCmd) -> anyhow::Result<()> {
    match cmd {
        ReviewCmd::List { state, page, per_page } => {
            let state = match state {
                StateArg::All => None,
                StateArg::Unreviewed => Some(ReviewState::Unreviewed),
                StateArg::Accepted => Some(ReviewState::Accepted),
                StateArg::Rejected => Some(ReviewState::Rejected),
            };
            let store = open_reader(ctx)?;
            let listing = list_candidates(&store, state, page, per_page);
            emit(ctx.json, &listing, || {
                let mut out = format!("{} records (page {})", listing.total, listing.page);
                for c in &listing.items {
                    out.push_str(&format!("\n{}\t{:?}\t{}\t{}", c.record_id, c.review_state, c.en_text, c.ang_text));
                }
                out
            })
        }
        ReviewCmd::Submit(a) => submit(ctx, a),
        ReviewCmd::Stats => {
            let store = open_reader(ctx)?;
            let stats = aggregate_reviews(store.reviews())?;
            emit(ctx.json, &stats, || {
                format!(
                    "reviews            {}\ninflection         {:.2}\nword_order         {:.2}\nlexical_choice     {:.2}\nsemantic_coherence {:.2}\noverall            {:.2}",
                    stats.reviews,
                    stats.inflection,
                    stats.word_order,
                    stats.lexical_choice,
                    stats.semantic_coherence,
                    stats.overall
                )
            })
        }
        ReviewCmd::Export { out, config } => {
            let norm = normalization_config(config.as_deref())?;
            let store = open_reader(ctx)?;
            let summary = export_extended_corpus(&store, &out, &norm)?;
            emit(ctx.json, &summary, || format!("exported {} fragments to {}", summary.exported, summary.path))
        }
        ReviewCmd::Audit => {
            let store = open_reader(ctx)?;
            let report = audit_gate(&store);
            emit(ctx.json, &report, || {
                let mut out = format!(
                    "checked {} reviews over {} records: {} violations",
                    report.reviews_checked,
                    report.records_checked,
                    report.violations.len()
                );
                for v in &report.violations {
                    out.push_str(&format!("\n  {v}"));
                }
                out
            })?;
            if !report.passed() {
                anyhow::bail!("gate audit found {} violations", report.violations.len());
            }
            Ok(())
        }
        ReviewCmd::Policy { threshold, rule, allow_rereview } => {
            let changing = threshold.is_some() || rule.is_some() || allow_rereview.is_some();
            let policy = if changing {
                let mut store = open_or_create(ctx)?;
                let mut policy = store.review_policy().clone();
                if let Some(t) = threshold {
                    anyhow::ensure!((0.0..=10.0).contains(&t), "threshold {t} outside [0, 10]");
                    policy.threshold = t;
                }
                if let Some(r) = rule {
                    policy.rule = match r {
                        RuleArg::Average => GateRule::Average,
                        RuleArg::EveryCriterion => GateRule::EveryCriterion,
                    };
                }
                if let Some(b) = allow_rereview {
                    policy.allow_rereview = b;
                }
                store.set_review_policy(policy.clone());
                store.save()?;
                policy
            } else {
                open_reader(ctx)?.review_policy().clone()
            };
            emit(ctx.json, &policy, || {
                format!(
                    "threshold {} rule {:?} allow_rereview {}",
                    policy.threshold, policy.rule, policy.allow_rereview
                )
            })
        }
    }
}

fn submit(ctx: &Context, a: SubmitArgs) -> anyhow::Result<()> {
    let [inflection, word_order, lexical_choice, semantic_coherence] = parse_floats::<4>(&a.scores, "scores")?;
    let sub = ReviewSubmission {
        record_id: a.record,
        reviewer: a.reviewer,
        scores: Scores::new(inflection, word_order, lexical_choice, semantic_coherence),
        comment: a.comment,
    };
    let timestamp = a
        .timestamp
        .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
    let mut store = open_writer(ctx)?;
    let decision = submit_review(&mut store, sub, timestamp)?;
    store.save()?;
    emit(ctx.json, &decision, || {
        format!(
            "{}: {:?} (average {:.2} against {}, {} review(s))",
            decision.record_id, decision.decision, decision.average, decision.threshold, decision.reviews
        )
    })
}

pub fn serve(ctx: &Context, a: ServeArgs) -> anyhow::Result<()> {
    let store = open_or_create(ctx)?;
    let listener = std::net::TcpListener::bind(a.bind)?;
    let addr = listener.local_addr()?;
    if ctx.json {
        println!("{}", json!({"listening": format!("http://{addr}")}));
    } else {
        println!("listening on http://{addr}");
    }
    std::io::stdout().flush()?;
    api::serve_listener(store, listener, a.ui_dir)?;
    Ok(())
}
