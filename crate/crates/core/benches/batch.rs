//! Batch extraction at parallelism 1 against a rayon pool, over a scripted
//! provider that sleeps per call like a network round trip.
//!
//! ```text
//! cargo bench -p esgkg --bench batch
//! cargo bench -p esgkg --bench batch --no-default-features   # sequential build
//! ```

use std::sync::Arc;
use std::time::Duration;

use chrono::{NaiveDate, TimeZone, Utc};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use esgkg::extraction::{run_extraction, ExtractionContext};
use esgkg::llm::{ChatRequest, FnProvider, GatewayError};
use esgkg::{prompts, Gateway, ModelSpec, NewsArticle, ReviewState, ViolationPattern};
use serde_json::json;

const ARTICLES: usize = 32;
const LATENCY: Duration = Duration::from_millis(2);

fn evidence(id: &str) -> String {
    format!("Acme Corp dumped solvent into the river beside plant {id}.")
}

fn articles() -> Vec<NewsArticle> {
    (0..ARTICLES)
        .map(|i| {
            let id = format!("bench-{i:03}");
            NewsArticle {
                body: format!(
                    "{} Inspectors found dead fish downstream. The company declined to comment.",
                    evidence(&id)
                ),
                article_id: id,
                url: format!("https://news.example.com/{i}"),
                title: "Acme Corp accused of river pollution".into(),
                language: "en".into(),
                published_date: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
                source_name: "Bench Wire".into(),
                sentiment_hint: None,
            }
        })
        .collect()
}

fn patterns() -> Vec<ViolationPattern> {
    (1..=3)
        .map(|index| ViolationPattern {
            principle_id: 7,
            index,
            entity_a: "Company".into(),
            action: format!("pollutes (variant {index})"),
            entity_b: "water bodies".into(),
            look_for: vec!["The plant dumped effluent into the river.".into()],
            ignore: vec!["The plant opened a treatment facility.".into()],
            review_state: ReviewState::Approved,
        })
        .collect()
}

fn respond(req: &ChatRequest) -> Result<String, GatewayError> {
    std::thread::sleep(LATENCY);
    let id = req.user_prompt.lines().find_map(|l| l.strip_prefix("Article ID: ")).unwrap_or_default().to_string();
    let reply = if req.system_prompt == prompts::ENTITIES_SYSTEM {
        json!({ "entities": [{ "text": "Acme Corp", "kind": "Organization" }] })
    } else if req.system_prompt == prompts::MATCH_SYSTEM {
        json!({ "matches": ["p7.1", "p7.2"] })
    } else {
        json!({ "subject": "Acme Corp", "action": "dumped solvent into", "object": "the river", "evidence": evidence(&id) })
    };
    Ok(format!("```json\n{reply}\n```"))
}

fn extraction(c: &mut Criterion) {
    let articles = articles();
    let patterns = patterns();
    let model = ModelSpec::new("replay", "bench");
    let mut group = c.benchmark_group("extraction");
    group.sample_size(10);
    for parallelism in [1, 8] {
        let gateway =
            Gateway::new().with_provider("replay", Arc::new(FnProvider(respond))).with_parallelism(parallelism);
        let ctx = ExtractionContext {
            gateway: &gateway,
            model: model.clone(),
            max_retries: 0,
            extracted_at: Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
        };
        let label = if parallelism == 1 { "sequential" } else { "parallel" };
        group.bench_with_input(BenchmarkId::new(label, parallelism), &ctx, |b, ctx| {
            b.iter(|| {
                let run = run_extraction(&articles, &patterns, ctx);
                assert_eq!(run.events().len(), 2 * ARTICLES);
            })
        });
    }
    group.finish();
}

criterion_group!(benches, extraction);
criterion_main!(benches);
