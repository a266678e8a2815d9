mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use esgkg::extraction::{run_extraction, ExtractionContext};
use esgkg::fsutil::from_jsonl;
use esgkg::llm::{register_fixtures, ChatRequest, FnProvider, GatewayError, ResponseCache};
use esgkg::{pattern_forge, Gateway, ModelSpec, NewsArticle};

#[test]
fn shipped_fixture_store_is_well_formed() {
    let store = register_fixtures(common::repo_root().join("fixtures/demo")).unwrap();
    assert_eq!(store.len(), 90);
}

#[test]
fn offline_gateway_refuses_unrecorded_prompts() {
    let gw = Gateway::offline(common::repo_root().join("fixtures/demo")).unwrap();
    let req = ChatRequest::new(&ModelSpec::new("replay", "demo-model-a"), "system", "never recorded");
    assert!(matches!(gw.complete(&req), Err(GatewayError::Policy { .. })));
}

#[test]
fn recorded_exchanges_replay_without_the_provider() {
    let dir = tempfile::tempdir().unwrap();
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&calls);
    let provider = FnProvider(move |req: &ChatRequest| {
        counter.fetch_add(1, Ordering::SeqCst);
        Ok(format!("echo: {}", req.user_prompt))
    });
    let live =
        Gateway::new().with_provider("replay", Arc::new(provider)).with_cache(ResponseCache::open(dir.path()).unwrap());
    let model = ModelSpec::new("replay", "m");
    let req = ChatRequest::new(&model, "sys", "hello");
    assert_eq!(live.complete(&req).unwrap(), "echo: hello");
    assert_eq!(live.complete(&req).unwrap(), "echo: hello");
    assert_eq!(calls.load(Ordering::SeqCst), 1);

    let offline = Gateway::offline(dir.path()).unwrap();
    assert_eq!(offline.complete(&req).unwrap(), "echo: hello");
    assert_eq!(register_fixtures(dir.path()).unwrap().len(), 1);
}

#[test]
fn extraction_is_identical_at_any_parallelism() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let (config, _) = common::run_demo(&out);
    let articles: Vec<NewsArticle> =
        from_jsonl(&std::fs::read_to_string(out.join("ingest/articles.jsonl")).unwrap()).unwrap();
    let patterns = pattern_forge::load_store(&out.join("patterns/store")).unwrap();
    let run = |parallelism: usize| {
        let gateway = Gateway::offline(config.fixtures_dir()).unwrap().with_parallelism(parallelism);
        let ctx = ExtractionContext {
            gateway: &gateway,
            model: config.models.extract.clone(),
            max_retries: config.gateway.repair_retries,
            extracted_at: Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
        };
        let result = run_extraction(&articles, &patterns, &ctx);
        (result.events(), result.rejections(), result.entities())
    };
    let sequential = run(1);
    assert!(!sequential.0.is_empty());
    assert_eq!(sequential, run(8));
}
