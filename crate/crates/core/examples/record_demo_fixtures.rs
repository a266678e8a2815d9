//! Re-records `fixtures/demo` from the scripted responder in `demo/script.json`
//! and refreshes `demo/expected-manifest.json`.
//!
//! ```text
//! cargo run -p esgkg --example record_demo_fixtures [demo/demo.toml]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use esgkg::llm::{ChatRequest, FnProvider, GatewayError, ResponseCache};
use esgkg::pipeline::{build_gateway, run_pipeline, Mode};
use esgkg::{prompts, Gateway, PipelineConfig};
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Script {
    comments: BTreeMap<String, String>,
    patterns: BTreeMap<String, Vec<Value>>,
    patterns_first_try_short: Vec<String>,
    articles: BTreeMap<String, ArticleScript>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ArticleScript {
    stage1: Option<Value>,
    stage2: Option<Value>,
    #[serde(default)]
    entities: Vec<(String, String)>,
    entities_first_try: Option<Value>,
    #[serde(default)]
    matches: Vec<String>,
    #[serde(default)]
    triples: BTreeMap<String, Value>,
    #[serde(default)]
    one_shot: Vec<u8>,
}

const REPAIR_MARKER: &str = "could not be used";

fn fenced(v: &Value) -> String {
    format!("```json\n{}\n```", serde_json::to_string_pretty(v).unwrap())
}

fn field_after<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(prefix)).map(str::trim)
}

fn principle_of(user: &str) -> Option<String> {
    let rest = user.strip_prefix("Principle ")?;
    Some(rest.split(|c: char| !c.is_ascii_digit()).next()?.to_string())
}

fn pattern_of(user: &str) -> Option<&str> {
    let line = user.lines().nth(1)?.strip_prefix("- ")?;
    line.split(':').next()
}

fn unscripted(what: String) -> GatewayError {
    GatewayError::Config(format!("demo script has no reply for {what}"))
}

fn respond(script: &Script, req: &ChatRequest) -> Result<String, GatewayError> {
    let system = req.system_prompt.as_str();
    let user = req.user_prompt.as_str();
    let repairing = user.contains(REPAIR_MARKER);

    if system == prompts::COMMENT_SYSTEM || system == prompts::PATTERNS_SYSTEM {
        let p = principle_of(user).ok_or_else(|| unscripted("a principle prompt".into()))?;
        if system == prompts::COMMENT_SYSTEM {
            return script.comments.get(&p).cloned().ok_or_else(|| unscripted(format!("comment {p}")));
        }
        let mut patterns = script.patterns.get(&p).cloned().ok_or_else(|| unscripted(format!("patterns {p}")))?;
        if !repairing && script.patterns_first_try_short.contains(&p) {
            patterns.truncate(2);
        }
        return Ok(fenced(&json!({ "patterns": patterns })));
    }

    let id = field_after(user, "Article ID:").ok_or_else(|| unscripted("a prompt without an article".into()))?;
    let article = script.articles.get(id).ok_or_else(|| unscripted(format!("article {id}")))?;
    let reply = if system == prompts::STAGE1_SYSTEM {
        article.stage1.clone()
    } else if system == prompts::STAGE2_SYSTEM {
        article.stage2.clone()
    } else if system == prompts::ENTITIES_SYSTEM {
        match (&article.entities_first_try, repairing) {
            (Some(bad), false) => Some(bad.clone()),
            _ => Some(json!({
                "entities": article.entities.iter()
                    .map(|(text, kind)| json!({ "text": text, "kind": kind }))
                    .collect::<Vec<_>>()
            })),
        }
    } else if system == prompts::MATCH_SYSTEM {
        Some(json!({ "matches": article.matches }))
    } else if system == prompts::TRIPLE_SYSTEM {
        pattern_of(user).and_then(|p| article.triples.get(p).cloned())
    } else if system == prompts::ONE_SHOT_SYSTEM {
        Some(json!({ "principles": article.one_shot }))
    } else {
        None
    };
    let reply = reply.ok_or_else(|| unscripted(format!("{id} under {:?}", system.lines().next())))?;
    Ok(match id {
        "a07" => format!("Here is the result.\n\n{}", fenced(&reply)),
        _ => fenced(&reply),
    })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize()?;
    let config_path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| root.join("demo/demo.toml"));
    let config = PipelineConfig::load(&config_path)?;
    let demo_dir = config_path.parent().unwrap_or(Path::new("."));
    let script: Script = serde_json::from_str(&std::fs::read_to_string(demo_dir.join("script.json"))?)?;
    let script = Arc::new(script);

    let fixtures = config.fixtures_dir();
    if fixtures.exists() {
        std::fs::remove_dir_all(&fixtures)?;
    }
    let responder = {
        let script = Arc::clone(&script);
        FnProvider(move |req: &ChatRequest| respond(&script, req))
    };
    let gateway = Gateway::new()
        .with_provider("replay", Arc::new(responder))
        .with_cache(ResponseCache::open(&fixtures)?)
        .with_parallelism(config.gateway.parallelism);

    let scratch = tempfile::tempdir()?;
    let mut recording = config.clone();
    recording.paths.out = scratch.path().join("record");
    let report = run_pipeline(&recording, &gateway, Mode::Record)?;
    println!("recorded {} exchanges into {}", report.stats.live_calls, fixtures.display());

    let mut replay = config.clone();
    replay.paths.out = scratch.path().join("replay");
    let offline = build_gateway(&replay, Mode::Offline)?;
    let report = run_pipeline(&replay, &offline, Mode::Offline)?;
    let golden = demo_dir.join("expected-manifest.json");
    std::fs::write(&golden, report.manifest.to_json())?;
    println!("wrote {}", golden.display());
    Ok(())
}
