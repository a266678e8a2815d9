//! Entity extraction, pattern matching, grounded triple extraction, and the
//! one-shot baseline classifier.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::ingest::NewsArticle;
use crate::llm::{ChatRequest, Gateway, GatewayError, ModelSpec};
use crate::ontology::Principle;
use crate::pattern_forge::{PatternId, ViolationPattern};
use crate::structured::{self, AskError};
use crate::{par, prompts};

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("precondition: {0}")]
    Precondition(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("unusable model output for article {article_id}: {message}")]
    Unparseable { article_id: String, message: String, raw: String },
}

fn from_ask(article_id: &str, e: AskError) -> ExtractionError {
    match e {
        AskError::Gateway(g) => ExtractionError::Gateway(g),
        AskError::Invalid { violations, raw, attempts } => ExtractionError::Unparseable {
            article_id: article_id.to_string(),
            message: format!("{} after {attempts} attempt(s)", violations.join("; ")),
            raw,
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityKind {
    Organization,
    Person,
    Location,
}

impl EntityKind {
    fn parse(raw: &str) -> Option<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "organization" | "organisation" | "org" | "company" => Some(EntityKind::Organization),
            "person" | "per" => Some(EntityKind::Person),
            "location" | "loc" | "place" | "gpe" => Some(EntityKind::Location),
            _ => None,
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            EntityKind::Organization => "organization",
            EntityKind::Person => "person",
            EntityKind::Location => "location",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

const CORPORATE_SUFFIXES: [&str; 6] = ["inc", "corp", "ltd", "plc", "gmbh", "co"];

/// Case-fold, collapse whitespace, strip trailing punctuation, and fold the
/// corporate suffixes Inc, Corp, Ltd, PLC, GmbH and Co. Deliberately exact:
/// no fuzzy matching.
pub fn normalize_entity(surface: &str) -> String {
    let is_trailing_punct = |c: char| c.is_ascii_punctuation() && !matches!(c, ')' | ']' | '&');
    let mut tokens: Vec<String> = surface.to_lowercase().split_whitespace().map(str::to_string).collect();
    loop {
        while let Some(last) = tokens.last_mut() {
            let trimmed = last.trim_end_matches(is_trailing_punct).to_string();
            if trimmed.is_empty() {
                tokens.pop();
            } else {
                *last = trimmed;
                break;
            }
        }
        match tokens.last() {
            Some(last) if tokens.len() > 1 && CORPORATE_SUFFIXES.contains(&last.as_str()) => {
                tokens.pop();
            }
            _ => break,
        }
    }
    tokens.join(" ")
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NamedEntity {
    pub surface: String,
    pub normalized: String,
    pub kind: EntityKind,
    pub article_id: String,
}

impl NamedEntity {
    pub fn new(surface: &str, kind: EntityKind, article_id: &str) -> Self {
        NamedEntity {
            surface: surface.to_string(),
            normalized: normalize_entity(surface),
            kind,
            article_id: article_id.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViolationEvent {
    pub article_id: String,
    pub pattern_iri: String,
    pub principle_id: u8,
    pub subject: NamedEntity,
    pub action: String,
    pub object: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_entity: Option<NamedEntity>,
    pub evidence: String,
    pub model_id: String,
    pub extracted_at: DateTime<Utc>,
    /// The reporting article's date; event dates are article dates.
    pub published_date: NaiveDate,
}

impl ViolationEvent {
    pub fn pattern_id(&self) -> Option<PatternId> {
        crate::vocab::parse_pattern_class_iri(&self.pattern_iri)
            .map(|(principle, index)| PatternId { principle, index })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectionKind {
    Ungrounded,
    NoEvidence,
    Malformed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Rejection {
    pub article_id: String,
    pub pattern: PatternId,
    pub kind: RejectionKind,
    pub detail: String,
    pub raw: String,
}

#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TripleOutcome {
    Accepted(ViolationEvent),
    Rejected(Rejection),
}

/// Shared settings for one extraction run.
#[derive(Debug, Clone)]
pub struct ExtractionContext<'a> {
    pub gateway: &'a Gateway,
    pub model: ModelSpec,
    pub max_retries: u32,
    pub extracted_at: DateTime<Utc>,
}

fn require_body(article: &NewsArticle) -> Result<(), ExtractionError> {
    if article.body.trim().is_empty() {
        return Err(ExtractionError::Precondition(format!("article {} has an empty body", article.article_id)));
    }
    Ok(())
}

/// Entities the model reports, minus any whose surface form does not occur
/// in the title or body.
pub fn extract_entities(
    article: &NewsArticle,
    ctx: &ExtractionContext<'_>,
) -> Result<Vec<NamedEntity>, ExtractionError> {
    require_body(article)?;
    let raw_entities = structured::ask(
        ctx.gateway,
        &ctx.model,
        prompts::ENTITIES_SYSTEM,
        &prompts::entities_user(article),
        ctx.max_retries,
        |raw| {
            let obj = structured::json_object(raw)?;
            let Some(Value::Array(items)) = obj.get("entities") else {
                return Err(vec!["reply must contain an \"entities\" list".into()]);
            };
            let mut out = Vec::new();
            for item in items {
                let text = item.get("text").and_then(Value::as_str).map(str::trim).unwrap_or("");
                let kind = item.get("kind").and_then(Value::as_str).unwrap_or("");
                if text.is_empty() {
                    return Err(vec!["every entity needs a non-empty text".into()]);
                }
                out.push((text.to_string(), kind.to_string()));
            }
            Ok(out)
        },
    )
    .map_err(|e| from_ask(&article.article_id, e))?;

    let mut seen = BTreeSet::new();
    let mut entities = Vec::new();
    for (text, kind) in raw_entities {
        let Some(kind) = EntityKind::parse(&kind) else {
            log::warn!("{}: dropping entity {text:?} with unknown kind {kind:?}", article.article_id);
            continue;
        };
        if !article.body.contains(&text) && !article.title.contains(&text) {
            log::warn!("{}: dropping entity {text:?} not present in the article text", article.article_id);
            continue;
        }
        if normalize_entity(&text).is_empty() {
            continue;
        }
        if seen.insert((kind, text.clone())) {
            entities.push(NamedEntity::new(&text, kind, &article.article_id));
        }
    }
    entities.sort();
    Ok(entities)
}

/// Ids of the patterns the article matches, sorted by (principle, index).
pub fn match_patterns(
    article: &NewsArticle,
    entities: &[NamedEntity],
    patterns: &[ViolationPattern],
    ctx: &ExtractionContext<'_>,
) -> Result<Vec<PatternId>, ExtractionError> {
    require_body(article)?;
    let known: BTreeSet<PatternId> = patterns.iter().map(ViolationPattern::id).collect();
    let matched = structured::ask(
        ctx.gateway,
        &ctx.model,
        prompts::MATCH_SYSTEM,
        &prompts::match_user(article, entities, patterns),
        ctx.max_retries,
        |raw| {
            let obj = structured::json_object(raw)?;
            let Some(Value::Array(items)) = obj.get("matches") else {
                return Err(vec!["reply must contain a \"matches\" list".into()]);
            };
            let mut ids = BTreeSet::new();
            let mut violations = Vec::new();
            for item in items {
                match item.as_str().map(str::parse::<PatternId>) {
                    Some(Ok(id)) if known.contains(&id) => {
                        ids.insert(id);
                    }
                    _ => violations.push(format!("{item} is not one of the listed pattern ids")),
                }
            }
            if violations.is_empty() {
                Ok(ids)
            } else {
                Err(violations)
            }
        },
    )
    .map_err(|e| from_ask(&article.article_id, e))?;
    Ok(matched.into_iter().collect())
}

pub const MAX_EVIDENCE_SENTENCES: usize = 3;

/// Counts sentences. A boundary is terminal punctuation followed by the end
/// of text or by whitespace and a capital letter, so "U.S. regulators" is one.
pub fn sentence_count(text: &str) -> usize {
    let chars: Vec<char> = text.trim().chars().collect();
    let mut count = 0;
    for (i, c) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let next = chars[i + 1..].iter().find(|n| !n.is_whitespace());
        let spaced = chars.get(i + 1).is_some_and(|n| n.is_whitespace());
        if next.is_none() || (spaced && next.is_some_and(|n| n.is_uppercase() || n.is_ascii_digit() || *n == '"')) {
            count += 1;
        }
    }
    if !chars.is_empty() && !matches!(chars.last(), Some('.' | '!' | '?')) {
        count += 1;
    }
    count
}

/// Checks a triple reply in the fixed order Ungrounded, NoEvidence,
/// Malformed and reports the first failure.
pub fn extract_triple(
    article: &NewsArticle,
    pattern: &ViolationPattern,
    entities: &[NamedEntity],
    ctx: &ExtractionContext<'_>,
) -> Result<TripleOutcome, ExtractionError> {
    require_body(article)?;
    let raw = ctx.gateway.complete(&ChatRequest::new(
        &ctx.model,
        prompts::TRIPLE_SYSTEM,
        prompts::triple_user(article, pattern, entities),
    ))?;
    let reject = |kind: RejectionKind, detail: String| {
        TripleOutcome::Rejected(Rejection {
            article_id: article.article_id.clone(),
            pattern: pattern.id(),
            kind,
            detail,
            raw: raw.clone(),
        })
    };
    let obj = match structured::json_object(&raw) {
        Ok(obj) => obj,
        Err(v) => return Ok(reject(RejectionKind::Malformed, v.join("; "))),
    };
    let field = |key: &str| obj.get(key).and_then(Value::as_str).map(str::trim).unwrap_or("").to_string();
    let (subject, action, object, evidence) = (field("subject"), field("action"), field("object"), field("evidence"));

    let subject_norm = normalize_entity(&subject);
    let org = entities
        .iter()
        .find(|e| e.kind == EntityKind::Organization && !subject_norm.is_empty() && e.normalized == subject_norm);
    let Some(org) = org else {
        let detail = if subject.is_empty() {
            "no subject given".to_string()
        } else if entities.iter().any(|e| e.kind == EntityKind::Person && e.normalized == subject_norm) {
            format!("subject {subject:?} is a Person, not an Organization")
        } else {
            format!("subject {subject:?} is not among the article's organizations")
        };
        return Ok(reject(RejectionKind::Ungrounded, detail));
    };
    if evidence.is_empty() {
        return Ok(reject(RejectionKind::NoEvidence, "no evidence given".into()));
    }
    if !article.body.contains(&evidence) {
        return Ok(reject(RejectionKind::NoEvidence, "evidence is not a verbatim substring of the body".into()));
    }
    let mut problems = Vec::new();
    if action.is_empty() {
        problems.push("empty action".to_string());
    }
    if object.is_empty() {
        problems.push("empty object".to_string());
    }
    let sentences = sentence_count(&evidence);
    if sentences > MAX_EVIDENCE_SENTENCES {
        problems.push(format!("evidence spans {sentences} sentences (max {MAX_EVIDENCE_SENTENCES})"));
    }
    if !problems.is_empty() {
        return Ok(reject(RejectionKind::Malformed, problems.join("; ")));
    }
    let object_norm = normalize_entity(&object);
    let object_bare = ["the ", "a ", "an "].iter().find_map(|d| object_norm.strip_prefix(d)).unwrap_or(&object_norm);
    let object_entity = entities.iter().find(|e| e.normalized == object_norm || e.normalized == object_bare).cloned();
    Ok(TripleOutcome::Accepted(ViolationEvent {
        article_id: article.article_id.clone(),
        pattern_iri: pattern.class_iri(),
        principle_id: pattern.principle_id,
        subject: org.clone(),
        action,
        object,
        object_entity,
        evidence,
        model_id: ctx.model.model_id.clone(),
        extracted_at: ctx.extracted_at,
        published_date: article.published_date,
    }))
}

#[derive(Clone, Copy, Debug, Default)]
pub struct OneShotOptions {
    /// Describe principles by their official text instead of the comment.
    pub use_official_text: bool,
    pub max_retries: u32,
}

/// Baseline: principles assigned straight from descriptions and the full
/// article. No patterns, no grounding.
pub fn one_shot_classify(
    article: &NewsArticle,
    principles: &[Principle],
    gateway: &Gateway,
    model: &ModelSpec,
    options: &OneShotOptions,
) -> Result<BTreeSet<u8>, ExtractionError> {
    require_body(article)?;
    if !options.use_official_text && principles.iter().any(|p| p.comment.is_none()) {
        return Err(ExtractionError::Precondition("one-shot baseline needs principle comments".into()));
    }
    structured::ask(
        gateway,
        model,
        prompts::ONE_SHOT_SYSTEM,
        &prompts::one_shot_user(article, principles, options.use_official_text),
        options.max_retries,
        |raw| {
            let obj = structured::json_object(raw)?;
            let Some(Value::Array(items)) = obj.get("principles") else {
                return Err(vec!["reply must contain a \"principles\" list".into()]);
            };
            let mut ids = BTreeSet::new();
            for item in items {
                match item.as_u64() {
                    Some(n @ 1..=10) => {
                        ids.insert(n as u8);
                    }
                    _ => return Err(vec![format!("{item} is not a principle number 1-10")]),
                }
            }
            Ok(ids)
        },
    )
    .map_err(|e| from_ask(&article.article_id, e))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ArticleExtraction {
    pub article_id: String,
    pub entities: Vec<NamedEntity>,
    pub matches: Vec<PatternId>,
    pub events: Vec<ViolationEvent>,
    pub rejections: Vec<Rejection>,
}

/// Entities, then matching, then one triple attempt per matched pattern.
pub fn extract_article(
    article: &NewsArticle,
    patterns: &[ViolationPattern],
    ctx: &ExtractionContext<'_>,
) -> Result<ArticleExtraction, ExtractionError> {
    let entities = extract_entities(article, ctx)?;
    let matches = match_patterns(article, &entities, patterns, ctx)?;
    let by_id: BTreeMap<PatternId, &ViolationPattern> = patterns.iter().map(|p| (p.id(), p)).collect();
    let mut out = ArticleExtraction { article_id: article.article_id.clone(), entities, matches, ..Default::default() };
    for id in &out.matches {
        match extract_triple(article, by_id[id], &out.entities, ctx)? {
            TripleOutcome::Accepted(event) => out.events.push(event),
            TripleOutcome::Rejected(rejection) => {
                log::info!(
                    "{} {}: {:?} ({})",
                    rejection.article_id,
                    rejection.pattern,
                    rejection.kind,
                    rejection.detail
                );
                out.rejections.push(rejection);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ArticleFailure {
    pub article_id: String,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExtractionRun {
    pub articles: Vec<ArticleExtraction>,
    pub failures: Vec<ArticleFailure>,
}

impl ExtractionRun {
    pub fn events(&self) -> Vec<ViolationEvent> {
        self.articles.iter().flat_map(|a| a.events.iter().cloned()).collect()
    }

    pub fn entities(&self) -> Vec<NamedEntity> {
        self.articles.iter().flat_map(|a| a.entities.iter().cloned()).collect()
    }

    pub fn rejections(&self) -> Vec<Rejection> {
        self.articles.iter().flat_map(|a| a.rejections.iter().cloned()).collect()
    }
}

/// Runs [`extract_article`] over independent articles with the gateway's
/// parallelism bound. A failing article is recorded, not fatal.
pub fn run_extraction(
    articles: &[NewsArticle],
    patterns: &[ViolationPattern],
    ctx: &ExtractionContext<'_>,
) -> ExtractionRun {
    let results = par::map_bounded(articles, ctx.gateway.parallelism(), |a| extract_article(a, patterns, ctx));
    let mut run = ExtractionRun::default();
    for (article, result) in articles.iter().zip(results) {
        match result {
            Ok(extraction) => run.articles.push(extraction),
            Err(e) => {
                log::warn!("extraction failed for {}: {e}", article.article_id);
                run.failures.push(ArticleFailure { article_id: article.article_id.clone(), error: e.to_string() });
            }
        }
    }
    run
}

/// Grounding checks that must hold for every accepted event.
pub fn grounding_violations(event: &ViolationEvent, article: &NewsArticle, entities: &[NamedEntity]) -> Vec<String> {
    let mut out = Vec::new();
    if !article.body.contains(&event.evidence) {
        out.push("evidence is not a substring of the body".to_string());
    }
    let orgs: BTreeSet<&str> = entities
        .iter()
        .filter(|e| e.kind == EntityKind::Organization && e.article_id == event.article_id)
        .map(|e| e.normalized.as_str())
        .collect();
    if event.subject.kind != EntityKind::Organization || !orgs.contains(event.subject.normalized.as_str()) {
        out.push(format!("subject {:?} is not an extracted organization", event.subject.surface));
    }
    if event.pattern_id().map(|id| id.principle) != Some(event.principle_id) {
        out.push(format!("pattern {} does not belong to principle {}", event.pattern_iri, event.principle_id));
    }
    out
}
