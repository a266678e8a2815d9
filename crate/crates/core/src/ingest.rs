//! Corpus loading and the two-stage candidate filter.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::llm::{Gateway, ModelSpec};
use crate::structured::{self, AskError};
use crate::{par, prompts};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read corpus {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("integrity: {0}")]
    Integrity(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sentiment {
    Negative,
    Neutral,
    Positive,
}

impl FromStr for Sentiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "negative" => Ok(Sentiment::Negative),
            "neutral" => Ok(Sentiment::Neutral),
            "positive" => Ok(Sentiment::Positive),
            other => Err(format!("unknown sentiment {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NewsArticle {
    pub article_id: String,
    pub url: String,
    pub title: String,
    pub body: String,
    pub language: String,
    pub published_date: NaiveDate,
    pub source_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment_hint: Option<Sentiment>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CorpusReject {
    pub line: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article_id: Option<String>,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub articles: Vec<NewsArticle>,
    pub rejects: Vec<CorpusReject>,
}

/// Accepts both the documented field names and the common webz.io export
/// names (`uuid`, `text`, `published`, `site`, `sentiment`).
#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawRecord {
    #[serde(alias = "uuid")]
    article_id: Option<String>,
    #[serde(default)]
    url: Option<String>,
    #[serde(default)]
    title: Option<String>,
    #[serde(alias = "text")]
    body: Option<String>,
    #[serde(default)]
    language: Option<String>,
    #[serde(alias = "published")]
    published_date: Option<String>,
    #[serde(alias = "site", alias = "source")]
    source_name: Option<String>,
    #[serde(alias = "sentiment")]
    sentiment_hint: Option<String>,
}

fn language_tag(raw: &str) -> String {
    let lower = raw.trim().to_ascii_lowercase();
    let mapped = match lower.as_str() {
        "english" => "en",
        "german" => "de",
        "french" => "fr",
        "spanish" => "es",
        "italian" => "it",
        "portuguese" => "pt",
        "dutch" => "nl",
        "japanese" => "ja",
        "chinese" => "zh",
        "korean" => "ko",
        "russian" => "ru",
        _ => return raw.trim().to_string(),
    };
    mapped.to_string()
}

fn parse_date(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .or_else(|| chrono::DateTime::parse_from_rfc3339(raw).ok().map(|d| d.date_naive()))
        .or_else(|| raw.get(..10).and_then(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").ok()))
}

fn parse_record(line: &str) -> Result<NewsArticle, (Option<String>, String)> {
    let value: Value = serde_json::from_str(line).map_err(|e| (None, format!("malformed record: {e}")))?;
    let raw: RawRecord = serde_json::from_value(value).map_err(|e| (None, format!("malformed record: {e}")))?;
    let id = raw.article_id.filter(|s| !s.trim().is_empty());
    let Some(article_id) = id else {
        return Err((None, "missing articleId".into()));
    };
    let fail = |reason: &str| (Some(article_id.clone()), reason.to_string());
    let body = raw.body.unwrap_or_default();
    if body.trim().is_empty() {
        return Err(fail("empty body"));
    }
    let published_date = raw
        .published_date
        .as_deref()
        .and_then(parse_date)
        .ok_or_else(|| fail("missing or unparseable publishedDate"))?;
    let sentiment_hint = match raw.sentiment_hint.as_deref().map(str::trim).filter(|s| !s.is_empty()) {
        Some(s) => Some(s.parse::<Sentiment>().map_err(|e| fail(&e))?),
        None => None,
    };
    Ok(NewsArticle {
        article_id: article_id.trim().to_string(),
        url: raw.url.unwrap_or_default(),
        title: raw.title.unwrap_or_default(),
        body,
        language: raw.language.as_deref().map(language_tag).unwrap_or_default(),
        published_date,
        source_name: raw.source_name.unwrap_or_default(),
        sentiment_hint,
    })
}

/// Parses a line-delimited corpus. Malformed records are reported in
/// `rejects`; more than `max_malformed_fraction` of them is an error.
pub fn parse_corpus(text: &str, max_malformed_fraction: f64) -> Result<Corpus, IngestError> {
    let mut corpus = Corpus::default();
    let mut ids = BTreeSet::new();
    let mut records = 0usize;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records += 1;
        match parse_record(line) {
            Ok(article) => {
                if !ids.insert(article.article_id.clone()) {
                    return Err(IngestError::Integrity(format!("duplicate articleId {:?}", article.article_id)));
                }
                corpus.articles.push(article);
            }
            Err((article_id, reason)) => corpus.rejects.push(CorpusReject { line: n + 1, article_id, reason }),
        }
    }
    if records > 0 {
        let fraction = corpus.rejects.len() as f64 / records as f64;
        if fraction > max_malformed_fraction {
            return Err(IngestError::Integrity(format!(
                "{} of {records} records malformed ({:.0}% > {:.0}% allowed); is this the documented corpus format?",
                corpus.rejects.len(),
                fraction * 100.0,
                max_malformed_fraction * 100.0
            )));
        }
    }
    Ok(corpus)
}

pub fn load_corpus(path: impl AsRef<Path>, max_malformed_fraction: f64) -> Result<Corpus, IngestError> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    parse_corpus(&text, max_malformed_fraction)
}

/// Frequent English character trigrams (word-boundary padded).
const ENGLISH_TRIGRAMS: &[&str] = &[
    " th", "the", "he ", "ing", "ng ", " an", "and", "nd ", " of", "of ", " to", "to ", "ion", "on ", "ed ", " in",
    "in ", "er ", "tio", "ent", "es ", " co", "re ", "at ", "is ", " a ", "ati", "for", "or ", " fo", "her", "ter",
    "hat", "tha", "ere", "ate", "his", "con", "res", "ver", "all", "ons", "nce", "men", "ith", "ted", "ers", "pro",
    "thi", "wit", "are", "ess", "not", "ive", "was", "ect", "rea", "com", "eve", "per", "int", "est", "sta", "cti",
    "ica", "ist", "ear", "ain", "one", "our", "iti", "rat", "ly ", " wh", " be", " wa", " ha", " re", " on", "s a",
    "s t", "e t", "d t", "t t", "e a", "e s", "y t", "ts ", "al ", "an ",
];

/// Share of the text's trigrams that are frequent English trigrams.
pub fn english_trigram_score(text: &str) -> f64 {
    let cleaned: String = text.to_lowercase().chars().map(|c| if c.is_alphabetic() { c } else { ' ' }).collect();
    let padded = format!(" {} ", cleaned.split_whitespace().collect::<Vec<_>>().join(" "));
    let chars: Vec<char> = padded.chars().collect();
    if chars.len() < 3 {
        return 0.0;
    }
    let total = chars.len() - 2;
    let hits = chars
        .windows(3)
        .filter(|w| {
            let tri: String = w.iter().collect();
            ENGLISH_TRIGRAMS.contains(&tri.as_str())
        })
        .count();
    hits as f64 / total as f64
}

pub const ENGLISH_SCORE_THRESHOLD: f64 = 0.2;

/// Uses the language tag when present, the trigram heuristic otherwise.
pub fn is_english(article: &NewsArticle) -> bool {
    let tag = article.language.trim();
    if tag.is_empty() {
        english_trigram_score(&format!("{} {}", article.title, article.body)) >= ENGLISH_SCORE_THRESHOLD
    } else {
        tag.split(['-', '_']).next().is_some_and(|primary| primary.eq_ignore_ascii_case("en"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Stage1,
    Stage2,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FilterVerdict {
    pub article_id: String,
    pub stage: Stage,
    pub kept: bool,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub company: Option<String>,
}

#[derive(Clone, Copy, Debug)]
pub struct FilterOptions {
    pub max_retries: u32,
    /// Drop articles whose feed sentiment is present and not negative.
    pub require_negative_hint: bool,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions { max_retries: 2, require_negative_hint: true }
    }
}

fn bool_field(obj: &serde_json::Map<String, Value>, key: &str, violations: &mut Vec<String>) -> bool {
    match obj.get(key) {
        Some(Value::Bool(b)) => *b,
        Some(Value::String(s)) if s.eq_ignore_ascii_case("true") || s.eq_ignore_ascii_case("false") => {
            s.eq_ignore_ascii_case("true")
        }
        _ => {
            violations.push(format!("{key} must be true or false"));
            false
        }
    }
}

fn reason_field(obj: &serde_json::Map<String, Value>) -> String {
    obj.get("reason").and_then(Value::as_str).unwrap_or("").trim().to_string()
}

fn undecided(article: &NewsArticle, stage: Stage, model: &ModelSpec, err: AskError) -> FilterVerdict {
    log::warn!("{stage} left {} undecided: {err}", article.article_id);
    FilterVerdict {
        article_id: article.article_id.clone(),
        stage,
        kept: false,
        reason: format!("undecided: {err}"),
        model_id: Some(model.model_id.clone()),
        company: None,
    }
}

fn judge_stage1(article: &NewsArticle, gateway: &Gateway, model: &ModelSpec, options: &FilterOptions) -> FilterVerdict {
    let verdict = |kept: bool, reason: &str, model_id: Option<String>| FilterVerdict {
        article_id: article.article_id.clone(),
        stage: Stage::Stage1,
        kept,
        reason: reason.to_string(),
        model_id,
        company: None,
    };
    if !is_english(article) {
        return verdict(false, "non-English", None);
    }
    if options.require_negative_hint {
        if let Some(hint) = article.sentiment_hint.filter(|s| *s != Sentiment::Negative) {
            return verdict(false, &format!("not negatively framed (feed sentiment {hint:?})"), None);
        }
    }
    let parsed = structured::ask(
        gateway,
        model,
        prompts::STAGE1_SYSTEM,
        &prompts::stage1_user(article),
        options.max_retries,
        |raw| {
            let obj = structured::json_object(raw)?;
            let mut violations = Vec::new();
            let keep = bool_field(&obj, "keep", &mut violations);
            if violations.is_empty() {
                Ok((keep, reason_field(&obj)))
            } else {
                Err(violations)
            }
        },
    );
    match parsed {
        Ok((keep, reason)) => {
            let reason =
                if reason.is_empty() { if keep { "relevant" } else { "unrelated" }.to_string() } else { reason };
            verdict(keep, &reason, Some(model.model_id.clone()))
        }
        Err(e) => undecided(article, Stage::Stage1, model, e),
    }
}

fn judge_stage2(article: &NewsArticle, gateway: &Gateway, model: &ModelSpec, options: &FilterOptions) -> FilterVerdict {
    let parsed = structured::ask(
        gateway,
        model,
        prompts::STAGE2_SYSTEM,
        &prompts::stage2_user(article),
        options.max_retries,
        |raw| {
            let obj = structured::json_object(raw)?;
            let mut violations = Vec::new();
            let mentions = bool_field(&obj, "mentionsCompany", &mut violations);
            let negative = bool_field(&obj, "negativeEsgEvent", &mut violations);
            let company = obj.get("company").and_then(Value::as_str).map(str::trim).filter(|s| !s.is_empty());
            if mentions && company.is_none() {
                violations.push("company must be named when mentionsCompany is true".into());
            }
            if violations.is_empty() {
                Ok((mentions, negative, company.map(str::to_string), reason_field(&obj)))
            } else {
                Err(violations)
            }
        },
    );
    match parsed {
        Ok((mentions, negative, company, reason)) => {
            let kept = mentions && negative;
            let reason = if !reason.is_empty() {
                reason
            } else if kept {
                "company with negative ESG event".into()
            } else if !mentions {
                "no company named".into()
            } else {
                "no negative ESG event".into()
            };
            FilterVerdict {
                article_id: article.article_id.clone(),
                stage: Stage::Stage2,
                kept,
                reason,
                model_id: Some(model.model_id.clone()),
                company,
            }
        }
        Err(e) => undecided(article, Stage::Stage2, model, e),
    }
}

fn run_stage(
    articles: &[NewsArticle],
    gateway: &Gateway,
    judge: impl Fn(&NewsArticle) -> FilterVerdict + Sync + Send,
) -> (Vec<NewsArticle>, Vec<FilterVerdict>) {
    let verdicts = par::map_bounded(articles, gateway.parallelism(), judge);
    let kept = articles.iter().zip(&verdicts).filter(|(_, v)| v.kept).map(|(a, _)| a.clone()).collect();
    (kept, verdicts)
}

/// Language and sentiment checks, then a topical relevance prompt. One
/// verdict per input article, in input order.
pub fn stage1_filter(
    articles: &[NewsArticle],
    gateway: &Gateway,
    model: &ModelSpec,
    options: &FilterOptions,
) -> (Vec<NewsArticle>, Vec<FilterVerdict>) {
    run_stage(articles, gateway, |a| judge_stage1(a, gateway, model, options))
}

/// Keeps articles that name a company and report a negative ESG event.
pub fn stage2_filter(
    articles: &[NewsArticle],
    gateway: &Gateway,
    model: &ModelSpec,
    options: &FilterOptions,
) -> (Vec<NewsArticle>, Vec<FilterVerdict>) {
    run_stage(articles, gateway, |a| judge_stage2(a, gateway, model, options))
}

/// Append-only JSONL audit log of filter verdicts.
pub struct VerdictLog {
    file: Mutex<std::fs::File>,
}

impl VerdictLog {
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(VerdictLog { file: Mutex::new(file) })
    }

    pub fn append(&self, verdicts: &[FilterVerdict]) -> std::io::Result<()> {
        let text = crate::fsutil::to_jsonl(verdicts);
        let mut file = self.file.lock().expect("verdict log lock poisoned");
        file.write_all(text.as_bytes())?;
        file.flush()
    }
}
