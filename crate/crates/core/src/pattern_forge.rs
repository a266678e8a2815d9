//! Violation patterns: generation through the gateway, structural
//! validation, the JSON-LD pattern store, and the human review gate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::llm::{Gateway, GatewayError, ModelSpec};
use crate::ontology::{Principle, PATTERNS_PER_PRINCIPLE, PRINCIPLE_COUNT};
use crate::rdf::{self, Graph, RdfError, Term};
use crate::structured::{self, AskError};
use crate::{prompts, vocab};

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("generation failed: {message}")]
    Generation { message: String, raw: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("pattern store {path}: {message}")]
    Store { path: String, message: String },
    #[error("review file line {line}: {message}")]
    ReviewParse { line: usize, message: String },
    #[error("review decision for unknown pattern {0}")]
    UnknownPattern(PatternId),
    #[error("edit of {id} fails validation: {}", violations.join("; "))]
    InvalidEdit { id: PatternId, violations: Vec<String> },
}

impl From<AskError> for ForgeError {
    fn from(e: AskError) -> Self {
        match e {
            AskError::Gateway(g) => ForgeError::Gateway(g),
            AskError::Invalid { attempts, violations, raw } => ForgeError::Generation {
                message: format!("{} after {attempts} attempt(s)", violations.join("; ")),
                raw,
            },
        }
    }
}

/// `p{principle}.{index}`, e.g. `p7.1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PatternId {
    pub principle: u8,
    pub index: u8,
}

impl PatternId {
    pub fn class_iri(self) -> String {
        vocab::pattern_class_iri(self.principle, self.index)
    }
}

impl fmt::Display for PatternId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}.{}", self.principle, self.index)
    }
}

impl FromStr for PatternId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("invalid pattern id {s:?} (expected p<principle>.<index>)");
        let (p, i) = s.trim().strip_prefix('p').and_then(|r| r.split_once('.')).ok_or_else(bad)?;
        let principle: u8 = p.parse().map_err(|_| bad())?;
        let index: u8 = i.parse().map_err(|_| bad())?;
        if !(1..=PRINCIPLE_COUNT).contains(&principle) || !(1..=PATTERNS_PER_PRINCIPLE).contains(&index) {
            return Err(bad());
        }
        Ok(PatternId { principle, index })
    }
}

impl Serialize for PatternId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PatternId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReviewState {
    Draft,
    Approved,
    Rejected,
    Edited,
}

impl ReviewState {
    pub fn is_promotable(self) -> bool {
        matches!(self, ReviewState::Approved | ReviewState::Edited)
    }
}

impl fmt::Display for ReviewState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for ReviewState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Draft" => Ok(ReviewState::Draft),
            "Approved" => Ok(ReviewState::Approved),
            "Rejected" => Ok(ReviewState::Rejected),
            "Edited" => Ok(ReviewState::Edited),
            other => Err(format!("unknown review state {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViolationPattern {
    pub principle_id: u8,
    pub index: u8,
    pub entity_a: String,
    pub action: String,
    pub entity_b: String,
    pub look_for: Vec<String>,
    pub ignore: Vec<String>,
    pub review_state: ReviewState,
}

impl ViolationPattern {
    pub fn id(&self) -> PatternId {
        PatternId { principle: self.principle_id, index: self.index }
    }

    pub fn class_iri(&self) -> String {
        self.id().class_iri()
    }
}

fn normalize_sentence(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").trim_end_matches(['.', '!', '?']).to_lowercase()
}

fn string_field(raw: &Map<String, Value>, key: &str, violations: &mut Vec<String>) -> String {
    match raw.get(key) {
        Some(Value::String(s)) if !s.trim().is_empty() => s.trim().to_string(),
        Some(Value::String(_)) | None | Some(Value::Null) => {
            violations.push(format!("{key} must be non-empty"));
            String::new()
        }
        Some(_) => {
            violations.push(format!("{key} must be a string"));
            String::new()
        }
    }
}

fn examples_field(raw: &Map<String, Value>, key: &str, violations: &mut Vec<String>) -> Vec<String> {
    let items = match raw.get(key) {
        Some(Value::Array(items)) => items,
        Some(Value::String(s)) => return examples_from(vec![s.clone()], key, violations),
        None | Some(Value::Null) => {
            violations.push(format!("{key} requires ≥1 example"));
            return Vec::new();
        }
        Some(_) => {
            violations.push(format!("{key} must be a list of sentences"));
            return Vec::new();
        }
    };
    let mut out = Vec::new();
    for item in items {
        match item {
            Value::String(s) => out.push(s.clone()),
            _ => violations.push(format!("{key} entries must be strings")),
        }
    }
    examples_from(out, key, violations)
}

fn examples_from(items: Vec<String>, key: &str, violations: &mut Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        let s = s.trim().to_string();
        if s.is_empty() {
            violations.push(format!("{key} contains an empty sentence"));
        } else if !out.contains(&s) {
            out.push(s);
        }
    }
    if out.is_empty() && !violations.iter().any(|v| v.starts_with(key)) {
        violations.push(format!("{key} requires ≥1 example"));
    }
    out
}

/// Validates one raw pattern object. The principle and index are taken
/// from the object when present, otherwise from `slot`. All violated
/// constraints are reported, not just the first.
pub fn validate_pattern(raw: &Value, slot: Option<PatternId>) -> Result<ViolationPattern, Vec<String>> {
    let Some(obj) = raw.as_object() else {
        return Err(vec!["pattern must be a JSON object".into()]);
    };
    let mut violations = Vec::new();
    let number =
        |key: &str, fallback: Option<u8>, range: std::ops::RangeInclusive<u8>, violations: &mut Vec<String>| {
            let value = match obj.get(key) {
                Some(v) => v.as_u64().and_then(|n| u8::try_from(n).ok()),
                None => fallback,
            };
            match value {
                Some(n) if range.contains(&n) => n,
                _ => {
                    violations.push(format!("{key} must be in {}..={}", range.start(), range.end()));
                    0
                }
            }
        };
    let principle_id = number("principleId", slot.map(|s| s.principle), 1..=PRINCIPLE_COUNT, &mut violations);
    let index = number("index", slot.map(|s| s.index), 1..=PATTERNS_PER_PRINCIPLE, &mut violations);
    let entity_a = string_field(obj, "entityA", &mut violations);
    let action = string_field(obj, "action", &mut violations);
    let entity_b = string_field(obj, "entityB", &mut violations);
    let look_for = examples_field(obj, "lookFor", &mut violations);
    let ignore = examples_field(obj, "ignore", &mut violations);
    let look_for_norm: BTreeSet<String> = look_for.iter().map(|s| normalize_sentence(s)).collect();
    for s in &ignore {
        if look_for_norm.contains(&normalize_sentence(s)) {
            violations.push(format!("lookFor and ignore must be disjoint; both contain {s:?}"));
        }
    }
    let review_state = match obj.get("reviewState").and_then(Value::as_str) {
        Some(s) => s.parse().unwrap_or_else(|e: String| {
            violations.push(e);
            ReviewState::Draft
        }),
        None => ReviewState::Draft,
    };
    if !violations.is_empty() {
        return Err(violations);
    }
    Ok(ViolationPattern { principle_id, index, entity_a, action, entity_b, look_for, ignore, review_state })
}

fn to_raw(pattern: &ViolationPattern) -> Value {
    serde_json::to_value(pattern).expect("pattern serializes")
}

#[derive(Clone, Copy, Debug)]
pub struct ForgeOptions {
    pub max_retries: u32,
    pub max_comment_chars: usize,
}

impl Default for ForgeOptions {
    fn default() -> Self {
        ForgeOptions { max_retries: 2, max_comment_chars: 800 }
    }
}

/// Asks for a one-paragraph summary of the principle. Internal whitespace
/// is collapsed so the result is always a single paragraph.
pub fn generate_comment(
    principle: &Principle,
    gateway: &Gateway,
    model: &ModelSpec,
    options: &ForgeOptions,
) -> Result<String, ForgeError> {
    if principle.official_text.trim().is_empty() {
        return Err(ForgeError::Precondition(format!("principle {} has no official text", principle.id)));
    }
    let raw = gateway.complete(&crate::llm::ChatRequest::new(
        model,
        prompts::COMMENT_SYSTEM,
        prompts::comment_user(principle),
    ))?;
    let comment = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    let comment = comment.trim_matches('"').trim().to_string();
    if comment.is_empty() {
        return Err(ForgeError::Generation { message: "empty comment".into(), raw });
    }
    if comment.chars().count() > options.max_comment_chars {
        return Err(ForgeError::Generation {
            message: format!("comment longer than {} characters", options.max_comment_chars),
            raw,
        });
    }
    Ok(comment)
}

fn parse_pattern_reply(principle_id: u8, raw: &str) -> Result<Vec<ViolationPattern>, Vec<String>> {
    let obj = structured::json_object(raw)?;
    let Some(Value::Array(items)) = obj.get("patterns") else {
        return Err(vec!["reply must contain a \"patterns\" list".into()]);
    };
    let mut violations = Vec::new();
    if items.len() != usize::from(PATTERNS_PER_PRINCIPLE) {
        violations.push(format!("expected 3 patterns, got {}", items.len()));
    }
    let mut patterns = Vec::new();
    for (i, item) in items.iter().enumerate().take(usize::from(PATTERNS_PER_PRINCIPLE)) {
        let slot = PatternId { principle: principle_id, index: i as u8 + 1 };
        // The model does not get to choose slots or review state.
        let mut item = item.clone();
        if let Some(obj) = item.as_object_mut() {
            obj.remove("principleId");
            obj.remove("index");
            obj.remove("reviewState");
        }
        match validate_pattern(&item, Some(slot)) {
            Ok(p) => patterns.push(p),
            Err(vs) => violations.extend(vs.into_iter().map(|v| format!("pattern {}: {v}", i + 1))),
        }
    }
    if violations.is_empty() {
        Ok(patterns)
    } else {
        Err(violations)
    }
}

/// Three structurally valid drafts for one principle.
pub fn generate_patterns(
    principle: &Principle,
    gateway: &Gateway,
    model: &ModelSpec,
    options: &ForgeOptions,
) -> Result<Vec<ViolationPattern>, ForgeError> {
    if principle.official_text.trim().is_empty() {
        return Err(ForgeError::Precondition(format!("principle {} has no official text", principle.id)));
    }
    if principle.comment.as_deref().is_none_or(|c| c.trim().is_empty()) {
        return Err(ForgeError::Precondition(format!("principle {} has no comment yet", principle.id)));
    }
    let patterns = structured::ask(
        gateway,
        model,
        prompts::PATTERNS_SYSTEM,
        &prompts::patterns_user(principle),
        options.max_retries,
        |raw| parse_pattern_reply(principle.id, raw),
    )?;
    Ok(patterns)
}

/// Adds drafts without touching patterns that already passed review.
pub fn merge_drafts(existing: &[ViolationPattern], drafts: Vec<ViolationPattern>) -> Vec<ViolationPattern> {
    let mut by_id: BTreeMap<PatternId, ViolationPattern> = existing.iter().map(|p| (p.id(), p.clone())).collect();
    for draft in drafts {
        match by_id.get(&draft.id()) {
            Some(current) if current.review_state.is_promotable() => {}
            _ => {
                by_id.insert(draft.id(), draft);
            }
        }
    }
    by_id.into_values().collect()
}

pub fn pattern_set_graph(principle_id: u8, patterns: &[ViolationPattern]) -> Graph {
    let mut g = Graph::new();
    let set = vocab::pattern_set_iri(principle_id);
    g.insert(&set, vocab::RDF_TYPE, Term::iri(vocab::esg("ESGViolationActionPatternSet")));
    g.insert(&set, vocab::esg("patternSetFor"), Term::iri(vocab::principle_iri(principle_id)));
    for p in patterns.iter().filter(|p| p.principle_id == principle_id) {
        let iri = vocab::pattern_instance_iri(p.principle_id, p.index);
        g.insert(&set, vocab::esg("hasPattern"), Term::iri(&iri));
        g.insert(&iri, vocab::RDF_TYPE, Term::iri(vocab::esg("ESGViolationActionPattern")));
        g.insert(&iri, vocab::esg("principle"), Term::iri(vocab::principle_iri(p.principle_id)));
        g.insert(&iri, vocab::esg("patternIndex"), Term::integer(i64::from(p.index)));
        g.insert(&iri, vocab::esg("entityA"), Term::string(&p.entity_a));
        g.insert(&iri, vocab::esg("action"), Term::string(&p.action));
        g.insert(&iri, vocab::esg("entityB"), Term::string(&p.entity_b));
        g.insert(&iri, vocab::esg("reviewState"), Term::string(p.review_state.to_string()));
        for s in &p.look_for {
            g.insert(&iri, vocab::esg("lookFor"), Term::string(s));
        }
        for s in &p.ignore {
            g.insert(&iri, vocab::esg("ignore"), Term::string(s));
        }
    }
    g
}

/// JSON-LD document holding one principle's pattern instances.
pub fn encode_pattern_set(principle_id: u8, patterns: &[ViolationPattern]) -> String {
    rdf::to_jsonld(&pattern_set_graph(principle_id, patterns), &vocab::prefixes())
}

/// Reads pattern instances back from a pattern-set document. Example
/// sentences come back in sorted order.
pub fn decode_pattern_set(text: &str) -> Result<Vec<ViolationPattern>, String> {
    let g = rdf::from_jsonld(text).map_err(|e: RdfError| e.to_string())?;
    let class = vocab::esg("ESGViolationActionPattern");
    let mut out = Vec::new();
    for subject in g.subjects_of_type(&class) {
        let single = |local: &str| -> Result<&Term, String> {
            let values: Vec<&Term> = g.objects(subject, &vocab::esg(local)).collect();
            match values.as_slice() {
                [one] => Ok(one),
                _ => Err(format!("{subject}: expected exactly one esg:{local}, found {}", values.len())),
            }
        };
        let text_of = |local: &str| -> Result<String, String> {
            single(local)?
                .as_literal()
                .map(str::to_string)
                .ok_or_else(|| format!("{subject}: esg:{local} must be a literal"))
        };
        let many = |local: &str| -> Vec<String> {
            g.objects(subject, &vocab::esg(local)).filter_map(Term::as_literal).map(str::to_string).collect()
        };
        let principle_iri =
            single("principle")?.as_iri().ok_or_else(|| format!("{subject}: esg:principle must be an IRI"))?;
        let principle_id: u8 = principle_iri
            .strip_prefix(&format!("{}/ungc/principle/", vocab::BASE))
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| format!("{subject}: unrecognised principle IRI {principle_iri}"))?;
        let raw = serde_json::json!({
            "principleId": principle_id,
            "index": text_of("patternIndex")?.parse::<u8>().map_err(|e| format!("{subject}: patternIndex: {e}"))?,
            "entityA": text_of("entityA")?,
            "action": text_of("action")?,
            "entityB": text_of("entityB")?,
            "lookFor": many("lookFor"),
            "ignore": many("ignore"),
            "reviewState": text_of("reviewState")?,
        });
        let pattern = validate_pattern(&raw, None).map_err(|v| format!("{subject}: {}", v.join("; ")))?;
        if vocab::pattern_instance_iri(pattern.principle_id, pattern.index) != subject {
            return Err(format!("{subject}: IRI does not match {}", pattern.id()));
        }
        out.push(pattern);
    }
    out.sort_by_key(ViolationPattern::id);
    Ok(out)
}

pub fn store_file_name(principle_id: u8) -> String {
    format!("p{principle_id:02}.jsonld")
}

/// Writes one JSON-LD file per principle that has patterns.
pub fn save_store(dir: &Path, patterns: &[ViolationPattern]) -> Result<(), ForgeError> {
    let io =
        |path: &Path, e: std::io::Error| ForgeError::Store { path: path.display().to_string(), message: e.to_string() };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let principles: BTreeSet<u8> = patterns.iter().map(|p| p.principle_id).collect();
    for principle in principles {
        let path = dir.join(store_file_name(principle));
        crate::fsutil::write_atomic(&path, encode_pattern_set(principle, patterns).as_bytes())
            .map_err(|e| io(&path, e))?;
    }
    Ok(())
}

pub fn load_store(dir: &Path) -> Result<Vec<ViolationPattern>, ForgeError> {
    let mut out = Vec::new();
    for principle in 1..=PRINCIPLE_COUNT {
        let path = dir.join(store_file_name(principle));
        if !path.exists() {
            continue;
        }
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ForgeError::Store { path: path.display().to_string(), message: e.to_string() })?;
        let patterns = decode_pattern_set(&text)
            .map_err(|message| ForgeError::Store { path: path.display().to_string(), message })?;
        out.extend(patterns);
    }
    out.sort_by_key(ViolationPattern::id);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReviewAction {
    Approve,
    Reject,
    Edit(Map<String, Value>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReviewDecision {
    pub pattern: PatternId,
    pub action: ReviewAction,
}

/// Parses `p<id>.<index> approve|reject|edit {json replacements}` lines.
/// `#` starts a comment line.
pub fn parse_review_file(text: &str) -> Result<Vec<ReviewDecision>, ForgeError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| ForgeError::ReviewParse { line: n + 1, message };
        let (id, rest) = line.split_once(char::is_whitespace).ok_or_else(|| err("missing decision".into()))?;
        let pattern: PatternId = id.parse().map_err(err)?;
        let rest = rest.trim();
        let (verb, payload) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
        let action = match (verb, payload.trim()) {
            ("approve", "") => ReviewAction::Approve,
            ("reject", "") => ReviewAction::Reject,
            ("edit", payload) => match serde_json::from_str::<Value>(payload) {
                Ok(Value::Object(map)) if !map.is_empty() => ReviewAction::Edit(map),
                _ => return Err(err("edit needs a non-empty JSON object of field replacements".into())),
            },
            (verb, "") => return Err(err(format!("unknown decision {verb:?}"))),
            (verb, _) => return Err(err(format!("decision {verb:?} takes no arguments"))),
        };
        out.push(ReviewDecision { pattern, action });
    }
    Ok(out)
}

const EDITABLE: [&str; 5] = ["entityA", "action", "entityB", "lookFor", "ignore"];

/// Applies review decisions. Fails as a whole on the first unknown pattern
/// or invalid edit, leaving the input untouched.
pub fn apply_review(
    patterns: &[ViolationPattern],
    decisions: &[ReviewDecision],
) -> Result<Vec<ViolationPattern>, ForgeError> {
    let mut by_id: BTreeMap<PatternId, ViolationPattern> = patterns.iter().map(|p| (p.id(), p.clone())).collect();
    for decision in decisions {
        let current = by_id.get(&decision.pattern).ok_or(ForgeError::UnknownPattern(decision.pattern))?;
        let updated = match &decision.action {
            ReviewAction::Approve => ViolationPattern { review_state: ReviewState::Approved, ..current.clone() },
            ReviewAction::Reject => ViolationPattern { review_state: ReviewState::Rejected, ..current.clone() },
            ReviewAction::Edit(changes) => {
                let mut raw = to_raw(current);
                let mut violations = Vec::new();
                for (key, value) in changes {
                    if EDITABLE.contains(&key.as_str()) {
                        raw[key.as_str()] = value.clone();
                    } else {
                        violations.push(format!("field {key:?} is not editable"));
                    }
                }
                raw["reviewState"] = Value::String("Edited".into());
                match validate_pattern(&raw, None) {
                    Ok(p) if violations.is_empty() => p,
                    Ok(_) => return Err(ForgeError::InvalidEdit { id: decision.pattern, violations }),
                    Err(vs) => {
                        violations.extend(vs);
                        return Err(ForgeError::InvalidEdit { id: decision.pattern, violations });
                    }
                }
            }
        };
        by_id.insert(decision.pattern, updated);
    }
    Ok(by_id.into_values().collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::llm::{ChatRequest, FnProvider};
    use serde_json::json;
    use std::sync::Arc;

    pub(crate) fn approved_pattern(principle: u8, index: u8) -> ViolationPattern {
        ViolationPattern {
            principle_id: principle,
            index,
            entity_a: "Company".into(),
            action: format!("violates-{principle}-{index}"),
            entity_b: "rights of indigenous communities".into(),
            look_for: vec![format!("The firm evicted villagers ({principle}.{index}).")],
            ignore: vec!["The firm consulted villagers before building.".into()],
            review_state: ReviewState::Approved,
        }
    }

    fn complete_draft() -> Value {
        json!({
            "entityA": "Company",
            "action": "violates",
            "entityB": "rights of indigenous communities",
            "lookFor": ["Miner bulldozed sacred sites despite protests."],
            "ignore": ["Miner signed a benefit-sharing deal with tribal elders."]
        })
    }

    #[test]
    fn complete_draft_is_valid() {
        let p = validate_pattern(&complete_draft(), Some(PatternId { principle: 1, index: 2 })).unwrap();
        assert_eq!(p.id().to_string(), "p1.2");
        assert_eq!(p.review_state, ReviewState::Draft);
    }

    #[test]
    fn empty_ignore_is_reported() {
        let mut d = complete_draft();
        d["ignore"] = json!([]);
        let v = validate_pattern(&d, Some(PatternId { principle: 1, index: 1 })).unwrap_err();
        assert_eq!(v, vec!["ignore requires ≥1 example".to_string()]);
    }

    #[test]
    fn overlap_between_lists_is_reported() {
        let mut d = complete_draft();
        d["ignore"] = json!(["miner bulldozed sacred sites  despite protests"]);
        let v = validate_pattern(&d, Some(PatternId { principle: 1, index: 1 })).unwrap_err();
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("disjoint"));
    }

    #[test]
    fn every_violation_is_listed() {
        let d = json!({"entityA": "", "action": "x", "lookFor": [], "ignore": "   "});
        let v = validate_pattern(&d, None).unwrap_err();
        for needle in ["principleId", "index", "entityA", "entityB", "lookFor", "ignore"] {
            assert!(v.iter().any(|m| m.contains(needle)), "missing {needle} in {v:?}");
        }
    }

    #[test]
    fn pattern_id_parsing() {
        assert_eq!("p10.3".parse::<PatternId>().unwrap(), PatternId { principle: 10, index: 3 });
        assert!("p11.1".parse::<PatternId>().is_err());
        assert!("p1.4".parse::<PatternId>().is_err());
        assert!("1.1".parse::<PatternId>().is_err());
    }

    fn principle(comment: Option<&str>) -> Principle {
        Principle {
            id: 1,
            pillar: crate::ontology::Pillar::HumanRights,
            short_name: "Human Rights - Respect rights".into(),
            official_text: "Businesses should support and respect human rights.".into(),
            comment: comment.map(str::to_string),
        }
    }

    fn scripted(reply: &'static str) -> Gateway {
        Gateway::new().with_provider("openai", Arc::new(FnProvider(move |_: &ChatRequest| Ok(reply.to_string()))))
    }

    #[test]
    fn comment_generation_and_errors() {
        let m = ModelSpec::new("openai", "m");
        let gw = scripted("  Companies must respect\n human rights.  ");
        let c = generate_comment(&principle(None), &gw, &m, &ForgeOptions::default()).unwrap();
        assert_eq!(c, "Companies must respect human rights.");

        let mut empty = principle(None);
        empty.official_text = " ".into();
        assert!(matches!(
            generate_comment(&empty, &gw, &m, &ForgeOptions::default()),
            Err(ForgeError::Precondition(_))
        ));

        let gw = scripted("   ");
        assert!(matches!(
            generate_comment(&principle(None), &gw, &m, &ForgeOptions::default()),
            Err(ForgeError::Generation { .. })
        ));
        let gw = scripted("far too long for the limit");
        let tight = ForgeOptions { max_comment_chars: 5, ..ForgeOptions::default() };
        match generate_comment(&principle(None), &gw, &m, &tight) {
            Err(ForgeError::Generation { raw, .. }) => assert_eq!(raw, "far too long for the limit"),
            r => panic!("unexpected {r:?}"),
        }
    }

    #[test]
    fn two_patterns_is_a_count_error_after_retries() {
        let m = ModelSpec::new("openai", "m");
        let two = r#"```json
{"patterns": [
 {"entityA": "Company", "action": "violates", "entityB": "indigenous land rights", "lookFor": ["a"], "ignore": ["b"]},
 {"entityA": "Company", "action": "finances", "entityB": "abusive security forces", "lookFor": ["c"], "ignore": ["d"]}
]}
```"#;
        let gw = scripted(two);
        match generate_patterns(&principle(Some("summary")), &gw, &m, &ForgeOptions::default()) {
            Err(ForgeError::Generation { message, .. }) => {
                assert!(message.contains("expected 3 patterns, got 2"));
                assert!(message.contains("3 attempt(s)"));
            }
            r => panic!("unexpected {r:?}"),
        }
        assert!(matches!(
            generate_patterns(&principle(None), &gw, &m, &ForgeOptions::default()),
            Err(ForgeError::Precondition(_))
        ));
    }

    #[test]
    fn three_patterns_become_drafts() {
        let m = ModelSpec::new("openai", "m");
        let three = r#"Here you go.
```json
{"patterns": [
 {"entityA": "Company", "action": "violates", "entityB": "rights of indigenous communities", "lookFor": ["a"], "ignore": ["b"], "reviewState": "Approved"},
 {"entityA": "Company", "action": "finances", "entityB": "abusive security forces", "lookFor": ["c"], "ignore": ["d"]},
 {"entityA": "Supplier of company", "action": "surveils", "entityB": "activists", "lookFor": ["e"], "ignore": ["f"]}
]}
```"#;
        let drafts =
            generate_patterns(&principle(Some("summary")), &scripted(three), &m, &ForgeOptions::default()).unwrap();
        assert_eq!(drafts.len(), 3);
        assert!(drafts.iter().all(|d| d.review_state == ReviewState::Draft && d.principle_id == 1));
        assert_eq!(drafts.iter().map(|d| d.index).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(drafts[0].action, "violates");
    }

    #[test]
    fn merging_drafts_keeps_approved_patterns() {
        let approved = approved_pattern(3, 1);
        let mut rejected = approved_pattern(3, 2);
        rejected.review_state = ReviewState::Rejected;
        let mut drafts: Vec<_> = (1..=3).map(|i| approved_pattern(3, i)).collect();
        for d in &mut drafts {
            d.review_state = ReviewState::Draft;
            d.action = "new".into();
        }
        let merged = merge_drafts(&[approved.clone(), rejected], drafts);
        assert_eq!(merged[0], approved);
        assert_eq!(merged[1].action, "new");
        assert_eq!(merged[2].review_state, ReviewState::Draft);
    }

    #[test]
    fn store_encoding_is_stable() {
        let patterns: Vec<_> = (1..=3).map(|i| approved_pattern(5, i)).collect();
        let text = encode_pattern_set(5, &patterns);
        let decoded = decode_pattern_set(&text).unwrap();
        assert_eq!(decoded, patterns);
        assert_eq!(encode_pattern_set(5, &decoded), text);
        assert!(text.contains("esg:ESGViolationActionPattern"));
    }

    #[test]
    fn review_file_parsing() {
        let text = "# reviewer: jd\np1.1 approve\np1.2 reject\n\np1.3 edit {\"entityA\": \"Supplier\"}\n";
        let decisions = parse_review_file(text).unwrap();
        assert_eq!(decisions.len(), 3);
        assert_eq!(decisions[1].action, ReviewAction::Reject);
        assert!(matches!(parse_review_file("p1.1 promote"), Err(ForgeError::ReviewParse { line: 1, .. })));
        assert!(matches!(parse_review_file("x approve"), Err(ForgeError::ReviewParse { .. })));
        assert!(matches!(parse_review_file("p1.1 edit {}"), Err(ForgeError::ReviewParse { .. })));
    }

    #[test]
    fn review_application() {
        let mut drafts: Vec<_> = (1..=3).map(|i| approved_pattern(2, i)).collect();
        drafts.iter_mut().for_each(|d| d.review_state = ReviewState::Draft);

        let decisions =
            parse_review_file("p2.1 approve\np2.2 reject\np2.3 edit {\"entityB\": \"protesters\"}").unwrap();
        let reviewed = apply_review(&drafts, &decisions).unwrap();
        assert_eq!(reviewed[0].review_state, ReviewState::Approved);
        assert_eq!(reviewed[1].review_state, ReviewState::Rejected);
        assert_eq!(reviewed[2].review_state, ReviewState::Edited);
        assert_eq!(reviewed[2].entity_b, "protesters");

        let unknown = parse_review_file("p9.1 approve").unwrap();
        assert!(matches!(apply_review(&drafts, &unknown), Err(ForgeError::UnknownPattern(_))));

        let emptying = parse_review_file("p2.1 edit {\"entityA\": \"\"}").unwrap();
        match apply_review(&drafts, &emptying) {
            Err(ForgeError::InvalidEdit { violations, .. }) => assert!(violations[0].contains("entityA")),
            r => panic!("unexpected {r:?}"),
        }
        assert_eq!(drafts[0].review_state, ReviewState::Draft);
    }
}
