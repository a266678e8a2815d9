//! Minimal RDF graph model with canonical Turtle and JSON-LD writers.
//!
//! Every resource this crate emits has a minted IRI, so graphs never contain
//! blank nodes and graph isomorphism reduces to equality of triple sets.
//! Triples live in a `BTreeSet`, which gives the canonical order (subject,
//! then predicate, then object) for free.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::vocab::{RDF_TYPE, XSD_DATE, XSD_DATETIME, XSD_INTEGER, XSD_STRING};

#[derive(Debug, Error)]
pub enum RdfError {
    #[error("unknown serialization format {0:?} (expected jsonld or turtle)")]
    UnknownFormat(String),
    #[error("JSON-LD syntax: {0}")]
    Json(#[from] serde_json::Error),
    #[error("JSON-LD structure: {0}")]
    Structure(String),
    #[error("cannot expand {0:?}: no matching prefix and not an absolute IRI")]
    Unexpandable(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Format {
    JsonLd,
    Turtle,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::JsonLd => "jsonld",
            Format::Turtle => "ttl",
        }
    }
}

impl FromStr for Format {
    type Err = RdfError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jsonld" | "json-ld" => Ok(Format::JsonLd),
            "turtle" | "ttl" => Ok(Format::Turtle),
            other => Err(RdfError::UnknownFormat(other.to_string())),
        }
    }
}

/// A literal. `datatype == None` means `xsd:string` (or `rdf:langString`
/// when `lang` is set).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub lexical: String,
    pub datatype: Option<String>,
    pub lang: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Iri(String),
    Literal(Literal),
}

impl Term {
    pub fn iri(iri: impl Into<String>) -> Self {
        Term::Iri(iri.into())
    }

    pub fn string(value: impl Into<String>) -> Self {
        Term::Literal(Literal { lexical: value.into(), datatype: None, lang: None })
    }

    pub fn typed(value: impl Into<String>, datatype: &str) -> Self {
        let datatype = (datatype != XSD_STRING).then(|| datatype.to_string());
        Term::Literal(Literal { lexical: value.into(), datatype, lang: None })
    }

    pub fn integer(value: i64) -> Self {
        Term::typed(value.to_string(), XSD_INTEGER)
    }

    pub fn date(value: chrono::NaiveDate) -> Self {
        Term::typed(value.format("%Y-%m-%d").to_string(), XSD_DATE)
    }

    pub fn date_time(value: chrono::DateTime<chrono::Utc>) -> Self {
        Term::typed(value.format("%Y-%m-%dT%H:%M:%SZ").to_string(), XSD_DATETIME)
    }

    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri(iri) => Some(iri),
            Term::Literal(_) => None,
        }
    }

    pub fn as_literal(&self) -> Option<&str> {
        match self {
            Term::Iri(_) => None,
            Term::Literal(lit) => Some(&lit.lexical),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: Term,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Graph {
    triples: BTreeSet<Triple>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, subject: impl Into<String>, predicate: impl Into<String>, object: Term) {
        self.triples.insert(Triple { subject: subject.into(), predicate: predicate.into(), object });
    }

    pub fn extend(&mut self, other: Graph) {
        self.triples.extend(other.triples);
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn contains(&self, subject: &str, predicate: &str, object: &Term) -> bool {
        self.triples.contains(&Triple {
            subject: subject.to_string(),
            predicate: predicate.to_string(),
            object: object.clone(),
        })
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.triples.iter().map(|t| t.subject.as_str()).collect()
    }

    pub fn objects<'a, 'q>(
        &'a self,
        subject: &'q str,
        predicate: &'q str,
    ) -> impl Iterator<Item = &'a Term> + use<'a, 'q> {
        self.triples.iter().filter(move |t| t.subject == subject && t.predicate == predicate).map(|t| &t.object)
    }

    pub fn subjects_of_type<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.triples
            .iter()
            .filter(move |t| t.predicate == RDF_TYPE && t.object.as_iri() == Some(class))
            .map(|t| t.subject.as_str())
    }

    fn by_subject(&self) -> BTreeMap<&str, BTreeMap<&str, Vec<&Term>>> {
        let mut out: BTreeMap<&str, BTreeMap<&str, Vec<&Term>>> = BTreeMap::new();
        for t in &self.triples {
            out.entry(&t.subject).or_default().entry(&t.predicate).or_default().push(&t.object);
        }
        out
    }
}

impl FromIterator<Triple> for Graph {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        Graph { triples: iter.into_iter().collect() }
    }
}

pub fn serialize(graph: &Graph, prefixes: &BTreeMap<String, String>, format: Format) -> String {
    match format {
        Format::Turtle => to_turtle(graph, prefixes),
        Format::JsonLd => to_jsonld(graph, prefixes),
    }
}

/// Shortens `iri` to `prefix:local` when the local part is a plain name.
fn compact(iri: &str, prefixes: &BTreeMap<String, String>) -> Option<String> {
    prefixes.iter().filter(|(_, ns)| iri.starts_with(ns.as_str())).max_by_key(|(_, ns)| ns.len()).and_then(
        |(prefix, ns)| {
            let local = &iri[ns.len()..];
            let simple = !local.is_empty()
                && local.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
                && !local.starts_with('-');
            simple.then(|| format!("{prefix}:{local}"))
        },
    )
}

fn turtle_iri(iri: &str, prefixes: &BTreeMap<String, String>) -> String {
    compact(iri, prefixes).unwrap_or_else(|| {
        let mut out = String::from("<");
        for c in iri.chars() {
            match c {
                '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\' | ' ' => {
                    let _ = write!(out, "\\u{:04X}", c as u32);
                }
                c if (c as u32) <= 0x20 => {
                    let _ = write!(out, "\\u{:04X}", c as u32);
                }
                c => out.push(c),
            }
        }
        out.push('>');
        out
    })
}

fn turtle_string(value: &str) -> String {
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for c in value.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn turtle_term(term: &Term, prefixes: &BTreeMap<String, String>) -> String {
    match term {
        Term::Iri(iri) => turtle_iri(iri, prefixes),
        Term::Literal(lit) => {
            let mut out = turtle_string(&lit.lexical);
            if let Some(lang) = &lit.lang {
                out.push('@');
                out.push_str(lang);
            } else if let Some(dt) = &lit.datatype {
                out.push_str("^^");
                out.push_str(&turtle_iri(dt, prefixes));
            }
            out
        }
    }
}

pub fn to_turtle(graph: &Graph, prefixes: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (prefix, ns) in prefixes {
        let _ = writeln!(out, "@prefix {prefix}: <{ns}> .");
    }
    for (subject, predicates) in graph.by_subject() {
        out.push('\n');
        out.push_str(&turtle_iri(subject, prefixes));
        let count = predicates.len();
        for (i, (predicate, objects)) in predicates.into_iter().enumerate() {
            let predicate = if predicate == RDF_TYPE { "a".to_string() } else { turtle_iri(predicate, prefixes) };
            let objects: Vec<String> = objects.iter().map(|o| turtle_term(o, prefixes)).collect();
            let sep = if i + 1 == count { " ." } else { " ;" };
            let lead = if i == 0 { " " } else { "    " };
            let _ = writeln!(out, "{lead}{predicate} {}{sep}", objects.join(" ,\n        "));
        }
    }
    out
}

fn jsonld_value(term: &Term, prefixes: &BTreeMap<String, String>) -> Value {
    let mut obj = Map::new();
    match term {
        Term::Iri(iri) => {
            obj.insert("@id".into(), Value::String(compact(iri, prefixes).unwrap_or_else(|| iri.clone())));
        }
        Term::Literal(lit) => {
            // Keys inserted in sorted order so output is stable with or
            // without serde_json's `preserve_order`.
            if let Some(lang) = &lit.lang {
                obj.insert("@language".into(), Value::String(lang.clone()));
            }
            if let Some(dt) = &lit.datatype {
                obj.insert("@type".into(), Value::String(compact(dt, prefixes).unwrap_or_else(|| dt.clone())));
            }
            obj.insert("@value".into(), Value::String(lit.lexical.clone()));
        }
    }
    Value::Object(obj)
}

pub fn to_jsonld(graph: &Graph, prefixes: &BTreeMap<String, String>) -> String {
    let mut context = Map::new();
    for (prefix, ns) in prefixes {
        context.insert(prefix.clone(), Value::String(ns.clone()));
    }
    let mut nodes = Vec::new();
    for (subject, predicates) in graph.by_subject() {
        let mut props: BTreeMap<String, Value> = BTreeMap::new();
        props.insert("@id".into(), Value::String(compact(subject, prefixes).unwrap_or_else(|| subject.to_string())));
        for (predicate, objects) in predicates {
            if predicate == RDF_TYPE && objects.iter().all(|o| o.as_iri().is_some()) {
                let types = objects
                    .iter()
                    .map(|o| {
                        let iri = o.as_iri().unwrap_or_default();
                        Value::String(compact(iri, prefixes).unwrap_or_else(|| iri.to_string()))
                    })
                    .collect();
                props.insert("@type".into(), Value::Array(types));
            } else {
                let key = compact(predicate, prefixes).unwrap_or_else(|| predicate.to_string());
                let values = objects.iter().map(|o| jsonld_value(o, prefixes)).collect();
                props.insert(key, Value::Array(values));
            }
        }
        nodes.push(Value::Object(props.into_iter().collect()));
    }
    let mut doc = Map::new();
    doc.insert("@context".into(), Value::Object(context));
    doc.insert("@graph".into(), Value::Array(nodes));
    let mut text = serde_json::to_string_pretty(&Value::Object(doc)).expect("JSON values always serialize");
    text.push('\n');
    text
}

fn expand(term: &str, context: &BTreeMap<String, String>) -> Result<String, RdfError> {
    if let Some((prefix, local)) = term.split_once(':') {
        if !local.starts_with("//") {
            if let Some(ns) = context.get(prefix) {
                return Ok(format!("{ns}{local}"));
            }
        }
        let scheme_ok = !prefix.is_empty()
            && prefix.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
            && prefix.chars().all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c));
        if scheme_ok {
            return Ok(term.to_string());
        }
    }
    Err(RdfError::Unexpandable(term.to_string()))
}

fn jsonld_term(value: &Value, context: &BTreeMap<String, String>) -> Result<Term, RdfError> {
    match value {
        Value::String(s) => Ok(Term::string(s.clone())),
        Value::Bool(b) => Ok(Term::typed(b.to_string(), "http://www.w3.org/2001/XMLSchema#boolean")),
        Value::Number(n) if n.is_i64() || n.is_u64() => Ok(Term::typed(n.to_string(), XSD_INTEGER)),
        Value::Object(obj) => {
            if let Some(id) = obj.get("@id") {
                let id = id.as_str().ok_or_else(|| RdfError::Structure("@id must be a string".into()))?;
                return Ok(Term::Iri(expand(id, context)?));
            }
            let lexical = match obj.get("@value") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Number(n)) => n.to_string(),
                Some(Value::Bool(b)) => b.to_string(),
                _ => return Err(RdfError::Structure("value object needs a scalar @value".into())),
            };
            let lang = obj.get("@language").and_then(Value::as_str).map(str::to_string);
            let datatype = match obj.get("@type").and_then(Value::as_str) {
                Some(dt) => {
                    let dt = expand(dt, context)?;
                    (dt != XSD_STRING).then_some(dt)
                }
                None => None,
            };
            Ok(Term::Literal(Literal { lexical, datatype, lang }))
        }
        other => Err(RdfError::Structure(format!("unsupported value {other}"))),
    }
}

/// Reads the flattened JSON-LD shape produced by [`to_jsonld`]: a prefix-only
/// `@context` and a `@graph` of node objects. Not a general JSON-LD processor.
pub fn from_jsonld(text: &str) -> Result<Graph, RdfError> {
    let doc: Value = serde_json::from_str(text)?;
    let doc = doc.as_object().ok_or_else(|| RdfError::Structure("document must be an object".into()))?;
    let mut context = BTreeMap::new();
    if let Some(ctx) = doc.get("@context") {
        let ctx = ctx.as_object().ok_or_else(|| RdfError::Structure("@context must be an inline object".into()))?;
        for (prefix, ns) in ctx {
            let ns = ns
                .as_str()
                .ok_or_else(|| RdfError::Structure(format!("context entry {prefix} must map to a string")))?;
            context.insert(prefix.clone(), ns.to_string());
        }
    }
    let nodes = doc
        .get("@graph")
        .and_then(Value::as_array)
        .ok_or_else(|| RdfError::Structure("missing @graph array".into()))?;
    let mut graph = Graph::new();
    for node in nodes {
        let node = node.as_object().ok_or_else(|| RdfError::Structure("graph entries must be objects".into()))?;
        let subject =
            node.get("@id").and_then(Value::as_str).ok_or_else(|| RdfError::Structure("node without @id".into()))?;
        let subject = expand(subject, &context)?;
        for (key, value) in node {
            if key == "@id" {
                continue;
            }
            let values: Vec<&Value> = match value {
                Value::Array(items) => items.iter().collect(),
                single => vec![single],
            };
            if key == "@type" {
                for v in values {
                    let class =
                        v.as_str().ok_or_else(|| RdfError::Structure("@type entries must be strings".into()))?;
                    graph.insert(subject.clone(), RDF_TYPE, Term::Iri(expand(class, &context)?));
                }
                continue;
            }
            let predicate = expand(key, &context)?;
            for v in values {
                graph.insert(subject.clone(), predicate.clone(), jsonld_term(v, &context)?);
            }
        }
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab;

    fn sample() -> Graph {
        let mut g = Graph::new();
        let s = vocab::esg("Thing");
        g.insert(&s, RDF_TYPE, Term::iri(vocab::RDFS_CLASS));
        g.insert(&s, vocab::RDFS_LABEL, Term::string("a \"quoted\"\nlabel"));
        g.insert(&s, vocab::RDFS_COMMENT, Term::integer(3));
        g.insert("https://esgkg.example.org/kg/article/a%20b", vocab::esg("x"), Term::iri(&s));
        g
    }

    #[test]
    fn turtle_uses_prefixes_and_escapes() {
        let ttl = to_turtle(&sample(), &vocab::prefixes());
        assert!(ttl.contains("esg:Thing a rdfs:Class ;"));
        assert!(ttl.contains(r#""a \"quoted\"\nlabel""#));
        assert!(ttl.contains(r#""3"^^xsd:integer"#));
        assert!(ttl.contains("<https://esgkg.example.org/kg/article/a%20b>"));
    }

    #[test]
    fn jsonld_reads_back_what_it_writes() {
        let g = sample();
        let text = to_jsonld(&g, &vocab::prefixes());
        let back = from_jsonld(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(to_jsonld(&back, &vocab::prefixes()), text);
    }

    #[test]
    fn format_parsing() {
        assert_eq!("JSON-LD".parse::<Format>().unwrap(), Format::JsonLd);
        assert_eq!("ttl".parse::<Format>().unwrap(), Format::Turtle);
        assert!(matches!("rdfxml".parse::<Format>(), Err(RdfError::UnknownFormat(_))));
    }

    #[test]
    fn unknown_prefix_is_rejected() {
        let doc = r#"{"@context": {}, "@graph": [{"@id": "foo:bar"}]}"#;
        // `foo:bar` is a syntactically valid absolute IRI with scheme `foo`.
        assert!(from_jsonld(doc).is_ok());
        let doc = r#"{"@context": {}, "@graph": [{"@id": "no-colon"}]}"#;
        assert!(matches!(from_jsonld(doc), Err(RdfError::Unexpandable(_))));
    }
}
