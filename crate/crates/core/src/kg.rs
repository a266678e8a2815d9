//! Knowledge graph assembly, integrity checking, serialization and queries.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

use crate::extraction::{EntityKind, NamedEntity, ViolationEvent};
use crate::ingest::NewsArticle;
use crate::ontology::{self, MetaOntology, OntologyError, Principle, ViolationClassDef};
use crate::rdf::{self, Format, Graph, Term};
use crate::vocab::{self, RDF_TYPE};

#[derive(Debug, Error)]
pub enum KgError {
    #[error("integrity: {0}")]
    Integrity(String),
    #[error("event log line {line}: {message}")]
    EventLog { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<OntologyError> for KgError {
    fn from(e: OntologyError) -> Self {
        KgError::Integrity(e.to_string())
    }
}

pub fn entity_class(kind: EntityKind) -> String {
    match kind {
        EntityKind::Organization => vocab::schema("Organization"),
        EntityKind::Person => vocab::schema("Person"),
        EntityKind::Location => vocab::schema("Place"),
    }
}

pub fn entity_node_iri(entity: &NamedEntity) -> String {
    vocab::entity_iri(entity.kind.slug(), &entity.normalized)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergedEntity {
    pub normalized: String,
    pub kind: EntityKind,
    pub surfaces: BTreeSet<String>,
}

impl MergedEntity {
    pub fn iri(&self) -> String {
        vocab::entity_iri(self.kind.slug(), &self.normalized)
    }
}

/// An assembled, immutable graph plus the events it was built from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnowledgeGraph {
    graph: Graph,
    events: Vec<ViolationEvent>,
    entities: Vec<MergedEntity>,
}

fn event_key(e: &ViolationEvent) -> (NaiveDate, &str, &str) {
    (e.published_date, e.article_id.as_str(), e.pattern_iri.as_str())
}

impl KnowledgeGraph {
    /// Builds the graph. Entities merge on (normalized form, kind); events
    /// are keyed by (article, pattern) and exact duplicates collapse.
    pub fn assemble(
        events: &[ViolationEvent],
        principles: &[Principle],
        classes: &[ViolationClassDef],
        entities: &[NamedEntity],
        articles: &[NewsArticle],
    ) -> Result<KnowledgeGraph, KgError> {
        let mut graph = ontology::ontology_graph(principles, classes)?;
        let class_principle: BTreeMap<&str, u8> = classes.iter().map(|c| (c.iri.as_str(), c.principle)).collect();

        let mut by_key: BTreeMap<(String, String), &ViolationEvent> = BTreeMap::new();
        for e in events {
            let Some(&principle) = class_principle.get(e.pattern_iri.as_str()) else {
                return Err(KgError::Integrity(format!(
                    "event for article {} references unknown pattern {}",
                    e.article_id, e.pattern_iri
                )));
            };
            if principle != e.principle_id {
                return Err(KgError::Integrity(format!(
                    "event for article {} has principle {} but pattern {} belongs to principle {principle}",
                    e.article_id, e.principle_id, e.pattern_iri
                )));
            }
            if e.subject.kind != EntityKind::Organization {
                return Err(KgError::Integrity(format!(
                    "event for article {} has a non-organization subject {:?}",
                    e.article_id, e.subject.surface
                )));
            }
            match by_key.insert((e.article_id.clone(), e.pattern_iri.clone()), e) {
                Some(prev) if prev != e => {
                    return Err(KgError::Integrity(format!(
                        "conflicting events for article {} and pattern {}",
                        e.article_id, e.pattern_iri
                    )));
                }
                _ => {}
            }
        }
        let mut events: Vec<ViolationEvent> = by_key.into_values().cloned().collect();
        events.sort_by(|a, b| event_key(a).cmp(&event_key(b)));

        let mut merged: BTreeMap<(String, EntityKind), BTreeSet<String>> = BTreeMap::new();
        let mentioned = entities
            .iter()
            .chain(events.iter().map(|e| &e.subject))
            .chain(events.iter().filter_map(|e| e.object_entity.as_ref()));
        for entity in mentioned {
            if entity.normalized.is_empty() {
                return Err(KgError::Integrity(format!("entity {:?} has an empty normalized form", entity.surface)));
            }
            merged.entry((entity.normalized.clone(), entity.kind)).or_default().insert(entity.surface.clone());
        }
        let entities: Vec<MergedEntity> = merged
            .into_iter()
            .map(|((normalized, kind), surfaces)| MergedEntity { normalized, kind, surfaces })
            .collect();
        for entity in &entities {
            let iri = entity.iri();
            graph.insert(&iri, RDF_TYPE, Term::iri(entity_class(entity.kind)));
            graph.insert(&iri, vocab::esg("normalizedName"), Term::string(&entity.normalized));
            let mut surfaces = entity.surfaces.iter();
            if let Some(name) = surfaces.next() {
                graph.insert(&iri, vocab::schema("name"), Term::string(name));
            }
            for alt in surfaces {
                graph.insert(&iri, vocab::schema("alternateName"), Term::string(alt));
            }
        }

        let known_articles: BTreeMap<&str, &NewsArticle> =
            articles.iter().map(|a| (a.article_id.as_str(), a)).collect();
        let article_ids: BTreeSet<&str> = events.iter().map(|e| e.article_id.as_str()).collect();
        for id in article_ids {
            let iri = vocab::article_iri(id);
            graph.insert(&iri, RDF_TYPE, Term::iri(vocab::esg("ESGNewsArticle")));
            graph.insert(&iri, vocab::schema("identifier"), Term::string(id));
            if let Some(a) = known_articles.get(id) {
                graph.insert(&iri, vocab::schema("headline"), Term::string(&a.title));
                graph.insert(&iri, vocab::schema("url"), Term::string(&a.url));
                graph.insert(&iri, vocab::schema("datePublished"), Term::date(a.published_date));
                graph.insert(&iri, vocab::schema("inLanguage"), Term::string(&a.language));
            }
        }

        for e in &events {
            let (p, i) = vocab::parse_pattern_class_iri(&e.pattern_iri).expect("pattern IRI checked against classes");
            let iri = vocab::event_iri(&e.article_id, p, i);
            let article = vocab::article_iri(&e.article_id);
            graph.insert(&article, vocab::esg("reportsViolation"), Term::iri(&iri));
            graph.insert(&iri, RDF_TYPE, Term::iri(&e.pattern_iri));
            graph.insert(&iri, vocab::esg("principle"), Term::iri(vocab::principle_iri(e.principle_id)));
            graph.insert(&iri, vocab::esg("sourceArticle"), Term::iri(&article));
            graph.insert(&iri, vocab::esg("violator"), Term::iri(entity_node_iri(&e.subject)));
            graph.insert(&iri, vocab::esg("action"), Term::string(&e.action));
            graph.insert(&iri, vocab::esg("objectText"), Term::string(&e.object));
            if let Some(obj) = &e.object_entity {
                graph.insert(&iri, vocab::esg("objectEntity"), Term::iri(entity_node_iri(obj)));
            }
            graph.insert(&iri, vocab::esg("evidence"), Term::string(&e.evidence));
            graph.insert(&iri, vocab::esg("extractedBy"), Term::string(&e.model_id));
            graph.insert(&iri, vocab::esg("extractedAt"), Term::date_time(e.extracted_at));
            graph.insert(&iri, vocab::esg("eventDate"), Term::date(e.published_date));
        }

        let kg = KnowledgeGraph { graph, events, entities };
        let problems = kg.check_integrity();
        if !problems.is_empty() {
            return Err(KgError::Integrity(problems.join("; ")));
        }
        Ok(kg)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// Events in (publishedDate, articleId, patternIri) order.
    pub fn events(&self) -> &[ViolationEvent] {
        &self.events
    }

    pub fn entities(&self) -> &[MergedEntity] {
        &self.entities
    }

    /// Dangling references and malformed event nodes; empty when sound.
    pub fn check_integrity(&self) -> Vec<String> {
        let g = &self.graph;
        let subjects = g.subjects();
        let declared: BTreeSet<String> = MetaOntology::standard().properties.into_iter().map(|p| p.iri).collect();
        let mut problems = Vec::new();
        for t in g.triples() {
            if let Some(target) = t.object.as_iri() {
                if target.starts_with(vocab::BASE) && !subjects.contains(target) {
                    problems.push(format!("{} {} points at missing node {target}", t.subject, t.predicate));
                }
            }
            if t.predicate.starts_with(vocab::ESG) && !declared.contains(&t.predicate) {
                problems.push(format!("{} uses undeclared property {}", t.subject, t.predicate));
            }
        }
        let one = |s: &str, p: &str| g.objects(s, p).count() == 1;
        for e in &self.events {
            let Some((p, i)) = vocab::parse_pattern_class_iri(&e.pattern_iri) else {
                problems.push(format!("unparseable pattern IRI {}", e.pattern_iri));
                continue;
            };
            let iri = vocab::event_iri(&e.article_id, p, i);
            for predicate in ["sourceArticle", "principle", "violator"] {
                if !one(&iri, &vocab::esg(predicate)) {
                    problems.push(format!("{iri} must have exactly one esg:{predicate}"));
                }
            }
            if !one(&iri, RDF_TYPE) {
                problems.push(format!("{iri} must have exactly one pattern class"));
            }
        }
        problems
    }

    pub fn serialize(&self, format: Format) -> String {
        rdf::serialize(&self.graph, &vocab::prefixes(), format)
    }

    /// Events matching every given filter field.
    pub fn query_events(&self, filter: &EventFilter) -> Vec<ViolationEvent> {
        let entity = filter.entity.as_deref().map(crate::extraction::normalize_entity);
        self.events
            .iter()
            .filter(|e| entity.as_ref().is_none_or(|n| &e.subject.normalized == n))
            .filter(|e| filter.principle_id.is_none_or(|p| e.principle_id == p))
            .filter(|e| filter.from.is_none_or(|d| e.published_date >= d))
            .filter(|e| filter.to.is_none_or(|d| e.published_date <= d))
            .cloned()
            .collect()
    }
}

/// Conjunctive event filter; dates are inclusive.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventFilter {
    pub entity: Option<String>,
    pub principle_id: Option<u8>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
}

pub fn parse_event_log(text: &str) -> Result<Vec<ViolationEvent>, KgError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let event =
            serde_json::from_str(line).map_err(|e| KgError::EventLog { line: n + 1, message: e.to_string() })?;
        out.push(event);
    }
    Ok(out)
}

pub fn load_event_log(path: impl AsRef<Path>) -> Result<Vec<ViolationEvent>, KgError> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|source| KgError::Io { path: path.display().to_string(), source })?;
    parse_event_log(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern_forge::tests::approved_pattern;
    use chrono::{DateTime, Utc};

    fn principles() -> Vec<Principle> {
        ontology::parse_principles(include_str!("../../../data/ungc_principles.jsonl")).unwrap()
    }

    fn classes() -> Vec<ViolationClassDef> {
        let patterns: Vec<_> = (1..=10).flat_map(|p| (1..=3).map(move |i| approved_pattern(p, i))).collect();
        ontology::promote_all(&patterns).unwrap()
    }

    pub(crate) fn event(article: &str, surface: &str, principle: u8, index: u8, date: &str) -> ViolationEvent {
        ViolationEvent {
            article_id: article.into(),
            pattern_iri: vocab::pattern_class_iri(principle, index),
            principle_id: principle,
            subject: NamedEntity::new(surface, EntityKind::Organization, article),
            action: "did".into(),
            object: "something".into(),
            object_entity: None,
            evidence: "It happened.".into(),
            model_id: "m".into(),
            extracted_at: DateTime::parse_from_rfc3339("2025-01-01T00:00:00Z").unwrap().with_timezone(&Utc),
            published_date: date.parse().unwrap(),
        }
    }

    fn build(events: &[ViolationEvent]) -> Result<KnowledgeGraph, KgError> {
        KnowledgeGraph::assemble(events, &principles(), &classes(), &[], &[])
    }

    #[test]
    fn empty_event_set_yields_ontology_only() {
        let kg = build(&[]).unwrap();
        let expected = ontology::ontology_graph(&principles(), &classes()).unwrap();
        assert_eq!(kg.graph(), &expected);
        assert!(kg.check_integrity().is_empty());
        assert!(!kg.serialize(Format::Turtle).is_empty());
    }

    #[test]
    fn surface_variants_merge_into_one_node() {
        let kg = build(&[event("a1", "Acme Corp.", 7, 1, "2024-01-01"), event("a2", "acme corp", 8, 1, "2024-02-01")])
            .unwrap();
        assert_eq!(kg.entities().len(), 1);
        let e = &kg.entities()[0];
        assert_eq!(e.surfaces, BTreeSet::from(["Acme Corp.".to_string(), "acme corp".to_string()]));
        let iri = e.iri();
        assert_eq!(kg.graph().objects(&iri, &vocab::schema("alternateName")).count(), 1);
        assert_eq!(kg.graph().subjects_of_type(&vocab::schema("Organization")).count(), 1);
    }

    #[test]
    fn unknown_pattern_and_principle_mismatch_are_integrity_errors() {
        let mut e = event("a1", "Acme", 7, 1, "2024-01-01");
        e.pattern_iri = format!("{}/ungc/p7/pattern9", vocab::BASE);
        assert!(matches!(build(&[e]), Err(KgError::Integrity(_))));
        let mut e = event("a1", "Acme", 7, 1, "2024-01-01");
        e.principle_id = 8;
        assert!(matches!(build(&[e]), Err(KgError::Integrity(_))));
    }

    #[test]
    fn reassembly_is_idempotent() {
        let events = vec![
            event("a2", "Acme", 7, 1, "2024-02-01"),
            event("a1", "Globex Ltd", 1, 2, "2024-01-01"),
            event("a1", "Globex Ltd", 1, 2, "2024-01-01"),
        ];
        let kg = build(&events).unwrap();
        assert_eq!(kg.events().len(), 2);
        let again = build(kg.events()).unwrap();
        assert_eq!(again, kg);
        let mut conflicting = events[1].clone();
        conflicting.evidence = "Something else.".into();
        assert!(build(&[events[1].clone(), conflicting]).is_err());
    }

    #[test]
    fn event_node_links() {
        let kg = build(&[event("a1", "Acme", 7, 1, "2024-01-01")]).unwrap();
        let iri = vocab::event_iri("a1", 7, 1);
        let g = kg.graph();
        assert!(g.contains(&iri, RDF_TYPE, &Term::iri(vocab::pattern_class_iri(7, 1))));
        assert!(g.contains(&iri, &vocab::esg("principle"), &Term::iri(vocab::principle_iri(7))));
        assert!(g.contains(&vocab::article_iri("a1"), &vocab::esg("reportsViolation"), &Term::iri(&iri)));
    }

    #[test]
    fn query_filters_are_conjunctive() {
        let kg = build(&[
            event("a1", "Acme", 7, 1, "2024-01-01"),
            event("a2", "Acme Inc", 1, 1, "2024-03-01"),
            event("a3", "Globex", 7, 2, "2024-02-01"),
        ])
        .unwrap();
        let ids = |f: EventFilter| kg.query_events(&f).into_iter().map(|e| e.article_id).collect::<Vec<_>>();
        assert_eq!(ids(EventFilter::default()), vec!["a1", "a3", "a2"]);
        assert_eq!(ids(EventFilter { principle_id: Some(7), ..Default::default() }), vec!["a1", "a3"]);
        assert_eq!(ids(EventFilter { entity: Some("ACME".into()), ..Default::default() }), vec!["a1", "a2"]);
        assert!(ids(EventFilter { entity: Some("Initech".into()), ..Default::default() }).is_empty());
        let both = EventFilter { entity: Some("acme".into()), principle_id: Some(7), ..Default::default() };
        assert_eq!(ids(both), vec!["a1"]);
        let range = EventFilter {
            from: Some("2024-01-15".parse().unwrap()),
            to: Some("2024-03-01".parse().unwrap()),
            ..Default::default()
        };
        assert_eq!(ids(range), vec!["a3", "a2"]);
    }

    #[test]
    fn event_log_round_trip() {
        let events = vec![event("a1", "Acme", 7, 1, "2024-01-01")];
        let text = crate::fsutil::to_jsonl(&events);
        assert_eq!(parse_event_log(&text).unwrap(), events);
        assert!(matches!(parse_event_log("{}\n"), Err(KgError::EventLog { line: 1, .. })));
    }
}
