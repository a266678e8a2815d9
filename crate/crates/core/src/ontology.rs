//! The meta-ontology: UNGC principles, the ESG classes and properties that
//! tie news, regulations and violation patterns together, and promotion of
//! reviewed patterns into `ESGViolationActionPattern` subclasses.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pattern_forge::{PatternId, ReviewState, ViolationPattern};
use crate::rdf::{self, Format, Graph, Term};
use crate::vocab::{
    self, RDFS_CLASS, RDFS_COMMENT, RDFS_DOMAIN, RDFS_LABEL, RDFS_RANGE, RDFS_SUBCLASS_OF, RDF_PROPERTY, RDF_TYPE,
};

pub const PRINCIPLE_COUNT: u8 = 10;
pub const PATTERNS_PER_PRINCIPLE: u8 = 3;

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("principle record on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("integrity: {0}")]
    Integrity(String),
    #[error("pattern {0} is not approved; review required before promotion")]
    ReviewRequired(PatternId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pillar {
    HumanRights,
    Labour,
    Environment,
    AntiCorruption,
}

impl Pillar {
    /// The fixed UNGC grouping: 1-2 human rights, 3-6 labour, 7-9
    /// environment, 10 anti-corruption.
    pub fn of_principle(id: u8) -> Option<Pillar> {
        match id {
            1..=2 => Some(Pillar::HumanRights),
            3..=6 => Some(Pillar::Labour),
            7..=9 => Some(Pillar::Environment),
            10 => Some(Pillar::AntiCorruption),
            _ => None,
        }
    }
}

impl fmt::Display for Pillar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Pillar::HumanRights => "HumanRights",
            Pillar::Labour => "Labour",
            Pillar::Environment => "Environment",
            Pillar::AntiCorruption => "AntiCorruption",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Principle {
    pub id: u8,
    pub pillar: Pillar,
    pub short_name: String,
    pub official_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

impl Principle {
    pub fn iri(&self) -> String {
        vocab::principle_iri(self.id)
    }
}

pub fn load_principles(path: impl AsRef<Path>) -> Result<Vec<Principle>, OntologyError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| OntologyError::Io { path: path.display().to_string(), source })?;
    parse_principles(&text)
}

/// Parses line-delimited principle records and enforces the ten-principle
/// integrity rules. Blank lines are skipped.
pub fn parse_principles(text: &str) -> Result<Vec<Principle>, OntologyError> {
    let mut by_id: BTreeMap<u8, Principle> = BTreeMap::new();
    let mut duplicates = BTreeSet::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = n + 1;
        let principle: Principle =
            serde_json::from_str(line).map_err(|e| OntologyError::Parse { line: line_no, message: e.to_string() })?;
        if !(1..=PRINCIPLE_COUNT).contains(&principle.id) {
            return Err(OntologyError::Parse {
                line: line_no,
                message: format!("principle id {} outside 1..=10", principle.id),
            });
        }
        if principle.official_text.trim().is_empty() {
            return Err(OntologyError::Parse {
                line: line_no,
                message: format!("principle {} has empty officialText", principle.id),
            });
        }
        if Pillar::of_principle(principle.id) != Some(principle.pillar) {
            return Err(OntologyError::Integrity(format!(
                "principle {} is assigned pillar {} but belongs to {}",
                principle.id,
                principle.pillar,
                Pillar::of_principle(principle.id).map(|p| p.to_string()).unwrap_or_default()
            )));
        }
        if by_id.insert(principle.id, principle.clone()).is_some() {
            duplicates.insert(principle.id);
        }
    }
    if !duplicates.is_empty() {
        return Err(OntologyError::Integrity(format!("duplicate principle id(s): {}", join_ids(&duplicates))));
    }
    let missing: BTreeSet<u8> = (1..=PRINCIPLE_COUNT).filter(|id| !by_id.contains_key(id)).collect();
    if !missing.is_empty() {
        return Err(OntologyError::Integrity(format!("expected 10 principles, missing id(s): {}", join_ids(&missing))));
    }
    Ok(by_id.into_values().collect())
}

fn join_ids(ids: &BTreeSet<u8>) -> String {
    ids.iter().map(u8::to_string).collect::<Vec<_>>().join(", ")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassDef {
    pub iri: String,
    pub label: String,
    pub comment: String,
    pub parents: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropertyDef {
    pub iri: String,
    pub label: String,
    pub comment: String,
    pub domain: String,
    pub range: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaOntology {
    pub classes: Vec<ClassDef>,
    pub properties: Vec<PropertyDef>,
    pub namespaces: BTreeMap<String, String>,
}

fn class(local: &str, parent: String, comment: &str) -> ClassDef {
    ClassDef { iri: vocab::esg(local), label: local.to_string(), comment: comment.to_string(), parents: vec![parent] }
}

fn property(local: &str, domain: String, range: String, comment: &str) -> PropertyDef {
    PropertyDef { iri: vocab::esg(local), label: local.to_string(), comment: comment.to_string(), domain, range }
}

impl MetaOntology {
    pub fn standard() -> Self {
        let pattern = vocab::esg("ESGViolationActionPattern");
        let principle = vocab::esg("ESGPrincipleTypeEnumeration");
        let article = vocab::esg("ESGNewsArticle");
        let regulation = vocab::esg("ESGRegulation");
        let set = vocab::esg("ESGViolationActionPatternSet");
        let string = vocab::XSD_STRING.to_string();
        let integer = vocab::XSD_INTEGER.to_string();

        let classes = vec![
            class("ESGNewsArticle", vocab::schema("NewsArticle"), "A news article reporting an ESG-relevant event."),
            class("ESGRegulation", vocab::schema("Legislation"), "A regulatory or normative ESG framework."),
            class(
                "ESGViolationActionPattern",
                vocab::hna("ActionPattern"),
                "A relational (entity, action, entity) pattern describing conduct that breaches an ESG principle.",
            ),
            class(
                "ESGPrincipleTypeEnumeration",
                vocab::schema("Enumeration"),
                "Enumeration of the principles of an ESG framework.",
            ),
            class(
                "UNGCPrincipleTypeEnumeration",
                principle.clone(),
                "The ten principles of the United Nations Global Compact.",
            ),
            class(
                "ESGViolationActionPatternSet",
                vocab::schema("ItemList"),
                "The set of violation patterns associated with one principle.",
            ),
        ];
        let properties = vec![
            property("principle", pattern.clone(), principle.clone(), "Principle a pattern or event violates."),
            property(
                "alignedPrinciple",
                RDFS_CLASS.into(),
                principle.clone(),
                "Principle a promoted violation class belongs to.",
            ),
            property(
                "sourcePatternId",
                RDFS_CLASS.into(),
                string.clone(),
                "Identifier of the pattern instance a class was promoted from.",
            ),
            property(
                "patternIndex",
                pattern.clone(),
                integer.clone(),
                "Position of the pattern within its principle's set.",
            ),
            property("entityA", pattern.clone(), string.clone(), "Role of the acting entity."),
            property("action", pattern.clone(), string.clone(), "The action or relation."),
            property("entityB", pattern.clone(), string.clone(), "Role of the affected entity or object."),
            property("lookFor", pattern.clone(), string.clone(), "Positive example of the pattern."),
            property("ignore", pattern.clone(), string.clone(), "Negative example that must not match the pattern."),
            property("reviewState", pattern.clone(), string.clone(), "Human review state of a pattern instance."),
            property("hasPattern", set.clone(), pattern.clone(), "Member pattern of a pattern set."),
            property("patternSetFor", set, principle.clone(), "Principle a pattern set belongs to."),
            property("principleNumber", principle.clone(), integer, "Number of the principle within its framework."),
            property("pillar", principle.clone(), string.clone(), "Thematic pillar of the principle."),
            property("officialText", principle.clone(), string.clone(), "Official wording of the principle."),
            property("framework", principle, regulation, "Framework the principle belongs to."),
            property("reportsViolation", article.clone(), pattern.clone(), "Violation event reported by an article."),
            property("sourceArticle", pattern.clone(), article, "Article an event was extracted from."),
            property(
                "violator",
                pattern.clone(),
                vocab::schema("Organization"),
                "Organization committing the violation.",
            ),
            property("objectText", pattern.clone(), string.clone(), "Object of the extracted triple as written."),
            property("objectEntity", pattern.clone(), vocab::schema("Thing"), "Named entity the object resolves to."),
            property("evidence", pattern.clone(), string.clone(), "Verbatim sentence(s) supporting the event."),
            property("extractedBy", pattern.clone(), string.clone(), "Model that extracted the event."),
            property("extractedAt", pattern.clone(), vocab::XSD_DATETIME.into(), "Time of extraction."),
            property("eventDate", pattern, vocab::XSD_DATE.into(), "Publication date of the reporting article."),
            property("normalizedName", vocab::schema("Thing"), string, "Normalized name used for entity merging."),
        ];
        MetaOntology { classes, properties, namespaces: vocab::prefixes() }
    }

    pub fn class_iris(&self) -> BTreeSet<&str> {
        self.classes.iter().map(|c| c.iri.as_str()).collect()
    }

    pub fn to_graph(&self) -> Graph {
        let mut g = Graph::new();
        for c in &self.classes {
            g.insert(&c.iri, RDF_TYPE, Term::iri(RDFS_CLASS));
            g.insert(&c.iri, RDFS_LABEL, Term::string(&c.label));
            g.insert(&c.iri, RDFS_COMMENT, Term::string(&c.comment));
            for parent in &c.parents {
                g.insert(&c.iri, RDFS_SUBCLASS_OF, Term::iri(parent));
            }
        }
        for p in &self.properties {
            g.insert(&p.iri, RDF_TYPE, Term::iri(RDF_PROPERTY));
            g.insert(&p.iri, RDFS_LABEL, Term::string(&p.label));
            g.insert(&p.iri, RDFS_COMMENT, Term::string(&p.comment));
            g.insert(&p.iri, RDFS_DOMAIN, Term::iri(&p.domain));
            g.insert(&p.iri, RDFS_RANGE, Term::iri(&p.range));
        }
        let framework = vocab::ungc_framework_iri();
        g.insert(&framework, RDF_TYPE, Term::iri(vocab::esg("ESGRegulation")));
        g.insert(&framework, vocab::schema("name"), Term::string("United Nations Global Compact"));
        g
    }
}

/// One enumeration member per principle.
pub fn principles_graph(principles: &[Principle]) -> Graph {
    let mut g = Graph::new();
    for p in principles {
        let iri = p.iri();
        g.insert(&iri, RDF_TYPE, Term::iri(vocab::esg("UNGCPrincipleTypeEnumeration")));
        g.insert(&iri, vocab::schema("name"), Term::string(&p.short_name));
        g.insert(&iri, vocab::esg("principleNumber"), Term::integer(i64::from(p.id)));
        g.insert(&iri, vocab::esg("pillar"), Term::string(p.pillar.to_string()));
        g.insert(&iri, vocab::esg("officialText"), Term::string(&p.official_text));
        g.insert(&iri, vocab::esg("framework"), Term::iri(vocab::ungc_framework_iri()));
        if let Some(comment) = &p.comment {
            g.insert(&iri, RDFS_COMMENT, Term::string(comment));
        }
    }
    g
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViolationClassDef {
    pub iri: String,
    pub label: String,
    pub parent: String,
    pub source_pattern: PatternId,
    pub principle: u8,
    pub comment: String,
}

pub fn violation_classes_graph(classes: &[ViolationClassDef]) -> Graph {
    let mut g = Graph::new();
    for c in classes {
        g.insert(&c.iri, RDF_TYPE, Term::iri(RDFS_CLASS));
        g.insert(&c.iri, RDFS_SUBCLASS_OF, Term::iri(&c.parent));
        g.insert(&c.iri, RDFS_LABEL, Term::string(&c.label));
        g.insert(&c.iri, RDFS_COMMENT, Term::string(&c.comment));
        g.insert(&c.iri, vocab::esg("alignedPrinciple"), Term::iri(vocab::principle_iri(c.principle)));
        g.insert(&c.iri, vocab::esg("sourcePatternId"), Term::string(c.source_pattern.to_string()));
    }
    g
}

/// Builds the in-memory ontology graph after checking class integrity.
pub fn ontology_graph(principles: &[Principle], classes: &[ViolationClassDef]) -> Result<Graph, OntologyError> {
    let meta = MetaOntology::standard();
    let reserved: BTreeSet<String> = meta
        .classes
        .iter()
        .map(|c| c.iri.clone())
        .chain(meta.properties.iter().map(|p| p.iri.clone()))
        .chain(principles.iter().map(Principle::iri))
        .collect();
    let known_principles: BTreeSet<u8> = principles.iter().map(|p| p.id).collect();
    let parent = vocab::esg("ESGViolationActionPattern");
    let mut seen: BTreeMap<&str, &ViolationClassDef> = BTreeMap::new();
    for c in classes {
        if reserved.contains(&c.iri) {
            return Err(OntologyError::Integrity(format!("class IRI {} collides with an ontology term", c.iri)));
        }
        if let Some(prev) = seen.insert(&c.iri, c) {
            if prev != c {
                return Err(OntologyError::Integrity(format!(
                    "IRI collision: {} bound to both {} and {}",
                    c.iri, prev.source_pattern, c.source_pattern
                )));
            }
        }
        if c.parent != parent {
            return Err(OntologyError::Integrity(format!("class {} must subclass {parent}", c.iri)));
        }
        if !known_principles.contains(&c.principle) {
            return Err(OntologyError::Integrity(format!(
                "class {} refers to unknown principle {}",
                c.iri, c.principle
            )));
        }
    }
    let mut g = meta.to_graph();
    g.extend(principles_graph(principles));
    g.extend(violation_classes_graph(classes));
    Ok(g)
}

pub fn emit_meta_ontology(
    principles: &[Principle],
    classes: &[ViolationClassDef],
    format: Format,
) -> Result<String, OntologyError> {
    let g = ontology_graph(principles, classes)?;
    Ok(rdf::serialize(&g, &vocab::prefixes(), format))
}

/// Promotes one reviewed pattern. The class IRI depends only on
/// (principle, index), so repeated promotion yields an identical class.
pub fn promote_pattern(pattern: &ViolationPattern) -> Result<ViolationClassDef, OntologyError> {
    if !matches!(pattern.review_state, ReviewState::Approved | ReviewState::Edited) {
        return Err(OntologyError::ReviewRequired(pattern.id()));
    }
    let id = pattern.id();
    Ok(ViolationClassDef {
        iri: vocab::pattern_class_iri(id.principle, id.index),
        label: format!("{} {} {}", pattern.entity_a, pattern.action, pattern.entity_b),
        parent: vocab::esg("ESGViolationActionPattern"),
        source_pattern: id,
        principle: id.principle,
        comment: format!(
            "Violation of UNGC principle {}: ({}, {}, {}).",
            id.principle, pattern.entity_a, pattern.action, pattern.entity_b
        ),
    })
}

/// Tracks IRI bindings across promotions so a re-promotion of changed
/// content under an already-bound IRI is caught.
#[derive(Debug, Default)]
pub struct ClassRegistry {
    bound: BTreeMap<String, ViolationClassDef>,
}

impl ClassRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn promote(&mut self, pattern: &ViolationPattern) -> Result<ViolationClassDef, OntologyError> {
        let class = promote_pattern(pattern)?;
        match self.bound.get(&class.iri) {
            Some(existing) if existing != &class => Err(OntologyError::Integrity(format!(
                "IRI {} already bound to a different pattern ({})",
                class.iri, existing.label
            ))),
            Some(existing) => Ok(existing.clone()),
            None => {
                self.bound.insert(class.iri.clone(), class.clone());
                Ok(class)
            }
        }
    }

    pub fn classes(&self) -> Vec<ViolationClassDef> {
        self.bound.values().cloned().collect()
    }
}

/// Promotes every approved or edited pattern, requiring exactly three per
/// principle. Rejected patterns are skipped; drafts are an error.
pub fn promote_all(patterns: &[ViolationPattern]) -> Result<Vec<ViolationClassDef>, OntologyError> {
    let mut per_principle: BTreeMap<u8, BTreeSet<u8>> = BTreeMap::new();
    let mut registry = ClassRegistry::new();
    let mut classes = Vec::new();
    for pattern in patterns {
        match pattern.review_state {
            ReviewState::Rejected => continue,
            ReviewState::Draft => return Err(OntologyError::ReviewRequired(pattern.id())),
            ReviewState::Approved | ReviewState::Edited => {}
        }
        let class = registry.promote(pattern)?;
        if !per_principle.entry(pattern.principle_id).or_default().insert(pattern.index) {
            return Err(OntologyError::Integrity(format!("pattern {} promoted twice", pattern.id())));
        }
        classes.push(class);
    }
    let mut gaps = Vec::new();
    for principle in 1..=PRINCIPLE_COUNT {
        let have = per_principle.get(&principle).cloned().unwrap_or_default();
        if have.len() != usize::from(PATTERNS_PER_PRINCIPLE) {
            let missing: Vec<String> = (1..=PATTERNS_PER_PRINCIPLE)
                .filter(|i| !have.contains(i))
                .map(|i| PatternId { principle, index: i }.to_string())
                .collect();
            gaps.push(format!(
                "principle {principle} has {} approved pattern(s), missing {}",
                have.len(),
                missing.join(", ")
            ));
        }
    }
    if !gaps.is_empty() {
        return Err(OntologyError::Integrity(gaps.join("; ")));
    }
    classes.sort_by_key(|c| c.source_pattern);
    Ok(classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern_forge::tests::approved_pattern;

    pub(crate) const BUNDLED: &str = include_str!("../../../data/ungc_principles.jsonl");

    #[test]
    fn bundled_principles_load() {
        let principles = parse_principles(BUNDLED).unwrap();
        assert_eq!(principles.len(), 10);
        assert_eq!(principles.iter().map(|p| p.id).collect::<Vec<_>>(), (1..=10).collect::<Vec<_>>());
        let pillars: BTreeSet<Pillar> = principles.iter().map(|p| p.pillar).collect();
        assert_eq!(pillars.len(), 4);
        assert!(principles.iter().all(|p| p.comment.is_none()));
    }

    #[test]
    fn nine_records_names_the_missing_id() {
        let text: String = BUNDLED.lines().filter(|l| !l.contains("\"id\": 7,")).map(|l| format!("{l}\n")).collect();
        let err = parse_principles(&text).unwrap_err();
        assert!(matches!(&err, OntologyError::Integrity(m) if m.contains("missing id(s): 7")), "{err}");
    }

    #[test]
    fn duplicate_id_is_named() {
        let third = BUNDLED.lines().nth(2).unwrap();
        let text = format!("{BUNDLED}{third}\n");
        let err = parse_principles(&text).unwrap_err();
        assert!(matches!(&err, OntologyError::Integrity(m) if m.contains("duplicate principle id(s): 3")), "{err}");
    }

    #[test]
    fn malformed_record_reports_line() {
        let mut lines: Vec<&str> = BUNDLED.lines().collect();
        lines[4] = "{\"id\": 5, \"pillar\": ";
        let err = parse_principles(&lines.join("\n")).unwrap_err();
        assert!(matches!(err, OntologyError::Parse { line: 5, .. }), "{err}");
    }

    #[test]
    fn wrong_pillar_is_rejected() {
        let text = BUNDLED.replacen("\"id\": 7, \"pillar\": \"Environment\"", "\"id\": 7, \"pillar\": \"Labour\"", 1);
        assert!(matches!(parse_principles(&text), Err(OntologyError::Integrity(_))));
    }

    #[test]
    fn meta_ontology_terms_are_anchored() {
        let meta = MetaOntology::standard();
        for name in [
            "ESGNewsArticle",
            "ESGRegulation",
            "ESGViolationActionPattern",
            "ESGPrincipleTypeEnumeration",
            "UNGCPrincipleTypeEnumeration",
            "ESGViolationActionPatternSet",
        ] {
            assert!(meta.class_iris().contains(vocab::esg(name).as_str()), "{name}");
        }
        let parent_of = |local: &str| meta.classes.iter().find(|c| c.iri == vocab::esg(local)).unwrap().parents.clone();
        assert_eq!(parent_of("ESGNewsArticle"), vec![vocab::schema("NewsArticle")]);
        assert_eq!(parent_of("ESGRegulation"), vec![vocab::schema("Legislation")]);
        assert_eq!(parent_of("ESGViolationActionPattern"), vec![vocab::hna("ActionPattern")]);
        assert!(meta.classes.iter().all(|c| !c.parents.is_empty()));
        assert!(meta.properties.iter().all(|p| !p.domain.is_empty() && !p.range.is_empty()));
    }

    #[test]
    fn promotion_is_deterministic_and_gated() {
        let pattern = approved_pattern(2, 1);
        let a = promote_pattern(&pattern).unwrap();
        let b = promote_pattern(&pattern).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.parent, vocab::esg("ESGViolationActionPattern"));
        assert_eq!(a.iri, "https://esgkg.example.org/ungc/p2/pattern1");

        let mut draft = pattern.clone();
        draft.review_state = ReviewState::Draft;
        assert!(matches!(promote_pattern(&draft), Err(OntologyError::ReviewRequired(_))));
    }

    #[test]
    fn registry_rejects_rebinding_with_different_content() {
        let mut registry = ClassRegistry::new();
        let pattern = approved_pattern(4, 2);
        registry.promote(&pattern).unwrap();
        assert_eq!(registry.promote(&pattern).unwrap(), promote_pattern(&pattern).unwrap());
        let mut changed = pattern.clone();
        changed.action = "coerces".into();
        assert!(matches!(registry.promote(&changed), Err(OntologyError::Integrity(_))));
    }

    #[test]
    fn all_thirty_promote_to_distinct_iris() {
        let patterns: Vec<_> = (1..=10).flat_map(|p| (1..=3).map(move |i| approved_pattern(p, i))).collect();
        let classes = promote_all(&patterns).unwrap();
        assert_eq!(classes.len(), 30);
        let iris: BTreeSet<_> = classes.iter().map(|c| c.iri.clone()).collect();
        assert_eq!(iris.len(), 30);
        for p in 1..=10 {
            assert_eq!(classes.iter().filter(|c| c.principle == p).count(), 3);
        }
    }

    #[test]
    fn rejected_pattern_leaves_a_named_gap() {
        let mut patterns: Vec<_> = (1..=10).flat_map(|p| (1..=3).map(move |i| approved_pattern(p, i))).collect();
        patterns.iter_mut().find(|p| p.principle_id == 4 && p.index == 2).unwrap().review_state = ReviewState::Rejected;
        let err = promote_all(&patterns).unwrap_err();
        assert!(
            matches!(&err, OntologyError::Integrity(m) if m.contains("principle 4 has 2") && m.contains("p4.2")),
            "{err}"
        );
    }

    #[test]
    fn emission_with_and_without_classes() {
        let principles = parse_principles(BUNDLED).unwrap();
        let empty = emit_meta_ontology(&principles, &[], Format::Turtle).unwrap();
        assert!(!empty.contains("/ungc/p1/pattern1"));
        assert_eq!(empty.matches("a esg:UNGCPrincipleTypeEnumeration").count(), 10);

        let patterns: Vec<_> = (1..=10).flat_map(|p| (1..=3).map(move |i| approved_pattern(p, i))).collect();
        let classes = promote_all(&patterns).unwrap();
        let g = ontology_graph(&principles, &classes).unwrap();
        let subclasses = g
            .triples()
            .filter(|t| {
                t.predicate == RDFS_SUBCLASS_OF && t.object.as_iri() == Some(&vocab::esg("ESGViolationActionPattern"))
            })
            .count();
        assert_eq!(subclasses, 30);
    }

    #[test]
    fn colliding_classes_are_an_integrity_error() {
        let principles = parse_principles(BUNDLED).unwrap();
        let a = promote_pattern(&approved_pattern(1, 1)).unwrap();
        let mut b = a.clone();
        b.label = "something else".into();
        assert!(matches!(emit_meta_ontology(&principles, &[a, b], Format::JsonLd), Err(OntologyError::Integrity(_))));
    }
}
