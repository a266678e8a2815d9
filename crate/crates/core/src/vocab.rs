//! Namespace IRIs and IRI minting rules.
//!
//! The project vocabulary and the `hna:` namespace are placeholders under
//! `example.org`, stable across runs. Change them here and nowhere else.

use std::collections::BTreeMap;

/// Root for every IRI minted by this crate.
pub const BASE: &str = "https://esgkg.example.org";

pub const ESG: &str = "https://esgkg.example.org/ontology#";
/// Placeholder namespace for the action-pattern vocabulary.
pub const HNA: &str = "https://hna.example.org/ontology#";
pub const SCHEMA: &str = "https://schema.org/";
pub const RDF: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const RDFS: &str = "http://www.w3.org/2000/01/rdf-schema#";
pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const RDF_PROPERTY: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#Property";
pub const RDFS_CLASS: &str = "http://www.w3.org/2000/01/rdf-schema#Class";
pub const RDFS_SUBCLASS_OF: &str = "http://www.w3.org/2000/01/rdf-schema#subClassOf";
pub const RDFS_DOMAIN: &str = "http://www.w3.org/2000/01/rdf-schema#domain";
pub const RDFS_RANGE: &str = "http://www.w3.org/2000/01/rdf-schema#range";
pub const RDFS_LABEL: &str = "http://www.w3.org/2000/01/rdf-schema#label";
pub const RDFS_COMMENT: &str = "http://www.w3.org/2000/01/rdf-schema#comment";
pub const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
pub const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
pub const XSD_DATE: &str = "http://www.w3.org/2001/XMLSchema#date";
pub const XSD_DATETIME: &str = "http://www.w3.org/2001/XMLSchema#dateTime";

pub fn esg(local: &str) -> String {
    format!("{ESG}{local}")
}

pub fn schema(local: &str) -> String {
    format!("{SCHEMA}{local}")
}

pub fn hna(local: &str) -> String {
    format!("{HNA}{local}")
}

/// The regulation individual every principle belongs to.
pub fn ungc_framework_iri() -> String {
    format!("{BASE}/ungc")
}

pub fn principle_iri(principle_id: u8) -> String {
    format!("{BASE}/ungc/principle/{principle_id}")
}

/// Promoted violation class: `<base>/ungc/p{principle}/pattern{index}`.
pub fn pattern_class_iri(principle_id: u8, index: u8) -> String {
    format!("{BASE}/ungc/p{principle_id}/pattern{index}")
}

/// The JSON-LD pattern instance a class was promoted from.
pub fn pattern_instance_iri(principle_id: u8, index: u8) -> String {
    format!("{BASE}/ungc/p{principle_id}/pattern{index}/instance")
}

pub fn pattern_set_iri(principle_id: u8) -> String {
    format!("{BASE}/ungc/p{principle_id}/patterns")
}

pub fn article_iri(article_id: &str) -> String {
    format!("{BASE}/kg/article/{}", encode_segment(article_id))
}

pub fn entity_iri(kind: &str, normalized: &str) -> String {
    format!("{BASE}/kg/entity/{kind}/{}", encode_segment(normalized))
}

pub fn event_iri(article_id: &str, principle_id: u8, index: u8) -> String {
    format!("{BASE}/kg/event/{}/p{principle_id}/pattern{index}", encode_segment(article_id))
}

/// Inverse of [`pattern_class_iri`].
pub fn parse_pattern_class_iri(iri: &str) -> Option<(u8, u8)> {
    let rest = iri.strip_prefix(BASE)?.strip_prefix("/ungc/p")?;
    let (principle, index) = rest.split_once("/pattern")?;
    let principle: u8 = principle.parse().ok()?;
    let index: u8 = index.parse().ok()?;
    (pattern_class_iri(principle, index) == iri).then_some((principle, index))
}

/// Percent-encodes everything outside the RFC 3986 unreserved set. Injective.
pub fn encode_segment(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for byte in raw.bytes() {
        match byte {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => out.push(byte as char),
            _ => out.push_str(&format!("%{byte:02X}")),
        }
    }
    out
}

/// Prefixes written into every emitted document.
pub fn prefixes() -> BTreeMap<String, String> {
    [("esg", ESG), ("hna", HNA), ("rdf", RDF), ("rdfs", RDFS), ("schema", SCHEMA), ("xsd", XSD)]
        .into_iter()
        .map(|(p, ns)| (p.to_string(), ns.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_iri_round_trips() {
        let iri = pattern_class_iri(2, 1);
        assert_eq!(iri, "https://esgkg.example.org/ungc/p2/pattern1");
        assert_eq!(parse_pattern_class_iri(&iri), Some((2, 1)));
        assert_eq!(parse_pattern_class_iri(&pattern_instance_iri(2, 1)), None);
        assert_eq!(parse_pattern_class_iri("https://other.org/ungc/p2/pattern1"), None);
    }

    #[test]
    fn segment_encoding_is_injective_on_lookalikes() {
        assert_ne!(encode_segment("a b"), encode_segment("a-b"));
        assert_eq!(encode_segment("acme corp"), "acme%20corp");
        assert_eq!(encode_segment("wz-0001"), "wz-0001");
    }
}
