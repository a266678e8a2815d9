#![allow(dead_code)]

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use esgkg::pipeline::{build_gateway, run_pipeline, Mode, RunReport};
use esgkg::rdf::{Graph, Term};
use esgkg::PipelineConfig;
use oxrdf::{Literal, NamedNode, Triple};

pub const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn demo_config(out: &Path) -> PipelineConfig {
    let mut config = PipelineConfig::load(repo_root().join("demo/demo.toml")).unwrap();
    config.paths.out = out.to_path_buf();
    config
}

pub fn run_demo(out: &Path) -> (PipelineConfig, RunReport) {
    let config = demo_config(out);
    let gateway = build_gateway(&config, Mode::Offline).unwrap();
    let report = run_pipeline(&config, &gateway, Mode::Offline).unwrap();
    (config, report)
}

pub fn to_ox(graph: &Graph) -> HashSet<Triple> {
    graph
        .triples()
        .map(|t| {
            let object: oxrdf::Term = match &t.object {
                Term::Iri(iri) => NamedNode::new(iri.clone()).unwrap().into(),
                Term::Literal(l) => match (&l.lang, &l.datatype) {
                    (Some(lang), _) => Literal::new_language_tagged_literal(&l.lexical, lang).unwrap().into(),
                    (None, Some(dt)) if dt != XSD_STRING => {
                        Literal::new_typed_literal(&l.lexical, NamedNode::new(dt.clone()).unwrap()).into()
                    }
                    (None, _) => Literal::new_simple_literal(&l.lexical).into(),
                },
            };
            Triple::new(
                NamedNode::new(t.subject.clone()).unwrap(),
                NamedNode::new(t.predicate.clone()).unwrap(),
                object,
            )
        })
        .collect()
}

pub fn parse_turtle(text: &str) -> HashSet<Triple> {
    oxttl::TurtleParser::new().for_slice(text.as_bytes()).map(|t| t.expect("valid Turtle")).collect()
}

pub fn parse_jsonld(text: &str) -> HashSet<Triple> {
    oxjsonld::JsonLdParser::new()
        .for_slice(text.as_bytes())
        .map(|q| {
            let q = q.expect("valid JSON-LD");
            assert!(q.graph_name.is_default_graph(), "unexpected named graph");
            Triple::new(q.subject, q.predicate, q.object)
        })
        .collect()
}
