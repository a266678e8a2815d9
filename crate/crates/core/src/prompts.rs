//! Prompt templates for every model-backed step.
//!
//! Changing any string here changes cache keys, so recorded fixtures must be
//! re-recorded afterwards. The first line of each system prompt is unique per
//! task, which lets scripted responders route on it.

use crate::extraction::NamedEntity;
use crate::ingest::NewsArticle;
use crate::ontology::Principle;
use crate::pattern_forge::ViolationPattern;

pub const COMMENT_SYSTEM: &str = "You summarize principles of the United Nations Global Compact for an ESG ontology.
Write one concise paragraph (at most three sentences) stating what conduct the principle expects from companies and what would count as falling short of it.
Reply with the paragraph only: no headings, lists or quotation marks.";

pub const PATTERNS_SYSTEM: &str = "You design violation patterns for an ESG knowledge graph aligned with the United Nations Global Compact.
A violation pattern is a relational triple (Entity A, Action, Entity B) describing corporate conduct that breaches a principle, for example (Company, violates, rights of indigenous communities).
Produce exactly three patterns for the given principle. Together they must cover direct violations and indirect ones such as complicity through suppliers, partners or financing.
For each pattern give at least one lookFor sentence (news-style text the pattern should match) and at least one ignore sentence (similar-sounding text it must not match). No sentence may appear in both lists.
Reply with a single fenced ```json block of the form {\"patterns\": [{\"entityA\": ..., \"action\": ..., \"entityB\": ..., \"lookFor\": [...], \"ignore\": [...]}]}.";

pub const STAGE1_SYSTEM: &str = "You screen news articles for an ESG controversy monitoring system.
Keep an article if it concerns companies, business conduct, or environmental, social or governance topics. Drop articles about sports, entertainment, lifestyle, or other subjects unrelated to corporate or ESG matters.
Reply with a single fenced ```json block: {\"keep\": true|false, \"reason\": \"short justification\"}.";

pub const STAGE2_SYSTEM: &str = "You select news articles that report possible corporate ESG misconduct.
Decide (a) whether the article names a specific company and (b) whether it describes a negative event that is plausibly relevant to environmental, social or governance standards.
Reply with a single fenced ```json block: {\"mentionsCompany\": true|false, \"company\": \"name as written, or null\", \"negativeEsgEvent\": true|false, \"reason\": \"short justification\"}.";

pub const ENTITIES_SYSTEM: &str = "You extract named entities from news articles.
List organizations, persons and locations exactly as they are written in the article text. Exclude author bylines, photo credits, publisher names, newsletter or subscription boilerplate, and other text that is not part of the reported story.
Reply with a single fenced ```json block: {\"entities\": [{\"text\": \"surface form\", \"kind\": \"Organization|Person|Location\"}]}.";

pub const MATCH_SYSTEM: &str = "You check news articles against ESG violation patterns derived from the United Nations Global Compact.
A pattern matches only if the article reports conduct of the pattern's shape by a named organization. Use the lookFor examples as guidance for what matches and the ignore examples for what must not match. Do not infer violations the text does not support.
Reply with a single fenced ```json block: {\"matches\": [\"pattern id\", ...]} listing only matching pattern ids (an empty list is valid).";

pub const TRIPLE_SYSTEM: &str = "You extract one grounded violation triple from a news article for a given ESG violation pattern.
The subject must be an organization from the provided entity list, written exactly as listed. The evidence must be copied verbatim from the article body: one to three consecutive sentences, unchanged.
Reply with a single fenced ```json block: {\"subject\": ..., \"action\": ..., \"object\": ..., \"evidence\": ...}.";

pub const ONE_SHOT_SYSTEM: &str = "You classify news articles against the ten principles of the United Nations Global Compact.
Given the principle descriptions and a full article, list the numbers of all principles the article reports a violation of.
Reply with a single fenced ```json block: {\"principles\": [numbers]} (an empty list is valid).";

pub fn render_article(article: &NewsArticle) -> String {
    format!(
        "Article ID: {}\nTitle: {}\nPublished: {}\nSource: {}\n\n{}",
        article.article_id,
        article.title,
        article.published_date.format("%Y-%m-%d"),
        article.source_name,
        article.body
    )
}

pub fn comment_user(principle: &Principle) -> String {
    format!("Principle {} ({}):\n{}", principle.id, principle.short_name, principle.official_text)
}

pub fn patterns_user(principle: &Principle) -> String {
    format!(
        "Principle {} ({}).\nOfficial text: {}\nSummary: {}",
        principle.id,
        principle.short_name,
        principle.official_text,
        principle.comment.as_deref().unwrap_or_default()
    )
}

pub fn stage1_user(article: &NewsArticle) -> String {
    render_article(article)
}

pub fn stage2_user(article: &NewsArticle) -> String {
    render_article(article)
}

pub fn entities_user(article: &NewsArticle) -> String {
    render_article(article)
}

fn render_pattern(out: &mut String, pattern: &ViolationPattern) {
    out.push_str(&format!(
        "- {}: ({}, {}, {})\n  lookFor: {}\n  ignore: {}\n",
        pattern.id(),
        pattern.entity_a,
        pattern.action,
        pattern.entity_b,
        pattern.look_for.join(" | "),
        pattern.ignore.join(" | ")
    ));
}

fn render_entities(out: &mut String, entities: &[NamedEntity]) {
    out.push_str("Entities:\n");
    if entities.is_empty() {
        out.push_str("- (none)\n");
    }
    for e in entities {
        out.push_str(&format!("- {} [{}]\n", e.surface, e.kind));
    }
}

pub fn match_user(article: &NewsArticle, entities: &[NamedEntity], patterns: &[ViolationPattern]) -> String {
    let mut out = String::from("Patterns:\n");
    for p in patterns {
        render_pattern(&mut out, p);
    }
    out.push('\n');
    render_entities(&mut out, entities);
    out.push('\n');
    out.push_str(&render_article(article));
    out
}

pub fn triple_user(article: &NewsArticle, pattern: &ViolationPattern, entities: &[NamedEntity]) -> String {
    let mut out = String::from("Pattern:\n");
    render_pattern(&mut out, pattern);
    out.push('\n');
    render_entities(&mut out, entities);
    out.push('\n');
    out.push_str(&render_article(article));
    out
}

pub fn one_shot_user(article: &NewsArticle, principles: &[Principle], use_official_text: bool) -> String {
    let mut out = String::from("Principles:\n");
    for p in principles {
        let description = if use_official_text {
            p.official_text.as_str()
        } else {
            p.comment.as_deref().unwrap_or(p.official_text.as_str())
        };
        out.push_str(&format!("{}. {}: {}\n", p.id, p.short_name, description));
    }
    out.push('\n');
    out.push_str(&render_article(article));
    out
}
