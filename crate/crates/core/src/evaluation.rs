//! Scoring against human labels, the comparison tables, and the
//! principle-to-principle transition matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::ViolationEvent;
use crate::ontology::{Principle, PRINCIPLE_COUNT};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("integrity: {0}")]
    Integrity(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path} line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LabeledSample {
    pub article_id: String,
    pub principle_id: u8,
    pub gold: bool,
    pub predicted: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub const fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        ConfusionCounts { tp, fn_, fp, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn record(&mut self, gold: bool, predicted: bool) {
        match (gold, predicted) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts::new(self.tp + o.tp, self.fn_ + o.fn_, self.fp + o.fp, self.tn + o.tn)
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = ConfusionCounts>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), |a, b| a + b)
    }
}

/// An exact non-negative fraction. 0/0 reads as zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Self {
        Ratio { num, den }
    }

    pub fn value(&self) -> f64 {
        if self.den == 0 {
            0.0
        } else {
            self.num as f64 / self.den as f64
        }
    }

    /// Value in hundredths, rounded half to even on the exact fraction.
    pub fn hundredths(&self) -> u64 {
        round_half_even(self.num * 100, self.den)
    }
}

/// Rounds `num / den` to the nearest integer, ties to even. 0/0 is 0.
pub fn round_half_even(num: u64, den: u64) -> u64 {
    if den == 0 {
        return 0;
    }
    let (q, r) = (num / den, num % den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q % 2),
    }
}

/// Two-decimal presentation: exact zero prints as "0", anything else as
/// "0.56" or "1.00".
impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.num == 0 {
            return f.write_str("0");
        }
        let h = self.hundredths();
        write!(f, "{}.{:02}", h / 100, h % 100)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Ratio,
    pub precision: Ratio,
    pub recall: Ratio,
}

pub fn metrics(counts: &ConfusionCounts) -> Result<Metrics, EvalError> {
    let total = counts.total();
    if total == 0 {
        return Err(EvalError::Usage("cannot compute metrics over zero samples".into()));
    }
    Ok(Metrics {
        accuracy: Ratio::new(counts.tp + counts.tn, total),
        precision: Ratio::new(counts.tp, counts.tp + counts.fp),
        recall: Ratio::new(counts.tp, counts.tp + counts.fn_),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Scorecard {
    pub articles: BTreeSet<String>,
    pub per_principle: BTreeMap<u8, ConfusionCounts>,
    pub aggregate: ConfusionCounts,
}

/// Per-principle and aggregate counts. Every article must carry exactly one
/// sample for each of the ten principles.
pub fn score(samples: &[LabeledSample]) -> Result<Scorecard, EvalError> {
    let mut cells: BTreeMap<(&str, u8), &LabeledSample> = BTreeMap::new();
    for s in samples {
        if !(1..=PRINCIPLE_COUNT).contains(&s.principle_id) {
            return Err(EvalError::Integrity(format!(
                "article {} has out-of-range principle {}",
                s.article_id, s.principle_id
            )));
        }
        if cells.insert((s.article_id.as_str(), s.principle_id), s).is_some() {
            return Err(EvalError::Integrity(format!(
                "duplicate sample for article {} principle {}",
                s.article_id, s.principle_id
            )));
        }
    }
    let articles: BTreeSet<String> = samples.iter().map(|s| s.article_id.clone()).collect();
    let mut per_principle: BTreeMap<u8, ConfusionCounts> =
        (1..=PRINCIPLE_COUNT).map(|p| (p, Default::default())).collect();
    for article in &articles {
        for p in 1..=PRINCIPLE_COUNT {
            let Some(s) = cells.get(&(article.as_str(), p)) else {
                return Err(EvalError::Integrity(format!("missing sample for article {article} principle {p}")));
            };
            per_principle.get_mut(&p).expect("all principles seeded").record(s.gold, s.predicted);
        }
    }
    let aggregate = per_principle.values().copied().sum();
    Ok(Scorecard { articles, per_principle, aggregate })
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    #[serde(rename = "articleId")]
    article_id: String,
    #[serde(rename = "principleId")]
    principle_id: u8,
    gold: String,
}

/// Human gold labels keyed by (articleId, principleId).
pub type GoldLabels = BTreeMap<(String, u8), bool>;

/// Human gold labels as CSV with header `articleId,principleId,gold`. Lines
/// starting with `#` and blank lines are skipped.
pub fn parse_labels(text: &str, path: &str) -> Result<GoldLabels, EvalError> {
    let kept: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(n, l)| (n + 1, l))
        .collect();
    let body = kept.iter().map(|(_, l)| *l).collect::<Vec<_>>().join("\n");
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let mut out = GoldLabels::new();
    for (i, row) in reader.deserialize::<LabelRow>().enumerate() {
        let line = kept.get(i + 1).map_or(0, |(n, _)| *n);
        let bad = |message: String| EvalError::Parse { path: path.to_string(), line, message };
        let row = row.map_err(|e| bad(e.to_string()))?;
        let gold = match row.gold.to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" => true,
            "0" | "false" | "no" => false,
            other => return Err(bad(format!("gold must be 1/0 or true/false, got {other:?}"))),
        };
        if !(1..=PRINCIPLE_COUNT).contains(&row.principle_id) {
            return Err(bad(format!("principleId must be 1-10, got {}", row.principle_id)));
        }
        if out.insert((row.article_id.clone(), row.principle_id), gold).is_some() {
            return Err(EvalError::Integrity(format!(
                "duplicate label for article {} principle {}",
                row.article_id, row.principle_id
            )));
        }
    }
    Ok(out)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<GoldLabels, EvalError> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.display().to_string(), source })?;
    parse_labels(&text, &path.display().to_string())
}

/// Principles a run asserted for one article.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ArticlePrediction {
    pub article_id: String,
    pub principles: BTreeSet<u8>,
}

/// Collapses events to principle level: at least one event predicts the
/// principle for that article.
pub fn predictions_from_events(article_ids: &[String], events: &[ViolationEvent]) -> Vec<ArticlePrediction> {
    let mut by_article: BTreeMap<&str, BTreeSet<u8>> =
        article_ids.iter().map(|a| (a.as_str(), BTreeSet::new())).collect();
    for e in events {
        by_article.entry(e.article_id.as_str()).or_default().insert(e.principle_id);
    }
    by_article
        .into_iter()
        .map(|(article_id, principles)| ArticlePrediction { article_id: article_id.to_string(), principles })
        .collect()
}

/// Joins gold labels with predictions. Articles without a prediction count
/// as predicting nothing; predictions for unlabeled articles are ignored.
pub fn join(labels: &GoldLabels, predictions: &[ArticlePrediction]) -> Vec<LabeledSample> {
    let predicted: BTreeMap<&str, &BTreeSet<u8>> =
        predictions.iter().map(|p| (p.article_id.as_str(), &p.principles)).collect();
    labels
        .iter()
        .map(|((article_id, principle_id), &gold)| LabeledSample {
            article_id: article_id.clone(),
            principle_id: *principle_id,
            gold,
            predicted: predicted.get(article_id.as_str()).is_some_and(|s| s.contains(principle_id)),
        })
        .collect()
}

pub fn parse_predictions(text: &str, path: &str) -> Result<Vec<ArticlePrediction>, EvalError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p = serde_json::from_str(line).map_err(|e| EvalError::Parse {
            path: path.to_string(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(p);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ComparisonRow {
    pub model: String,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
}

impl ComparisonRow {
    pub fn from_counts(model: impl Into<String>, counts: ConfusionCounts) -> Result<Self, EvalError> {
        Ok(ComparisonRow { model: model.into(), counts, metrics: metrics(&counts)? })
    }
}

/// One row per run, in the given order. All runs must cover the same
/// article set.
pub fn compare_models(runs: &[(String, Vec<LabeledSample>)]) -> Result<Vec<ComparisonRow>, EvalError> {
    let mut reference: Option<(&str, BTreeSet<String>)> = None;
    let mut rows = Vec::new();
    for (model, samples) in runs {
        let card = score(samples)?;
        match &reference {
            None => reference = Some((model, card.articles.clone())),
            Some((first, articles)) if *articles != card.articles => {
                let only_first = articles.difference(&card.articles).count();
                let only_this = card.articles.difference(articles).count();
                return Err(EvalError::Integrity(format!(
                    "runs {first} and {model} cover different article sets ({only_first} only in {first}, {only_this} only in {model})"
                )));
            }
            Some(_) => {}
        }
        rows.push(ComparisonRow::from_counts(model.clone(), card.aggregate)?);
    }
    Ok(rows)
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut out = String::from("|");
        for (i, (cell, w)) in cells.zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(out, " {cell:<w$} |");
            } else {
                let _ = write!(out, " {cell:>w$} |");
            }
        }
        out.push('\n');
        out
    };
    let mut out = line(&mut header.iter().copied());
    out.push('|');
    for (i, w) in widths.iter().enumerate() {
        let dashes = "-".repeat(*w);
        out.push_str(&if i == 0 { format!(":{dashes}-|") } else { format!("-{dashes}:|") });
    }
    out.push('\n');
    for row in rows {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
    }
    out
}

fn metric_cells(label: String, c: &ConfusionCounts, m: &Metrics) -> Vec<String> {
    vec![
        label,
        c.tp.to_string(),
        c.fn_.to_string(),
        c.fp.to_string(),
        c.tn.to_string(),
        m.accuracy.to_string(),
        m.precision.to_string(),
        m.recall.to_string(),
    ]
}

const COLUMNS: [&str; 7] = ["TP", "FN", "FP", "TN", "Accuracy", "Precision", "Recall"];

/// Markdown table with the model comparison columns.
pub fn render_comparison(rows: &[ComparisonRow]) -> String {
    let header: Vec<&str> = std::iter::once("Model").chain(COLUMNS).collect();
    let body: Vec<Vec<String>> = rows.iter().map(|r| metric_cells(r.model.clone(), &r.counts, &r.metrics)).collect();
    table(&header, &body)
}

/// Per-principle table with a closing "All" row.
pub fn render_scorecard(card: &Scorecard, principles: &[Principle]) -> Result<String, EvalError> {
    let names: BTreeMap<u8, &str> = principles.iter().map(|p| (p.id, p.short_name.as_str())).collect();
    let mut body = Vec::new();
    for (p, counts) in &card.per_principle {
        let label = match names.get(p) {
            Some(name) => format!("{p} ({name})"),
            None => p.to_string(),
        };
        body.push(metric_cells(label, counts, &metrics(counts)?));
    }
    body.push(metric_cells("All".into(), &card.aggregate, &metrics(&card.aggregate)?));
    let header: Vec<&str> = std::iter::once("UNGC Principle").chain(COLUMNS).collect();
    Ok(table(&header, &body))
}

/// How dated violations of one entity are paired.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PairingRule {
    /// Each date pairs with the next distinct date only.
    #[default]
    #[serde(alias = "adjacent")]
    AdjacentDates,
    /// Each date pairs with every later date.
    #[serde(alias = "all-later")]
    AllLaterDates,
}

impl std::str::FromStr for PairingRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "adjacent" | "adjacentDates" => Ok(PairingRule::AdjacentDates),
            "all-later" | "allLaterDates" => Ok(PairingRule::AllLaterDates),
            other => Err(format!("unknown pairing rule {other:?} (expected adjacent or all-later)")),
        }
    }
}

/// The inputs transitions need from an event.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatedViolation {
    pub entity: String,
    pub principle_id: u8,
    pub date: Option<NaiveDate>,
}

impl From<&ViolationEvent> for DatedViolation {
    fn from(e: &ViolationEvent) -> Self {
        DatedViolation {
            entity: e.subject.normalized.clone(),
            principle_id: e.principle_id,
            date: Some(e.published_date),
        }
    }
}

const N: usize = PRINCIPLE_COUNT as usize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TransitionMatrix {
    /// `counts[i][j]` pairs from principle i+1 to principle j+1.
    pub counts: [[u64; N]; N],
    pub pair_count: u64,
    pub rule: PairingRule,
}

impl TransitionMatrix {
    pub fn row_total(&self, from: u8) -> u64 {
        self.counts[usize::from(from) - 1].iter().sum()
    }

    /// Row-normalized percentage; all-zero rows stay zero.
    pub fn percent(&self, from: u8, to: u8) -> f64 {
        let total = self.row_total(from);
        if total == 0 {
            0.0
        } else {
            self.counts[usize::from(from) - 1][usize::from(to) - 1] as f64 * 100.0 / total as f64
        }
    }

    /// Percentages to two decimals, rows labelled "from", columns "to".
    pub fn render_grid(&self) -> String {
        let mut out = String::from("from\\to");
        for j in 1..=N {
            let _ = write!(out, " {j:>7}");
        }
        out.push('\n');
        for i in 1..=PRINCIPLE_COUNT {
            let _ = write!(out, "{i:>7}");
            for j in 1..=PRINCIPLE_COUNT {
                let _ = write!(out, " {:>7.2}", self.percent(i, j));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "pairs: {}", self.pair_count);
        out
    }

    /// Standalone SVG heatmap with percentage labels.
    pub fn render_svg(&self) -> String {
        const CELL: usize = 48;
        const MARGIN: usize = 56;
        let size = MARGIN + CELL * N + 16;
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{h}" viewBox="0 0 {size} {h}" font-family="sans-serif" font-size="11">"#,
            h = size + 24
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for k in 0..N {
            let c = MARGIN + k * CELL + CELL / 2;
            let _ = writeln!(out, r#"<text x="{c}" y="{}" text-anchor="middle">P{}</text>"#, MARGIN - 8, k + 1);
            let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">P{}</text>"#, MARGIN - 8, c + 4, k + 1);
        }
        for i in 0..N {
            for j in 0..N {
                let pct = self.percent(i as u8 + 1, j as u8 + 1);
                let shade = 255 - (pct * 2.0).round().min(200.0) as u8;
                let (x, y) = (MARGIN + j * CELL, MARGIN + i * CELL);
                let _ = writeln!(
                    out,
                    r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},255)" stroke="lightgray"/>"#
                );
                let _ = writeln!(
                    out,
                    r#"<text x="{}" y="{}" text-anchor="middle">{pct:.1}</text>"#,
                    x + CELL / 2,
                    y + CELL / 2 + 4
                );
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{MARGIN}" y="{}">rows: from principle, columns: to principle, pairs: {}</text>"#,
            size + 12,
            self.pair_count
        );
        out.push_str("</svg>\n");
        out
    }
}

/// Groups each entity's violations by date (principles deduplicated per
/// date) and counts every principle pair across paired dates.
pub fn transition_matrix(violations: &[DatedViolation], rule: PairingRule) -> Result<TransitionMatrix, EvalError> {
    let mut timeline: BTreeMap<&str, BTreeMap<NaiveDate, BTreeSet<u8>>> = BTreeMap::new();
    for v in violations {
        let Some(date) = v.date else {
            return Err(EvalError::Integrity(format!(
                "violation by {} under principle {} has no date",
                v.entity, v.principle_id
            )));
        };
        if !(1..=PRINCIPLE_COUNT).contains(&v.principle_id) {
            return Err(EvalError::Integrity(format!(
                "violation by {} has out-of-range principle {}",
                v.entity, v.principle_id
            )));
        }
        timeline.entry(v.entity.as_str()).or_default().entry(date).or_default().insert(v.principle_id);
    }
    let mut m = TransitionMatrix { counts: [[0; N]; N], pair_count: 0, rule };
    for dates in timeline.values() {
        let days: Vec<&BTreeSet<u8>> = dates.values().collect();
        for (k, earlier) in days.iter().enumerate() {
            let later: &[&BTreeSet<u8>] = match rule {
                PairingRule::AdjacentDates => &days[(k + 1).min(days.len())..(k + 2).min(days.len())],
                PairingRule::AllLaterDates => &days[k + 1..],
            };
            for next in later {
                for &i in *earlier {
                    for &j in *next {
                        m.counts[usize::from(i) - 1][usize::from(j) - 1] += 1;
                        m.pair_count += 1;
                    }
                }
            }
        }
    }
    Ok(m)
}
