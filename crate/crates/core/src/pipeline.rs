//! End-to-end orchestration: configuration, stage scheduling with
//! content-hash staleness checks, atomic stage outputs, and run manifests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::evaluation::{self, ArticlePrediction, ComparisonRow, DatedViolation, EvalError, PairingRule};
use crate::extraction::{self, ExtractionContext, ExtractionError, NamedEntity, OneShotOptions, ViolationEvent};
use crate::fsutil::{self, sha256_hex, to_jsonl};
use crate::ingest::{self, FilterOptions, IngestError, NewsArticle};
use crate::kg::{self, KgError, KnowledgeGraph};
use crate::llm::{self, Gateway, GatewayError, GatewayStats, ModelSpec, ResponseCache};
use crate::ontology::{self, OntologyError, Principle, ViolationClassDef};
use crate::par;
use crate::pattern_forge::{self, ForgeError, ForgeOptions};
use crate::rdf::{Format, RdfError};

/// Exit status families shared by the pipeline and the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Integrity,
    Provider,
}

impl ErrorClass {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorClass::Usage => 1,
            ErrorClass::Integrity => 2,
            ErrorClass::Provider => 3,
        }
    }
}

pub trait Classify {
    fn class(&self) -> ErrorClass;
}

impl Classify for GatewayError {
    fn class(&self) -> ErrorClass {
        match self {
            GatewayError::Config(_) | GatewayError::Io { .. } => ErrorClass::Usage,
            GatewayError::FixtureParse { .. } => ErrorClass::Integrity,
            GatewayError::Transport { .. } | GatewayError::Policy { .. } | GatewayError::MissingFixture { .. } => {
                ErrorClass::Provider
            }
        }
    }
}

impl Classify for OntologyError {
    fn class(&self) -> ErrorClass {
        match self {
            OntologyError::Io { .. } => ErrorClass::Usage,
            _ => ErrorClass::Integrity,
        }
    }
}

impl Classify for ForgeError {
    fn class(&self) -> ErrorClass {
        match self {
            ForgeError::Precondition(_) => ErrorClass::Usage,
            ForgeError::Gateway(g) => g.class(),
            ForgeError::Generation { .. } => ErrorClass::Provider,
            _ => ErrorClass::Integrity,
        }
    }
}

impl Classify for IngestError {
    fn class(&self) -> ErrorClass {
        match self {
            IngestError::Io { .. } => ErrorClass::Usage,
            _ => ErrorClass::Integrity,
        }
    }
}

impl Classify for ExtractionError {
    fn class(&self) -> ErrorClass {
        match self {
            ExtractionError::Precondition(_) => ErrorClass::Integrity,
            ExtractionError::Gateway(g) => g.class(),
            ExtractionError::Unparseable { .. } => ErrorClass::Provider,
        }
    }
}

impl Classify for KgError {
    fn class(&self) -> ErrorClass {
        match self {
            KgError::Io { .. } => ErrorClass::Usage,
            _ => ErrorClass::Integrity,
        }
    }
}

impl Classify for EvalError {
    fn class(&self) -> ErrorClass {
        match self {
            EvalError::Usage(_) | EvalError::Io { .. } => ErrorClass::Usage,
            _ => ErrorClass::Integrity,
        }
    }
}

impl Classify for RdfError {
    fn class(&self) -> ErrorClass {
        match self {
            RdfError::UnknownFormat(_) => ErrorClass::Usage,
            _ => ErrorClass::Integrity,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageName {
    Ontology,
    Patterns,
    Ingest,
    Extract,
    Kg,
    Eval,
}

impl StageName {
    pub const ALL: [StageName; 6] = [
        StageName::Ontology,
        StageName::Patterns,
        StageName::Ingest,
        StageName::Extract,
        StageName::Kg,
        StageName::Eval,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageName::Ontology => "ontology",
            StageName::Patterns => "patterns",
            StageName::Ingest => "ingest",
            StageName::Extract => "extract",
            StageName::Kg => "kg",
            StageName::Eval => "eval",
        }
    }
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: StageName, class: ErrorClass, message: String },
    #[error("stage {stage} failed on {} item(s):\n  {}", items.len(), items.join("\n  "))]
    Items { stage: StageName, class: ErrorClass, items: Vec<String> },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn class(&self) -> ErrorClass {
        match self {
            PipelineError::Config(_) | PipelineError::Io { .. } => ErrorClass::Usage,
            PipelineError::Stage { class, .. } | PipelineError::Items { class, .. } => *class,
        }
    }

    pub fn exit_code(&self) -> u8 {
        self.class().exit_code()
    }
}

impl Classify for PipelineError {
    fn class(&self) -> ErrorClass {
        PipelineError::class(self)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PathsConfig {
    pub principles: PathBuf,
    pub corpus: PathBuf,
    /// Review decisions applied to generated patterns before promotion.
    #[serde(default)]
    pub review: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    pub out: PathBuf,
}

fn default_parallelism() -> usize {
    4
}

fn default_repair_retries() -> u32 {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default)]
    pub offline: bool,
    pub fixtures: PathBuf,
    #[serde(default)]
    pub cache: Option<PathBuf>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Re-prompts allowed after an unusable structured reply.
    #[serde(default = "default_repair_retries")]
    pub repair_retries: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ModelsConfig {
    pub ontology: ModelSpec,
    pub patterns: ModelSpec,
    pub filter: ModelSpec,
    pub extract: ModelSpec,
    #[serde(default)]
    pub baseline: Option<ModelSpec>,
}

fn default_malformed_fraction() -> f64 {
    0.1
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    /// Stamp written on every event; fixed in reproducible configs.
    #[serde(default)]
    pub extracted_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub pairing: PairingRule,
    #[serde(default)]
    pub one_shot_official_text: bool,
    #[serde(default = "default_malformed_fraction")]
    pub max_malformed_fraction: f64,
    #[serde(default = "yes")]
    pub require_negative_hint: bool,
    #[serde(default = "yes")]
    pub halt_on_item_errors: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            extracted_at: None,
            pairing: PairingRule::default(),
            one_shot_official_text: false,
            max_malformed_fraction: default_malformed_fraction(),
            require_negative_hint: true,
            halt_on_item_errors: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub gateway: GatewayConfig,
    pub models: ModelsConfig,
    #[serde(default)]
    pub run: RunConfig,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let mut config: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.base_dir = base_dir.into();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.gateway.parallelism == 0 {
            return bad("gateway.parallelism must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.run.max_malformed_fraction) {
            return bad("run.maxMalformedFraction must lie in [0, 1]".into());
        }
        let m = &self.models;
        for (stage, spec) in
            [("ontology", &m.ontology), ("patterns", &m.patterns), ("filter", &m.filter), ("extract", &m.extract)]
                .into_iter()
                .chain(m.baseline.as_ref().map(|b| ("baseline", b)))
        {
            if !llm::KNOWN_PROVIDERS.contains(&spec.provider_id.as_str()) {
                return bad(format!("models.{stage}: unknown provider {:?}", spec.provider_id));
            }
            if spec.model_id.trim().is_empty() {
                return bad(format!("models.{stage}: empty model id"));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.paths.out)
    }

    pub fn fixtures_dir(&self) -> PathBuf {
        self.resolve(&self.gateway.fixtures)
    }

    /// Digest of the effective configuration as written, with paths left
    /// unresolved and the output location ignored.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.paths.out = PathBuf::new();
        sha256_hex(toml::to_string(&canonical).expect("config serializes").as_bytes())
    }

    pub fn mode(&self, record: bool) -> Result<Mode, PipelineError> {
        match (self.gateway.offline, record) {
            (true, true) => Err(PipelineError::Config("offline and record modes are mutually exclusive".into())),
            (true, false) => Ok(Mode::Offline),
            (false, true) => Ok(Mode::Record),
            (false, false) => Ok(Mode::Live),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Fixtures only; any unrecorded prompt is an error.
    Offline,
    /// Live calls, every exchange persisted to the fixture directory.
    Record,
    /// Live calls through the optional cache.
    Live,
}

/// Gateway for `mode`. Offline mode requires a non-empty fixture store.
pub fn build_gateway(config: &PipelineConfig, mode: Mode) -> Result<Gateway, PipelineError> {
    let fixtures = config.fixtures_dir();
    let gateway = match mode {
        Mode::Offline => {
            check_fixtures(&fixtures)?;
            Gateway::offline(&fixtures).map_err(gateway_config_err)?
        }
        Mode::Record => {
            Gateway::new().with_env_providers().with_cache(ResponseCache::open(&fixtures).map_err(gateway_config_err)?)
        }
        Mode::Live => {
            let gw = Gateway::new().with_env_providers();
            match &config.gateway.cache {
                Some(dir) => gw.with_cache(ResponseCache::open(config.resolve(dir)).map_err(gateway_config_err)?),
                None => gw,
            }
        }
    };
    Ok(gateway.with_parallelism(config.gateway.parallelism))
}

fn gateway_config_err(e: GatewayError) -> PipelineError {
    PipelineError::Config(e.to_string())
}

fn check_fixtures(dir: &Path) -> Result<(), PipelineError> {
    if !dir.is_dir() {
        return Err(PipelineError::Config(format!(
            "offline mode needs recorded fixtures, but {} does not exist",
            dir.display()
        )));
    }
    let store = llm::register_fixtures(dir).map_err(|e| PipelineError::Config(e.to_string()))?;
    if store.is_empty() {
        return Err(PipelineError::Config(format!(
            "offline mode needs recorded fixtures, but {} holds none",
            dir.display()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageRecord {
    pub name: StageName,
    pub input_hash: String,
    /// Path relative to the stage directory → SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_digest: Option<String>,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Single digest over every artifact, for golden comparisons.
    pub fn artifact_digest(&self) -> String {
        let mut all = String::new();
        for stage in &self.stages {
            for (path, digest) in &stage.artifacts {
                all.push_str(&format!("{}/{path} {digest}\n", stage.name));
            }
        }
        sha256_hex(all.as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunReport {
    pub manifest: Manifest,
    pub executed: Vec<StageName>,
    pub skipped: Vec<StageName>,
    pub stats: GatewayStats,
}

fn file_digest(path: &Path) -> Result<String, PipelineError> {
    Ok(sha256_hex(&std::fs::read(path).map_err(io_err(path))?))
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<(), PipelineError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err(dir))?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("walk stays under root");
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            out.insert(key, file_digest(&path)?);
        }
    }
    Ok(())
}

pub fn artifact_digests(dir: &Path) -> Result<BTreeMap<String, String>, PipelineError> {
    let mut out = BTreeMap::new();
    collect_files(dir, dir, &mut out)?;
    Ok(out)
}

struct Run<'a> {
    config: &'a PipelineConfig,
    gateway: &'a Gateway,
    out: PathBuf,
    config_hash: String,
    fixture_digest: Option<String>,
    previous: BTreeMap<StageName, StageRecord>,
    records: BTreeMap<StageName, StageRecord>,
    executed: Vec<StageName>,
    skipped: Vec<StageName>,
}

fn stage_err<E: Classify + fmt::Display>(stage: StageName) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Stage { stage, class: e.class(), message: e.to_string() }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(stage: StageName, path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    fsutil::from_jsonl(&text).map_err(|(line, message)| PipelineError::Stage {
        stage,
        class: ErrorClass::Integrity,
        message: format!("{} line {line}: {message}", path.display()),
    })
}

fn write(dir: &Path, name: &str, content: &str) -> Result<(), PipelineError> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(&path, content).map_err(io_err(&path))
}

fn items_or_ok(stage: StageName, class: ErrorClass, halt: bool, items: Vec<String>) -> Result<(), PipelineError> {
    if halt && !items.is_empty() {
        Err(PipelineError::Items { stage, class, items })
    } else {
        for item in &items {
            log::warn!("{stage}: {item}");
        }
        Ok(())
    }
}

impl Run<'_> {
    fn stage_dir(&self, stage: StageName) -> PathBuf {
        self.out.join(stage.as_str())
    }

    fn input_hash(&self, stage: StageName, files: &[&Path], upstream: &[StageName]) -> Result<String, PipelineError> {
        let mut inputs = BTreeMap::new();
        for f in files {
            inputs.insert(f.display().to_string(), file_digest(f)?);
        }
        let upstream: BTreeMap<&str, &BTreeMap<String, String>> =
            upstream.iter().map(|s| (s.as_str(), &self.records[s].artifacts)).collect();
        let doc = json!({
            "stage": stage,
            "config": self.config_hash,
            "fixtures": self.fixture_digest,
            "inputs": inputs.values().collect::<Vec<_>>(),
            "upstream": upstream,
        });
        Ok(sha256_hex(doc.to_string().as_bytes()))
    }

    fn up_to_date(&self, stage: StageName, input_hash: &str) -> Result<bool, PipelineError> {
        if self.fixture_digest.is_none() {
            return Ok(false);
        }
        let Some(prev) = self.previous.get(&stage) else { return Ok(false) };
        let dir = self.stage_dir(stage);
        Ok(prev.input_hash == input_hash && dir.is_dir() && artifact_digests(&dir)? == prev.artifacts)
    }

    fn stage(
        &mut self,
        stage: StageName,
        files: &[&Path],
        upstream: &[StageName],
        body: impl FnOnce(&Self, &Path) -> Result<(), PipelineError>,
    ) -> Result<(), PipelineError> {
        let input_hash = self.input_hash(stage, files, upstream)?;
        if self.up_to_date(stage, &input_hash)? {
            log::info!("{stage}: up to date");
            self.records.insert(stage, self.previous[&stage].clone());
            self.skipped.push(stage);
            return Ok(());
        }
        log::info!("{stage}: running");
        let tmp =
            tempfile::Builder::new().prefix(&format!(".{stage}-")).tempdir_in(&self.out).map_err(io_err(&self.out))?;
        body(self, tmp.path())?;
        let artifacts = artifact_digests(tmp.path())?;
        let target = self.stage_dir(stage);
        if target.exists() {
            std::fs::remove_dir_all(&target).map_err(io_err(&target))?;
        }
        std::fs::rename(tmp.path(), &target).map_err(io_err(&target))?;
        self.records.insert(stage, StageRecord { name: stage, input_hash, artifacts });
        self.executed.push(stage);
        Ok(())
    }

    fn principles(&self) -> Result<Vec<Principle>, PipelineError> {
        let path = self.stage_dir(StageName::Ontology).join("principles.jsonl");
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        ontology::parse_principles(&text).map_err(stage_err(StageName::Ontology))
    }

    fn classes(&self) -> Result<Vec<ViolationClassDef>, PipelineError> {
        read_jsonl(StageName::Patterns, &self.stage_dir(StageName::Patterns).join("classes.jsonl"))
    }

    fn articles(&self) -> Result<Vec<NewsArticle>, PipelineError> {
        read_jsonl(StageName::Ingest, &self.stage_dir(StageName::Ingest).join("articles.jsonl"))
    }

    fn events(&self) -> Result<Vec<ViolationEvent>, PipelineError> {
        kg::load_event_log(self.stage_dir(StageName::Extract).join("events.jsonl"))
            .map_err(stage_err(StageName::Extract))
    }
}

fn run_ontology(run: &Run<'_>, dir: &Path) -> Result<(), PipelineError> {
    let stage = StageName::Ontology;
    let cfg = run.config;
    let mut principles = ontology::load_principles(cfg.resolve(&cfg.paths.principles)).map_err(stage_err(stage))?;
    let opts = ForgeOptions { max_retries: cfg.gateway.repair_retries, ..Default::default() };
    let comments = par::map_bounded(&principles, run.gateway.parallelism(), |p| {
        pattern_forge::generate_comment(p, run.gateway, &cfg.models.ontology, &opts)
    });
    let mut failures = Vec::new();
    let mut class = ErrorClass::Provider;
    for (p, comment) in principles.iter_mut().zip(comments) {
        match comment {
            Ok(c) => p.comment = Some(c),
            Err(e) => {
                class = e.class();
                failures.push(format!("principle {}: {e}", p.id));
            }
        }
    }
    items_or_ok(stage, class, true, failures)?;
    write(dir, "principles.jsonl", &to_jsonl(&principles))?;
    for format in [Format::Turtle, Format::JsonLd] {
        let doc = ontology::emit_meta_ontology(&principles, &[], format).map_err(stage_err(stage))?;
        write(dir, &format!("ontology.{}", format.extension()), &doc)?;
    }
    Ok(())
}

fn run_patterns(run: &Run<'_>, dir: &Path) -> Result<(), PipelineError> {
    let stage = StageName::Patterns;
    let cfg = run.config;
    let principles = run.principles()?;
    let opts = ForgeOptions { max_retries: cfg.gateway.repair_retries, ..Default::default() };
    let drafts = par::map_bounded(&principles, run.gateway.parallelism(), |p| {
        pattern_forge::generate_patterns(p, run.gateway, &cfg.models.patterns, &opts)
    });
    let mut patterns = Vec::new();
    let mut failures = Vec::new();
    let mut class = ErrorClass::Provider;
    for (p, result) in principles.iter().zip(drafts) {
        match result {
            Ok(ps) => patterns.extend(ps),
            Err(e) => {
                class = e.class();
                failures.push(format!("principle {}: {e}", p.id));
            }
        }
    }
    items_or_ok(stage, class, true, failures)?;
    let Some(review) = &cfg.paths.review else {
        return Err(PipelineError::Stage {
            stage,
            class: ErrorClass::Integrity,
            message: "generated patterns need human review before promotion; set paths.review".into(),
        });
    };
    let review = cfg.resolve(review);
    let text = std::fs::read_to_string(&review).map_err(io_err(&review))?;
    let decisions = pattern_forge::parse_review_file(&text).map_err(stage_err(stage))?;
    let reviewed = pattern_forge::apply_review(&patterns, &decisions).map_err(stage_err(stage))?;
    pattern_forge::save_store(&dir.join("store"), &reviewed).map_err(stage_err(stage))?;
    let classes = ontology::promote_all(&reviewed).map_err(stage_err(stage))?;
    write(dir, "classes.jsonl", &to_jsonl(&classes))?;
    for format in [Format::Turtle, Format::JsonLd] {
        let doc = ontology::emit_meta_ontology(&principles, &classes, format).map_err(stage_err(stage))?;
        write(dir, &format!("ontology.{}", format.extension()), &doc)?;
    }
    Ok(())
}

fn run_ingest(run: &Run<'_>, dir: &Path) -> Result<(), PipelineError> {
    let stage = StageName::Ingest;
    let cfg = run.config;
    let corpus = ingest::load_corpus(cfg.resolve(&cfg.paths.corpus), cfg.run.max_malformed_fraction)
        .map_err(stage_err(stage))?;
    let opts =
        FilterOptions { max_retries: cfg.gateway.repair_retries, require_negative_hint: cfg.run.require_negative_hint };
    let (kept1, mut verdicts) = ingest::stage1_filter(&corpus.articles, run.gateway, &cfg.models.filter, &opts);
    let (kept, verdicts2) = ingest::stage2_filter(&kept1, run.gateway, &cfg.models.filter, &opts);
    verdicts.extend(verdicts2);
    let undecided: Vec<String> = verdicts
        .iter()
        .filter(|v| v.reason.starts_with("undecided"))
        .map(|v| format!("{} ({}): {}", v.article_id, v.stage, v.reason))
        .collect();
    items_or_ok(stage, ErrorClass::Provider, cfg.run.halt_on_item_errors, undecided)?;
    write(dir, "articles.jsonl", &to_jsonl(&kept))?;
    write(dir, "verdicts.jsonl", &to_jsonl(&verdicts))?;
    write(dir, "rejects.jsonl", &to_jsonl(&corpus.rejects))?;
    Ok(())
}

fn run_extract(run: &Run<'_>, dir: &Path) -> Result<(), PipelineError> {
    let stage = StageName::Extract;
    let cfg = run.config;
    let articles = run.articles()?;
    let patterns: Vec<_> = pattern_forge::load_store(&run.stage_dir(StageName::Patterns).join("store"))
        .map_err(stage_err(stage))?
        .into_iter()
        .filter(|p| p.review_state.is_promotable())
        .collect();
    let ctx = ExtractionContext {
        gateway: run.gateway,
        model: cfg.models.extract.clone(),
        max_retries: cfg.gateway.repair_retries,
        extracted_at: cfg.run.extracted_at.unwrap_or_else(|| {
            log::warn!("run.extractedAt is not set; stamping events with the current time");
            Utc::now()
        }),
    };
    let result = extraction::run_extraction(&articles, &patterns, &ctx);
    let by_id: BTreeMap<&str, &NewsArticle> = articles.iter().map(|a| (a.article_id.as_str(), a)).collect();
    let mut ungrounded = Vec::new();
    for a in &result.articles {
        for e in &a.events {
            for v in extraction::grounding_violations(e, by_id[a.article_id.as_str()], &a.entities) {
                ungrounded.push(format!("{} {}: {v}", e.article_id, e.pattern_iri));
            }
        }
    }
    items_or_ok(stage, ErrorClass::Integrity, true, ungrounded)?;
    let failures: Vec<String> = result.failures.iter().map(|f| format!("{}: {}", f.article_id, f.error)).collect();
    items_or_ok(stage, ErrorClass::Provider, cfg.run.halt_on_item_errors, failures)?;

    let mut events = result.events();
    events.sort_by(|a, b| {
        (a.published_date, &a.article_id, &a.pattern_iri).cmp(&(b.published_date, &b.article_id, &b.pattern_iri))
    });
    let mut entities: Vec<NamedEntity> = result.entities();
    entities.sort_by(|a, b| (&a.article_id, a).cmp(&(&b.article_id, b)));
    let ids: Vec<String> = articles.iter().map(|a| a.article_id.clone()).collect();
    write(dir, "events.jsonl", &to_jsonl(&events))?;
    write(dir, "entities.jsonl", &to_jsonl(&entities))?;
    write(dir, "rejections.jsonl", &to_jsonl(&result.rejections()))?;
    write(dir, "failures.jsonl", &to_jsonl(&result.failures))?;
    write(dir, "predictions.jsonl", &to_jsonl(&evaluation::predictions_from_events(&ids, &events)))?;

    if let Some(model) = &cfg.models.baseline {
        let principles = run.principles()?;
        let opts = OneShotOptions {
            use_official_text: cfg.run.one_shot_official_text,
            max_retries: cfg.gateway.repair_retries,
        };
        let results = par::map_bounded(&articles, run.gateway.parallelism(), |a| {
            extraction::one_shot_classify(a, &principles, run.gateway, model, &opts)
        });
        let mut predictions = Vec::new();
        let mut failures = Vec::new();
        for (a, r) in articles.iter().zip(results) {
            match r {
                Ok(principles) => predictions.push(ArticlePrediction { article_id: a.article_id.clone(), principles }),
                Err(e) => failures.push(format!("{} (baseline): {e}", a.article_id)),
            }
        }
        items_or_ok(stage, ErrorClass::Provider, cfg.run.halt_on_item_errors, failures)?;
        write(dir, "baseline.jsonl", &to_jsonl(&predictions))?;
    }
    Ok(())
}

fn run_kg(run: &Run<'_>, dir: &Path) -> Result<(), PipelineError> {
    let stage = StageName::Kg;
    let entities: Vec<NamedEntity> = read_jsonl(stage, &run.stage_dir(StageName::Extract).join("entities.jsonl"))?;
    let kg = KnowledgeGraph::assemble(&run.events()?, &run.principles()?, &run.classes()?, &entities, &run.articles()?)
        .map_err(stage_err(stage))?;
    for format in [Format::Turtle, Format::JsonLd] {
        write(dir, &format!("graph.{}", format.extension()), &kg.serialize(format))?;
    }
    Ok(())
}

fn run_eval(run: &Run<'_>, dir: &Path) -> Result<(), PipelineError> {
    let stage = StageName::Eval;
    let cfg = run.config;
    let events = run.events()?;
    let violations: Vec<DatedViolation> = events.iter().map(DatedViolation::from).collect();
    let matrix = evaluation::transition_matrix(&violations, cfg.run.pairing).map_err(stage_err(stage))?;
    write(dir, "transitions.txt", &matrix.render_grid())?;
    write(dir, "transitions.svg", &matrix.render_svg())?;
    write(
        dir,
        "transitions.json",
        &format!("{}\n", serde_json::to_string_pretty(&matrix).expect("matrix serializes")),
    )?;

    let Some(labels) = &cfg.paths.labels else { return Ok(()) };
    let labels = evaluation::load_labels(cfg.resolve(labels)).map_err(stage_err(stage))?;
    let extract_dir = run.stage_dir(StageName::Extract);
    let mut runs = Vec::new();
    let structured: Vec<ArticlePrediction> = read_jsonl(stage, &extract_dir.join("predictions.jsonl"))?;
    runs.push((cfg.models.extract.model_id.clone(), evaluation::join(&labels, &structured)));
    if let Some(baseline) = &cfg.models.baseline {
        let one_shot: Vec<ArticlePrediction> = read_jsonl(stage, &extract_dir.join("baseline.jsonl"))?;
        runs.push((format!("{} ('one-shot')", baseline.model_id), evaluation::join(&labels, &one_shot)));
    }
    let rows: Vec<ComparisonRow> = evaluation::compare_models(&runs).map_err(stage_err(stage))?;
    let card = evaluation::score(&runs[0].1).map_err(stage_err(stage))?;
    let principles = run.principles()?;
    let mut report = String::new();
    report.push_str("# Evaluation\n\n## Model comparison\n\n");
    report.push_str(&evaluation::render_comparison(&rows));
    report.push_str(&format!("\n## Per principle ({})\n\n", runs[0].0));
    report.push_str(&evaluation::render_scorecard(&card, &principles).map_err(stage_err(stage))?);
    report.push_str("\n## Transitions (percent, row = from principle)\n\n```\n");
    report.push_str(&matrix.render_grid());
    report.push_str("```\n");
    write(dir, "report.md", &report)?;
    let scores = json!({ "comparison": rows, "perPrinciple": card });
    write(dir, "scores.json", &format!("{}\n", serde_json::to_string_pretty(&scores).expect("scores serialize")))?;
    Ok(())
}

/// Runs every stage in order, skipping stages whose inputs and outputs are
/// unchanged since the previous offline run.
pub fn run_pipeline(config: &PipelineConfig, gateway: &Gateway, mode: Mode) -> Result<RunReport, PipelineError> {
    let principles = config.resolve(&config.paths.principles);
    let corpus = config.resolve(&config.paths.corpus);
    let review = config.paths.review.as_ref().map(|p| config.resolve(p));
    let labels = config.paths.labels.as_ref().map(|p| config.resolve(p));
    for (what, path) in [
        ("principles", Some(&principles)),
        ("corpus", Some(&corpus)),
        ("review", review.as_ref()),
        ("labels", labels.as_ref()),
    ] {
        if let Some(path) = path {
            if !path.is_file() {
                return Err(PipelineError::Config(format!("{what} file {} does not exist", path.display())));
            }
        }
    }
    let fixture_digest = match mode {
        Mode::Offline => {
            check_fixtures(&config.fixtures_dir())?;
            Some(llm::store_digest(config.fixtures_dir()).map_err(gateway_config_err)?)
        }
        Mode::Record | Mode::Live => None,
    };
    let out = config.out_dir();
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;
    let previous = std::fs::read_to_string(out.join(Manifest::FILE))
        .ok()
        .and_then(|t| serde_json::from_str::<Manifest>(&t).ok())
        .map(|m| m.stages.into_iter().map(|s| (s.name, s)).collect())
        .unwrap_or_default();

    let mut run = Run {
        config,
        gateway,
        out: out.clone(),
        config_hash: config.hash(),
        fixture_digest,
        previous,
        records: BTreeMap::new(),
        executed: Vec::new(),
        skipped: Vec::new(),
    };
    use StageName::*;
    run.stage(Ontology, &[&principles], &[], run_ontology)?;
    run.stage(Patterns, review.as_deref().as_slice(), &[Ontology], run_patterns)?;
    run.stage(Ingest, &[&corpus], &[], run_ingest)?;
    run.stage(Extract, &[], &[Ontology, Patterns, Ingest], run_extract)?;
    run.stage(Kg, &[], &[Ontology, Patterns, Ingest, Extract], run_kg)?;
    run.stage(Eval, labels.as_deref().as_slice(), &[Ontology, Extract], run_eval)?;

    let fixtures = config.fixtures_dir();
    let fixture_digest = if fixtures.is_dir() { llm::store_digest(&fixtures).ok() } else { None };
    let manifest = Manifest {
        config_hash: run.config_hash.clone(),
        fixture_digest,
        stages: StageName::ALL.iter().map(|s| run.records[s].clone()).collect(),
    };
    let path = out.join(Manifest::FILE);
    fsutil::write_atomic(&path, manifest.to_json().as_bytes()).map_err(io_err(&path))?;
    let stale: BTreeSet<_> = std::fs::read_dir(&out)
        .map_err(io_err(&out))?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with('.'))
        .map(|e| e.path())
        .collect();
    for leftover in stale {
        log::debug!("removing leftover {}", leftover.display());
        let _ = std::fs::remove_dir_all(leftover);
    }
    Ok(RunReport { manifest, executed: run.executed, skipped: run.skipped, stats: gateway.stats() })
}
