use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use esgkg::evaluation::{self, ArticlePrediction, DatedViolation, PairingRule};
use esgkg::extraction::{self, ExtractionContext, OneShotOptions};
use esgkg::fsutil::{from_jsonl, to_jsonl, write_atomic};
use esgkg::ingest::{self, FilterOptions};
use esgkg::kg::{self, EventFilter};
use esgkg::ontology::{self, Principle, ViolationClassDef};
use esgkg::pattern_forge::{self, ForgeOptions};
use esgkg::pipeline::{self, Classify, ErrorClass, Mode};
use esgkg::{Format, Gateway, KnowledgeGraph, NamedEntity, NewsArticle, PipelineConfig};
use serde::de::DeserializeOwned;

/// ESG violation knowledge graph builder.
#[derive(Parser)]
#[command(name = "esgkg", version, about)]
struct Cli {
    /// Pipeline configuration (models, gateway, run options).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replay recorded fixtures only.
    #[arg(long, global = true, conflicts_with = "record")]
    offline: bool,
    /// Call providers live and store every exchange as a fixture.
    #[arg(long, global = true)]
    record: bool,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage end to end.
    Run,
    /// Principle individuals and the meta-ontology.
    #[command(subcommand)]
    Ontology(OntologyCmd),
    /// Violation pattern generation, review and promotion.
    #[command(subcommand)]
    Patterns(PatternsCmd),
    /// Corpus loading and two-stage filtering.
    #[command(subcommand)]
    Ingest(IngestCmd),
    /// Entity, pattern and triple extraction.
    #[command(subcommand)]
    Extract(ExtractCmd),
    /// Knowledge graph assembly and queries.
    #[command(subcommand)]
    Kg(KgCmd),
    /// Scoring, model comparison and transitions.
    #[command(subcommand)]
    Eval(EvalCmd),
}

#[derive(Subcommand)]
enum OntologyCmd {
    /// Write principles.jsonl plus the ontology in Turtle and JSON-LD.
    Emit {
        #[arg(long)]
        principles: Option<PathBuf>,
        /// Promoted classes to include.
        #[arg(long)]
        classes: Option<PathBuf>,
        /// Keep existing comments instead of generating them.
        #[arg(long)]
        no_comments: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PatternsCmd {
    /// Draft three patterns per principle into a store.
    Generate {
        /// Principles with comments, as written by `ontology emit`.
        #[arg(long)]
        principles: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Only these principles (repeatable).
        #[arg(long = "principle")]
        only: Vec<u8>,
    },
    /// Apply a review file to a store in place.
    Review {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        apply: PathBuf,
    },
    /// Promote reviewed patterns to classes and emit the ontology.
    Promote {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        principles: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum IngestCmd {
    /// Load a corpus and run the filter stages.
    Filter {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// 1, 2 or both.
        #[arg(long, default_value = "both")]
        stage: String,
    },
}

#[derive(Subcommand)]
enum ExtractCmd {
    /// Structured extraction over filtered articles.
    Run {
        #[arg(long)]
        articles: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// One-shot principle classification baseline.
    Baseline {
        #[arg(long)]
        articles: PathBuf,
        #[arg(long)]
        principles: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Describe principles by official text instead of comments.
        #[arg(long)]
        official_text: bool,
        /// The default; kept for script compatibility.
        #[arg(long, hide = true)]
        one_shot: bool,
    },
}

#[derive(Subcommand)]
enum KgCmd {
    /// Assemble the graph from an event log.
    Build {
        #[command(flatten)]
        inputs: KgInputs,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated: turtle, jsonld.
        #[arg(long, default_value = "turtle,jsonld")]
        format: String,
    },
    /// Print matching events as JSON lines.
    Query {
        #[command(flatten)]
        inputs: KgInputs,
        #[arg(long)]
        entity: Option<String>,
        #[arg(long)]
        principle: Option<u8>,
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
    },
}

#[derive(Args)]
struct KgInputs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    entities: PathBuf,
    #[arg(long)]
    principles: PathBuf,
    #[arg(long)]
    classes: PathBuf,
    #[arg(long)]
    articles: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Per-principle and aggregate scores against gold labels.
    Score {
        #[arg(long)]
        labels: PathBuf,
        /// Event log; every labelled article without events predicts nothing.
        #[arg(long, conflicts_with = "predictions")]
        events: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        principles: Option<PathBuf>,
    },
    /// Compare prediction files on the same labels.
    Compare {
        #[arg(long)]
        labels: PathBuf,
        /// Directory of prediction files, one run per `<model>.jsonl`.
        #[arg(long, required_unless_present = "run")]
        runs: Option<PathBuf>,
        /// NAME=predictions.jsonl (repeatable).
        #[arg(long)]
        run: Vec<String>,
    },
    /// Principle-to-principle transition matrix.
    Transitions {
        #[arg(long)]
        events: PathBuf,
        #[arg(long, default_value = "adjacent")]
        pairing: PairingRule,
        /// Also write an SVG heatmap here.
        #[arg(long)]
        heatmap: Option<PathBuf>,
    },
}

struct Failure {
    class: ErrorClass,
    message: String,
}

impl<E: Classify + Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { class: e.class(), message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { class: ErrorClass::Usage, message: message.into() }
}

fn integrity(message: impl Into<String>) -> Failure {
    Failure { class: ErrorClass::Integrity, message: message.into() }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Outcome {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| usage(format!("{}: {e}", parent.display())))?;
    }
    write_atomic(path, text.as_bytes()).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, Failure> {
    from_jsonl(&read(path)?).map_err(|(line, msg)| integrity(format!("{}:{line}: {msg}", path.display())))
}

struct Session {
    config: Option<PipelineConfig>,
    mode_flags: (bool, bool),
}

impl Session {
    fn config(&self) -> Result<&PipelineConfig, Failure> {
        self.config.as_ref().ok_or_else(|| usage("this command calls a model; pass --config"))
    }

    fn mode(&self) -> Result<Mode, Failure> {
        let config = self.config()?;
        match self.mode_flags {
            (true, _) => Ok(Mode::Offline),
            (false, true) => Ok(Mode::Record),
            (false, false) => Ok(config.mode(false)?),
        }
    }

    fn gateway(&self) -> Result<Gateway, Failure> {
        Ok(pipeline::build_gateway(self.config()?, self.mode()?)?)
    }

    fn repair_retries(&self) -> u32 {
        self.config.as_ref().map_or(2, |c| c.gateway.repair_retries)
    }
}

fn principles_from(path: &Path) -> Result<Vec<Principle>, Failure> {
    Ok(ontology::parse_principles(&read(path)?)?)
}

fn emit_ontology(out: &Path, principles: &[Principle], classes: &[ViolationClassDef]) -> Outcome {
    write(&out.join("principles.jsonl"), &to_jsonl(principles))?;
    for format in [Format::Turtle, Format::JsonLd] {
        let doc = ontology::emit_meta_ontology(principles, classes, format)?;
        write(&out.join(format!("ontology.{}", format.extension())), &doc)?;
    }
    Ok(())
}

fn ontology_cmd(s: &Session, cmd: OntologyCmd) -> Outcome {
    let OntologyCmd::Emit { principles, classes, no_comments, out } = cmd;
    let path = match (&principles, &s.config) {
        (Some(p), _) => p.clone(),
        (None, Some(c)) => c.resolve(&c.paths.principles),
        (None, None) => return Err(usage("pass --principles or --config")),
    };
    let mut principles = principles_from(&path)?;
    if !no_comments {
        let gateway = s.gateway()?;
        let model = &s.config()?.models.ontology;
        let opts = ForgeOptions { max_retries: s.repair_retries(), ..Default::default() };
        for p in &mut principles {
            p.comment = Some(pattern_forge::generate_comment(p, &gateway, model, &opts)?);
        }
    }
    let classes: Vec<ViolationClassDef> = match classes {
        Some(path) => read_jsonl(&path)?,
        None => Vec::new(),
    };
    emit_ontology(&out, &principles, &classes)?;
    println!("wrote ontology for {} principles and {} classes to {}", principles.len(), classes.len(), out.display());
    Ok(())
}

fn patterns_cmd(s: &Session, cmd: PatternsCmd) -> Outcome {
    match cmd {
        PatternsCmd::Generate { principles, store, only } => {
            let gateway = s.gateway()?;
            let model = &s.config()?.models.patterns;
            let opts = ForgeOptions { max_retries: s.repair_retries(), ..Default::default() };
            let existing = if store.is_dir() { pattern_forge::load_store(&store)? } else { Vec::new() };
            let mut drafts = Vec::new();
            for p in principles_from(&principles)?.iter().filter(|p| only.is_empty() || only.contains(&p.id)) {
                drafts.extend(pattern_forge::generate_patterns(p, &gateway, model, &opts)?);
            }
            let merged = pattern_forge::merge_drafts(&existing, drafts);
            pattern_forge::save_store(&store, &merged)?;
            println!("store {} holds {} patterns", store.display(), merged.len());
        }
        PatternsCmd::Review { store, apply } => {
            let patterns = pattern_forge::load_store(&store)?;
            let decisions = pattern_forge::parse_review_file(&read(&apply)?)?;
            let reviewed = pattern_forge::apply_review(&patterns, &decisions)?;
            pattern_forge::save_store(&store, &reviewed)?;
            println!("applied {} decisions", decisions.len());
        }
        PatternsCmd::Promote { store, principles, out } => {
            let patterns = pattern_forge::load_store(&store)?;
            let classes = ontology::promote_all(&patterns)?;
            write(&out.join("classes.jsonl"), &to_jsonl(&classes))?;
            emit_ontology(&out, &principles_from(&principles)?, &classes)?;
            println!("promoted {} classes", classes.len());
        }
    }
    Ok(())
}

fn ingest_cmd(s: &Session, cmd: IngestCmd) -> Outcome {
    let IngestCmd::Filter { corpus, out, stage } = cmd;
    let config = s.config()?;
    let corpus = ingest::load_corpus(&corpus, config.run.max_malformed_fraction)?;
    let gateway = s.gateway()?;
    let opts =
        FilterOptions { max_retries: s.repair_retries(), require_negative_hint: config.run.require_negative_hint };
    let model = &config.models.filter;
    let (kept, verdicts) = match stage.as_str() {
        "1" => ingest::stage1_filter(&corpus.articles, &gateway, model, &opts),
        "2" => ingest::stage2_filter(&corpus.articles, &gateway, model, &opts),
        "both" => {
            let (kept, mut verdicts) = ingest::stage1_filter(&corpus.articles, &gateway, model, &opts);
            let (kept, more) = ingest::stage2_filter(&kept, &gateway, model, &opts);
            verdicts.extend(more);
            (kept, verdicts)
        }
        other => return Err(usage(format!("--stage must be 1, 2 or both, not {other:?}"))),
    };
    write(&out.join("articles.jsonl"), &to_jsonl(&kept))?;
    write(&out.join("verdicts.jsonl"), &to_jsonl(&verdicts))?;
    write(&out.join("rejects.jsonl"), &to_jsonl(&corpus.rejects))?;
    println!("kept {} of {} articles ({} malformed lines)", kept.len(), corpus.articles.len(), corpus.rejects.len());
    Ok(())
}

fn extract_cmd(s: &Session, cmd: ExtractCmd) -> Outcome {
    let config = s.config()?;
    let gateway = s.gateway()?;
    match cmd {
        ExtractCmd::Run { articles, store, out } => {
            let articles: Vec<NewsArticle> = read_jsonl(&articles)?;
            let patterns: Vec<_> =
                pattern_forge::load_store(&store)?.into_iter().filter(|p| p.review_state.is_promotable()).collect();
            let extracted_at =
                config.run.extracted_at.ok_or_else(|| usage("run.extractedAt must be set in the config"))?;
            let ctx = ExtractionContext {
                gateway: &gateway,
                model: config.models.extract.clone(),
                max_retries: s.repair_retries(),
                extracted_at,
            };
            let run = extraction::run_extraction(&articles, &patterns, &ctx);
            let events = run.events();
            write(&out.join("events.jsonl"), &to_jsonl(&events))?;
            write(&out.join("entities.jsonl"), &to_jsonl(&run.entities()))?;
            write(&out.join("rejections.jsonl"), &to_jsonl(&run.rejections()))?;
            write(&out.join("failures.jsonl"), &to_jsonl(&run.failures))?;
            println!(
                "{} events, {} rejected triples, {} failed articles",
                events.len(),
                run.rejections().len(),
                run.failures.len()
            );
            if let Some(first) = run.failures.first() {
                return Err(Failure {
                    class: ErrorClass::Provider,
                    message: format!(
                        "{} article(s) failed, first {}: {}",
                        run.failures.len(),
                        first.article_id,
                        first.error
                    ),
                });
            }
        }
        ExtractCmd::Baseline { articles, principles, out, official_text, .. } => {
            let model = config.models.baseline.as_ref().ok_or_else(|| usage("models.baseline is not configured"))?;
            let articles: Vec<NewsArticle> = read_jsonl(&articles)?;
            let principles = principles_from(&principles)?;
            let opts = OneShotOptions { use_official_text: official_text, max_retries: s.repair_retries() };
            let mut predictions = Vec::new();
            for a in &articles {
                let principles = extraction::one_shot_classify(a, &principles, &gateway, model, &opts)?;
                predictions.push(ArticlePrediction { article_id: a.article_id.clone(), principles });
            }
            write(&out, &to_jsonl(&predictions))?;
            println!("classified {} articles", predictions.len());
        }
    }
    Ok(())
}

fn load_kg(inputs: &KgInputs) -> Result<KnowledgeGraph, Failure> {
    let events = kg::load_event_log(&inputs.events)?;
    let entities: Vec<NamedEntity> = read_jsonl(&inputs.entities)?;
    let classes: Vec<ViolationClassDef> = read_jsonl(&inputs.classes)?;
    let articles: Vec<NewsArticle> = match &inputs.articles {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    Ok(KnowledgeGraph::assemble(&events, &principles_from(&inputs.principles)?, &classes, &entities, &articles)?)
}

fn kg_cmd(cmd: KgCmd) -> Outcome {
    match cmd {
        KgCmd::Build { inputs, out, format } => {
            let formats = format.split(',').map(str::parse).collect::<Result<Vec<Format>, _>>()?;
            let graph = load_kg(&inputs)?;
            for f in formats {
                write(&out.join(format!("graph.{}", f.extension())), &graph.serialize(f))?;
            }
            println!("{} events, {} entities", graph.events().len(), graph.entities().len());
        }
        KgCmd::Query { inputs, entity, principle, from, to } => {
            let graph = load_kg(&inputs)?;
            let hits = graph.query_events(&EventFilter { entity, principle_id: principle, from, to });
            print!("{}", to_jsonl(&hits));
        }
    }
    Ok(())
}

fn eval_cmd(cmd: EvalCmd) -> Outcome {
    match cmd {
        EvalCmd::Score { labels, events, predictions, principles } => {
            let gold = evaluation::load_labels(&labels)?;
            let predicted = match (events, predictions) {
                (Some(events), None) => {
                    let events = kg::load_event_log(&events)?;
                    let ids: Vec<String> =
                        gold.keys().map(|(a, _)| a.clone()).collect::<BTreeSet<_>>().into_iter().collect();
                    evaluation::predictions_from_events(&ids, &events)
                }
                (None, Some(p)) => evaluation::parse_predictions(&read(&p)?, &p.display().to_string())?,
                _ => return Err(usage("pass exactly one of --events or --predictions")),
            };
            let card = evaluation::score(&evaluation::join(&gold, &predicted))?;
            let principles = match principles {
                Some(p) => principles_from(&p)?,
                None => Vec::new(),
            };
            print!("{}", evaluation::render_scorecard(&card, &principles)?);
        }
        EvalCmd::Compare { labels, runs, run } => {
            let gold = evaluation::load_labels(&labels)?;
            let mut named = Vec::new();
            if let Some(dir) = runs {
                let entries = std::fs::read_dir(&dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
                let mut files: Vec<PathBuf> = entries
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                    .collect();
                files.sort();
                for path in files {
                    let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                    named.push((name, path));
                }
            }
            for spec in run {
                let (name, path) =
                    spec.split_once('=').ok_or_else(|| usage(format!("--run wants NAME=FILE, got {spec:?}")))?;
                named.push((name.to_string(), PathBuf::from(path)));
            }
            if named.is_empty() {
                return Err(usage("no prediction files to compare"));
            }
            let mut joined = Vec::new();
            for (name, path) in named {
                let predicted = evaluation::parse_predictions(&read(&path)?, &path.display().to_string())?;
                joined.push((name, evaluation::join(&gold, &predicted)));
            }
            print!("{}", evaluation::render_comparison(&evaluation::compare_models(&joined)?));
        }
        EvalCmd::Transitions { events, pairing, heatmap } => {
            let events = kg::load_event_log(&events)?;
            let violations: Vec<DatedViolation> = events.iter().map(DatedViolation::from).collect();
            let matrix = evaluation::transition_matrix(&violations, pairing)?;
            print!("{}", matrix.render_grid());
            if let Some(path) = heatmap {
                write(&path, &matrix.render_svg())?;
            }
        }
    }
    Ok(())
}

fn run_cmd(s: &Session) -> Outcome {
    let config = s.config()?;
    let mode = s.mode()?;
    let gateway = pipeline::build_gateway(config, mode)?;
    let report = pipeline::run_pipeline(config, &gateway, mode)?;
    for stage in &report.executed {
        println!("ran      {stage}");
    }
    for stage in &report.skipped {
        println!("skipped  {stage}");
    }
    println!("outputs in {} (artifact digest {})", config.out_dir().display(), report.manifest.artifact_digest());
    Ok(())
}

fn dispatch(cli: Cli) -> Outcome {
    let config = match &cli.config {
        Some(path) => Some(PipelineConfig::load(path)?),
        None => None,
    };
    let session = Session { config, mode_flags: (cli.offline, cli.record) };
    match cli.command {
        Command::Run => run_cmd(&session),
        Command::Ontology(cmd) => ontology_cmd(&session, cmd),
        Command::Patterns(cmd) => patterns_cmd(&session, cmd),
        Command::Ingest(cmd) => ingest_cmd(&session, cmd),
        Command::Extract(cmd) => extract_cmd(&session, cmd),
        Command::Kg(cmd) => kg_cmd(cmd),
        Command::Eval(cmd) => eval_cmd(cmd),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(ErrorClass::Usage.exit_code());
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.class.exit_code())
        }
    }
}
