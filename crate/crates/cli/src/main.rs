//! nerkit: run extraction pipelines, serve results over HTTP, evaluate
//! models against gold corpora, render reports, and validate result files.

use std::collections::BTreeMap;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nerkit_core::adapters::{run_external_backend, AdapterConfig};
use nerkit_core::api::{ApiConfig, ApiError, ApiService, ResultsSource};
use nerkit_core::eval::{
    entity_keys, evaluate_documents, gold_oracle_backend, load_conll, report_table, EvalReport,
    SpanKey,
};
use nerkit_core::ingest::store::{StoreConnection, StoreCredentials};
use nerkit_core::ingest::{content_hash, DocumentRecord};
use nerkit_core::model::registry::{ModelKind, NATIVE_GOLD_ORACLE};
use nerkit_core::pipeline::{execute_run, parse_result, PipelineError, RunOptions};
use nerkit_core::recognizers::{run_native_backend, Gazetteer, NativeResources};
use nerkit_core::{validate_mention, ContextPolicy, Registry, RunSettings};

#[derive(Parser)]
#[command(
    name = "nerkit",
    version,
    about = "Named-entity extraction pipelines: run, serve, evaluate, report, validate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a processing run described by a settings file.
    Run(RunArgs),
    /// Serve processed results (and optional NLP proxies) over HTTP.
    Serve(ServeArgs),
    /// Evaluate one model against a CoNLL-format gold corpus.
    Eval(EvalArgs),
    /// Render per-model statistics as a plain-text table.
    Report(ReportArgs),
    /// Check a result file's invariants.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the run settings (JSON).
    settings: PathBuf,
    /// Registry overrides file enabling or re-pointing models.
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Gazetteer file (phrase<TAB>CATEGORY lines) or directory of them;
    /// repeatable.
    #[arg(long = "gazetteer")]
    gazetteers: Vec<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ServeArgs {
    /// Results directory, or a store database URL (http://host:5984/db).
    source: String,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Registry overrides file (affects /models and triggered runs).
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Gazetteers for runs triggered through the service; repeatable.
    #[arg(long = "gazetteer")]
    gazetteers: Vec<PathBuf>,
    /// NLP proxy backend as task=endpoint (tasks: pos, depparse, coref);
    /// repeatable.
    #[arg(long = "nlp")]
    nlp: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// CoNLL-2003-format corpus file.
    corpus: PathBuf,
    /// Model to evaluate (e.g. native/patterns, native/gold-oracle).
    #[arg(long)]
    model: String,
    /// Adapter endpoint for an external model; enables it for this run.
    #[arg(long)]
    endpoint: Option<String>,
    /// Gazetteer file or directory for the native recognizers; repeatable.
    #[arg(long = "gazetteer")]
    gazetteers: Vec<PathBuf>,
    /// Reject IOB anomalies and unknown labels instead of repairing them.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Statistics file written by a run (run_stats.json).
    stats: PathBuf,
    /// Dataset name printed in each row.
    #[arg(long, default_value = "all")]
    dataset: String,
}

#[derive(Args)]
struct ValidateArgs {
    /// Result file to check.
    result: PathBuf,
    /// Source text the result was produced from; enables span checks.
    #[arg(long)]
    text: Option<PathBuf>,
}

/// Failure classes mapped onto exit codes: validation or evaluation
/// failures exit 1, configuration errors 2, I/O errors 3.
enum CliError {
    Validation(String),
    Config(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Config(m) | CliError::Io(m) => m,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Serve(args) => serve(args),
        Command::Eval(args) => eval(args),
        Command::Report(args) => report(args),
        Command::Validate(args) => validate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {path:?}: {e}")))
}

fn build_registry(overrides: Option<&Path>) -> Result<Registry, CliError> {
    let mut registry = Registry::builtin();
    if let Some(path) = overrides {
        registry
            .apply_overrides_file(path)
            .map_err(|e| CliError::Config(format!("registry overrides {path:?}: {e}")))?;
    }
    Ok(registry)
}

/// Loads every given gazetteer; a directory means all regular files in it,
/// in name order.
fn load_gazetteers(paths: &[PathBuf]) -> Result<Vec<Gazetteer>, CliError> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|e| CliError::Io(format!("cannot read {path:?}: {e}")))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(path.clone());
        }
    }
    files
        .iter()
        .map(|path| {
            Gazetteer::load(path, false).map_err(|e| match e {
                nerkit_core::recognizers::GazetteerError::Io { .. } => CliError::Io(e.to_string()),
                other => CliError::Config(other.to_string()),
            })
        })
        .collect()
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let settings: RunSettings = serde_json::from_str(&read_file(&args.settings)?)
        .map_err(|e| CliError::Config(format!("cannot parse {:?}: {e}", args.settings)))?;
    let registry = build_registry(args.registry.as_deref())?;
    let resources = NativeResources {
        gazetteers: load_gazetteers(&args.gazetteers)?,
        ..NativeResources::default()
    };
    let options = RunOptions {
        workers: args.workers,
        adapter: AdapterConfig::default(),
    };
    let (results, stats) = execute_run(&settings, &registry, &resources, &options)
        .map_err(|e| match e {
            PipelineError::Config(_) => CliError::Config(e.to_string()),
            PipelineError::Sink(_) => CliError::Io(e.to_string()),
        })?;
    let label = args
        .settings
        .file_stem()
        .map(|stem| stem.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string());
    println!("processed {} document(s)", results.len());
    print!("{}", report_table(&stats, &label));
    Ok(())
}

/// Splits "http://host:5984/db" into a store connection: the last path
/// segment is the database, everything before it the base URL.
fn parse_store_url(raw: &str) -> Result<StoreConnection, CliError> {
    let parsed = url::Url::parse(raw)
        .map_err(|e| CliError::Config(format!("cannot parse store URL {raw:?}: {e}")))?;
    let segments: Vec<&str> = parsed
        .path_segments()
        .map(|s| s.filter(|seg| !seg.is_empty()).collect())
        .unwrap_or_default();
    let Some((database, prefix)) = segments.split_last() else {
        return Err(CliError::Config(format!(
            "store URL {raw:?} must end with a database name"
        )));
    };
    let mut base = format!(
        "{}://{}",
        parsed.scheme(),
        parsed.host_str().unwrap_or_default()
    );
    if let Some(port) = parsed.port() {
        base.push_str(&format!(":{port}"));
    }
    for segment in prefix {
        base.push('/');
        base.push_str(segment);
    }
    let credentials = if parsed.username().is_empty() {
        None
    } else {
        Some(StoreCredentials {
            user: parsed.username().to_string(),
            secret: parsed.password().unwrap_or_default().to_string(),
        })
    };
    Ok(StoreConnection {
        base_url: base,
        database: database.to_string(),
        credentials,
        timeout_ms: 30_000,
    })
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let source = if args.source.starts_with("http://") || args.source.starts_with("https://") {
        ResultsSource::Store(parse_store_url(&args.source)?)
    } else {
        ResultsSource::Directory(PathBuf::from(&args.source))
    };
    let mut nlp_backends = BTreeMap::new();
    for spec in &args.nlp {
        let Some((task, endpoint)) = spec.split_once('=') else {
            return Err(CliError::Config(format!(
                "--nlp takes task=endpoint, got {spec:?}"
            )));
        };
        nlp_backends.insert(task.to_string(), endpoint.to_string());
    }
    let config = ApiConfig {
        source,
        registry: build_registry(args.registry.as_deref())?,
        resources: NativeResources {
            gazetteers: load_gazetteers(&args.gazetteers)?,
            ..NativeResources::default()
        },
        adapter: AdapterConfig::default(),
        nlp_backends,
        bind: SocketAddr::new(args.host, args.port),
    };
    let service = ApiService::start(config).map_err(|e| match e {
        ApiError::Bind { .. } => CliError::Io(e.to_string()),
        ApiError::Source(_) | ApiError::Config(_) => CliError::Config(e.to_string()),
    })?;
    println!("listening on http://{}", service.addr);
    service.wait();
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let corpus = load_conll(&args.corpus, args.strict).map_err(|e| match e {
        nerkit_core::eval::ConllError::Io { .. } => CliError::Io(e.to_string()),
        other => CliError::Validation(other.to_string()),
    })?;
    let mut registry = Registry::builtin();
    let mut resources = NativeResources {
        gazetteers: load_gazetteers(&args.gazetteers)?,
        ..NativeResources::default()
    };
    if args.model == NATIVE_GOLD_ORACLE {
        let (descriptor, replay) = gold_oracle_backend(&corpus);
        registry
            .register(descriptor)
            .map_err(|e| CliError::Config(e.to_string()))?;
        resources.replay = replay;
    }
    if let Some(endpoint) = &args.endpoint {
        let overrides = BTreeMap::from([(
            args.model.clone(),
            serde_json::from_value(serde_json::json!({
                "enabled": true,
                "endpoint": endpoint,
            }))
            .expect("override shape is fixed"),
        )]);
        registry
            .apply_overrides(&overrides)
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let descriptor = registry
        .get(&args.model)
        .ok_or_else(|| CliError::Config(format!("unknown model {:?}", args.model)))?
        .clone();

    let adapter = AdapterConfig::default();
    let policy = ContextPolicy::Sentence;
    let mut pairs: Vec<(Vec<SpanKey>, Vec<SpanKey>)> = Vec::new();
    let mut failures = Vec::new();
    for doc in &corpus.documents {
        let record = DocumentRecord {
            doc_id: doc.doc_id.clone(),
            source_uri: format!("conll://{}#{}", args.corpus.display(), doc.doc_id),
            text: doc.text.clone(),
            metadata: BTreeMap::new(),
            content_hash: content_hash(&doc.text),
        };
        let result = match descriptor.kind {
            ModelKind::Native => run_native_backend(&args.model, &record, &resources, policy)
                .map_err(|e| CliError::Config(e.to_string()))?,
            ModelKind::External => {
                run_external_backend(&descriptor, &record, policy, false, &adapter)
            }
        };
        if let Some(error) = &result.error {
            failures.push(format!("{}: {error}", doc.doc_id));
        }
        pairs.push((entity_keys(&result.entities), doc.keys()));
    }
    let report = evaluate_documents(
        pairs
            .iter()
            .map(|(pred, gold)| (pred.as_slice(), gold.as_slice())),
    );
    print_eval_report(&report);
    if !failures.is_empty() {
        for failure in &failures {
            eprintln!("model failed on {failure}");
        }
        return Err(CliError::Validation(format!(
            "{} of {} document(s) failed",
            failures.len(),
            corpus.documents.len()
        )));
    }
    Ok(())
}

fn print_eval_report(report: &EvalReport) {
    println!("category\ttp\tfp\tfn\tprecision\trecall\tf1");
    for (category, metrics) in &report.categories {
        println!(
            "{category}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
            metrics.true_positives,
            metrics.false_positives,
            metrics.false_negatives,
            metrics.precision,
            metrics.recall,
            metrics.f1
        );
    }
    let overall = &report.overall;
    println!(
        "OVERALL\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
        overall.true_positives,
        overall.false_positives,
        overall.false_negatives,
        overall.precision,
        overall.recall,
        overall.f1
    );
}

fn report(args: ReportArgs) -> Result<(), CliError> {
    let stats = serde_json::from_str(&read_file(&args.stats)?)
        .map_err(|e| CliError::Validation(format!("cannot parse {:?}: {e}", args.stats)))?;
    print!("{}", report_table(&stats, &args.dataset));
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<(), CliError> {
    let content = read_file(&args.result)?;
    let result = parse_result(&content)
        .map_err(|e| CliError::Validation(format!("{:?}: {e}", args.result)))?;
    let text = args.text.as_deref().map(read_file).transpose()?;

    let mut violations = Vec::new();
    for model_result in &result.model_results {
        for (index, entity) in model_result.entities.iter().enumerate() {
            let at = format!("{} entity {index} ({:?})", model_result.model_id, entity.surface);
            if let Some(text) = &text {
                if let Err(e) = validate_mention(entity, text) {
                    violations.push(format!("{at}: {e}"));
                }
                continue;
            }
            // Structural checks that need no source text.
            if entity.start >= entity.end {
                violations.push(format!("{at}: empty span {}..{}", entity.start, entity.end));
            }
            if !entity.context.contains(&entity.surface) {
                violations.push(format!("{at}: context does not contain the surface"));
            }
            if let Some(score) = entity.score {
                if !(0.0..=1.0).contains(&score) || score.is_nan() {
                    violations.push(format!("{at}: score {score} outside [0, 1]"));
                }
            }
        }
    }
    let recomputed = nerkit_core::pipeline::build_summary(&result.model_results);
    if recomputed != result.summary {
        violations.push("summary does not match its model results".to_string());
    }

    if violations.is_empty() {
        println!(
            "ok: {} model result(s), {} entities",
            result.model_results.len(),
            result
                .model_results
                .iter()
                .map(|m| m.entities.len())
                .sum::<usize>()
        );
        Ok(())
    } else {
        for violation in &violations {
            eprintln!("violation: {violation}");
        }
        Err(CliError::Validation(format!(
            "{} violation(s) in {:?}",
            violations.len(),
            args.result
        )))
    }
}
