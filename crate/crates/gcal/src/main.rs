//! Command-line front end wiring ingestion, graph building, training,
//! evaluation, explanation, and self-tests into reproducible runs.

use std::fmt::Write as _;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use gcal::data::{parse_dataset, split_dataset, Dataset, IngestConfig, IngestReport};
use gcal::explain::{rank_sentences, read_scores, render_explain_report, synthetic_oracle};
use gcal::graph::{
    build_graph, load_graph, save_graph, validate_graph, HeteroGraph, NodeKind, ValidationReport,
};
use gcal::model::{forward_news, trace_from_forward, AblationMode, ModelParams};
use gcal::selftest::{gradient_suite, normalization_suite, oracle_suite};
use gcal::tensor::{load_checkpoint, Tape};
use gcal::train::{evaluate, train, Metrics, TrainConfig, TrainError};
use gcal::{coattn::ForwardTrace, parallel};

#[derive(Parser)]
#[command(name = "gcal", version, about = "Graph co-attention fake news detection pipeline")]
struct Cli {
    /// TOML run configuration; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory reports are written into.
    #[arg(long, global = true, value_name = "DIR")]
    report_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a corpus directory into a validated dataset cache.
    Ingest(IngestArgs),
    /// Build, validate, and cache the user-comment graph.
    Graph(GraphArgs),
    /// Train one model on the configured split and write checkpoints.
    Train(TrainArgs),
    /// Score a dataset with a trained checkpoint.
    Eval(EvalArgs),
    /// Rank sentences per news item and report MAP against reference scores.
    Explain(ExplainArgs),
    /// Run the gradient, normalization, and oracle self-test suites.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Corpus directory holding news.jsonl, comments.jsonl, users.jsonl.
    #[arg(long, value_name = "DIR")]
    root: Option<PathBuf>,
    /// Dataset cache file to write.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Report only; skip writing the cache.
    #[arg(long)]
    dry_run: bool,
    /// Minimum corpus frequency for a token to enter the vocabulary.
    #[arg(long, value_name = "N")]
    min_token_freq: Option<usize>,
}

#[derive(Args)]
struct GraphArgs {
    /// Dataset cache produced by `ingest`.
    #[arg(long, value_name = "FILE")]
    dataset: Option<PathBuf>,
    /// Graph cache file to write.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset cache produced by `ingest`.
    #[arg(long, value_name = "FILE")]
    dataset: Option<PathBuf>,
    /// Graph cache produced by `graph`; must match the dataset.
    #[arg(long, value_name = "FILE")]
    graph: Option<PathBuf>,
    /// Directory epoch and final checkpoints are written into.
    #[arg(long, value_name = "DIR")]
    checkpoint_dir: Option<PathBuf>,
    /// Seed for initialization, splitting, and sampling.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    #[arg(long, value_name = "LR")]
    learning_rate: Option<f64>,
    #[arg(long, value_name = "N")]
    batch_size: Option<usize>,
    /// Branch ablation: full, no_comments, or no_users.
    #[arg(long, value_name = "MODE")]
    ablation: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset cache produced by `ingest`.
    #[arg(long, value_name = "FILE")]
    dataset: Option<PathBuf>,
    /// Graph cache produced by `graph`; must match the dataset.
    #[arg(long, value_name = "FILE")]
    graph: Option<PathBuf>,
    /// Trained checkpoint; defaults to final.ckpt under the checkpoint dir.
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Seed for neighbor sampling during the forward pass.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Args)]
struct ExplainArgs {
    /// Dataset cache produced by `ingest`.
    #[arg(long, value_name = "FILE")]
    dataset: Option<PathBuf>,
    /// Graph cache produced by `graph`; must match the dataset.
    #[arg(long, value_name = "FILE")]
    graph: Option<PathBuf>,
    /// Trained checkpoint; defaults to final.ckpt under the checkpoint dir.
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Reference sentence scores (JSONL); synthesized from the corpus markers
    /// when absent.
    #[arg(long, value_name = "FILE")]
    scores: Option<PathBuf>,
    /// Sentences listed per news item.
    #[arg(long, value_name = "K")]
    k: Option<usize>,
    /// Seed for neighbor sampling and the synthetic reference scores.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Forward passes in the normalization suite.
    #[arg(long, value_name = "N")]
    passes: Option<usize>,
    /// Random instances per oracle-equivalence check.
    #[arg(long, value_name = "N")]
    instances: Option<usize>,
}

/// File locations; unset entries fall back to command defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PathsConfig {
    dataset_root: Option<PathBuf>,
    dataset_cache: Option<PathBuf>,
    graph_cache: Option<PathBuf>,
    checkpoint_dir: Option<PathBuf>,
    report_dir: Option<PathBuf>,
    scores: Option<PathBuf>,
}

/// Settings for the explain command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExplainSettings {
    k: usize,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        Self { k: 5 }
    }
}

/// Full run configuration: one TOML file drives every subcommand.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    paths: PathsConfig,
    ingest: IngestConfig,
    train: TrainConfig,
    explain: ExplainSettings,
}

/// Failure carrying its process exit code: 1 for missed thresholds or
/// diverged runs, 2 for usage, schema, and input errors.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn failed(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            std::process::exit(failure.code);
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|_| usage(format!("missing input file: {}", path.display())))?;
            toml::from_str(&text).map_err(|err| usage(format!("{}: {err}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.report_dir {
        config.paths.report_dir = Some(dir.clone());
    }
    match cli.command {
        Command::Ingest(args) => cmd_ingest(config, args),
        Command::Graph(args) => cmd_graph(config, args),
        Command::Train(args) => cmd_train(config, args),
        Command::Eval(args) => cmd_eval(config, args),
        Command::Explain(args) => cmd_explain(config, args),
        Command::Selftest(args) => cmd_selftest(config, args),
    }
}

fn cmd_ingest(mut config: RunConfig, args: IngestArgs) -> Result<(), Failure> {
    if let Some(root) = args.root {
        config.paths.dataset_root = Some(root);
    }
    if let Some(out) = args.out {
        config.paths.dataset_cache = Some(out);
    }
    if let Some(freq) = args.min_token_freq {
        config.ingest.min_token_freq = freq;
    }
    let root = config
        .paths
        .dataset_root
        .clone()
        .ok_or_else(|| usage("no corpus directory; pass --root or set paths.dataset_root"))?;
    let cache = resolve(&mut config.paths.dataset_cache, "dataset.json");

    let (dataset, report) =
        parse_dataset(&root, &config.ingest).map_err(|err| usage(err.to_string()))?;
    if !args.dry_run {
        let bytes = serde_json::to_vec(&dataset).map_err(|err| failed(err.to_string()))?;
        write_atomic(&cache, &bytes)?;
    }

    let mut body = String::new();
    let _ = writeln!(body, "[ingest]");
    let _ = writeln!(body, "generated_at = {}", timestamp());
    let _ = writeln!(body, "root = {}", root.display());
    if args.dry_run {
        let _ = writeln!(body, "cache = none (dry run)");
    } else {
        let _ = writeln!(body, "cache = {}", cache.display());
    }
    body.push('\n');
    body.push_str(&render_ingest_counts(&report));
    body.push('\n');
    body.push_str(&render_config(&config));
    let path = write_report(&config, "ingest_report.txt", &body)?;

    println!(
        "ingested {} news ({} fake / {} true), {} comments, {} users, vocabulary {}",
        report.news_retained,
        report.news_fake,
        report.news_true,
        report.comments_retained,
        report.users_retained,
        report.vocabulary_size
    );
    if args.dry_run {
        println!("dry run: cache not written");
    } else {
        println!("cache = {}", cache.display());
    }
    println!("report = {}", path.display());
    Ok(())
}

fn cmd_graph(mut config: RunConfig, args: GraphArgs) -> Result<(), Failure> {
    if let Some(dataset) = args.dataset {
        config.paths.dataset_cache = Some(dataset);
    }
    if let Some(out) = args.out {
        config.paths.graph_cache = Some(out);
    }
    let dataset_path = resolve(&mut config.paths.dataset_cache, "dataset.json");
    let graph_path = resolve(&mut config.paths.graph_cache, "graph.json");

    let dataset = load_dataset(&dataset_path)?;
    let graph = build_graph(&dataset);
    let validation = validate_graph(&graph);
    let tmp = graph_path.with_extension("tmp");
    ensure_parent(&graph_path)?;
    save_graph(&tmp, &graph).map_err(|err| failed(err.to_string()))?;
    fs::rename(&tmp, &graph_path).map_err(|err| failed(err.to_string()))?;

    let mut body = String::new();
    let _ = writeln!(body, "[graph]");
    let _ = writeln!(body, "generated_at = {}", timestamp());
    let _ = writeln!(body, "dataset = {}", dataset_path.display());
    let _ = writeln!(body, "cache = {}", graph_path.display());
    body.push('\n');
    body.push_str(&render_validation(&validation));
    body.push('\n');
    body.push_str(&render_config(&config));
    let path = write_report(&config, "graph_report.txt", &body)?;

    println!(
        "graph: {} user nodes, {} comment nodes, {} user-comment edges, {} comment pairs",
        validation.user_nodes,
        validation.comment_nodes,
        validation.user_comment_edges,
        validation.comment_comment_pairs
    );
    println!("cache = {}", graph_path.display());
    println!("report = {}", path.display());
    if !validation.is_valid() {
        return Err(failed(format!(
            "graph validation found {} violations; see {}",
            validation.violations.len(),
            path.display()
        )));
    }
    Ok(())
}

fn cmd_train(mut config: RunConfig, args: TrainArgs) -> Result<(), Failure> {
    if let Some(dataset) = args.dataset {
        config.paths.dataset_cache = Some(dataset);
    }
    if let Some(graph) = args.graph {
        config.paths.graph_cache = Some(graph);
    }
    if let Some(dir) = args.checkpoint_dir {
        config.paths.checkpoint_dir = Some(dir);
    }
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        config.train.epochs = epochs;
    }
    if let Some(lr) = args.learning_rate {
        config.train.learning_rate = lr;
    }
    if let Some(batch) = args.batch_size {
        config.train.batch_size = batch;
    }
    if let Some(name) = &args.ablation {
        config.train.model.ablation = parse_ablation(name)?;
    }
    apply_env_seed(&mut config)?;
    validate_train_config(&config.train)?;

    let dataset_path = resolve(&mut config.paths.dataset_cache, "dataset.json");
    let graph_path = resolve(&mut config.paths.graph_cache, "graph.json");
    let checkpoint_dir = resolve(&mut config.paths.checkpoint_dir, "checkpoints");

    let dataset = load_dataset(&dataset_path)?;
    let graph = load_graph(&graph_path)
        .map_err(|err| usage(format!("{}: {err}", graph_path.display())))?;
    check_graph_matches(&dataset, &graph, &graph_path)?;

    let (train_split, val_split) =
        split_dataset(&dataset, config.train.train_fraction, config.train.seed);
    fs::create_dir_all(&checkpoint_dir)
        .map_err(|err| usage(format!("{}: {err}", checkpoint_dir.display())))?;
    let outcome = train(
        &config.train,
        &train_split,
        Some(&val_split),
        Some(&checkpoint_dir),
    )
    .map_err(|err| match err {
        TrainError::Divergence { epoch, .. } => {
            failed(format!("training diverged at epoch {epoch}"))
        }
        other => usage(other.to_string()),
    })?;
    let val_graph = build_graph(&val_split);
    let metrics = evaluate(
        &outcome.set,
        &outcome.model,
        &config.train.model,
        &val_split,
        &val_graph,
        config.train.seed,
    )
    .map_err(|err| usage(err.to_string()))?;

    let mut body = String::new();
    let _ = writeln!(body, "[train]");
    let _ = writeln!(body, "dataset = {}", dataset_path.display());
    let _ = writeln!(body, "graph = {}", graph_path.display());
    let _ = writeln!(body, "checkpoint_dir = {}", checkpoint_dir.display());
    let _ = writeln!(body, "train_news = {}", train_split.news.len());
    let _ = writeln!(body, "val_news = {}", val_split.news.len());
    let _ = writeln!(body, "epochs_run = {}", outcome.epochs_run);
    let _ = writeln!(body, "early_stopped = {}", outcome.early_stopped);
    body.push('\n');
    let _ = writeln!(body, "[losses]");
    for (epoch, train_loss) in outcome.train_losses.iter().enumerate() {
        let val_loss = outcome.val_losses.get(epoch).copied().unwrap_or(f64::NAN);
        let _ = writeln!(
            body,
            "epoch = {epoch} train = {train_loss:.6} val = {val_loss:.6}"
        );
    }
    body.push('\n');
    body.push_str(&render_metrics(&metrics));
    body.push('\n');
    body.push_str(&render_config(&config));
    let path = write_report(&config, "train_report.txt", &body)?;

    println!(
        "trained {} epochs{} on {} news, validated on {}",
        outcome.epochs_run,
        if outcome.early_stopped {
            " (early stop)"
        } else {
            ""
        },
        train_split.news.len(),
        val_split.news.len()
    );
    if let (Some(last_train), Some(last_val)) =
        (outcome.train_losses.last(), outcome.val_losses.last())
    {
        println!("loss: train {last_train:.6} val {last_val:.6}");
    }
    println!("val metrics: {metrics}");
    println!("checkpoints = {}", checkpoint_dir.join("final.ckpt").display());
    println!("report = {}", path.display());
    Ok(())
}

fn cmd_eval(mut config: RunConfig, args: EvalArgs) -> Result<(), Failure> {
    if let Some(dataset) = args.dataset {
        config.paths.dataset_cache = Some(dataset);
    }
    if let Some(graph) = args.graph {
        config.paths.graph_cache = Some(graph);
    }
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    apply_env_seed(&mut config)?;
    let dataset_path = resolve(&mut config.paths.dataset_cache, "dataset.json");
    let graph_path = resolve(&mut config.paths.graph_cache, "graph.json");
    let checkpoint = resolve_checkpoint(&config, args.checkpoint)?;

    let (dataset, graph, set, model) = load_model(&config, &dataset_path, &graph_path, &checkpoint)?;
    let metrics = evaluate(
        &set,
        &model,
        &config.train.model,
        &dataset,
        &graph,
        config.train.seed,
    )
    .map_err(|err| usage(err.to_string()))?;

    let mut body = String::new();
    let _ = writeln!(body, "[eval]");
    let _ = writeln!(body, "generated_at = {}", timestamp());
    let _ = writeln!(body, "dataset = {}", dataset_path.display());
    let _ = writeln!(body, "graph = {}", graph_path.display());
    let _ = writeln!(body, "checkpoint = {}", checkpoint.display());
    let _ = writeln!(body, "news = {}", dataset.news.len());
    body.push('\n');
    body.push_str(&render_metrics(&metrics));
    body.push('\n');
    body.push_str(&render_config(&config));
    let path = write_report(&config, "eval_report.txt", &body)?;

    println!("{metrics}");
    println!("report = {}", path.display());
    Ok(())
}

fn cmd_explain(mut config: RunConfig, args: ExplainArgs) -> Result<(), Failure> {
    if let Some(dataset) = args.dataset {
        config.paths.dataset_cache = Some(dataset);
    }
    if let Some(graph) = args.graph {
        config.paths.graph_cache = Some(graph);
    }
    if let Some(scores) = args.scores {
        config.paths.scores = Some(scores);
    }
    if let Some(k) = args.k {
        config.explain.k = k;
    }
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    apply_env_seed(&mut config)?;
    if config.explain.k == 0 {
        return Err(usage("k must be at least 1"));
    }
    let dataset_path = resolve(&mut config.paths.dataset_cache, "dataset.json");
    let graph_path = resolve(&mut config.paths.graph_cache, "graph.json");
    let checkpoint = resolve_checkpoint(&config, args.checkpoint)?;

    let (dataset, graph, set, model) = load_model(&config, &dataset_path, &graph_path, &checkpoint)?;
    let seed = config.train.seed;
    let traces = forward_traces(&dataset, &graph, &set, &model, &config, seed)?;
    let oracle = match &config.paths.scores {
        Some(path) => read_scores(path).map_err(|err| usage(err.to_string()))?,
        None => synthetic_oracle(&dataset, seed),
    };
    let ranking_body = render_rankings(&traces);
    let report_body = render_explain_report(&dataset, &traces, &oracle, config.explain.k)
        .map_err(|err| usage(err.to_string()))?;

    let mut body = String::new();
    let _ = writeln!(body, "[explain]");
    let _ = writeln!(body, "generated_at = {}", timestamp());
    let _ = writeln!(body, "dataset = {}", dataset_path.display());
    let _ = writeln!(body, "checkpoint = {}", checkpoint.display());
    let _ = writeln!(body, "k = {}", config.explain.k);
    match &config.paths.scores {
        Some(path) => {
            let _ = writeln!(body, "scores = {}", path.display());
        }
        None => {
            let _ = writeln!(body, "scores = synthetic (seed {seed})");
        }
    }
    body.push('\n');
    body.push_str(&report_body);
    body.push('\n');
    body.push_str(&render_config(&config));
    let path = write_report(&config, "explain_report.txt", &body)?;
    let rankings_path = report_path(&config, "rankings.jsonl");
    write_atomic(&rankings_path, ranking_body.as_bytes())?;

    println!("explained {} news items (k = {})", traces.len(), config.explain.k);
    println!("rankings = {}", rankings_path.display());
    println!("report = {}", path.display());
    Ok(())
}

fn cmd_selftest(config: RunConfig, args: SelftestArgs) -> Result<(), Failure> {
    let passes = args.passes.unwrap_or(1000);
    let instances = args.instances.unwrap_or(100);
    let reports = [
        gradient_suite(),
        normalization_suite(passes),
        oracle_suite(instances),
    ];

    let mut body = String::new();
    let _ = writeln!(body, "[selftest]");
    let _ = writeln!(body, "generated_at = {}", timestamp());
    let _ = writeln!(body, "passes = {passes}");
    let _ = writeln!(body, "instances = {instances}");
    for report in &reports {
        body.push('\n');
        body.push_str(&report.render());
        print!("{}", report.render());
    }
    let path = write_report(&config, "selftest_report.txt", &body)?;
    println!("report = {}", path.display());

    if reports.iter().all(|report| report.passed()) {
        println!("all suites passed");
        Ok(())
    } else {
        Err(failed("self-test thresholds not met"))
    }
}

/// Fills an unset path with its default and returns the resolved value, so
/// the echoed config shows what the command actually used.
fn resolve(slot: &mut Option<PathBuf>, default: &str) -> PathBuf {
    slot.get_or_insert_with(|| PathBuf::from(default)).clone()
}

fn resolve_checkpoint(config: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let path = flag
        .or_else(|| {
            config
                .paths
                .checkpoint_dir
                .as_ref()
                .map(|dir| dir.join("final.ckpt"))
        })
        .ok_or_else(|| {
            usage("no checkpoint; pass --checkpoint or set paths.checkpoint_dir")
        })?;
    if path.is_file() {
        Ok(path)
    } else {
        Err(usage(format!("missing input file: {}", path.display())))
    }
}

fn apply_env_seed(config: &mut RunConfig) -> Result<(), Failure> {
    match std::env::var("GCAL_SEED") {
        Ok(raw) => {
            let seed = raw.trim().parse::<u64>().map_err(|_| {
                usage(format!("GCAL_SEED must be an unsigned integer, got {raw:?}"))
            })?;
            config.train.seed = seed;
            Ok(())
        }
        Err(std::env::VarError::NotPresent) => Ok(()),
        Err(err) => Err(usage(format!("GCAL_SEED: {err}"))),
    }
}

/// Runs the library's assert-based config validation, converting a panic into
/// a usage error so bad values exit with code 2 instead of a backtrace.
fn validate_train_config(config: &TrainConfig) -> Result<(), Failure> {
    let hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let result = panic::catch_unwind(AssertUnwindSafe(|| config.validate()));
    panic::set_hook(hook);
    result.map_err(|payload| {
        let message = payload
            .downcast_ref::<&str>()
            .map(|s| (*s).to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "invalid train configuration".into());
        usage(message)
    })
}

fn parse_ablation(name: &str) -> Result<AblationMode, Failure> {
    serde_json::from_value(serde_json::Value::String(name.to_string())).map_err(|_| {
        usage(format!(
            "unknown ablation {name:?}; expected full, no_comments, or no_users"
        ))
    })
}

fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|_| usage(format!("missing input file: {}", path.display())))?;
    serde_json::from_str(&text).map_err(|err| usage(format!("{}: {err}", path.display())))
}

/// Rejects a graph cache built from a different dataset than the one given.
fn check_graph_matches(
    dataset: &Dataset,
    graph: &HeteroGraph,
    graph_path: &Path,
) -> Result<(), Failure> {
    let mut users = 0;
    let mut comments = 0;
    for (_, node) in graph.nodes() {
        let known = match node.kind {
            NodeKind::User => {
                users += 1;
                dataset.users.contains_key(&node.payload_id)
            }
            NodeKind::Comment => {
                comments += 1;
                dataset.comments.contains_key(&node.payload_id)
            }
        };
        if !known {
            return Err(usage(format!(
                "graph cache {} references unknown id {}; rebuild with the graph command",
                graph_path.display(),
                node.payload_id
            )));
        }
    }
    if users != dataset.users.len() || comments != dataset.comments.len() {
        return Err(usage(format!(
            "graph cache {} does not match the dataset ({} user / {} comment nodes vs {} / {}); rebuild with the graph command",
            graph_path.display(),
            users,
            comments,
            dataset.users.len(),
            dataset.comments.len()
        )));
    }
    Ok(())
}

type LoadedModel = (Dataset, HeteroGraph, gcal::tensor::ParamSet, ModelParams);

fn load_model(
    config: &RunConfig,
    dataset_path: &Path,
    graph_path: &Path,
    checkpoint: &Path,
) -> Result<LoadedModel, Failure> {
    let dataset = load_dataset(dataset_path)?;
    let graph =
        load_graph(graph_path).map_err(|err| usage(format!("{}: {err}", graph_path.display())))?;
    check_graph_matches(&dataset, &graph, graph_path)?;
    let (mut set, model) = ModelParams::init(
        &config.train.model,
        dataset.vocabulary.len(),
        config.train.seed,
    );
    load_checkpoint(checkpoint, &mut set)
        .map_err(|err| usage(format!("{}: {err}", checkpoint.display())))?;
    Ok((dataset, graph, set, model))
}

fn forward_traces(
    dataset: &Dataset,
    graph: &HeteroGraph,
    set: &gcal::tensor::ParamSet,
    model: &ModelParams,
    config: &RunConfig,
    seed: u64,
) -> Result<Vec<ForwardTrace>, Failure> {
    let items: Vec<_> = dataset.news.iter().collect();
    let results = parallel::map_collect(items, |news| {
        let mut tape = Tape::new();
        forward_news(
            &mut tape,
            set,
            model,
            &config.train.model,
            dataset,
            graph,
            seed,
            news,
        )
        .map(|fwd| trace_from_forward(&tape, news, &fwd))
    });
    let mut traces = Vec::with_capacity(results.len());
    for result in results {
        traces.push(result.map_err(|err| usage(err.to_string()))?);
    }
    Ok(traces)
}

fn render_rankings(traces: &[ForwardTrace]) -> String {
    let mut out = String::new();
    for trace in traces {
        if trace.sentence_attention.is_empty() {
            continue;
        }
        let ranking = rank_sentences(trace, trace.sentence_attention.len());
        let line = serde_json::to_string(&ranking).expect("ranking serializes");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn render_ingest_counts(report: &IngestReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[counts]");
    let _ = writeln!(out, "true_news = {}", report.news_true);
    let _ = writeln!(out, "fake_news = {}", report.news_fake);
    let _ = writeln!(out, "users = {}", report.users_retained);
    let _ = writeln!(out, "comment_user_records = {}", report.comment_user_edges);
    let _ = writeln!(out, "vocabulary = {}", report.vocabulary_size);
    out.push('\n');
    let _ = writeln!(out, "[detail]");
    let detail = toml::to_string(report).expect("report serializes");
    out.push_str(&detail);
    out
}

fn render_validation(validation: &ValidationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[validation]");
    let _ = writeln!(out, "user_nodes = {}", validation.user_nodes);
    let _ = writeln!(out, "comment_nodes = {}", validation.comment_nodes);
    let _ = writeln!(out, "user_comment_edges = {}", validation.user_comment_edges);
    let _ = writeln!(
        out,
        "comment_comment_pairs = {}",
        validation.comment_comment_pairs
    );
    let _ = writeln!(out, "isolated_nodes = {}", validation.isolated_nodes);
    let _ = writeln!(out, "violations = {}", validation.violations.len());
    let _ = writeln!(
        out,
        "status = {}",
        if validation.is_valid() { "valid" } else { "INVALID" }
    );
    for violation in &validation.violations {
        let _ = writeln!(out, "violation = {violation}");
    }
    out.push('\n');
    let _ = writeln!(out, "[degrees.user_comment]");
    for (degree, count) in &validation.user_comment_degree_histogram {
        let _ = writeln!(out, "{degree} = {count}");
    }
    out.push('\n');
    let _ = writeln!(out, "[degrees.comment_comment]");
    for (degree, count) in &validation.comment_comment_degree_histogram {
        let _ = writeln!(out, "{degree} = {count}");
    }
    out
}

fn render_metrics(metrics: &Metrics) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[metrics]");
    let _ = writeln!(out, "accuracy = {:.6}", metrics.accuracy);
    let _ = writeln!(out, "precision = {:.6}", metrics.precision);
    let _ = writeln!(out, "recall = {:.6}", metrics.recall);
    let _ = writeln!(out, "f1 = {:.6}", metrics.f1);
    let _ = writeln!(out, "auc = {:.6}", metrics.auc);
    let _ = writeln!(
        out,
        "confusion = tp {} fp {} tn {} fn {}",
        metrics.confusion.true_positive,
        metrics.confusion.false_positive,
        metrics.confusion.true_negative,
        metrics.confusion.false_negative
    );
    out
}

/// Echoes the fully resolved configuration as dotted key-value lines.
fn render_config(config: &RunConfig) -> String {
    let value = toml::Value::try_from(config).expect("config serializes");
    let mut out = String::from("[config]\n");
    flatten_toml("", &value, &mut out);
    out
}

fn flatten_toml(prefix: &str, value: &toml::Value, out: &mut String) {
    match value {
        toml::Value::Table(table) => {
            for (key, inner) in table {
                let path = if prefix.is_empty() {
                    key.clone()
                } else {
                    format!("{prefix}.{key}")
                };
                flatten_toml(&path, inner, out);
            }
        }
        other => {
            let _ = writeln!(out, "{prefix} = {other}");
        }
    }
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn report_path(config: &RunConfig, name: &str) -> PathBuf {
    let dir = config
        .paths
        .report_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("reports"));
    dir.join(name)
}

fn write_report(config: &RunConfig, name: &str, body: &str) -> Result<PathBuf, Failure> {
    let path = report_path(config, name);
    write_atomic(&path, body.as_bytes())?;
    Ok(path)
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|err| usage(format!("{}: {err}", parent.display())))?;
        }
    }
    Ok(())
}

/// Writes through a sibling temp file and renames, so re-runs replace
/// outputs atomically.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    ensure_parent(path)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|err| usage(format!("{}: {err}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|err| usage(format!("{}: {err}", path.display())))
}
