use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use exposition::global::{ImportanceMode, Loss, ProfileKind};
use exposition::models::serve_predictor;
use exposition::{load_dataset, Dataset, Explainer, MethodKind, MethodParams, ModelSpec};
use exposition_arena::{router, serve, ArenaState, Session};
use rayon::prelude::*;
use serde_json::Value as Json;

/// Explain tabular models: attributions, profiles, importance, fairness.
#[derive(Parser)]
#[command(name = "exposition", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on every model and write the explanations.
    Explain(Box<ExplainArgs>),
    /// Start the dashboard service.
    Serve(ServeArgs),
    /// Answer line-protocol prediction requests on stdin/stdout.
    Worker(WorkerArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Name of the target column.
    #[arg(long)]
    target: String,
}

#[derive(Args)]
struct ModelArgs {
    /// Model specification as `path[:label]`; the label defaults to the file stem.
    #[arg(long = "model", required = true)]
    models: Vec<String>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_parser = parse_kind)]
    kind: MethodKind,
    /// Row index of the observation (predict-level kinds).
    #[arg(long)]
    instance: Option<usize>,
    /// What-if value for the instance, as `variable=value`.
    #[arg(long = "override", value_parser = parse_pair)]
    overrides: Vec<(String, String)>,
    #[arg(long = "variable", alias = "variables", value_delimiter = ',')]
    variables: Vec<String>,
    /// Variable order for break-down.
    #[arg(long, value_delimiter = ',')]
    order: Vec<String>,
    #[arg(long)]
    grid_size: Option<usize>,
    /// Equally spaced grids instead of quantile grids.
    #[arg(long)]
    uniform_grid: bool,
    /// Orderings (shapley) or permutation rounds (importance).
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    background_size: Option<usize>,
    /// Average over every ordering instead of sampling.
    #[arg(long)]
    full_enumeration: bool,
    #[arg(long, value_parser = parse_loss)]
    loss: Option<Loss>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<ImportanceMode>,
    #[arg(long)]
    sample_size: Option<usize>,
    #[arg(long, value_parser = parse_profile_kind)]
    profile_kind: Option<ProfileKind>,
    /// Keep ICE curves uncentred.
    #[arg(long)]
    no_center_ice: bool,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    protected: Option<String>,
    #[arg(long)]
    privileged: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Per-subgroup classification cutoff, as `subgroup=value`.
    #[arg(long = "cutoff", value_parser = parse_pair)]
    cutoffs: Vec<(String, String)>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 8042)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Saved dashboard state to restore.
    #[arg(long)]
    state: Option<PathBuf>,
    /// Directory with the built dashboard UI.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

#[derive(Args)]
struct WorkerArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model specification file.
    #[arg(long)]
    model: PathBuf,
}

fn parse_kind(s: &str) -> Result<MethodKind, String> {
    s.parse().map_err(|e: exposition::ExplainError| e.to_string())
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Json::String(s.to_string())).map_err(|_| format!("invalid value '{s}'"))
}

fn parse_loss(s: &str) -> Result<Loss, String> {
    parse_enum(s)
}

fn parse_mode(s: &str) -> Result<ImportanceMode, String> {
    parse_enum(s)
}

fn parse_profile_kind(s: &str) -> Result<ProfileKind, String> {
    parse_enum(s)
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected name=value, got '{s}'"))
}

/// Numbers stay numbers; anything else is a level name.
fn override_value(text: &str) -> Json {
    match serde_json::from_str::<Json>(text) {
        Ok(v @ Json::Number(_)) => v,
        _ => Json::String(text.to_string()),
    }
}

fn usage_error(kind: ErrorKind, message: impl std::fmt::Display) -> ! {
    Cli::command().error(kind, message).exit()
}

/// Splits `path[:label]`. A colon followed by a path separator is kept as
/// part of the path.
fn split_model_flag(flag: &str) -> (PathBuf, String) {
    match flag.rsplit_once(':') {
        Some((path, label)) if !label.is_empty() && !label.contains(['/', '\\']) => {
            (PathBuf::from(path), label.to_string())
        }
        _ => {
            let path = PathBuf::from(flag);
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            (path, stem)
        }
    }
}

fn model_flags(args: &ModelArgs) -> Vec<(PathBuf, String)> {
    let flags: Vec<(PathBuf, String)> = args.models.iter().map(|m| split_model_flag(m)).collect();
    for (i, (_, label)) in flags.iter().enumerate() {
        if label.is_empty() {
            usage_error(
                ErrorKind::InvalidValue,
                format!("model '{}' has an empty label", args.models[i]),
            );
        }
        if flags[..i].iter().any(|(_, l)| l == label) {
            usage_error(
                ErrorKind::ArgumentConflict,
                format!("model label '{label}' is used twice"),
            );
        }
    }
    flags
}

fn read_data(args: &DataArgs) -> anyhow::Result<Dataset> {
    let file = fs::File::open(&args.data).with_context(|| format!("cannot open {}", args.data.display()))?;
    load_dataset(file, Some(&args.target)).with_context(|| format!("cannot load {}", args.data.display()))
}

/// Loads every model specification first, so a missing file fails before any
/// model is fitted or spawned.
fn build_explainers(data: &Dataset, flags: &[(PathBuf, String)], seed: u64) -> anyhow::Result<Vec<Explainer>> {
    let specs = flags
        .iter()
        .map(|(path, _)| ModelSpec::load(path).with_context(|| format!("model {}", path.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    specs
        .iter()
        .zip(flags)
        .map(|(spec, (path, label))| {
            let predictor = spec
                .build(data)
                .with_context(|| format!("building model {}", path.display()))?;
            Explainer::new(predictor, data.clone(), label.as_str(), None, seed)
                .with_context(|| format!("model '{label}'"))
        })
        .collect()
}

fn method_params(args: &ExplainArgs) -> MethodParams {
    let some_vec = |v: &Vec<String>| (!v.is_empty()).then(|| v.clone());
    MethodParams {
        instance: args.instance,
        overrides: args
            .overrides
            .iter()
            .map(|(k, v)| (k.clone(), override_value(v)))
            .collect(),
        variables: some_vec(&args.variables),
        order: some_vec(&args.order),
        grid_size: args.grid_size,
        uniform_grid: args.uniform_grid.then_some(true),
        b: args.b,
        background_size: args.background_size,
        full_enumeration: args.full_enumeration.then_some(true),
        loss: args.loss,
        mode: args.mode,
        sample_size: args.sample_size,
        profile_kind: args.profile_kind,
        center_ice: args.no_center_ice.then_some(false),
        max_depth: args.max_depth,
        min_leaf: args.min_leaf,
        protected: args.protected.clone(),
        privileged: args.privileged.clone(),
        epsilon: args.epsilon,
        cutoffs: None,
    }
}

fn explain(args: ExplainArgs) -> anyhow::Result<()> {
    if args.kind.is_predict_level() && args.instance.is_none() {
        usage_error(
            ErrorKind::MissingRequiredArgument,
            format!("--kind {} requires --instance", args.kind),
        );
    }
    if !args.overrides.is_empty() && !args.kind.is_predict_level() {
        usage_error(
            ErrorKind::ArgumentConflict,
            "--override applies only to breakdown, shapley and cp",
        );
    }
    let mut params = method_params(&args);
    if !args.cutoffs.is_empty() {
        let mut cutoffs = BTreeMap::new();
        for (group, value) in &args.cutoffs {
            let v: f64 = value
                .parse()
                .unwrap_or_else(|_| usage_error(ErrorKind::InvalidValue, format!("cutoff '{value}' is not a number")));
            cutoffs.insert(group.clone(), v);
        }
        params.cutoffs = Some(cutoffs);
    }
    let flags = model_flags(&args.model);
    let data = read_data(&args.data)?;
    let explainers = build_explainers(&data, &flags, args.model.seed)?;

    let payloads = explainers
        .par_iter()
        .map(|e| {
            exposition::run(e, args.kind, &params, args.model.seed)
                .map(|x| x.to_json_bytes())
                .with_context(|| format!("{} for model '{}'", args.kind, e.label()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut document = Vec::new();
    if payloads.len() == 1 {
        document.extend_from_slice(&payloads[0]);
    } else {
        document.push(b'[');
        for (i, p) in payloads.iter().enumerate() {
            if i > 0 {
                document.push(b',');
            }
            document.extend_from_slice(p);
        }
        document.push(b']');
    }
    match &args.out {
        Some(path) => fs::write(path, &document).with_context(|| format!("cannot write {}", path.display()))?,
        None => {
            let mut out = io::stdout().lock();
            out.write_all(&document)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn read_state(path: &Path) -> anyhow::Result<ArenaState> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read state {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid state document {}", path.display()))
}

fn serve_command(args: ServeArgs) -> anyhow::Result<()> {
    let flags = model_flags(&args.model);
    let data = read_data(&args.data)?;
    let explainers = build_explainers(&data, &flags, args.model.seed)?;
    let session = Session::new(explainers)?;
    if let Some(path) = &args.state {
        let state = read_state(path)?;
        session.load_state(state).map_err(|unresolved| {
            anyhow!(
                "state {} has unresolvable references: {}",
                path.display(),
                unresolved.join("; ")
            )
        })?;
    }
    let app = router(Arc::new(session), args.ui_dir.clone());
    let runtime = runtime()?;
    runtime.block_on(async move {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("cannot listen on {addr}"))?;
        tracing::info!("serving on http://{addr}");
        serve(listener, app).await.context("service stopped")
    })
}

fn worker(args: WorkerArgs) -> anyhow::Result<()> {
    let data = read_data(&args.data)?;
    let spec = ModelSpec::load(&args.model)?;
    let predictor = spec.build(&data)?;
    let schema = data.features().schema().to_vec();
    serve_predictor(predictor.as_ref(), &schema, io::stdin().lock(), io::stdout().lock())?;
    Ok(())
}

fn thread_cap() -> Option<usize> {
    let raw = std::env::var("EXPOSITION_THREADS").ok()?;
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => Some(n),
        _ => {
            eprintln!("warning: ignoring EXPOSITION_THREADS={raw:?}; expected a positive integer");
            None
        }
    }
}

fn runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    let mut builder = tokio::runtime::Builder::new_multi_thread();
    builder.enable_all();
    if let Some(n) = thread_cap() {
        builder.worker_threads(n).max_blocking_threads(n);
    }
    Ok(builder.build()?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();
    if let Some(n) = thread_cap() {
        // only fails if the pool was already built, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let outcome = match cli.command {
        Command::Explain(args) => explain(*args),
        Command::Serve(args) => serve_command(args),
        Command::Worker(args) => worker(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
