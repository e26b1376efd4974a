use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use sopfl::config::{BackendKind, Config};
use sopfl::eval::{aggregate, cost_summary, load_reports, markdown_table, GroundTruth};
use sopfl::index::load_index;
use sopfl::llm::{ChatBackend, GatewayError, LiveBackend, RecordingBackend, ReplayBackend, ScriptedBackend};
use sopfl::pipeline::baseline::run_sbfl_rerank_baseline;
use sopfl::pipeline::input::{load_failures, BugInput, Failures};
use sopfl::pipeline::runlog::sanitize;
use sopfl::pipeline::{run_many, BugRun};
use sopfl::sbfl::{load_spectra, rank, top_k};
use sopfl::trace::parse_trace;

#[derive(Parser)]
#[command(
    name = "sopfl",
    version,
    about = "LLM-driven fault localization over method-call traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Localize the buggy method of one or more bugs.
    Localize(LocalizeArgs),
    /// Re-rank the Ochiai ranking of one bug with per-method reviews.
    Rerank(RerankArgs),
    /// Print the Ochiai ranking of a spectrum file.
    Sbfl(SbflArgs),
    /// Score reports against ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct BackendArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Cassette for the replay backend.
    #[arg(long)]
    cassette: Option<PathBuf>,
    /// Rule file for the scripted backend.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Append live exchanges to this cassette.
    #[arg(long)]
    record: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    price_per_1k: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    reasks: Option<usize>,
}

#[derive(Args)]
struct LocalizeArgs {
    /// Codebase index JSON shared by every `--failures` file.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Trace JSONL shared by every `--failures` file.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Failures JSON, one per bug.
    #[arg(long)]
    failures: Vec<PathBuf>,
    /// Bundle directory holding trace.jsonl, index.json and failures.json.
    #[arg(long = "from-shim", value_name = "DIR")]
    from_shim: Vec<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Bugs localized concurrently.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    enable_t1: Option<bool>,
    #[arg(long)]
    enable_t2: Option<bool>,
    #[arg(long)]
    enable_t4: Option<bool>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct RerankArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    failures: PathBuf,
    #[arg(long)]
    spectra: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Number of top-ranked methods reviewed.
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct SbflArgs {
    #[arg(long)]
    spectra: PathBuf,
    /// Print only the first K methods.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of report JSON files.
    #[arg(long)]
    reports: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Where eval.json is written.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Input(String),
    Backend(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Backend(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::Backend(m) | CliError::Internal(m) => m,
        }
    }
}

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn write_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Internal(format!("cannot write {}: {e}", path.display()))
}

fn gateway_err(e: GatewayError) -> CliError {
    match e {
        GatewayError::Cassette { .. } => CliError::Input(e.to_string()),
        other => CliError::Backend(other.to_string()),
    }
}

impl BackendArgs {
    fn config(&self) -> Result<Config, CliError> {
        let mut c = match &self.config {
            Some(p) => Config::load(p).map_err(input_err)?,
            None => Config::default(),
        };
        if let Some(v) = self.backend {
            c.backend = v;
        }
        if let Some(v) = &self.cassette {
            c.cassette = Some(v.clone());
        }
        if let Some(v) = &self.script {
            c.script = Some(v.clone());
        }
        if let Some(v) = &self.record {
            c.record = Some(v.clone());
        }
        if let Some(v) = &self.model {
            c.model = v.clone();
        }
        if let Some(v) = &self.endpoint {
            c.endpoint = v.clone();
        }
        if let Some(v) = self.price_per_1k {
            c.price_per_1k = v;
        }
        if let Some(v) = self.temperature {
            c.temperature = v;
        }
        if let Some(v) = self.max_tokens {
            c.max_tokens = v;
        }
        if let Some(v) = self.reasks {
            c.reasks = v;
        }
        Ok(c)
    }
}

fn base_backend(config: &Config) -> Result<Box<dyn ChatBackend>, CliError> {
    match config.backend {
        BackendKind::Live => Ok(Box::new(LiveBackend::new(&config.endpoint, &config.model))),
        BackendKind::Replay => {
            let path = config
                .cassette
                .as_ref()
                .ok_or_else(|| CliError::Usage("the replay backend needs --cassette".into()))?;
            let backend = ReplayBackend::open(path).map_err(|e| match e {
                GatewayError::Io { .. } => input_err(e),
                other => gateway_err(other),
            })?;
            Ok(Box::new(backend))
        }
        BackendKind::Scripted => {
            let path = config
                .script
                .as_ref()
                .ok_or_else(|| CliError::Usage("the scripted backend needs --script".into()))?;
            Ok(Box::new(ScriptedBackend::load(path).map_err(input_err)?))
        }
    }
}

/// The configured backend, wrapped in a recorder when `record` is set.
fn make_backend(config: &Config) -> Result<Box<dyn ChatBackend>, CliError> {
    let inner = base_backend(config)?;
    match &config.record {
        Some(_) if config.backend == BackendKind::Replay => Err(CliError::Usage(
            "--record cannot be combined with the replay backend".into(),
        )),
        Some(path) => Ok(Box::new(RecordingBackend::new(inner, path).map_err(gateway_err)?)),
        None => Ok(inner),
    }
}

fn load_index_arc(path: &Path) -> Result<Arc<sopfl::index::CodebaseIndex>, CliError> {
    load_index(path)
        .map(Arc::new)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// A shim bundle with no failing tests has nothing to localize.
fn bundle_has_failures(path: &Path) -> Result<bool, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(value["classes"].as_array().is_none_or(|c| !c.is_empty()))
}

fn collect_inputs(args: &LocalizeArgs) -> Result<Vec<BugInput>, CliError> {
    let mut inputs = Vec::new();
    if !args.failures.is_empty() {
        let (Some(index), Some(traces)) = (&args.index, &args.traces) else {
            return Err(CliError::Usage("--failures requires --index and --traces".into()));
        };
        let index = load_index_arc(index)?;
        let coverage = Arc::new(parse_trace(traces).map_err(input_err)?);
        for f in &args.failures {
            let failures = load_failures(f).map_err(input_err)?;
            inputs.push(BugInput::new(failures, index.clone(), coverage.clone()));
        }
    } else if args.index.is_some() || args.traces.is_some() {
        return Err(CliError::Usage(
            "--index and --traces need at least one --failures".into(),
        ));
    }
    for dir in &args.from_shim {
        let failures_path = dir.join("failures.json");
        if !bundle_has_failures(&failures_path)? {
            tracing::warn!(bundle = %dir.display(), "bundle lists no failing tests; skipped");
            continue;
        }
        let index = load_index_arc(&dir.join("index.json"))?;
        let coverage = Arc::new(parse_trace(&dir.join("trace.jsonl")).map_err(input_err)?);
        let failures: Failures = load_failures(&failures_path).map_err(input_err)?;
        inputs.push(BugInput::new(failures, index, coverage));
    }
    if inputs.is_empty() && args.from_shim.is_empty() {
        return Err(CliError::Usage("give --failures or --from-shim".into()));
    }
    Ok(inputs)
}

fn write_run(out_dir: &Path, run: &BugRun) -> Result<PathBuf, CliError> {
    let name = sanitize(&run.report.bug_id);
    let reports = out_dir.join("reports");
    std::fs::create_dir_all(&reports).map_err(|e| write_err(&reports, e))?;
    let path = reports.join(format!("{name}.json"));
    std::fs::write(&path, run.report.to_json()).map_err(|e| write_err(&path, e))?;
    let transcripts = out_dir.join("transcripts").join(&name);
    if transcripts.exists() {
        std::fs::remove_dir_all(&transcripts).map_err(|e| write_err(&transcripts, e))?;
    }
    run.log.write_to(&transcripts).map_err(|e| write_err(&transcripts, e))?;
    Ok(path)
}

fn print_summary(run: &BugRun) {
    let top1 = run
        .report
        .top1
        .as_ref()
        .map_or_else(|| "-".to_string(), |s| format!("{}.{}", s.class, s.sig));
    println!(
        "{}\t{}\t{} tokens\t${:.4}",
        run.report.bug_id, top1, run.report.cost.tokens, run.report.cost.dollars
    );
}

fn localize(args: LocalizeArgs) -> Result<(), CliError> {
    let mut config = args.backend.config()?;
    for (flag, slot) in [
        (args.enable_t1, &mut config.ablation.enable_t1),
        (args.enable_t2, &mut config.ablation.enable_t2),
        (args.enable_t4, &mut config.ablation.enable_t4),
    ] {
        if let Some(v) = flag {
            *slot = v;
        }
    }
    if let Some(j) = args.jobs {
        config.jobs = j;
    }
    config.validate().map_err(CliError::Usage)?;
    let inputs = collect_inputs(&args)?;
    let backend = make_backend(&config)?;
    let settings = config.settings();
    let results = run_many(&inputs, &settings, backend.as_ref(), config.jobs);

    let mut first_error = None;
    for (input, result) in inputs.iter().zip(results) {
        match result {
            Ok(run) => {
                write_run(&args.out_dir, &run)?;
                print_summary(&run);
            }
            Err(e) => {
                eprintln!("error: bug {}: {e}", input.bug_id);
                first_error.get_or_insert(e);
            }
        }
    }
    match first_error {
        Some(e) => Err(gateway_err(e)),
        None => Ok(()),
    }
}

fn rerank(args: RerankArgs) -> Result<(), CliError> {
    let mut config = args.backend.config()?;
    if let Some(k) = args.k {
        config.limits.rerank_k = k;
    }
    config.validate().map_err(CliError::Usage)?;
    let index = load_index_arc(&args.index)?;
    let failures = load_failures(&args.failures).map_err(input_err)?;
    let spectra = load_spectra(&args.spectra).map_err(input_err)?;
    let input = BugInput::new(failures, index, Arc::default());
    let backend = make_backend(&config)?;
    let run =
        run_sbfl_rerank_baseline(&input, &spectra, &config.settings(), backend.as_ref()).map_err(|e| match e {
            sopfl::pipeline::baseline::BaselineError::Gateway(g) => gateway_err(g),
            other => input_err(other),
        })?;
    write_run(&args.out_dir, &run)?;
    print_summary(&run);
    Ok(())
}

fn sbfl(args: SbflArgs) -> Result<(), CliError> {
    if args.k == Some(0) {
        return Err(CliError::Usage("--k must be positive".into()));
    }
    let spectra = load_spectra(&args.spectra).map_err(input_err)?;
    let ranked = rank(&spectra).map_err(input_err)?;
    let shown = top_k(&ranked, args.k.unwrap_or(ranked.len().max(1)));
    for r in shown {
        println!("{:.6}\t{}\t{}", r.score, r.method.class, r.method.sig);
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let truth = GroundTruth::load(&args.truth).map_err(input_err)?;
    let reports = load_reports(&args.reports).map_err(input_err)?;
    let result = aggregate(&reports, &truth).map_err(input_err)?;
    let cost = cost_summary(&reports).ok();
    print!("{}", markdown_table(&result, cost.as_ref()));
    if let Some(dir) = args.out_dir {
        std::fs::create_dir_all(&dir).map_err(|e| write_err(&dir, e))?;
        let path = dir.join("eval.json");
        let json = serde_json::json!({ "top_n": result, "cost": cost });
        let mut text = serde_json::to_string_pretty(&json).map_err(|e| CliError::Internal(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| write_err(&path, e))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    sopfl::init_tracing();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Localize(a) => localize(a),
        Command::Rerank(a) => rerank(a),
        Command::Sbfl(a) => sbfl(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
