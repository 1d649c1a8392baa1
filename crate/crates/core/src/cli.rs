//! Command-line front door.
//!
//! ```text
//! text2ml run         --task T --out DIR (--max-cost K | --max-evaluations N | --wall-clock S)
//! text2ml generate    --task T --out DIR [--budget 100] [--repetitions N] [--pathway P]
//! text2ml simulate    --out DIR [--epsilon 0.9] [--gammas 5,10,15,20] [--module-tokens 2] [--trials N]
//! text2ml report      PATH... [--samples FILE] [--out DIR]
//! text2ml probe-check --model FILE --plan FILE --data FILE...
//! ```
//!
//! Backends are picked with `--backend http|replay|record`. The HTTP
//! endpoint, key and default model come only from `TEXT2ML_LLM_BASE_URL`,
//! `TEXT2ML_LLM_API_KEY` and `TEXT2ML_LLM_MODEL`.
//!
//! A `run` directory holds `run.json` (manifest), `history.jsonl`,
//! `attempts.jsonl`, `fp.jsonl`, `zc.json` when proxies ran, `best/` (the
//! assembled best program and its `config.json`), `report.json` and
//! `report.txt`. A failed run leaves `error.json` instead of the report.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::complexity::{scaling_report, ComplexityError, SimulationConfig};
use crate::generation::{read_attempt_log, GenerationError, GenerationLimits, ModuleArtifact};
use crate::harness::{
    DataContractPlan, PlanError, ProcessSandbox, ProgramConfig, Runner, SandboxError, SyntheticDataProgram,
    SyntheticError,
};
use crate::llm::{
    BackendKind, BackendState, HttpBackend, HttpConfig, LlmBackend, RecordingBackend, ReplayBackend, ENV_BASE_URL,
    ENV_MODEL,
};
use crate::report::{rank_report, read_fp_log, AttemptsReport, RunReport, ZcSummary, REPORT_JSON, REPORT_TEXT, ZC_FILE};
use crate::search::{
    generate_programs, run_text_to_ml, GenerateOptions, PipelineError, RunOptions, RunOutcome, SearchError,
    SearchLimits, StrategyKind, ATTEMPT_LOG_FILE, HISTORY_FILE,
};
use crate::task::{ModuleKind, OptimizationHistory, SearchSpaceError, TaskDescription};
use crate::zc::{collect_proxy_scores, ProbeConfig, ProxyBattery, ProxyKind, ZcError, DEFAULT_MU};

pub const EXIT_OK: u8 = 0;
/// Anything not covered by a more specific code, e.g. an unwritable output
/// directory.
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_BACKEND: u8 = 3;
pub const EXIT_SANDBOX: u8 = 4;
pub const EXIT_EXHAUSTION: u8 = 5;

pub const RUN_MANIFEST: &str = "run.json";
pub const ERROR_FILE: &str = "error.json";
pub const BEST_DIR: &str = "best";

#[derive(Debug, Parser)]
#[command(name = "text2ml", version, about = "Generate, verify and tune ML programs from a task description")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the whole pipeline on a task.
    Run(RunArgs),
    /// Generate programs for one pathway until an attempt budget is spent.
    Generate(GenerateArgs),
    /// Tabulate expected generations per valid output.
    Simulate(SimulateArgs),
    /// Rank search histories against sampled configurations.
    Report(ReportArgs),
    /// Run the proxy probe on one model and check its result document.
    ProbeCheck(ProbeCheckArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendChoice {
    Http,
    Replay,
    Record,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "http")]
    pub backend: BackendChoice,
    /// Transcript to replay from or record to.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Model name; defaults to TEXT2ML_LLM_MODEL.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 120)]
    pub request_timeout: u64,
}

#[derive(Debug, Args)]
pub struct SandboxArgs {
    /// Wall-clock limit per sandboxed process, in seconds.
    #[arg(long, default_value_t = 600)]
    pub time_limit: u64,
    /// Where sandbox working directories are created.
    #[arg(long)]
    pub scratch: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerationArgs {
    #[arg(long, default_value_t = 100)]
    pub max_attempts: usize,
    #[arg(long, default_value_t = 10)]
    pub reset_period: usize,
    #[arg(long)]
    pub no_reflection: bool,
}

impl GenerationArgs {
    fn limits(&self) -> GenerationLimits {
        GenerationLimits { max_attempts: self.max_attempts, reset_period: self.reset_period, reflection: !self.no_reflection }
    }
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct LimitArgs {
    /// Total cost in full evaluations.
    #[arg(long)]
    pub max_cost: Option<u64>,
    #[arg(long)]
    pub max_evaluations: Option<usize>,
    /// Wall-clock limit for the search, in seconds.
    #[arg(long)]
    pub wall_clock: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyChoice {
    Random,
    Bohb,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub task: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub sandbox: SandboxArgs,
    #[command(flatten)]
    pub generation: GenerationArgs,
    #[command(flatten)]
    pub limits: LimitArgs,
    #[arg(long, value_enum, default_value = "bohb")]
    pub strategy: StrategyChoice,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = crate::search::DEFAULT_MAX_EPOCHS)]
    pub max_epochs: f64,
    /// Proxy probe command for deep-learning tasks; proxies are skipped
    /// without it.
    #[arg(long, num_args = 1.., allow_hyphen_values = true)]
    pub probe_command: Option<Vec<String>>,
    #[arg(long, default_value_t = DEFAULT_MU)]
    pub mu: f64,
    /// History of sampled configurations to rank the best program against.
    #[arg(long)]
    pub samples: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub task: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub sandbox: SandboxArgs,
    #[command(flatten)]
    pub generation: GenerationArgs,
    /// Attempts shared by all programs.
    #[arg(long, default_value_t = 100)]
    pub budget: usize,
    /// Upper bound on the number of programs.
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// `dp:..>m:..>pp:..`; the first candidate of each stage by default.
    #[arg(long)]
    pub pathway: Option<String>,
    /// Recorded with the report; generation itself is not randomized.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = crate::complexity::DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20")]
    pub gammas: Vec<usize>,
    #[arg(long, default_value_t = crate::complexity::DEFAULT_MODULE_TOKENS)]
    pub module_tokens: usize,
    #[arg(long, default_value_t = crate::complexity::DEFAULT_TRIALS)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = crate::complexity::DEFAULT_SAFETY_BOUND)]
    pub safety_bound: u64,
    /// Closed forms only.
    #[arg(long)]
    pub no_monte_carlo: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// History files or run directories.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Also write report.json and report.txt here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProbeCheckArgs {
    /// Modeling module source.
    #[arg(long)]
    pub model: PathBuf,
    /// Data-contract plan (JSON).
    #[arg(long)]
    pub plan: PathBuf,
    /// Synthetic data documents, one probe per document.
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    #[arg(long, num_args = 1.., allow_hyphen_values = true, default_values_t = ["text2ml-probe".to_string()])]
    pub probe_command: Vec<String>,
    /// Comma-separated proxies; all four by default.
    #[arg(long, value_delimiter = ',')]
    pub proxies: Option<Vec<String>>,
    #[command(flatten)]
    pub sandbox: SandboxArgs,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(EXIT_FAILURE, format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path).map_err(|e| io_failure(path, e))
}

/// Exit code for a pipeline error.
pub fn exit_code(error: &PipelineError) -> u8 {
    fn generation(e: &GenerationError) -> u8 {
        match e {
            GenerationError::Exhausted { .. } => EXIT_EXHAUSTION,
            GenerationError::Backend { .. } => EXIT_BACKEND,
            GenerationError::Evaluator { .. } => EXIT_SANDBOX,
            _ => EXIT_USAGE,
        }
    }
    match error {
        PipelineError::SearchSpace(SearchSpaceError::Backend(_))
        | PipelineError::Plan(PlanError::Backend(_))
        | PipelineError::Synthetic(SyntheticError::Backend(_)) => EXIT_BACKEND,
        PipelineError::SearchSpace(_) | PipelineError::Plan(PlanError::Rejected { .. }) => EXIT_EXHAUSTION,
        PipelineError::Synthetic(SyntheticError::Exhausted { .. }) => EXIT_EXHAUSTION,
        PipelineError::Generation { source, .. } => generation(source),
        PipelineError::Sandbox(_)
        | PipelineError::Synthetic(SyntheticError::Sandbox(_))
        | PipelineError::Zc(ZcError::Sandbox(_))
        | PipelineError::EvaluatorSetup(_)
        | PipelineError::Search(SearchError::Infrastructure(_)) => EXIT_SANDBOX,
        PipelineError::Search(SearchError::Unbounded) | PipelineError::Pathway(_) | PipelineError::Zc(ZcError::Fraction(_)) => {
            EXIT_USAGE
        }
        _ => EXIT_FAILURE,
    }
}

/// Loads a task with every path made absolute, so prompts and digests do
/// not depend on the working directory.
pub fn load_task(path: &Path) -> Result<TaskDescription, Failure> {
    let canonical = path
        .canonicalize()
        .map_err(|e| Failure::usage(format!("task file {}: {e}", path.display())))?;
    let mut task = TaskDescription::load(&canonical).map_err(|e| Failure::usage(e.to_string()))?;
    task.check_ready().map_err(|e| Failure::usage(e.to_string()))?;
    task.workspace = task.workspace.canonicalize().map_err(|e| Failure::usage(format!("{}: {e}", task.workspace.display())))?;
    Ok(task)
}

fn backend_state(args: &BackendArgs, kind: BackendKind) -> BackendState {
    let model = args
        .model
        .clone()
        .or_else(|| std::env::var(ENV_MODEL).ok())
        .unwrap_or_else(|| "default".into());
    let mut state = BackendState::new(kind, model);
    state.temperature = args.temperature;
    state.timeout = Duration::from_secs(args.request_timeout);
    state
}

fn http_backend() -> Result<HttpBackend, Failure> {
    HttpConfig::from_env()
        .map(HttpBackend::new)
        .ok_or_else(|| Failure::new(EXIT_BACKEND, format!("{ENV_BASE_URL} is not set")))
}

pub fn open_backend(args: &BackendArgs) -> Result<(Box<dyn LlmBackend>, BackendState), Failure> {
    let transcript = || args.transcript.clone().ok_or_else(|| Failure::usage("--transcript is required for this backend"));
    Ok(match args.backend {
        BackendChoice::Http => (Box::new(http_backend()?), backend_state(args, BackendKind::Http)),
        BackendChoice::Replay => {
            let backend = ReplayBackend::open(&transcript()?).map_err(|e| Failure::new(EXIT_BACKEND, e.to_string()))?;
            (Box::new(backend), backend_state(args, BackendKind::Replay))
        }
        BackendChoice::Record => {
            let backend = RecordingBackend::create(http_backend()?, &transcript()?)
                .map_err(|e| Failure::new(EXIT_BACKEND, e.to_string()))?;
            (Box::new(backend), backend_state(args, BackendKind::Record))
        }
    })
}

fn runner(args: &SandboxArgs) -> Runner {
    let runner = Runner::new(Arc::new(ProcessSandbox)).with_time_limit(Duration::from_secs(args.time_limit));
    match &args.scratch {
        Some(dir) => runner.with_scratch(dir),
        None => runner,
    }
}

fn load_samples(path: Option<&PathBuf>) -> Result<Option<OptimizationHistory>, Failure> {
    path.map(|p| OptimizationHistory::load(p).map_err(|e| Failure::usage(e.to_string()))).transpose()
}

fn write_error(out: &Path, failure: &Failure, digest: &str, seed: u64) {
    let doc = json!({"code": failure.code, "error": failure.message, "config_digest": digest, "seed": seed});
    let _ = std::fs::write(out.join(ERROR_FILE), serde_json::to_string_pretty(&doc).expect("json") + "\n");
}

fn write_best(out: &Path, task: &TaskDescription, outcome: &RunOutcome, seed: u64) -> Result<(), Failure> {
    let Some(best) = &outcome.best else {
        return Ok(());
    };
    let dir = out.join(BEST_DIR);
    create_dir(&dir)?;
    for (name, text) in &best.assembly.files {
        write_file(&dir.join(name), text)?;
    }
    let mut config = ProgramConfig::new(&task.workspace, &task.metric.name, task.metric.direction);
    config.hparams = serde_json::to_value(&best.record.solution.hyperparameters).expect("hyperparameters serialize");
    config.seed = seed;
    config.epochs = (best.record.budget.max.round() as u32).max(1);
    config.early_stopping = true;
    write_file(&dir.join("config.json"), serde_json::to_string_pretty(&config.document()).expect("json") + "\n")?;
    write_file(&dir.join("solution.json"), serde_json::to_string_pretty(&best.record.solution).expect("json") + "\n")
}

pub fn cmd_run(args: &RunArgs) -> Result<String, Failure> {
    load_task(&args.task)?;
    let (backend, state) = open_backend(&args.backend)?;
    run_with_backend(args, backend.as_ref(), &state)
}

/// `run` with the backend already open; the recorder in the tests goes
/// through here.
pub fn run_with_backend(args: &RunArgs, backend: &dyn LlmBackend, state: &BackendState) -> Result<String, Failure> {
    let task = load_task(&args.task)?;
    let samples = load_samples(args.samples.as_ref())?;
    let limits = SearchLimits {
        max_cost: args.limits.max_cost,
        max_evaluations: args.limits.max_evaluations,
        wall_clock: args.limits.wall_clock.map(Duration::from_secs),
    };
    let options = RunOptions {
        strategy: match args.strategy {
            StrategyChoice::Random => StrategyKind::Random,
            StrategyChoice::Bohb => StrategyKind::Bohb,
        },
        limits,
        seed: args.seed,
        generation: args.generation.limits(),
        max_epochs: args.max_epochs,
        zc: args.probe_command.clone().map(|command| ProbeConfig { command, ..ProbeConfig::default() }),
        mu: args.mu,
        ..RunOptions::default()
    };
    create_dir(&args.out)?;
    let digest = options.config_digest(&task, state);
    let manifest = json!({
        "config_digest": digest,
        "seed": options.seed,
        "task": task,
        "options": options,
        "backend": {"kind": state.kind, "model": state.model, "temperature": state.temperature},
    });
    write_file(&args.out.join(RUN_MANIFEST), serde_json::to_string_pretty(&manifest).expect("json") + "\n")?;

    let outcome = match run_text_to_ml(&task, backend, state, &runner(&args.sandbox), &options, &args.out) {
        Ok(outcome) => outcome,
        Err(e) => {
            let failure = Failure::new(exit_code(&e), e.to_string());
            write_error(&args.out, &failure, &digest, options.seed);
            return Err(failure);
        }
    };
    if let Some(zc) = &outcome.zc {
        write_file(&args.out.join(ZC_FILE), serde_json::to_string_pretty(zc).expect("json") + "\n")?;
    }
    write_best(&args.out, &task, &outcome, options.seed)?;
    let mut report = RunReport::from_dir(&args.out, samples.as_ref()).map_err(|e| Failure::usage(e.to_string()))?;
    report.zc = outcome.zc.as_ref().map(ZcSummary::from);
    write_file(&args.out.join(REPORT_JSON), report.to_json())?;
    let text = report.render();
    write_file(&args.out.join(REPORT_TEXT), &text)?;
    Ok(text)
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<String, Failure> {
    load_task(&args.task)?;
    let (backend, state) = open_backend(&args.backend)?;
    generate_with_backend(args, backend.as_ref(), &state)
}

pub fn generate_with_backend(args: &GenerateArgs, backend: &dyn LlmBackend, state: &BackendState) -> Result<String, Failure> {
    let task = load_task(&args.task)?;
    let options = GenerateOptions {
        budget: args.budget,
        repetitions: args.repetitions,
        generation: args.generation.limits(),
        pathway: args.pathway.clone(),
        ..GenerateOptions::default()
    };
    create_dir(&args.out)?;
    let digest = options.config_digest(&task, state);
    let outcome = generate_programs(&task, backend, state, &runner(&args.sandbox), &options, &args.out);
    let pathway = match outcome {
        Ok(o) => o.pathway,
        Err(e) => {
            let failure = Failure::new(exit_code(&e), e.to_string());
            write_error(&args.out, &failure, &digest, args.seed);
            return Err(failure);
        }
    };
    let log = args.out.join(ATTEMPT_LOG_FILE);
    let lines = if log.exists() { read_attempt_log(&log).map_err(Failure::usage)? } else { Vec::new() };
    let report = AttemptsReport::from_log(&lines, args.budget);
    let preamble = [format!("config_digest={digest}"), format!("seed={}", args.seed), format!("pathway={pathway}")];
    let doc = json!({"config_digest": digest, "seed": args.seed, "pathway": pathway, "report": report});
    write_file(&args.out.join(REPORT_JSON), serde_json::to_string_pretty(&doc).expect("json") + "\n")?;
    let text = report.render(&preamble);
    write_file(&args.out.join(REPORT_TEXT), &text)?;
    Ok(text)
}

pub const SCALING_TABLE: &str = "scaling.tsv";
pub const SCALING_PLOT: &str = "scaling_plot.dat";
pub const SCALING_JSON: &str = "scaling.json";

pub fn cmd_simulate(args: &SimulateArgs) -> Result<String, Failure> {
    let simulation = (!args.no_monte_carlo).then_some(SimulationConfig {
        trials: args.trials,
        seed: args.seed,
        safety_bound: args.safety_bound,
    });
    let report = scaling_report(args.epsilon, &args.gammas, args.module_tokens, simulation).map_err(|e| match e {
        ComplexityError::SafetyBound { .. } => Failure::new(EXIT_EXHAUSTION, e.to_string()),
        other => Failure::usage(other.to_string()),
    })?;
    let digest = crate::util::canonical_digest(args);
    let preamble = [format!("config_digest={digest}"), format!("seed={}", args.seed), format!("trials={}", if args.no_monte_carlo { 0 } else { args.trials })];
    create_dir(&args.out)?;
    let table = report.to_tsv(&preamble);
    write_file(&args.out.join(SCALING_TABLE), &table)?;
    let plot: String = preamble.iter().map(|l| format!("# {l}\n")).collect::<String>() + &report.plot_data();
    write_file(&args.out.join(SCALING_PLOT), plot)?;
    let doc = json!({"config_digest": digest, "seed": args.seed, "report": report});
    write_file(&args.out.join(SCALING_JSON), serde_json::to_string_pretty(&doc).expect("json") + "\n")?;
    Ok(table)
}

pub fn cmd_report(args: &ReportArgs) -> Result<String, Failure> {
    let mut histories = Vec::new();
    let mut fp = Vec::new();
    let mut any_fp = false;
    for path in &args.paths {
        let file = if path.is_dir() { path.join(HISTORY_FILE) } else { path.clone() };
        let history = OptimizationHistory::load(&file).map_err(|e| Failure::usage(e.to_string()))?;
        if path.is_dir() {
            let fp_path = path.join(crate::search::FP_LOG_FILE);
            if fp_path.exists() {
                fp.extend(read_fp_log(&fp_path).map_err(|e| Failure::usage(e.to_string()))?);
                any_fp = true;
            }
        }
        histories.push((path.display().to_string(), history));
    }
    let samples = load_samples(args.samples.as_ref())?;
    let report = rank_report(&histories, samples.as_ref(), any_fp.then_some(fp.as_slice()));
    let preamble: Vec<String> = histories
        .iter()
        .map(|(source, h)| format!("{source}: config_digest={} seed={}", h.header.config_digest, h.header.seed))
        .collect();
    let text = report.render(&preamble);
    if let Some(out) = &args.out {
        create_dir(out)?;
        let doc = json!({"sources": preamble, "report": report});
        write_file(&out.join(REPORT_JSON), serde_json::to_string_pretty(&doc).expect("json") + "\n")?;
        write_file(&out.join(REPORT_TEXT), &text)?;
    }
    Ok(text)
}

pub fn cmd_probe_check(args: &ProbeCheckArgs) -> Result<String, Failure> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())));
    let model = ModuleArtifact::prewritten(ModuleKind::Modeling, "m:probe-check", read(&args.model)?);
    let plan: DataContractPlan = serde_json::from_str(&read(&args.plan)?)
        .map_err(|e| Failure::usage(format!("{}: {e}", args.plan.display())))?;
    let mut synthetic = Vec::new();
    for (i, path) in args.data.iter().enumerate() {
        let data = read(path)?;
        serde_json::from_str::<serde_json::Value>(&data).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        synthetic.push(SyntheticDataProgram {
            code: String::new(),
            seed: i as u64,
            digest: crate::util::sha256_hex(data.as_bytes()),
            data,
        });
    }
    let mut battery = ProxyBattery::default();
    if let Some(names) = &args.proxies {
        let kinds = names
            .iter()
            .map(|n| serde_json::from_value::<ProxyKind>(json!(n.trim())).map_err(|_| Failure::usage(format!("unknown proxy {n:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        battery.proxies.retain(|(k, _)| kinds.contains(k));
    }
    let config = ProbeConfig { command: args.probe_command.clone(), battery, ..ProbeConfig::default() };
    let matrix = collect_proxy_scores(&[model], &plan, &synthetic, &config, &runner(&args.sandbox)).map_err(|e| match e {
        ZcError::Sandbox(s) => sandbox_failure(&s),
        other => Failure::new(EXIT_FAILURE, other.to_string()),
    })?;
    let digest = crate::util::canonical_digest(&(&args.probe_command, &config.battery, &synthetic.iter().map(|s| &s.digest).collect::<Vec<_>>()));
    let doc = json!({"config_digest": digest, "seed": 0, "matrix": matrix});
    let text = serde_json::to_string_pretty(&doc).expect("json") + "\n";
    if let Some(missing) = matrix.missing.first() {
        return Err(Failure::new(EXIT_SANDBOX, format!("{text}probe failed: {}", missing.reason)));
    }
    Ok(text)
}

fn sandbox_failure(e: &SandboxError) -> Failure {
    Failure::new(EXIT_SANDBOX, e.to_string())
}

pub fn dispatch(cli: &Cli) -> Result<String, Failure> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Report(a) => cmd_report(a),
        Command::ProbeCheck(a) => cmd_probe_check(a),
    }
}

/// Parses `args`, runs the command, prints its output and returns the exit
/// code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    }
}
