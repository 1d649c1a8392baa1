//! The whole Text-to-ML loop: search space, data-contract plan, synthetic
//! data, modeling modules, optional zero-cost filtering, then search with
//! lazily generated and cached non-modeling modules.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::bohb::BohbConfig;
use super::budget::{Budget, BudgetUnit};
use super::driver::{run_search, select_best, SearchError, SearchLimits, StopReason, Strategy, StrategyKind};
use crate::generation::{
    generate_module, repeat_generation, write_attempt_log, ContextualEvaluator, GenerationError, GenerationLimits,
    ModuleArtifact, ModuleSpec, ProgramAttempts,
};
use crate::harness::{
    assemble_program, build_unit_tests, devise_plan, generate_synthetic_data, integration_gate,
    make_contextual_evaluator, reference_hparams, AssemblyError, DataContractPlan, EvaluatorSetupError,
    FpAccumulator, FpSummary, GateVerdict, PlanError, Prewritten, ProgenitorProtocol, ProgramAssembly,
    ProgramConfig, Runner, SandboxError, SyntheticDataProgram, SyntheticError, UnitTestSuite,
    DEFAULT_PLAN_ROUNDS,
};
use crate::llm::{BackendState, LlmBackend};
use crate::task::{
    generate_search_space, HistoryError, HistoryHeader, HistoryWriter, MetricSpec, ModuleKind,
    OptimizationHistory, OptimizationRecord, RecordStatus, SearchSpace, SearchSpaceError, Solution,
    TaskDescription,
};
use crate::zc::{
    average_relative_rank, collect_proxy_scores, filter_search_space, FilterDecision, ProbeConfig,
    ProxyScoreMatrix, ZcError, DEFAULT_MU,
};

pub const HISTORY_FILE: &str = "history.jsonl";
pub const ATTEMPT_LOG_FILE: &str = "attempts.jsonl";
pub const FP_LOG_FILE: &str = "fp.jsonl";
pub const DEFAULT_MAX_EPOCHS: f64 = 30.0;
pub const DEFAULT_SYNTHETIC_PROGRAMS: usize = 3;

/// Everything an evaluation needs besides the request itself.
#[derive(Clone, Copy)]
pub struct PipelineContext<'a> {
    pub runner: &'a Runner,
    pub workspace: &'a Path,
    pub metric: &'a MetricSpec,
    pub seed: u64,
}

pub struct EvaluationRequest<'a> {
    pub solution: &'a Solution,
    pub budget: Budget,
    /// Must have passed the integration gate.
    pub assembly: &'a ProgramAssembly,
}

/// Runs the assembled program at the requested budget.
///
/// Epoch budgets are rounded to whole epochs (at least one); dataset
/// fraction budgets train once on that share of the training split. Full
/// budget runs stop early after 3 epochs without improvement.
pub fn evaluate_solution(request: &EvaluationRequest<'_>, ctx: &PipelineContext<'_>) -> Result<OptimizationRecord, SearchError> {
    let budget = request.budget;
    let mut config = ProgramConfig::new(ctx.workspace, &ctx.metric.name, ctx.metric.direction);
    config.hparams = serde_json::to_value(&request.solution.hyperparameters).expect("hyperparameters serialize");
    config.seed = ctx.seed;
    match budget.unit {
        BudgetUnit::DatasetFraction => config.data_fraction = budget.fraction_f64(),
        BudgetUnit::Epochs | BudgetUnit::EvaluationCost => config.epochs = (budget.value().round() as u32).max(1),
    }
    if budget.is_full() {
        config.early_stopping = true;
        config.patience = 3;
        config.min_delta = 0.0;
    }
    let outcome = ctx
        .runner
        .run_program(&request.assembly.files, &config)
        .map_err(|e| SearchError::Infrastructure(e.to_string()))?;
    let record = |score, status| OptimizationRecord {
        solution: request.solution.clone(),
        score,
        budget,
        wall_time: outcome.duration.as_secs_f64(),
        status,
    };
    if !outcome.status.success() {
        return Ok(record(None, RecordStatus::Failed));
    }
    let Some(result) = &outcome.result else {
        return Err(SearchError::Protocol("program exited cleanly without a result document".into()));
    };
    Ok(match result.status.as_str() {
        "evaluated" => match result.score {
            Some(s) if s.is_finite() => record(Some(s), RecordStatus::Evaluated),
            other => {
                return Err(SearchError::Protocol(format!(
                    "result document for {} reports status evaluated but score {other:?}",
                    request.solution.pathway()
                )))
            }
        },
        "pruned" => record(None, RecordStatus::Pruned),
        _ => record(None, RecordStatus::Failed),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOptions {
    pub strategy: StrategyKind,
    pub limits: SearchLimits,
    pub seed: u64,
    pub generation: GenerationLimits,
    pub plan_rounds: usize,
    pub synthetic_programs: usize,
    pub synthetic_attempts: usize,
    /// Maximum budget in epochs for deep-learning tasks.
    pub max_epochs: f64,
    /// Zero-cost filtering of modeling candidates for deep-learning tasks;
    /// skipped when no probe is configured.
    pub zc: Option<ProbeConfig>,
    pub mu: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            strategy: StrategyKind::Bohb,
            limits: SearchLimits::default(),
            seed: 0,
            generation: GenerationLimits::default(),
            plan_rounds: DEFAULT_PLAN_ROUNDS,
            synthetic_programs: DEFAULT_SYNTHETIC_PROGRAMS,
            synthetic_attempts: crate::harness::DEFAULT_SYNTHETIC_ATTEMPTS,
            max_epochs: DEFAULT_MAX_EPOCHS,
            zc: None,
            mu: DEFAULT_MU,
        }
    }
}

impl RunOptions {
    /// Digest of everything that determines the run's outputs.
    pub fn config_digest(&self, task: &TaskDescription, backend: &BackendState) -> String {
        crate::util::canonical_digest(&(task, self, &backend.model, backend.temperature))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZcOutcome {
    pub matrix: ProxyScoreMatrix,
    pub mean_ranks: Vec<(String, f64)>,
    pub decision: FilterDecision,
}

#[derive(Debug, Clone)]
pub struct BestProgram {
    pub index: usize,
    pub record: OptimizationRecord,
    pub assembly: ProgramAssembly,
}

#[derive(Debug)]
pub struct RunOutcome {
    /// The searched space, after any zero-cost filtering.
    pub space: SearchSpace,
    pub plan: DataContractPlan,
    pub zc: Option<ZcOutcome>,
    /// Every generated module, keyed by kind and candidate id.
    pub artifacts: BTreeMap<(ModuleKind, String), ModuleArtifact>,
    pub history: OptimizationHistory,
    pub stop: StopReason,
    pub best: Option<BestProgram>,
    pub fp: FpSummary,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("search space: {0}")]
    SearchSpace(#[from] SearchSpaceError),
    #[error("data-contract plan: {0}")]
    Plan(#[from] PlanError),
    #[error("synthetic data: {0}")]
    Synthetic(#[from] SyntheticError),
    #[error("{kind} module {candidate_id}: {source}")]
    Generation {
        kind: ModuleKind,
        candidate_id: String,
        #[source]
        source: GenerationError,
    },
    #[error("solution picks {candidate_id:?}, which is not a {kind} candidate")]
    UnknownCandidate { kind: ModuleKind, candidate_id: String },
    #[error(transparent)]
    EvaluatorSetup(#[from] EvaluatorSetupError),
    #[error("zero-cost proxies: {0}")]
    Zc(#[from] ZcError),
    #[error("assembly: {0}")]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("pathway {0:?} does not name one candidate per stage")]
    Pathway(String),
    #[error("output directory {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Budget unit and maximum for the task's modality.
pub fn budget_scale(space: &SearchSpace, max_epochs: f64) -> (f64, BudgetUnit) {
    if space.classification.modality.is_deep_learning() {
        (max_epochs, BudgetUnit::Epochs)
    } else {
        (1.0, BudgetUnit::DatasetFraction)
    }
}

struct Generator<'a> {
    task: &'a TaskDescription,
    backend: &'a dyn LlmBackend,
    state: &'a BackendState,
    plan: &'a DataContractPlan,
    plan_json: String,
    suite: &'a UnitTestSuite,
    synthetic: &'a [SyntheticDataProgram],
    hparams: serde_json::Value,
    runner: &'a Runner,
    limits: GenerationLimits,
    log: PathBuf,
    artifacts: BTreeMap<(ModuleKind, String), ModuleArtifact>,
}

impl Generator<'_> {
    /// The artifact for `(kind, id)`, generating it on first use only.
    fn module(&mut self, space: &SearchSpace, kind: ModuleKind, id: &str) -> Result<ModuleArtifact, PipelineError> {
        if let Some(a) = self.artifacts.get(&(kind, id.to_string())) {
            return Ok(a.clone());
        }
        let candidate = space
            .candidate(id)
            .filter(|c| c.kind == kind)
            .ok_or_else(|| PipelineError::UnknownCandidate { kind, candidate_id: id.to_string() })?;
        let spec = ModuleSpec::new(self.task, space, candidate, &self.plan_json);
        let workspace = (kind == ModuleKind::DataPreparation).then(|| self.task.workspace.clone());
        let evaluator = make_contextual_evaluator(
            kind,
            self.plan,
            self.suite,
            self.synthetic,
            workspace,
            self.hparams.clone(),
            self.runner.clone(),
        )?;
        let result = generate_module(&spec, self.backend, self.state, &evaluator, &self.limits);
        let attempts = match &result {
            Ok(a) => a.history.clone(),
            Err(e) => e.attempts().to_vec(),
        };
        let stage = ModuleKind::ALL.iter().position(|k| *k == kind).unwrap_or(0);
        write_attempt_log(&self.log, 0, stage, ModuleKind::ALL.len(), kind, id, &attempts)
            .map_err(|source| PipelineError::Io { path: self.log.clone(), source })?;
        let artifact = result.map_err(|source| PipelineError::Generation {
            kind,
            candidate_id: id.to_string(),
            source,
        })?;
        self.artifacts.insert((kind, id.to_string()), artifact.clone());
        Ok(artifact)
    }
}

fn write_fp_log(path: &Path, fp: &FpAccumulator) -> Result<(), PipelineError> {
    let text: String = fp
        .entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("fp entry serializes") + "\n")
        .collect();
    std::fs::write(path, text).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
}

/// Runs the full pipeline and writes the history and attempt logs into
/// `out_dir`. On failure the logs written so far stay on disk.
pub fn run_text_to_ml(
    task: &TaskDescription,
    backend: &dyn LlmBackend,
    state: &BackendState,
    runner: &Runner,
    options: &RunOptions,
    out_dir: &Path,
) -> Result<RunOutcome, PipelineError> {
    options.limits.is_bounded().then_some(()).ok_or(SearchError::Unbounded)?;
    std::fs::create_dir_all(out_dir).map_err(|source| PipelineError::Io { path: out_dir.to_path_buf(), source })?;
    let log = out_dir.join(ATTEMPT_LOG_FILE);
    // A fresh run starts a fresh attempt log.
    let _ = std::fs::remove_file(&log);

    let mut space = generate_search_space(task, backend, state)?;
    let classification = space.classification;
    let protocol = ProgenitorProtocol::builtin(classification.modality);
    let plan = devise_plan(backend, state, task, classification, &protocol, options.plan_rounds)?;
    let suite = build_unit_tests(&plan, &protocol);
    let synthetic = generate_synthetic_data(
        backend,
        state,
        &plan,
        &suite,
        options.synthetic_programs,
        options.synthetic_attempts,
        runner,
    )?;

    let mut generator = Generator {
        task,
        backend,
        state,
        plan: &plan,
        plan_json: serde_json::to_string_pretty(&plan).expect("plan serializes"),
        suite: &suite,
        synthetic: &synthetic,
        hparams: reference_hparams(&space.hyperparameters),
        runner,
        limits: options.generation,
        log,
        artifacts: BTreeMap::new(),
    };

    let modeling_ids: Vec<String> = space
        .stage(ModuleKind::Modeling)
        .map(|s| s.candidates.iter().map(|c| c.id.clone()).collect())
        .unwrap_or_default();
    let mut models = Vec::with_capacity(modeling_ids.len());
    for id in &modeling_ids {
        models.push(generator.module(&space, ModuleKind::Modeling, id)?);
    }

    let mut zc = None;
    if let (true, Some(probe)) = (classification.modality.is_deep_learning(), &options.zc) {
        let matrix = collect_proxy_scores(&models, &plan, &synthetic, probe, runner)?;
        let mean_ranks = average_relative_rank(&matrix);
        let (decision, reduced) = filter_search_space(&space, &mean_ranks, options.mu)?;
        space = reduced;
        zc = Some(ZcOutcome { matrix, mean_ranks, decision });
    }

    let (max_budget, unit) = budget_scale(&space, options.max_epochs);
    let header = HistoryHeader {
        metric: task.metric.clone(),
        strategy: options.strategy.as_str().to_string(),
        seed: options.seed,
        config_digest: options.config_digest(task, state),
    };
    let writer = HistoryWriter::create(&out_dir.join(HISTORY_FILE), header)?;
    let bohb = BohbConfig { max_budget, unit, ..BohbConfig::epochs(max_budget) };
    let mut strategy = Strategy::new(options.strategy, bohb, &space, &writer.snapshot());

    let ctx = PipelineContext { runner, workspace: &task.workspace, metric: &task.metric, seed: options.seed };
    let mut gate_config = ProgramConfig::new(&task.workspace, &task.metric.name, task.metric.direction);
    gate_config.hparams = generator.hparams.clone();
    gate_config.seed = options.seed;

    let prewritten = Prewritten::default();
    let mut assemblies: BTreeMap<String, Option<ProgramAssembly>> = BTreeMap::new();
    let mut fp = FpAccumulator::default();
    let mut fatal: Option<PipelineError> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);

    let search_space = space.clone();
    let mut objective = |solution: &Solution, budget: &Budget| -> Result<OptimizationRecord, SearchError> {
        let mut stash = |e: PipelineError| {
            let msg = e.to_string();
            fatal = Some(e);
            SearchError::Infrastructure(msg)
        };
        let pathway = solution.pathway();
        if !assemblies.contains_key(&pathway) {
            let mut arts = Vec::with_capacity(ModuleKind::ALL.len());
            for kind in ModuleKind::ALL {
                let id = solution.choice(kind).unwrap_or_default().to_string();
                arts.push(generator.module(&search_space, kind, &id).map_err(&mut stash)?);
            }
            let program = assemble_program(&arts, &plan, &prewritten).map_err(|e| stash(e.into()))?;
            let verdict = integration_gate(&program, runner, &gate_config).map_err(|e| stash(e.into()))?;
            fp.record_gate(&pathway, &verdict);
            let passed = matches!(verdict, GateVerdict::Valid { .. });
            assemblies.insert(pathway.clone(), passed.then_some(program));
        }
        let Some(assembly) = &assemblies[&pathway] else {
            return Ok(OptimizationRecord {
                solution: solution.clone(),
                score: None,
                budget: *budget,
                wall_time: 0.0,
                status: RecordStatus::Failed,
            });
        };
        let record = evaluate_solution(&EvaluationRequest { solution, budget: *budget, assembly }, &ctx)?;
        if record.status == RecordStatus::Failed {
            fp.record_evaluation_failure(&pathway, "evaluation run failed");
        }
        Ok(record)
    };
    let stop = run_search(&space, &mut strategy, &mut objective, &options.limits, &writer, &mut rng);
    write_fp_log(&out_dir.join(FP_LOG_FILE), &fp)?;
    if let Some(e) = fatal {
        return Err(e);
    }
    let stop = stop?;

    let artifacts = generator.artifacts;
    let history = writer.snapshot();
    let best = select_best(&history).map(|(index, record)| BestProgram {
        index,
        record: record.clone(),
        assembly: assemblies[&record.solution.pathway()].clone().expect("evaluated pathways passed the gate"),
    });
    Ok(RunOutcome {
        space,
        plan,
        zc,
        artifacts,
        history,
        stop,
        best,
        fp: fp.summary(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateOptions {
    /// Attempts shared by all programs.
    pub budget: usize,
    /// Stop after this many programs even if budget remains.
    pub repetitions: Option<usize>,
    pub generation: GenerationLimits,
    /// `dp:..>m:..>pp:..`; the first candidate of each stage when absent.
    pub pathway: Option<String>,
    pub plan_rounds: usize,
    pub synthetic_programs: usize,
    pub synthetic_attempts: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            budget: GenerationLimits::default().max_attempts,
            repetitions: None,
            generation: GenerationLimits::default(),
            pathway: None,
            plan_rounds: DEFAULT_PLAN_ROUNDS,
            synthetic_programs: DEFAULT_SYNTHETIC_PROGRAMS,
            synthetic_attempts: crate::harness::DEFAULT_SYNTHETIC_ATTEMPTS,
        }
    }
}

impl GenerateOptions {
    pub fn config_digest(&self, task: &TaskDescription, backend: &BackendState) -> String {
        crate::util::canonical_digest(&(task, self, &backend.model, backend.temperature))
    }
}

#[derive(Debug)]
pub struct GenerateOutcome {
    pub pathway: String,
    pub programs: Vec<ProgramAttempts>,
}

fn pick_pathway<'s>(space: &'s SearchSpace, pathway: Option<&str>) -> Result<Vec<&'s crate::task::CandidateMethod>, PipelineError> {
    let ids: Vec<Option<&str>> = match pathway {
        None => vec![None; ModuleKind::ALL.len()],
        Some(p) => {
            let parts: Vec<&str> = p.split('>').map(str::trim).collect();
            if parts.len() != ModuleKind::ALL.len() {
                return Err(PipelineError::Pathway(p.to_string()));
            }
            parts.into_iter().map(Some).collect()
        }
    };
    ModuleKind::ALL
        .iter()
        .zip(ids)
        .map(|(&kind, id)| {
            let stage = space.stage(kind);
            let found = match id {
                None => stage.and_then(|s| s.candidates.first()),
                Some(id) => stage.and_then(|s| s.candidates.iter().find(|c| c.id == id)),
            };
            found.ok_or_else(|| PipelineError::Pathway(pathway.unwrap_or_default().to_string()))
        })
        .collect()
}

/// Generates complete programs for one pathway until the attempt budget is
/// spent, logging every attempt to `out_dir/attempts.jsonl` with its
/// program number.
pub fn generate_programs(
    task: &TaskDescription,
    backend: &dyn LlmBackend,
    state: &BackendState,
    runner: &Runner,
    options: &GenerateOptions,
    out_dir: &Path,
) -> Result<GenerateOutcome, PipelineError> {
    std::fs::create_dir_all(out_dir).map_err(|source| PipelineError::Io { path: out_dir.to_path_buf(), source })?;
    let log = out_dir.join(ATTEMPT_LOG_FILE);
    let _ = std::fs::remove_file(&log);

    let space = generate_search_space(task, backend, state)?;
    let protocol = ProgenitorProtocol::builtin(space.classification.modality);
    let plan = devise_plan(backend, state, task, space.classification, &protocol, options.plan_rounds)?;
    let suite = build_unit_tests(&plan, &protocol);
    let synthetic = generate_synthetic_data(
        backend,
        state,
        &plan,
        &suite,
        options.synthetic_programs,
        options.synthetic_attempts,
        runner,
    )?;
    let candidates = pick_pathway(&space, options.pathway.as_deref())?;
    let plan_json = serde_json::to_string_pretty(&plan).expect("plan serializes");
    let specs: Vec<ModuleSpec> = candidates.iter().map(|c| ModuleSpec::new(task, &space, c, &plan_json)).collect();
    let hparams = reference_hparams(&space.hyperparameters);
    let evaluators = specs
        .iter()
        .map(|spec| {
            let workspace = (spec.kind == ModuleKind::DataPreparation).then(|| task.workspace.clone());
            make_contextual_evaluator(spec.kind, &plan, &suite, &synthetic, workspace, hparams.clone(), runner.clone())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let evaluator_refs: Vec<&dyn ContextualEvaluator> = evaluators.iter().map(|e| e as &dyn ContextualEvaluator).collect();

    let run = repeat_generation(&specs, backend, state, &evaluator_refs, &options.generation, options.budget, options.repetitions);
    for program in &run.programs {
        for (stage, attempts) in program.modules.iter().enumerate() {
            let spec = &specs[stage];
            write_attempt_log(&log, program.program, stage, specs.len(), spec.kind, &spec.candidate.id, attempts)
                .map_err(|source| PipelineError::Io { path: log.clone(), source })?;
        }
    }
    if let Some(source) = run.error {
        let stage = run.programs.last().map_or(0, |p| p.modules.len().saturating_sub(1));
        return Err(PipelineError::Generation {
            kind: specs[stage].kind,
            candidate_id: specs[stage].candidate.id.clone(),
            source,
        });
    }
    let pathway = candidates.iter().map(|c| c.id.as_str()).collect::<Vec<_>>().join(">");
    Ok(GenerateOutcome { pathway, programs: run.programs })
}
