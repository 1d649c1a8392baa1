mod common;

use std::path::Path;

use common::{fixture_backend, fixture_dir, mock_state, process_runner};
use text2ml::search::{run_text_to_ml, RunOptions, SearchLimits, StrategyKind};
use text2ml::task::{ModuleKind, RecordStatus, TaskDescription};

fn toy_task() -> TaskDescription {
    TaskDescription::load(&fixture_dir("toyreg").join("task.toml")).unwrap()
}

#[test]
fn toy_regression_run_finds_the_planted_pathway() {
    let scratch = tempfile::tempdir().unwrap();
    let backend = fixture_backend("toyreg");
    let runner = process_runner(scratch.path());
    let options = RunOptions {
        strategy: StrategyKind::Bohb,
        limits: SearchLimits::cost(16),
        seed: 7,
        ..RunOptions::default()
    };
    let out = scratch.path().join("out");
    let outcome = run_text_to_ml(&toy_task(), &backend, &mock_state(), &runner, &options, &out).unwrap();
    let best = outcome.best.expect("a best program");
    assert_eq!(best.record.solution.pathway(), "dp:standardize>m:least-squares>pp:identity");
    assert!(Path::new(&out.join("history.jsonl")).exists());
    // Every (kind, candidate) pair was generated at most once.
    let dp = outcome.artifacts.keys().filter(|(k, _)| *k == ModuleKind::DataPreparation).count();
    assert!(dp <= 2);
    assert!(outcome.history.records.iter().any(|r| r.status == RecordStatus::Evaluated));
}

mod evaluation {
    use std::sync::Arc;

    use serde_json::{json, Value};
    use text2ml::generation::ModuleArtifact;
    use text2ml::harness::{
        assemble_program, DataContractPlan, ExitState, FakeSandbox, Prewritten, Runner, SandboxReport,
    };
    use text2ml::search::{
        evaluate_solution, Budget, BudgetUnit, CostLedger, EvaluationRequest, PipelineContext, SearchError,
    };
    use text2ml::task::{Direction, MetricSpec, ModuleKind, ParamValue, RecordStatus, Solution};

    fn solution() -> Solution {
        Solution {
            choices: [
                (ModuleKind::DataPreparation, "dp:a".to_string()),
                (ModuleKind::Modeling, "m:a".to_string()),
                (ModuleKind::PostProcessing, "pp:a".to_string()),
            ]
            .into(),
            hyperparameters: [("learning_rate".to_string(), ParamValue::Real(0.01))].into(),
        }
    }

    /// Evaluates one fixed program against a sandbox that always answers
    /// `report`, returning the record and the config document the program
    /// received.
    fn evaluate(budget: Budget, report: SandboxReport) -> (Result<text2ml::task::OptimizationRecord, SearchError>, Value) {
        let sandbox = Arc::new(FakeSandbox::new(move |_| Ok(report.clone())));
        let scratch = tempfile::tempdir().unwrap();
        let runner = Runner::new(sandbox.clone()).with_scratch(scratch.path());
        let plan: DataContractPlan =
            serde_json::from_str(&super::common::fixture("toyreg", "plan.json")).unwrap();
        let arts = [
            ModuleArtifact::prewritten(ModuleKind::DataPreparation, "dp:a", "def prepare(w):\n    pass\n"),
            ModuleArtifact::prewritten(ModuleKind::Modeling, "m:a", "def build_model(p, h):\n    pass\n"),
            ModuleArtifact::prewritten(ModuleKind::PostProcessing, "pp:a", "def postprocess(p, q):\n    return p\n"),
        ];
        let assembly = assemble_program(&arts, &plan, &Prewritten::default()).unwrap();
        let metric = MetricSpec { name: "rmse".into(), direction: Direction::Minimize };
        let ctx = PipelineContext { runner: &runner, workspace: scratch.path(), metric: &metric, seed: 3 };
        let s = solution();
        let record = evaluate_solution(&EvaluationRequest { solution: &s, budget, assembly: &assembly }, &ctx);
        let config = serde_json::from_slice(sandbox.requests()[0].file("config.json").unwrap()).unwrap();
        (record, config)
    }

    fn result(status: &str, score: Option<f64>) -> SandboxReport {
        SandboxReport::exited(0, Some(json!({"schema_version": 1, "status": status, "score": score, "markers": []})))
    }

    #[test]
    fn partial_budget_charges_its_fraction() {
        let (record, config) = evaluate(Budget::fraction_of(1, 3, 30.0, BudgetUnit::Epochs), result("evaluated", Some(0.25)));
        let record = record.unwrap();
        assert_eq!(record.status, RecordStatus::Evaluated);
        assert_eq!(record.score, Some(0.25));
        assert_eq!(config["epochs"], json!(10));
        assert_eq!(config["early_stopping"], json!(false));
        assert_eq!(config["hparams"]["learning_rate"], json!(0.01));
        let ledger = CostLedger::from_budgets([&record.budget]);
        assert_eq!(ledger.total(), num_rational::Ratio::new(1, 3));
    }

    #[test]
    fn full_budget_stops_early_with_patience_three() {
        let (record, config) = evaluate(Budget::full(30.0, BudgetUnit::Epochs), result("evaluated", Some(0.5)));
        assert_eq!(CostLedger::from_budgets([&record.unwrap().budget]).total_f64(), 1.0);
        assert_eq!(config["epochs"], json!(30));
        assert_eq!(config["early_stopping"], json!(true));
        assert_eq!(config["patience"], json!(3));
        assert_eq!(config["min_delta"], json!(0.0));
    }

    #[test]
    fn fractional_epochs_round_to_at_least_one() {
        let (_, config) = evaluate(Budget::fraction_of(1, 9, 30.0, BudgetUnit::Epochs), result("evaluated", Some(0.5)));
        assert_eq!(config["epochs"], json!(3));
        let (_, config) = evaluate(Budget::fraction_of(1, 81, 30.0, BudgetUnit::Epochs), result("evaluated", Some(0.5)));
        assert_eq!(config["epochs"], json!(1));
    }

    #[test]
    fn dataset_fraction_budget_subsamples_training_rows() {
        let (_, config) = evaluate(Budget::fraction_of(1, 3, 1.0, BudgetUnit::DatasetFraction), result("evaluated", Some(0.5)));
        assert_eq!(config["epochs"], json!(1));
        assert!((config["data_fraction"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn crash_is_a_failed_record() {
        let crash = SandboxReport::exited(1, Some(json!({"schema_version": 1, "status": "failed", "score": null})));
        let (record, _) = evaluate(Budget::full(30.0, BudgetUnit::Epochs), crash);
        let record = record.unwrap();
        assert_eq!((record.status, record.score), (RecordStatus::Failed, None));
        let timeout = SandboxReport { status: ExitState::TimedOut, ..SandboxReport::exited(0, None) };
        assert_eq!(evaluate(Budget::full(30.0, BudgetUnit::Epochs), timeout).0.unwrap().status, RecordStatus::Failed);
    }

    #[test]
    fn non_finite_training_is_pruned() {
        let (record, _) = evaluate(Budget::full(30.0, BudgetUnit::Epochs), result("pruned", None));
        assert_eq!(record.unwrap().status, RecordStatus::Pruned);
    }

    #[test]
    fn missing_score_is_a_protocol_error() {
        let (record, _) = evaluate(Budget::full(30.0, BudgetUnit::Epochs), result("evaluated", None));
        assert!(matches!(record, Err(SearchError::Protocol(_))), "{record:?}");
        let (record, _) = evaluate(Budget::full(30.0, BudgetUnit::Epochs), SandboxReport::exited(0, None));
        assert!(matches!(record, Err(SearchError::Protocol(_))));
    }
}

mod runs {
    use std::collections::BTreeMap;
    use std::sync::{Arc, Mutex};

    use serde_json::json;
    use text2ml::generation::GenerationLimits;
    use text2ml::harness::{ProcessSandbox, Runner, Sandbox, SandboxError, SandboxReport, SandboxRequest};
    use text2ml::llm::{FnBackend, LlmBackend, Message};
    use text2ml::search::{run_text_to_ml, PipelineError, RunOptions, SearchLimits, StrategyKind, HISTORY_FILE};
    use text2ml::task::{MetricSpec, ModuleKind, OptimizationHistory, TaskDescription};
    use text2ml::zc::ProbeConfig;

    use super::common::{fenced, fixture_backend, mock_state, process_runner, write_shapes_workspace};
    use super::toy_task;

    /// Counts how often each candidate id is asked for.
    fn counting(inner: FnBackend, counts: Arc<Mutex<BTreeMap<String, usize>>>) -> FnBackend {
        FnBackend::new(move |messages: &[Message]| {
            let prompt = &messages.last().unwrap().content;
            if let Some(rest) = prompt.split("Candidate id: ").nth(1) {
                let id = rest.lines().next().unwrap().trim().to_string();
                *counts.lock().unwrap().entry(id).or_default() += 1;
            }
            inner.complete(messages, &mock_state())
        })
    }

    #[test]
    fn modules_are_generated_once_per_candidate() {
        let scratch = tempfile::tempdir().unwrap();
        let counts = Arc::new(Mutex::new(BTreeMap::new()));
        let backend = counting(fixture_backend("toyreg"), counts.clone());
        let options = RunOptions { strategy: StrategyKind::Random, limits: SearchLimits::cost(20), seed: 11, ..RunOptions::default() };
        let outcome = run_text_to_ml(&toy_task(), &backend, &mock_state(), &process_runner(scratch.path()), &options, &scratch.path().join("out")).unwrap();
        let counts = counts.lock().unwrap();
        assert!(counts.values().all(|&n| n == 1), "{counts:?}");
        // Modeling modules exist for every candidate, picked or not.
        let models = outcome.artifacts.keys().filter(|(k, _)| *k == ModuleKind::Modeling).count();
        assert_eq!(models, 3);
        let touched: std::collections::BTreeSet<(ModuleKind, String)> = outcome
            .history
            .records
            .iter()
            .flat_map(|r| r.solution.choices.iter().map(|(k, v)| (*k, v.clone())))
            .filter(|(k, _)| *k != ModuleKind::Modeling)
            .collect();
        let generated = outcome.artifacts.keys().filter(|(k, _)| *k != ModuleKind::Modeling).count();
        assert!(generated <= touched.len());
        assert_eq!(outcome.history.records.len(), 20);
    }

    #[test]
    fn zero_evaluations_only_generates() {
        let scratch = tempfile::tempdir().unwrap();
        let options = RunOptions { limits: SearchLimits { max_evaluations: Some(0), ..Default::default() }, ..RunOptions::default() };
        let out = scratch.path().join("out");
        let outcome = run_text_to_ml(&toy_task(), &fixture_backend("toyreg"), &mock_state(), &process_runner(scratch.path()), &options, &out).unwrap();
        assert!(outcome.history.records.is_empty());
        assert!(outcome.best.is_none());
        assert_eq!(outcome.artifacts.len(), 3);
        assert!(OptimizationHistory::load(&out.join(HISTORY_FILE)).unwrap().records.is_empty());
    }

    #[test]
    fn unbounded_runs_are_refused() {
        let scratch = tempfile::tempdir().unwrap();
        let err = run_text_to_ml(&toy_task(), &fixture_backend("toyreg"), &mock_state(), &process_runner(scratch.path()), &RunOptions::default(), scratch.path()).unwrap_err();
        assert!(matches!(err, PipelineError::Search(text2ml::search::SearchError::Unbounded)));
    }

    #[test]
    fn exhaustion_keeps_the_partial_history() {
        let scratch = tempfile::tempdir().unwrap();
        let inner = fixture_backend("toyreg");
        let backend = FnBackend::new(move |messages: &[Message]| {
            if messages.iter().any(|m| m.content.contains("Candidate id: dp:first-two-features")) {
                return Ok(fenced("def prepare(workspace:\n"));
            }
            inner.complete(messages, &mock_state())
        });
        let options = RunOptions {
            strategy: StrategyKind::Random,
            limits: SearchLimits::cost(50),
            seed: 1,
            generation: GenerationLimits { max_attempts: 2, reset_period: 2, reflection: false },
            ..RunOptions::default()
        };
        let out = scratch.path().join("out");
        let err = run_text_to_ml(&toy_task(), &backend, &mock_state(), &process_runner(scratch.path()), &options, &out).unwrap_err();
        match &err {
            PipelineError::Generation { kind, candidate_id, .. } => {
                assert_eq!((*kind, candidate_id.as_str()), (ModuleKind::DataPreparation, "dp:first-two-features"));
            }
            other => panic!("{other}"),
        }
        let history = OptimizationHistory::load(&out.join(HISTORY_FILE)).unwrap();
        assert!(history.records.iter().all(|r| r.solution.choice(ModuleKind::DataPreparation) == Some("dp:standardize")));
        let log = text2ml::generation::read_attempt_log(&out.join("attempts.jsonl")).unwrap();
        assert_eq!(log.iter().filter(|l| l.candidate_id == "dp:first-two-features").count(), 2);
    }

    /// Real processes for programs, canned documents for proxy probes.
    struct ProbeRouting;

    impl Sandbox for ProbeRouting {
        fn run(&self, request: &SandboxRequest) -> Result<SandboxReport, SandboxError> {
            if request.command[0] != "fake-probe" {
                return ProcessSandbox.run(request);
            }
            let code = std::str::from_utf8(request.file("model.py").unwrap()).unwrap();
            let base = if code.contains("class Logistic") {
                4.0
            } else if code.contains("centroid") || code.contains("Centroid") {
                3.0
            } else {
                1.0
            };
            Ok(SandboxReport::exited(0, Some(json!({
                "schema_version": 1,
                "scores": {"flops": base, "params": base * 2.0, "naswot": base + 0.5, "synflow": base * 10.0},
            }))))
        }
    }

    #[test]
    fn deep_learning_run_filters_models_by_proxies() {
        let scratch = tempfile::tempdir().unwrap();
        let workspace = scratch.path().join("workspace");
        write_shapes_workspace(&workspace);
        let task = TaskDescription {
            text: "Classify the 4x4 grayscale images in {workspace}/data.json: label 1 when the top half is brighter.".into(),
            workspace,
            metric: MetricSpec::from_name("accuracy").unwrap(),
            modality_hint: None,
        };
        let runner = Runner::new(Arc::new(ProbeRouting))
            .with_scratch(scratch.path().join("runs"))
            .with_time_limit(std::time::Duration::from_secs(60));
        let options = RunOptions {
            strategy: StrategyKind::Bohb,
            limits: SearchLimits::cost(8),
            seed: 2,
            max_epochs: 9.0,
            zc: Some(ProbeConfig { command: vec!["fake-probe".into()], ..ProbeConfig::default() }),
            ..RunOptions::default()
        };
        let outcome = run_text_to_ml(&task, &fixture_backend("shapes"), &mock_state(), &runner, &options, &scratch.path().join("out")).unwrap();
        let zc = outcome.zc.expect("proxies ran for a cv task");
        assert_eq!(zc.matrix.rows.len(), 3);
        assert_eq!(zc.decision.removed, ["m:rowsum"]);
        assert_eq!(outcome.artifacts.keys().filter(|(k, _)| *k == ModuleKind::Modeling).count(), 3);
        assert!(outcome.history.records.iter().all(|r| r.solution.choice(ModuleKind::Modeling) != Some("m:rowsum")));
        assert!(outcome.space.candidate("m:rowsum").is_none());
        let best = outcome.best.unwrap();
        assert!(best.record.score.unwrap() > 0.5);
        assert_eq!(outcome.fp.failed_after_gate, 0);
    }
}
