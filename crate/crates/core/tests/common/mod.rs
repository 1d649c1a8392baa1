#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use text2ml::generation::{generate_module, GenerationLimits, ModuleArtifact, ModuleSpec};
use text2ml::harness::{
    build_unit_tests, generate_synthetic_data, make_contextual_evaluator, verify_plan,
    DataContractPlan, ProcessSandbox, ProgenitorProtocol, Runner, Sandbox, SandboxError,
    SandboxReport, SandboxRequest, SyntheticDataProgram, UnitTestSuite,
};
use text2ml::llm::{BackendKind, BackendState, FnBackend, LlmError, Message, Role, ScriptedBackend};
use text2ml::task::{CandidateMethod, Modality, ModuleKind};

pub fn fixture_dir(domain: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(domain)
}

pub fn fixture(domain: &str, name: &str) -> String {
    let path = fixture_dir(domain).join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn fenced(code: &str) -> String {
    format!("Here it is.\n```python\n{code}```\n")
}

pub fn mock_state() -> BackendState {
    BackendState::new(BackendKind::Mock, "fixture")
}

/// Counts the runs that reach the real process sandbox.
#[derive(Default)]
pub struct CountingSandbox {
    pub runs: AtomicUsize,
}

impl CountingSandbox {
    pub fn runs(&self) -> usize {
        self.runs.load(Ordering::SeqCst)
    }
}

impl Sandbox for CountingSandbox {
    fn run(&self, request: &SandboxRequest) -> Result<SandboxReport, SandboxError> {
        self.runs.fetch_add(1, Ordering::SeqCst);
        ProcessSandbox.run(request)
    }
}

/// 40 toy 4x4 grayscale images; label 1 means the top half is brighter.
pub fn write_shapes_workspace(dir: &Path) {
    let mut state: u64 = 0x2545_f491_4f6c_dd1d;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 33) as f64) / ((1u64 << 31) as f64)
    };
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..40 {
        let label = i % 2;
        let img: Vec<Vec<f64>> = (0..4)
            .map(|r| {
                let bright = (r < 2) == (label == 1);
                (0..4).map(|_| 0.6 * next() + if bright { 0.4 } else { 0.0 }).collect()
            })
            .collect();
        images.push(img);
        labels.push(label);
    }
    std::fs::create_dir_all(dir).unwrap();
    let doc = serde_json::json!({"images": images, "labels": labels});
    std::fs::write(dir.join("data.json"), doc.to_string()).unwrap();
}

/// Plan, suite, synthetic data and runner of the shapes fixture domain.
pub struct ShapesDomain {
    pub plan: DataContractPlan,
    pub suite: UnitTestSuite,
    pub synthetic: Vec<SyntheticDataProgram>,
    pub sandbox: Arc<CountingSandbox>,
    pub runner: Runner,
    pub workspace: PathBuf,
    _scratch: tempfile::TempDir,
}

impl ShapesDomain {
    pub fn new() -> Self {
        let scratch = tempfile::tempdir().unwrap();
        let workspace = scratch.path().join("workspace");
        write_shapes_workspace(&workspace);
        let plan: DataContractPlan = serde_json::from_str(&fixture("shapes", "plan.json")).unwrap();
        let protocol = ProgenitorProtocol::builtin(Modality::Cv);
        assert_eq!(verify_plan(&plan, &protocol), []);
        let suite = build_unit_tests(&plan, &protocol);
        let sandbox = Arc::new(CountingSandbox::default());
        let runner = Runner::new(sandbox.clone())
            .with_scratch(scratch.path().join("runs"))
            .with_time_limit(Duration::from_secs(60));
        let code = fenced(&fixture("shapes", "synthetic.py"));
        let backend = ScriptedBackend::new([code.clone(), code.clone(), code]);
        let synthetic =
            generate_synthetic_data(&backend, &mock_state(), &plan, &suite, 3, 1, &runner).unwrap();
        sandbox.runs.store(0, Ordering::SeqCst);
        Self { plan, suite, synthetic, sandbox, runner, workspace, _scratch: scratch }
    }

    /// Generates one candidate through the test-gated loop with a backend
    /// that answers with the fixture file `file`.
    pub fn verify(&self, kind: ModuleKind, file: &str) -> ModuleArtifact {
        let evaluator = make_contextual_evaluator(
            kind,
            &self.plan,
            &self.suite,
            &self.synthetic,
            Some(self.workspace.clone()),
            serde_json::json!({"learning_rate": 0.5}),
            self.runner.clone(),
        )
        .unwrap();
        let candidate = CandidateMethod {
            id: file.trim_end_matches(".py").to_string(),
            kind,
            description: file.to_string(),
        };
        let spec = ModuleSpec {
            kind,
            candidate,
            task_text: "Classify 4x4 images by which half is brighter.".into(),
            hyperparameters: "[]".into(),
            plan: serde_json::to_string(&self.plan).unwrap(),
        };
        let backend = ScriptedBackend::new([fenced(&fixture("shapes", file))]);
        let limits = GenerationLimits { max_attempts: 1, reset_period: 1, reflection: false };
        generate_module(&spec, &backend, &mock_state(), &evaluator, &limits)
            .unwrap_or_else(|e| panic!("{file} was not verified: {e}"))
    }
}

/// The last user message of a request.
fn last_user(messages: &[Message]) -> &str {
    messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map(|m| m.content.as_str())
        .unwrap_or_default()
}

/// A stand-in model that answers every prompt of a pipeline run from the
/// fixture files of `domain`: the search space and plan documents, the
/// synthetic-data program, and one module file per candidate id (`dp:raw`
/// is answered with `dp_raw.py`, `m:logistic` with `model_logistic.py`).
pub fn fixture_backend(domain: &'static str) -> FnBackend {
    FnBackend::new(move |messages| {
        let prompt = last_user(messages);
        let json = |name: &str| format!("BEGIN_JSON\n{}\nEND_JSON\n", fixture(domain, name));
        if prompt.contains("First classify the task") {
            return Ok(json("space.json"));
        }
        if prompt.contains("Devise a plan") {
            return Ok(json("plan.json"));
        }
        if prompt.contains("produces synthetic input and output data") {
            return Ok(fenced(&fixture(domain, "synthetic.py")));
        }
        if let Some(rest) = prompt.split("Candidate id: ").nth(1) {
            let id = rest.lines().next().unwrap_or_default().trim();
            let file = format!("{}.py", id.replacen("m:", "model:", 1).replace([':', '-'], "_"));
            return Ok(fenced(&fixture(domain, &file)));
        }
        Err(LlmError::Mock(format!("fixture backend has no answer for: {}", &prompt[..prompt.len().min(200)])))
    })
}

pub fn process_runner(scratch: &Path) -> Runner {
    Runner::new(Arc::new(ProcessSandbox))
        .with_scratch(scratch.join("runs"))
        .with_time_limit(Duration::from_secs(60))
}
