use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::sandbox::{
    ExitState, Sandbox, SandboxError, SandboxReport, SandboxRequest, DEFAULT_MEMORY_LIMIT,
    DEFAULT_TIME_LIMIT,
};
use super::suite::Check;
use crate::generation::{EvaluationFeedback, FeedbackPhase};
use crate::task::{Direction, HyperparameterSpec, ParamDomain, ParamKind, Scale};

pub const CHECK_MODULE_PY: &str = include_str!("../../python/check_module.py");
pub const HARNESS_PY: &str = include_str!("../../python/harness.py");
pub const MAIN_PY: &str = include_str!("../../python/main.py");

const DIAGNOSTIC_TAIL: usize = 4000;

/// Sandbox plus the limits and scratch location every harness run uses.
#[derive(Clone)]
pub struct Runner {
    pub sandbox: Arc<dyn Sandbox>,
    /// Parent directory of the per-run working directories.
    pub scratch: PathBuf,
    pub time_limit: Duration,
    pub memory_limit: Option<u64>,
}

impl std::fmt::Debug for Runner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runner")
            .field("scratch", &self.scratch)
            .field("time_limit", &self.time_limit)
            .finish_non_exhaustive()
    }
}

/// One module test: what to load, what to feed it, what to check.
#[derive(Debug, Clone)]
pub struct CheckJob<'a> {
    /// data-preparation, modeling, post-processing or synthetic.
    pub kind: &'a str,
    pub code: &'a str,
    pub checks: &'a [Check],
    pub plan: &'a Value,
    pub hparams: &'a Value,
    pub workspace: Option<&'a Path>,
    pub data: Option<&'a str>,
    pub seed: u64,
    pub classes: Option<u64>,
    pub batch: usize,
    /// Keep the generated dataset (synthetic programs only).
    pub dump: bool,
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub feedback: EvaluationFeedback,
    pub report: SandboxReport,
    /// Dataset written by a synthetic program, when `dump` was set.
    pub data: Option<String>,
}

/// Settings of one run of an assembled program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramConfig {
    pub workspace: PathBuf,
    pub hparams: Value,
    pub epochs: u32,
    pub data_fraction: f64,
    pub early_stopping: bool,
    pub patience: u32,
    pub min_delta: f64,
    pub metric: String,
    pub direction: Direction,
    pub seed: u64,
    pub val_fraction: f64,
}

impl ProgramConfig {
    pub fn new(workspace: &Path, metric: &str, direction: Direction) -> Self {
        Self {
            workspace: workspace.to_path_buf(),
            hparams: json!({}),
            epochs: 1,
            data_fraction: 1.0,
            early_stopping: false,
            patience: 3,
            min_delta: 0.0,
            metric: metric.to_string(),
            direction,
            seed: 0,
            val_fraction: 0.2,
        }
    }
}

impl ProgramConfig {
    /// The `config.json` an assembled program reads.
    pub fn document(&self) -> Value {
        let mut doc = serde_json::to_value(self).expect("config serializes");
        doc["plan"] = json!("plan.json");
        doc["result"] = json!("result.json");
        doc["direction"] = json!(match self.direction {
            Direction::Maximize => "maximize",
            Direction::Minimize => "minimize",
        });
        doc
    }
}

/// Result document written by an assembled program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramResult {
    pub status: String,
    #[serde(default)]
    pub score: Option<f64>,
    #[serde(default)]
    pub markers: Vec<String>,
    #[serde(default)]
    pub epochs_run: u32,
    #[serde(default)]
    pub reason: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ProgramOutcome {
    pub status: ExitState,
    pub result: Option<ProgramResult>,
    pub stderr_tail: String,
    pub duration: Duration,
}

/// Mid-range value of every hyperparameter (geometric mid for log scales,
/// first choice for categoricals), used when testing modules in isolation.
pub fn reference_hparams(specs: &[HyperparameterSpec]) -> Value {
    let mut map = serde_json::Map::new();
    for spec in specs {
        let value = match &spec.domain {
            ParamDomain::Choices { choices } => json!(choices.first().cloned().unwrap_or_default()),
            ParamDomain::Range { lower, upper } => {
                let mid = match spec.scale {
                    Scale::Log if *lower > 0.0 => (lower * upper).sqrt(),
                    _ => 0.5 * (lower + upper),
                };
                match spec.kind {
                    ParamKind::Integer => json!(mid.round() as i64),
                    _ => json!(mid),
                }
            }
        };
        map.insert(spec.name.clone(), value);
    }
    Value::Object(map)
}

fn tail(text: &str, max: usize) -> String {
    let t = text.trim_end();
    if t.len() <= max {
        return t.to_string();
    }
    let mut start = t.len() - max;
    while !t.is_char_boundary(start) {
        start += 1;
    }
    t[start..].to_string()
}

/// Maps a checker run onto module feedback.
fn feedback_from(report: &SandboxReport, limit: Duration) -> EvaluationFeedback {
    if report.status == ExitState::TimedOut {
        return EvaluationFeedback::fail(
            FeedbackPhase::Execution,
            format!("timed out after {} s", limit.as_secs_f64()),
        );
    }
    let Some(doc) = &report.result else {
        return EvaluationFeedback::fail(
            FeedbackPhase::Execution,
            format!(
                "the test run ended ({:?}) without a result document\n{}",
                report.status,
                tail(&report.stderr, DIAGNOSTIC_TAIL)
            ),
        );
    };
    if doc.get("passed").and_then(Value::as_bool) == Some(true) {
        return EvaluationFeedback::pass();
    }
    let phase = match doc.get("phase").and_then(Value::as_str) {
        Some("syntax") => FeedbackPhase::Syntax,
        Some("execution") => FeedbackPhase::Execution,
        _ => FeedbackPhase::Contract,
    };
    let diagnostics = doc.get("diagnostics").and_then(Value::as_str).unwrap_or_default();
    EvaluationFeedback::fail(phase, tail(diagnostics, DIAGNOSTIC_TAIL))
}

impl Runner {
    pub fn new(sandbox: Arc<dyn Sandbox>) -> Self {
        Self {
            sandbox,
            scratch: std::env::temp_dir(),
            time_limit: DEFAULT_TIME_LIMIT,
            memory_limit: Some(DEFAULT_MEMORY_LIMIT),
        }
    }

    pub fn with_scratch(mut self, scratch: impl Into<PathBuf>) -> Self {
        self.scratch = scratch.into();
        self
    }

    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.time_limit = limit;
        self
    }

    fn workdir(&self) -> Result<tempfile::TempDir, SandboxError> {
        std::fs::create_dir_all(&self.scratch).map_err(|source| SandboxError::Workdir {
            path: self.scratch.clone(),
            source,
        })?;
        tempfile::Builder::new()
            .prefix("text2ml-")
            .tempdir_in(&self.scratch)
            .map_err(|source| SandboxError::Workdir {
                path: self.scratch.clone(),
                source,
            })
    }

    fn request(&self, workdir: &Path, script: &str, args: &[&str]) -> SandboxRequest {
        let mut req = SandboxRequest::python(workdir, script, args).with_time_limit(self.time_limit);
        req.memory_limit = self.memory_limit;
        req
    }

    /// Runs an arbitrary command in a fresh working directory seeded with
    /// `files`; the command writes its result document to `result.json`.
    pub fn run_command(&self, command: &[String], files: Vec<(String, Vec<u8>)>) -> Result<SandboxReport, SandboxError> {
        let dir = self.workdir()?;
        let mut req = self.request(dir.path(), "", &[]);
        req.command = command.to_vec();
        for (name, bytes) in files {
            req = req.with_file(name, bytes);
        }
        self.sandbox.run(&req)
    }

    /// Runs one module test through the checker script.
    pub fn check(&self, job: &CheckJob<'_>) -> Result<CheckOutcome, SandboxError> {
        let dir = self.workdir()?;
        let request_doc = json!({
            "schema_version": 1,
            "kind": job.kind,
            "module": "module.py",
            "workspace": job.workspace.map(|w| w.display().to_string()),
            "data": job.data.map(|_| "data.json"),
            "seed": job.seed,
            "plan": job.plan,
            "hparams": job.hparams,
            "batch": job.batch,
            "classes": job.classes,
            "checks": job.checks,
            "dump": job.dump.then_some("data.json"),
            "result": "result.json",
        });
        let mut req = self
            .request(dir.path(), "check_module.py", &["request.json"])
            .with_file("check_module.py", CHECK_MODULE_PY)
            .with_file("module.py", job.code)
            .with_file("request.json", serde_json::to_vec(&request_doc).expect("request serializes"));
        if let Some(data) = job.data {
            req = req.with_file("data.json", data);
        }
        let report = self.sandbox.run(&req)?;
        let feedback = feedback_from(&report, self.time_limit);
        let data = if job.dump && feedback.passed {
            std::fs::read_to_string(dir.path().join("data.json")).ok()
        } else {
            None
        };
        Ok(CheckOutcome {
            feedback,
            report,
            data,
        })
    }

    /// Runs an assembled program once with `config`.
    pub fn run_program(
        &self,
        files: &[(String, String)],
        config: &ProgramConfig,
    ) -> Result<ProgramOutcome, SandboxError> {
        let dir = self.workdir()?;
        let doc = config.document();
        let mut req = self
            .request(dir.path(), "main.py", &["config.json"])
            .with_file("config.json", serde_json::to_vec(&doc).expect("config serializes"));
        for (name, text) in files {
            req = req.with_file(name, text.as_bytes());
        }
        let report = self.sandbox.run(&req)?;
        let result = report
            .result
            .clone()
            .and_then(|v| serde_json::from_value::<ProgramResult>(v).ok());
        Ok(ProgramOutcome {
            status: report.status,
            result,
            stderr_tail: tail(&report.stderr, DIAGNOSTIC_TAIL),
            duration: report.duration,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::finetune_hyperparameters;

    #[test]
    fn reference_hparams_are_in_range() {
        let specs = finetune_hyperparameters();
        let hp = reference_hparams(&specs);
        assert_eq!(hp["batch_size"], json!(11));
        assert_eq!(hp["optimizer"], json!("sgd"));
        let lr = hp["learning_rate"].as_f64().unwrap();
        assert!((lr - (1e-5f64 * 1e-1).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn feedback_mapping() {
        let mut report = SandboxReport::exited(0, Some(json!({"passed": false, "phase": "syntax", "diagnostics": "SyntaxError"})));
        let fb = feedback_from(&report, DEFAULT_TIME_LIMIT);
        assert_eq!((fb.passed, fb.phase), (false, FeedbackPhase::Syntax));
        report.status = ExitState::TimedOut;
        assert_eq!(feedback_from(&report, DEFAULT_TIME_LIMIT).phase, FeedbackPhase::Execution);
        let ok = SandboxReport::exited(0, Some(json!({"passed": true})));
        assert!(feedback_from(&ok, DEFAULT_TIME_LIMIT).passed);
        let none = SandboxReport::exited(1, None);
        assert_eq!(feedback_from(&none, DEFAULT_TIME_LIMIT).phase, FeedbackPhase::Execution);
    }
}
