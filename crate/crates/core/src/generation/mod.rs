//! Test-gated generation of program modules.
//!
//! Each module is produced by its own conversation: generate, evaluate
//! against the module's unit tests, reflect on the failure, and retry with
//! the feedback until the evaluator passes or the attempt cap is reached.

mod engine;
mod instruction;
mod log;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::LlmError;
use crate::task::{CandidateMethod, ModuleKind, SearchSpace, Solution, TaskDescription};

pub use engine::{
    generate_module, reflect, repeat_generation, run_contextual_modular_generation, GenerationRunError, ProgramAttempts,
    RepeatedGeneration,
};
pub use instruction::{construct_instruction, extract_code, NO_CODE_DIAGNOSTIC};
pub use log::{read_attempt_log, write_attempt_log, AttemptLogLine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackPhase {
    /// The reply held no code, or the code failed to parse or import.
    Syntax,
    /// The code ran but violated a check of the unit-test suite.
    Contract,
    /// The code raised or timed out while running.
    Execution,
}

impl FeedbackPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Syntax => "syntax",
            Self::Contract => "contract",
            Self::Execution => "execution",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationFeedback {
    pub passed: bool,
    #[serde(default)]
    pub diagnostics: String,
    pub phase: FeedbackPhase,
}

impl EvaluationFeedback {
    pub fn pass() -> Self {
        Self {
            passed: true,
            diagnostics: String::new(),
            phase: FeedbackPhase::Contract,
        }
    }

    pub fn fail(phase: FeedbackPhase, diagnostics: impl Into<String>) -> Self {
        Self {
            passed: false,
            diagnostics: diagnostics.into(),
            phase,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationAttempt {
    /// 1-based, contiguous within one module.
    pub index: usize,
    pub instruction: String,
    pub output: String,
    pub feedback: EvaluationFeedback,
    /// Reflection produced after this attempt failed, if one was requested.
    #[serde(default)]
    pub reflection: Option<String>,
    /// True when conversation memory was cleared right after this attempt.
    #[serde(default)]
    pub reset_after: bool,
    pub started_ms: u64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleArtifact {
    pub kind: ModuleKind,
    pub candidate_id: String,
    pub code: String,
    pub attempts: usize,
    pub verified: bool,
    pub resets: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<GenerationAttempt>,
}

impl ModuleArtifact {
    /// A verified artifact built outside the generation loop, e.g. a
    /// hand-written fixture.
    pub fn prewritten(kind: ModuleKind, candidate_id: impl Into<String>, code: impl Into<String>) -> Self {
        Self {
            kind,
            candidate_id: candidate_id.into(),
            code: code.into(),
            attempts: 0,
            verified: true,
            resets: 0,
            history: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationLimits {
    pub max_attempts: usize,
    /// Memory is cleared after this many consecutive failures.
    pub reset_period: usize,
    /// Ask the backend to reflect on each failure before retrying.
    pub reflection: bool,
}

impl Default for GenerationLimits {
    fn default() -> Self {
        Self {
            max_attempts: 100,
            reset_period: 10,
            reflection: true,
        }
    }
}

impl GenerationLimits {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.max_attempts == 0 || self.reset_period == 0 || self.reset_period > self.max_attempts {
            return Err(GenerationError::InvalidLimits(*self));
        }
        Ok(())
    }
}

/// Everything the instruction for one module needs besides its history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleSpec {
    pub kind: ModuleKind,
    pub candidate: CandidateMethod,
    /// Task description with the workspace placeholder substituted.
    pub task_text: String,
    /// Hyperparameter names and ranges the module receives at run time.
    pub hyperparameters: String,
    /// Data-contract plan, rendered as JSON.
    pub plan: String,
}

impl ModuleSpec {
    pub fn new(
        task: &TaskDescription,
        space: &SearchSpace,
        candidate: &CandidateMethod,
        plan: &str,
    ) -> Self {
        let workspace = task.workspace.display().to_string();
        Self {
            kind: candidate.kind,
            candidate: candidate.clone(),
            task_text: crate::templates::substitute_workspace(&task.text, &workspace),
            hyperparameters: serde_json::to_string(&space.hyperparameters)
                .expect("hyperparameters serialize"),
            plan: plan.to_string(),
        }
    }

    /// Spec for the candidate a solution picks at `kind`.
    pub fn for_solution(
        task: &TaskDescription,
        space: &SearchSpace,
        solution: &Solution,
        kind: ModuleKind,
        plan: &str,
    ) -> Option<Self> {
        let id = solution.choice(kind)?;
        let candidate = space.candidate(id)?;
        Some(Self::new(task, space, candidate, plan))
    }

    /// The choice-specification block: what the module must implement.
    pub fn choice_text(&self) -> String {
        format!("{} ({})", self.candidate.description, self.candidate.id)
    }
}

/// The unit-test gate of one module kind.
pub trait ContextualEvaluator: Send + Sync {
    /// Judges `code`. `Err` means the test infrastructure itself failed,
    /// which is not the module's fault and aborts generation.
    fn evaluate(&self, kind: ModuleKind, code: &str) -> Result<EvaluationFeedback, EvaluatorError>;
}

impl<F> ContextualEvaluator for F
where
    F: Fn(ModuleKind, &str) -> Result<EvaluationFeedback, EvaluatorError> + Send + Sync,
{
    fn evaluate(&self, kind: ModuleKind, code: &str) -> Result<EvaluationFeedback, EvaluatorError> {
        self(kind, code)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("evaluator infrastructure failure: {0}")]
pub struct EvaluatorError(pub String);

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("no valid {kind} module for {candidate_id} within {} attempts", attempts.len())]
    Exhausted {
        kind: ModuleKind,
        candidate_id: String,
        attempts: Vec<GenerationAttempt>,
    },
    #[error("backend failed after {} completed attempt(s): {source}", attempts.len())]
    Backend {
        source: LlmError,
        attempts: Vec<GenerationAttempt>,
    },
    #[error("{source} (after {} completed attempt(s))", attempts.len())]
    Evaluator {
        source: EvaluatorError,
        attempts: Vec<GenerationAttempt>,
    },
    #[error("reflection requested on feedback that passed")]
    ReflectOnPass,
    #[error("invalid generation limits {0:?}")]
    InvalidLimits(GenerationLimits),
    #[error("expected one evaluator per module ({modules} modules, {evaluators} evaluators)")]
    EvaluatorCount { modules: usize, evaluators: usize },
}

impl GenerationError {
    /// Generation completions made before the error, for any variant.
    pub fn attempts(&self) -> &[GenerationAttempt] {
        match self {
            Self::Exhausted { attempts, .. }
            | Self::Backend { attempts, .. }
            | Self::Evaluator { attempts, .. } => attempts,
            _ => &[],
        }
    }
}
