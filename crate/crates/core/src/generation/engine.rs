use std::time::{Instant, SystemTime, UNIX_EPOCH};

use thiserror::Error;

use super::instruction::{construct_instruction, extract_code, NO_CODE_DIAGNOSTIC};
use super::{
    ContextualEvaluator, EvaluationFeedback, FeedbackPhase, GenerationAttempt, GenerationError,
    GenerationLimits, ModuleArtifact, ModuleSpec,
};
use crate::llm::{BackendState, LlmBackend, Session};
use crate::task::ModuleKind;
use crate::templates;

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Asks the backend to reflect on a failed attempt. The reflection is a
/// side conversation: it neither reads nor extends the module's memory.
pub fn reflect(
    backend: &dyn LlmBackend,
    state: &BackendState,
    kind: ModuleKind,
    code: &str,
    feedback: &EvaluationFeedback,
) -> Result<String, GenerationError> {
    if feedback.passed {
        return Err(GenerationError::ReflectOnPass);
    }
    let prompt = templates::render(
        templates::REFLECTION,
        &[
            ("kind", kind.as_str()),
            ("code", code),
            ("phase", feedback.phase.as_str()),
            ("feedback", &feedback.diagnostics),
        ],
    );
    Session::new(state.clone(), Some(templates::SYSTEM.to_string()))
        .ask_detached(backend, &prompt)
        .map_err(|source| GenerationError::Backend {
            source,
            attempts: Vec::new(),
        })
}

/// Generates one module until its evaluator passes.
///
/// Every backend generation call counts as one attempt; reflections do not.
/// After each `reset_period` consecutive failures the conversation memory
/// is cleared before the next attempt, which then restarts from the initial
/// instruction.
pub fn generate_module(
    spec: &ModuleSpec,
    backend: &dyn LlmBackend,
    state: &BackendState,
    evaluator: &dyn ContextualEvaluator,
    limits: &GenerationLimits,
) -> Result<ModuleArtifact, GenerationError> {
    limits.validate()?;
    generate_capped(spec, backend, state, evaluator, limits, limits.max_attempts)
}

fn generate_capped(
    spec: &ModuleSpec,
    backend: &dyn LlmBackend,
    state: &BackendState,
    evaluator: &dyn ContextualEvaluator,
    limits: &GenerationLimits,
    cap: usize,
) -> Result<ModuleArtifact, GenerationError> {
    let mut session = Session::new(state.clone(), Some(templates::SYSTEM.to_string()));
    let mut attempts: Vec<GenerationAttempt> = Vec::new();
    let mut retained_from = 0;
    let mut resets = 0;
    let mut reflection = String::new();

    for index in 1..=cap {
        let instruction = construct_instruction(spec, &attempts[retained_from..], &reflection);
        let started_ms = unix_ms();
        let clock = Instant::now();
        let output = match session.ask(backend, &instruction) {
            Ok(output) => output,
            Err(source) => return Err(GenerationError::Backend { source, attempts }),
        };
        let code = extract_code(&output);
        let verdict = match &code {
            None => Ok(EvaluationFeedback::fail(FeedbackPhase::Syntax, NO_CODE_DIAGNOSTIC)),
            Some(code) => evaluator.evaluate(spec.kind, code),
        };
        let (feedback, infra) = match verdict {
            Ok(feedback) => (feedback, None),
            Err(err) => (
                EvaluationFeedback::fail(FeedbackPhase::Execution, err.to_string()),
                Some(err),
            ),
        };
        attempts.push(GenerationAttempt {
            index,
            instruction,
            output,
            feedback: feedback.clone(),
            reflection: None,
            reset_after: false,
            started_ms,
            elapsed_ms: clock.elapsed().as_millis() as u64,
        });
        if let Some(source) = infra {
            return Err(GenerationError::Evaluator { source, attempts });
        }
        if feedback.passed {
            return Ok(ModuleArtifact {
                kind: spec.kind,
                candidate_id: spec.candidate.id.clone(),
                code: code.expect("a passing attempt has code"),
                attempts: attempts.len(),
                verified: true,
                resets,
                history: attempts,
            });
        }
        if index == cap {
            break;
        }
        // Every attempt so far failed, so `index` is the failure streak.
        if index % limits.reset_period == 0 {
            session.clear();
            retained_from = attempts.len();
            reflection.clear();
            resets += 1;
            attempts.last_mut().expect("just pushed").reset_after = true;
        } else if limits.reflection {
            let code = code.as_deref().unwrap_or("");
            reflection = match reflect(backend, &session.state, spec.kind, code, &feedback) {
                Ok(text) => text,
                Err(GenerationError::Backend { source, .. }) => {
                    return Err(GenerationError::Backend { source, attempts })
                }
                Err(other) => return Err(other),
            };
            attempts.last_mut().expect("just pushed").reflection = Some(reflection.clone());
        }
    }
    Err(GenerationError::Exhausted {
        kind: spec.kind,
        candidate_id: spec.candidate.id.clone(),
        attempts,
    })
}

#[derive(Debug, Error)]
#[error("{error} ({} module(s) completed before it)", partial.len())]
pub struct GenerationRunError {
    pub partial: Vec<ModuleArtifact>,
    #[source]
    pub error: GenerationError,
}

/// Generates the modules of one program in order, one session each.
///
/// `total_cap` bounds the attempts spent across all modules; the module
/// that would exceed it is cut short and reported as exhausted.
pub fn run_contextual_modular_generation(
    specs: &[ModuleSpec],
    backend: &dyn LlmBackend,
    state: &BackendState,
    evaluators: &[&dyn ContextualEvaluator],
    limits: &GenerationLimits,
    total_cap: Option<usize>,
) -> Result<Vec<ModuleArtifact>, GenerationRunError> {
    let fail = |partial: Vec<ModuleArtifact>, error| Err(GenerationRunError { partial, error });
    if let Err(error) = limits.validate() {
        return fail(Vec::new(), error);
    }
    if specs.len() != evaluators.len() {
        return fail(
            Vec::new(),
            GenerationError::EvaluatorCount {
                modules: specs.len(),
                evaluators: evaluators.len(),
            },
        );
    }
    let mut artifacts = Vec::with_capacity(specs.len());
    let mut spent = 0;
    for (spec, evaluator) in specs.iter().zip(evaluators) {
        let cap = match total_cap {
            Some(total) => limits.max_attempts.min(total.saturating_sub(spent)),
            None => limits.max_attempts,
        };
        if cap == 0 {
            return fail(
                artifacts,
                GenerationError::Exhausted {
                    kind: spec.kind,
                    candidate_id: spec.candidate.id.clone(),
                    attempts: Vec::new(),
                },
            );
        }
        match generate_capped(spec, backend, state, *evaluator, limits, cap) {
            Ok(artifact) => {
                spent += artifact.attempts;
                artifacts.push(artifact);
            }
            Err(error) => return fail(artifacts, error),
        }
    }
    Ok(artifacts)
}

/// Attempts spent on one program by [`repeat_generation`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramAttempts {
    pub program: usize,
    /// Attempts per module in stage order, up to and including the module
    /// that failed, if any.
    pub modules: Vec<Vec<GenerationAttempt>>,
    pub valid: bool,
}

impl ProgramAttempts {
    pub fn attempts(&self) -> usize {
        self.modules.iter().map(Vec::len).sum()
    }
}

#[derive(Debug)]
pub struct RepeatedGeneration {
    pub programs: Vec<ProgramAttempts>,
    /// Set when something other than running out of attempts stopped the
    /// loop, e.g. a backend failure.
    pub error: Option<GenerationError>,
}

/// Generates whole programs one after another, each from fresh sessions,
/// until `budget` attempts are spent or `repetitions` programs were tried.
/// A program whose module runs out of attempts is recorded as invalid and
/// the next one starts with whatever budget is left.
pub fn repeat_generation(
    specs: &[ModuleSpec],
    backend: &dyn LlmBackend,
    state: &BackendState,
    evaluators: &[&dyn ContextualEvaluator],
    limits: &GenerationLimits,
    budget: usize,
    repetitions: Option<usize>,
) -> RepeatedGeneration {
    let mut programs: Vec<ProgramAttempts> = Vec::new();
    let mut spent = 0;
    while spent < budget && repetitions.is_none_or(|r| programs.len() < r) {
        let program = programs.len();
        let (modules, valid, error) =
            match run_contextual_modular_generation(specs, backend, state, evaluators, limits, Some(budget - spent)) {
                Ok(artifacts) => (artifacts.into_iter().map(|a| a.history).collect::<Vec<_>>(), true, None),
                Err(GenerationRunError { partial, error }) => {
                    let mut modules: Vec<_> = partial.into_iter().map(|a| a.history).collect();
                    modules.push(error.attempts().to_vec());
                    let fatal = (!matches!(error, GenerationError::Exhausted { .. })).then_some(error);
                    (modules, false, fatal)
                }
            };
        let entry = ProgramAttempts { program, modules, valid };
        spent += entry.attempts();
        let stalled = entry.attempts() == 0;
        programs.push(entry);
        if error.is_some() || stalled {
            return RepeatedGeneration { programs, error };
        }
    }
    RepeatedGeneration { programs, error: None }
}
