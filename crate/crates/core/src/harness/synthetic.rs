use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::plan::DataContractPlan;
use super::runner::{CheckJob, Runner};
use super::sandbox::SandboxError;
use super::suite::UnitTestSuite;
use crate::generation::{extract_code, NO_CODE_DIAGNOSTIC};
use crate::llm::{BackendState, LlmBackend, LlmError, Session};
use crate::templates;
use crate::util::sha256_hex;

pub const DEFAULT_SYNTHETIC_PROGRAMS: usize = 3;
pub const DEFAULT_SYNTHETIC_ATTEMPTS: usize = 10;

/// A program that produces synthetic task inputs and outputs, kept only
/// after its data passed the suite's validity test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticDataProgram {
    pub code: String,
    pub seed: u64,
    /// SHA-256 of the produced data document.
    pub digest: String,
    /// The produced data, as the JSON document the program emitted.
    pub data: String,
}

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("at least one synthetic-data program is required")]
    NoPrograms,
    #[error("synthetic-data program {index} not valid after {attempts} attempt(s): {diagnostics}")]
    Exhausted {
        index: usize,
        attempts: usize,
        diagnostics: String,
    },
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

/// Generates `n` synthetic-data programs, each verified in the sandbox
/// against the suite before it is returned. Program `i` runs with seed `i`.
pub fn generate_synthetic_data(
    backend: &dyn LlmBackend,
    state: &BackendState,
    plan: &DataContractPlan,
    suite: &UnitTestSuite,
    n: usize,
    max_attempts: usize,
    runner: &Runner,
) -> Result<Vec<SyntheticDataProgram>, SyntheticError> {
    if n == 0 {
        return Err(SyntheticError::NoPrograms);
    }
    let plan_json = serde_json::to_string_pretty(plan).expect("plan serializes");
    let plan_value: Value = serde_json::to_value(plan).expect("plan serializes");
    let hparams = Value::Object(Default::default());
    let mut programs = Vec::with_capacity(n);
    for index in 0..n {
        let mut session = Session::new(state.clone(), Some(templates::SYSTEM.to_string()));
        let mut feedback = format!(
            "This is variant {} of {n}; vary sizes and values between variants while staying inside the plan.",
            index + 1
        );
        let mut last = String::new();
        let mut accepted = None;
        for _ in 0..max_attempts {
            let prompt = templates::render(templates::SYNTHETIC, &[("plan", &plan_json), ("feedback", &feedback)]);
            let reply = session.ask(backend, &prompt)?;
            let Some(code) = extract_code(&reply) else {
                last = NO_CODE_DIAGNOSTIC.to_string();
                feedback = format!("The previous answer was rejected: {last}");
                continue;
            };
            let outcome = runner.check(&CheckJob {
                kind: "synthetic",
                code: &code,
                checks: &suite.synthetic,
                plan: &plan_value,
                hparams: &hparams,
                workspace: None,
                data: None,
                seed: index as u64,
                classes: suite.classes,
                batch: suite.batch,
                dump: true,
            })?;
            match (outcome.feedback.passed, outcome.data) {
                (true, Some(data)) => {
                    accepted = Some(SyntheticDataProgram {
                        digest: sha256_hex(data.as_bytes()),
                        code,
                        seed: index as u64,
                        data,
                    });
                    break;
                }
                (true, None) => last = "the program passed but left no data file".into(),
                (false, _) => last = outcome.feedback.diagnostics,
            }
            feedback = format!("The previous program failed the synthetic-data test:\n{last}\nFix it.");
        }
        match accepted {
            Some(p) => programs.push(p),
            None => {
                return Err(SyntheticError::Exhausted {
                    index,
                    attempts: max_attempts,
                    diagnostics: last,
                })
            }
        }
    }
    Ok(programs)
}
