use serde::{Deserialize, Serialize};

use super::assembly::ProgramAssembly;
use super::runner::{ProgramConfig, Runner};
use super::sandbox::{ExitState, SandboxError};
use crate::task::ModuleKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum GateVerdict {
    Valid { score: f64 },
    FalsePositive { reason: String },
}

impl GateVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, GateVerdict::Valid { .. })
    }
}

/// Runs the assembled program end to end on small data and accepts it only
/// if it exits cleanly, every stage reports completion and the score is
/// finite. Programs that passed their unit tests but fail here are the
/// false positives the gate exists to catch.
pub fn integration_gate(
    assembly: &ProgramAssembly,
    runner: &Runner,
    config: &ProgramConfig,
) -> Result<GateVerdict, SandboxError> {
    let outcome = runner.run_program(&assembly.files, config)?;
    let fp = |reason: String| Ok(GateVerdict::FalsePositive { reason });
    if outcome.status == ExitState::TimedOut {
        return fp(format!("timed out after {} s", runner.time_limit.as_secs_f64()));
    }
    let Some(result) = outcome.result else {
        return fp(format!("no result document ({:?}): {}", outcome.status, outcome.stderr_tail));
    };
    if !outcome.status.success() {
        let detail = result.error.unwrap_or(outcome.stderr_tail);
        return fp(format!("exited with {:?}: {detail}", outcome.status));
    }
    let missing: Vec<&str> = ModuleKind::ALL
        .iter()
        .map(|k| k.as_str())
        .filter(|k| !result.markers.iter().any(|m| m == k))
        .collect();
    if !missing.is_empty() {
        let why = result.reason.unwrap_or_default();
        return fp(format!("stages did not complete: {} {why}", missing.join(", ")).trim_end().to_string());
    }
    match result.score {
        Some(score) if score.is_finite() => Ok(GateVerdict::Valid { score }),
        other => fp(format!("score is not a finite number: {other:?}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FpStage {
    Gate,
    Evaluation,
}

/// One bookkeeping event for a unit-test-verified program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpEntry {
    pub pathway: String,
    pub stage: FpStage,
    pub valid: bool,
    #[serde(default)]
    pub reason: String,
}

/// False-positive accounting over programs whose modules all passed their
/// unit tests. A false positive is a program that still fails to run: before
/// the gate that is every failing program; after it, only those the gate
/// let through and that failed later.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FpAccumulator {
    pub entries: Vec<FpEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpSummary {
    pub verified: usize,
    pub gate_rejected: usize,
    pub gate_passed: usize,
    pub failed_after_gate: usize,
    pub rate_before: Option<f64>,
    pub rate_after: Option<f64>,
}

impl FpAccumulator {
    pub fn record_gate(&mut self, pathway: &str, verdict: &GateVerdict) -> FpEntry {
        let entry = FpEntry {
            pathway: pathway.to_string(),
            stage: FpStage::Gate,
            valid: verdict.is_valid(),
            reason: match verdict {
                GateVerdict::Valid { .. } => String::new(),
                GateVerdict::FalsePositive { reason } => reason.clone(),
            },
        };
        self.entries.push(entry.clone());
        entry
    }

    /// Records that a gate-passed program failed a later evaluation.
    /// Returns `None` when the pathway never passed the gate or a failure
    /// was already recorded for it.
    pub fn record_evaluation_failure(&mut self, pathway: &str, reason: &str) -> Option<FpEntry> {
        let passed_gate = self
            .entries
            .iter()
            .any(|e| e.pathway == pathway && e.stage == FpStage::Gate && e.valid);
        let already = self
            .entries
            .iter()
            .any(|e| e.pathway == pathway && e.stage == FpStage::Evaluation);
        if !passed_gate || already {
            return None;
        }
        let entry = FpEntry {
            pathway: pathway.to_string(),
            stage: FpStage::Evaluation,
            valid: false,
            reason: reason.to_string(),
        };
        self.entries.push(entry.clone());
        Some(entry)
    }

    pub fn summary(&self) -> FpSummary {
        summarize(&self.entries)
    }
}

pub fn summarize(entries: &[FpEntry]) -> FpSummary {
    let gate = entries.iter().filter(|e| e.stage == FpStage::Gate);
    let verified = gate.clone().count();
    let gate_passed = gate.clone().filter(|e| e.valid).count();
    let gate_rejected = verified - gate_passed;
    let failed_after_gate = entries.iter().filter(|e| e.stage == FpStage::Evaluation && !e.valid).count();
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    FpSummary {
        verified,
        gate_rejected,
        gate_passed,
        failed_after_gate,
        rate_before: ratio(gate_rejected + failed_after_gate, verified),
        rate_after: ratio(failed_after_gate, gate_passed),
    }
}
