use std::path::PathBuf;

use serde_json::Value;

use super::plan::DataContractPlan;
use super::runner::{CheckJob, Runner};
use super::suite::{Check, UnitTestSuite};
use super::synthetic::SyntheticDataProgram;
use crate::generation::{ContextualEvaluator, EvaluationFeedback, EvaluatorError};
use crate::task::ModuleKind;

/// Unit-test gate of one module kind.
///
/// Data preparation runs on the task's raw files. Modeling and
/// post-processing run on the synthetic datasets in order and pass as soon
/// as one dataset passes; otherwise the first failure is reported.
#[derive(Debug, Clone)]
pub struct ModuleEvaluator {
    kind: ModuleKind,
    checks: Vec<Check>,
    plan: Value,
    hparams: Value,
    classes: Option<u64>,
    batch: usize,
    datasets: Vec<String>,
    workspace: Option<PathBuf>,
    runner: Runner,
}

#[derive(Debug, thiserror::Error)]
pub enum EvaluatorSetupError {
    #[error("{0} modules are tested on synthetic data, but none was given")]
    NoSyntheticData(ModuleKind),
    #[error("data-preparation modules are tested on raw task files, but no workspace was given")]
    NoWorkspace,
}

/// Builds the evaluator for `kind`.
pub fn make_contextual_evaluator(
    kind: ModuleKind,
    plan: &DataContractPlan,
    suite: &UnitTestSuite,
    synthetic: &[SyntheticDataProgram],
    workspace: Option<PathBuf>,
    hparams: Value,
    runner: Runner,
) -> Result<ModuleEvaluator, EvaluatorSetupError> {
    match kind {
        ModuleKind::DataPreparation if workspace.is_none() => return Err(EvaluatorSetupError::NoWorkspace),
        ModuleKind::Modeling | ModuleKind::PostProcessing if synthetic.is_empty() => {
            return Err(EvaluatorSetupError::NoSyntheticData(kind))
        }
        _ => {}
    }
    Ok(ModuleEvaluator {
        kind,
        checks: suite.checks(kind).to_vec(),
        plan: serde_json::to_value(plan).expect("plan serializes"),
        hparams,
        classes: suite.classes,
        batch: suite.batch,
        datasets: synthetic.iter().map(|p| p.data.clone()).collect(),
        workspace,
        runner,
    })
}

impl ModuleEvaluator {
    fn job<'a>(&'a self, code: &'a str, data: Option<&'a str>) -> CheckJob<'a> {
        CheckJob {
            kind: self.kind.as_str(),
            code,
            checks: &self.checks,
            plan: &self.plan,
            hparams: &self.hparams,
            workspace: self.workspace.as_deref(),
            data,
            seed: 0,
            classes: self.classes,
            batch: self.batch,
            dump: false,
        }
    }
}

impl ContextualEvaluator for ModuleEvaluator {
    fn evaluate(&self, kind: ModuleKind, code: &str) -> Result<EvaluationFeedback, EvaluatorError> {
        if kind != self.kind {
            return Err(EvaluatorError(format!(
                "{} evaluator asked to judge a {} module",
                self.kind, kind
            )));
        }
        let infra = |e: super::sandbox::SandboxError| EvaluatorError(e.to_string());
        if self.kind == ModuleKind::DataPreparation {
            return Ok(self.runner.check(&self.job(code, None)).map_err(infra)?.feedback);
        }
        let mut first_failure = None;
        for data in &self.datasets {
            let feedback = self.runner.check(&self.job(code, Some(data))).map_err(infra)?.feedback;
            if feedback.passed {
                return Ok(feedback);
            }
            first_failure.get_or_insert(feedback);
        }
        Ok(first_failure.expect("at least one dataset"))
    }
}
