use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::plan::DataContractPlan;
use super::runner::{HARNESS_PY, MAIN_PY};
use crate::generation::ModuleArtifact;
use crate::task::ModuleKind;

pub const ENTRY_SCRIPT: &str = "main.py";

/// Hand-written parts of every program: the training/evaluation harness and
/// the entry script that wires the stages together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prewritten {
    pub harness: String,
    pub entry: String,
}

impl Default for Prewritten {
    fn default() -> Self {
        Self {
            harness: HARNESS_PY.to_string(),
            entry: MAIN_PY.to_string(),
        }
    }
}

/// A runnable program: one verified module per stage plus the pre-written
/// files, laid out as a flat directory of Python files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramAssembly {
    pub modules: Vec<ModuleArtifact>,
    pub plan: DataContractPlan,
    /// (file name, contents), in a fixed order.
    pub files: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssemblyError {
    #[error("{kind} module {candidate_id} is not verified")]
    Unverified { kind: ModuleKind, candidate_id: String },
    #[error("no {0} module given")]
    MissingStage(ModuleKind),
    #[error("more than one {0} module given")]
    DuplicateStage(ModuleKind),
}

/// Wires verified modules into a program. Purely mechanical: files are
/// laid side by side and the entry script imports them by name.
pub fn assemble_program(
    artifacts: &[ModuleArtifact],
    plan: &DataContractPlan,
    prewritten: &Prewritten,
) -> Result<ProgramAssembly, AssemblyError> {
    let mut modules = Vec::with_capacity(ModuleKind::ALL.len());
    for kind in ModuleKind::ALL {
        let mut of_kind = artifacts.iter().filter(|a| a.kind == kind);
        let artifact = of_kind.next().ok_or(AssemblyError::MissingStage(kind))?;
        if of_kind.next().is_some() {
            return Err(AssemblyError::DuplicateStage(kind));
        }
        if !artifact.verified {
            return Err(AssemblyError::Unverified {
                kind,
                candidate_id: artifact.candidate_id.clone(),
            });
        }
        modules.push(artifact.clone());
    }
    let mut files: Vec<(String, String)> = modules
        .iter()
        .map(|m| (format!("{}.py", m.kind.file_stem()), m.code.clone() + "\n"))
        .collect();
    files.push(("harness.py".into(), prewritten.harness.clone()));
    files.push((ENTRY_SCRIPT.into(), prewritten.entry.clone()));
    files.push((
        "plan.json".into(),
        serde_json::to_string_pretty(plan).expect("plan serializes") + "\n",
    ));
    Ok(ProgramAssembly {
        modules,
        plan: plan.clone(),
        files,
    })
}

impl ProgramAssembly {
    /// Candidate ids of the stages, joined by `>`.
    pub fn pathway(&self) -> String {
        self.modules
            .iter()
            .map(|m| m.candidate_id.as_str())
            .collect::<Vec<_>>()
            .join(">")
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, text) in &self.files {
            std::fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}
