//! Task descriptions, search spaces, solutions and optimization history.

mod history;
mod space;
mod space_gen;

pub use history::{
    HistoryError, HistoryHeader, HistoryWriter, OptimizationHistory, OptimizationRecord,
    RecordStatus, HISTORY_SCHEMA_VERSION,
};
pub use space::{
    count_pathways, finetune_hyperparameters, sample_solution, validate_search_space,
    CandidateMethod, CandidateNetwork, HyperparameterSpec, ModuleKind, ModuleStage, ParamDomain,
    ParamKind, ParamValue, Scale, SearchSpace, Solution, Violation,
};
#[cfg(test)]
pub(crate) use space::tests::table4_space;
pub use space_gen::{generate_search_space, SearchSpaceError, SPACE_REPAIR_PROMPTS};

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Tabular,
    Cv,
    Nlp,
}

impl Modality {
    /// CV and NLP tasks are fine-tuned neural models; tabular tasks are not.
    pub fn is_deep_learning(self) -> bool {
        matches!(self, Modality::Cv | Modality::Nlp)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Tabular => "tabular",
            Modality::Cv => "cv",
            Modality::Nlp => "nlp",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// True when `a` is strictly better than `b`. NaN is never better.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Maximize => a > b,
            Direction::Minimize => a < b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub direction: Direction,
}

const MAXIMIZED: &[&str] = &["accuracy", "acc", "auc", "f1", "precision", "recall", "r2", "map"];
const MINIMIZED: &[&str] = &["mae", "mse", "rmse", "error", "loss", "logloss", "mape"];

impl MetricSpec {
    /// Metric with the direction inferred from its name: accuracy-like names
    /// are maximized, error-like names minimized.
    pub fn from_name(name: &str) -> Option<Self> {
        let lower = name.to_ascii_lowercase();
        let tokens: Vec<&str> = lower
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        let hit = |list: &[&str]| tokens.iter().any(|t| list.contains(t));
        let direction = if hit(MINIMIZED) {
            Direction::Minimize
        } else if hit(MAXIMIZED) {
            Direction::Maximize
        } else {
            return None;
        };
        Some(Self {
            name: name.to_string(),
            direction,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDescription {
    pub text: String,
    pub workspace: PathBuf,
    pub metric: MetricSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality_hint: Option<Modality>,
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("cannot read task file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed task file {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("task text is empty")]
    EmptyText,
    #[error("metric {0:?} has no known direction; set metric.direction")]
    UnknownDirection(String),
    #[error("workspace {0} does not exist")]
    MissingWorkspace(PathBuf),
}

#[derive(Deserialize)]
struct TaskFile {
    text: String,
    workspace: PathBuf,
    metric: MetricFile,
    #[serde(default)]
    modality_hint: Option<Modality>,
}

#[derive(Deserialize)]
struct MetricFile {
    name: String,
    #[serde(default)]
    direction: Option<Direction>,
}

impl TaskDescription {
    /// Parses a task file. A relative workspace is resolved against the
    /// directory holding the file.
    pub fn from_toml_str(source: &str, base_dir: &Path) -> Result<Self, TaskError> {
        let file: TaskFile = toml::from_str(source).map_err(|e| TaskError::Format {
            path: base_dir.to_path_buf(),
            message: e.to_string(),
        })?;
        let metric = match file.metric.direction {
            Some(direction) => MetricSpec {
                name: file.metric.name,
                direction,
            },
            None => MetricSpec::from_name(&file.metric.name)
                .ok_or(TaskError::UnknownDirection(file.metric.name))?,
        };
        let workspace = if file.workspace.is_absolute() {
            file.workspace
        } else {
            base_dir.join(file.workspace)
        };
        let task = Self {
            text: file.text,
            workspace,
            metric,
            modality_hint: file.modality_hint,
        };
        if task.text.trim().is_empty() {
            return Err(TaskError::EmptyText);
        }
        Ok(task)
    }

    pub fn load(path: &Path) -> Result<Self, TaskError> {
        let source = std::fs::read_to_string(path).map_err(|source| TaskError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&source, base).map_err(|e| match e {
            TaskError::Format { message, .. } => TaskError::Format {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    /// Checks the run-start invariants.
    pub fn check_ready(&self) -> Result<(), TaskError> {
        if self.text.trim().is_empty() {
            return Err(TaskError::EmptyText);
        }
        if !self.workspace.is_dir() {
            return Err(TaskError::MissingWorkspace(self.workspace.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskCategory {
    #[serde(rename = "binary classification")]
    BinaryClassification,
    #[serde(rename = "multi-class classification")]
    MultiClassClassification,
    #[serde(rename = "multi-label classification")]
    MultiLabelClassification,
    #[serde(rename = "single-output regression")]
    SingleOutputRegression,
    #[serde(rename = "multi-output regression")]
    MultiOutputRegression,
    #[serde(rename = "sequence-to-sequence")]
    SequenceToSequence,
    #[serde(rename = "other")]
    Other,
}

impl TaskCategory {
    pub fn is_classification(self) -> bool {
        matches!(
            self,
            TaskCategory::BinaryClassification
                | TaskCategory::MultiClassClassification
                | TaskCategory::MultiLabelClassification
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputFormat {
    #[serde(rename = "integer labels")]
    IntegerLabels,
    #[serde(rename = "probability labels")]
    ProbabilityLabels,
    #[serde(rename = "n/a")]
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskClassification {
    pub modality: Modality,
    pub category: TaskCategory,
    pub output_format: OutputFormat,
}
