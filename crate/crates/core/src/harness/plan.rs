use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::protocol::{Detail, ProgenitorProtocol, Side};
use crate::llm::{BackendState, LlmBackend, LlmError, Session};
use crate::task::{OutputFormat, TaskClassification, TaskDescription};
use crate::templates;
use crate::util::json_block;

/// Rounds (backend replies) allowed before a plan is rejected.
pub const DEFAULT_PLAN_ROUNDS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Int,
    Float,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimSpec {
    pub meaning: String,
    /// Fixed size, or `None` when the size varies.
    #[serde(default)]
    pub size: Option<u64>,
    /// Inclusive allowed size range.
    #[serde(default)]
    pub range: Option<[u64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub rank: usize,
    #[serde(default)]
    pub dtype: Option<Dtype>,
    #[serde(default)]
    pub value_range: Option<[f64; 2]>,
    #[serde(default)]
    pub dims: Vec<DimSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimRef {
    pub tensor: String,
    pub dim: String,
}

/// Data contract between the modules of one program: the tensors on each
/// side of the ML task and the dimensions they must agree on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataContractPlan {
    pub inputs: Vec<TensorSpec>,
    pub outputs: Vec<TensorSpec>,
    #[serde(default)]
    pub isomorphic: Vec<Vec<DimRef>>,
    /// Copied from the search space, not devised by the backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<TaskClassification>,
}

impl DataContractPlan {
    pub fn side(&self, side: Side) -> &[TensorSpec] {
        match side {
            Side::Inputs => &self.inputs,
            Side::Outputs => &self.outputs,
        }
    }

    /// Position of a tensor by name: (side, index).
    pub fn locate(&self, name: &str) -> Option<(Side, usize)> {
        [Side::Inputs, Side::Outputs].into_iter().find_map(|side| {
            self.side(side)
                .iter()
                .position(|t| t.name == name)
                .map(|i| (side, i))
        })
    }

    pub fn is_classification(&self) -> bool {
        self.classification
            .is_some_and(|c| c.category.is_classification())
    }

    /// Number of classes of a classification task: the size of the class
    /// axis for probability outputs, else the span of the integer labels.
    pub fn num_classes(&self) -> Option<u64> {
        let class = self.classification?;
        if !class.category.is_classification() {
            return None;
        }
        let target = self.outputs.first()?;
        let from_dims = target.dims.last().filter(|_| target.rank >= 2).and_then(|d| d.size);
        let from_range = target.value_range.and_then(|[lo, hi]| {
            (lo.fract() == 0.0 && hi.fract() == 0.0 && hi >= lo).then(|| (hi - lo) as u64 + 1)
        });
        match class.output_format {
            OutputFormat::ProbabilityLabels => from_dims.or(from_range),
            _ => from_range.or(from_dims),
        }
    }

    /// Drops what a rank-only protocol does not govern.
    fn normalize_for(mut self, protocol: &ProgenitorProtocol) -> Self {
        if protocol.detail == Detail::RankOnly {
            for t in self.inputs.iter_mut().chain(self.outputs.iter_mut()) {
                t.dims.clear();
            }
            self.isomorphic.clear();
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanViolation {
    pub location: String,
    pub rule: String,
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.rule)
    }
}

/// Every way `plan` breaks `protocol`; empty iff it conforms.
pub fn verify_plan(plan: &DataContractPlan, protocol: &ProgenitorProtocol) -> Vec<PlanViolation> {
    let mut out = Vec::new();
    let mut violation = |location: String, rule: String| out.push(PlanViolation { location, rule });
    let full = protocol.detail == Detail::Full;
    let leading = protocol.canonical(&protocol.leading_axis);

    let mut names = HashSet::new();
    for side in [Side::Inputs, Side::Outputs] {
        let tensors = plan.side(side);
        let [lo, hi] = protocol.tensor_count.get(side);
        if tensors.len() < lo || tensors.len() > hi {
            violation(
                side.as_str().into(),
                format!("{} tensor type(s), protocol allows {lo} to {hi}", tensors.len()),
            );
        }
        let [rlo, rhi] = protocol.rank.get(side);
        for t in tensors {
            let at = format!("{}.{}", side.as_str(), t.name);
            if t.name.trim().is_empty() {
                violation(at.clone(), "tensor needs a name".into());
            } else if !names.insert(t.name.clone()) {
                violation(at.clone(), "tensor name is not unique".into());
            }
            if t.rank < rlo || t.rank > rhi {
                violation(at.clone(), format!("rank {} outside {rlo} to {rhi}", t.rank));
            }
            if let Some([a, b]) = t.value_range {
                if !(a.is_finite() && b.is_finite() && a <= b) {
                    violation(at.clone(), format!("value_range [{a}, {b}] is not an ordered finite pair"));
                }
            }
            if !full {
                continue;
            }
            if t.dims.len() != t.rank {
                violation(at.clone(), format!("rank {} but {} dimension(s) described", t.rank, t.dims.len()));
            }
            let mut seen = HashSet::new();
            for (i, d) in t.dims.iter().enumerate() {
                let dat = format!("{at}.dims[{i}]");
                let meaning = protocol.canonical(&d.meaning);
                if meaning.is_empty() {
                    violation(dat.clone(), "dimension needs a meaning".into());
                } else if !seen.insert(meaning.clone()) {
                    violation(dat.clone(), format!("duplicate dimension meaning \"{meaning}\""));
                }
                if i == 0 && meaning != leading {
                    violation(dat.clone(), format!("first dimension must be \"{leading}\", got \"{meaning}\""));
                }
                if d.size == Some(0) {
                    violation(dat.clone(), "size must be positive".into());
                }
                if let Some([a, b]) = d.range {
                    if a == 0 || a > b {
                        violation(dat.clone(), format!("range [{a}, {b}] must satisfy 1 <= lower <= upper"));
                    } else if let Some(s) = d.size {
                        if s < a || s > b {
                            violation(dat.clone(), format!("size {s} outside its range [{a}, {b}]"));
                        }
                    }
                }
            }
        }
    }

    if full {
        for req in &protocol.required_axes {
            let want = protocol.canonical(&req.meaning);
            let present = plan
                .side(req.side)
                .iter()
                .any(|t| t.dims.iter().any(|d| protocol.canonical(&d.meaning) == want));
            if !present {
                violation(
                    req.side.as_str().into(),
                    format!("no tensor has the required \"{want}\" dimension"),
                );
            }
        }
        for (g, group) in plan.isomorphic.iter().enumerate() {
            let at = format!("isomorphic[{g}]");
            if group.len() < 2 {
                violation(at.clone(), "group needs at least two dimensions".into());
            }
            let mut sizes = Vec::new();
            for r in group {
                let Some((side, idx)) = plan.locate(&r.tensor) else {
                    violation(at.clone(), format!("unknown tensor \"{}\"", r.tensor));
                    continue;
                };
                let want = protocol.canonical(&r.dim);
                match plan.side(side)[idx].dims.iter().find(|d| protocol.canonical(&d.meaning) == want) {
                    Some(d) => sizes.extend(d.size),
                    None => violation(at.clone(), format!("tensor \"{}\" has no dimension \"{want}\"", r.tensor)),
                }
            }
            sizes.dedup();
            if sizes.len() > 1 {
                violation(at, format!("fixed sizes disagree: {sizes:?}"));
            }
        }
    }

    if plan.is_classification() && plan.num_classes().is_none() {
        violation(
            "outputs".into(),
            "classification target needs integer value_range or a sized class axis".into(),
        );
    }
    out
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("plan rejected after {rounds} round(s): {}", violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Rejected {
        rounds: usize,
        violations: Vec<PlanViolation>,
    },
    #[error("max rounds must be at least 1")]
    NoRounds,
}

fn parse_plan(
    raw: &str,
    classification: TaskClassification,
    protocol: &ProgenitorProtocol,
) -> Result<DataContractPlan, Vec<PlanViolation>> {
    let mut plan: DataContractPlan = serde_json::from_str(json_block(raw)).map_err(|e| {
        vec![PlanViolation {
            location: "reply".into(),
            rule: format!("not a plan document: {e}"),
        }]
    })?;
    plan.classification = Some(classification);
    let plan = plan.normalize_for(protocol);
    let violations = verify_plan(&plan, protocol);
    if violations.is_empty() {
        Ok(plan)
    } else {
        Err(violations)
    }
}

/// Asks the backend for a data-contract plan and re-prompts with the
/// violation list until the protocol allows it.
pub fn devise_plan(
    backend: &dyn LlmBackend,
    state: &BackendState,
    task: &TaskDescription,
    classification: TaskClassification,
    protocol: &ProgenitorProtocol,
    max_rounds: usize,
) -> Result<DataContractPlan, PlanError> {
    if max_rounds == 0 {
        return Err(PlanError::NoRounds);
    }
    let workspace = task.workspace.display().to_string();
    let prompt = templates::render(
        templates::PLAN,
        &[
            ("task", &templates::substitute_workspace(&task.text, &workspace)),
            ("classification", &serde_json::to_string(&classification).expect("serializes")),
            ("protocol", &protocol.describe()),
        ],
    );
    let mut session = Session::new(state.clone(), Some(templates::SYSTEM.to_string()));
    let mut raw = session.ask(backend, &prompt)?;
    for round in 1..=max_rounds {
        match parse_plan(&raw, classification, protocol) {
            Ok(plan) => return Ok(plan),
            Err(violations) if round == max_rounds => {
                return Err(PlanError::Rejected {
                    rounds: round,
                    violations,
                })
            }
            Err(violations) => {
                let list: Vec<String> = violations.iter().map(|v| format!("- {v}")).collect();
                let retry = templates::render(templates::PLAN_VIOLATIONS, &[("violations", &list.join("\n"))]);
                raw = session.ask(backend, &retry)?;
            }
        }
    }
    unreachable!("loop returns on the last round")
}
