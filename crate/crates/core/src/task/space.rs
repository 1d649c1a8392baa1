use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{OutputFormat, TaskClassification};

/// One stage of the fixed program decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModuleKind {
    DataPreparation,
    Modeling,
    PostProcessing,
}

impl ModuleKind {
    pub const ALL: [ModuleKind; 3] = [
        ModuleKind::DataPreparation,
        ModuleKind::Modeling,
        ModuleKind::PostProcessing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModuleKind::DataPreparation => "data-preparation",
            ModuleKind::Modeling => "modeling",
            ModuleKind::PostProcessing => "post-processing",
        }
    }

    /// File stem used for the module inside an assembled program.
    pub fn file_stem(self) -> &'static str {
        match self {
            ModuleKind::DataPreparation => "data_preparation",
            ModuleKind::Modeling => "modeling",
            ModuleKind::PostProcessing => "post_processing",
        }
    }

    pub(crate) fn id_prefix(self) -> &'static str {
        match self {
            ModuleKind::DataPreparation => "dp",
            ModuleKind::Modeling => "m",
            ModuleKind::PostProcessing => "pp",
        }
    }
}

impl fmt::Display for ModuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Integer,
    Real,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamDomain {
    Range { lower: f64, upper: f64 },
    Choices { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterSpec {
    pub name: String,
    pub kind: ParamKind,
    #[serde(default)]
    pub scale: Scale,
    #[serde(flatten)]
    pub domain: ParamDomain,
}

impl HyperparameterSpec {
    pub fn integer(name: &str, scale: Scale, lower: i64, upper: i64) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Integer,
            scale,
            domain: ParamDomain::Range {
                lower: lower as f64,
                upper: upper as f64,
            },
        }
    }

    pub fn real(name: &str, scale: Scale, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Real,
            scale,
            domain: ParamDomain::Range { lower, upper },
        }
    }

    pub fn categorical(name: &str, choices: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Categorical,
            scale: Scale::Linear,
            domain: ParamDomain::Choices {
                choices: choices.iter().map(|c| c.to_string()).collect(),
            },
        }
    }

    /// True when `value` lies inside this spec's range or choices.
    pub fn contains(&self, value: &ParamValue) -> bool {
        match (&self.domain, value) {
            (ParamDomain::Range { lower, upper }, ParamValue::Int(v)) => {
                self.kind == ParamKind::Integer && (*v as f64) >= *lower && (*v as f64) <= *upper
            }
            (ParamDomain::Range { lower, upper }, ParamValue::Real(v)) => {
                self.kind == ParamKind::Real && v >= lower && v <= upper
            }
            (ParamDomain::Choices { choices }, ParamValue::Choice(c)) => choices.contains(c),
            _ => false,
        }
    }
}

/// The fine-tuning hyperparameters used for every deep-learning task.
pub fn finetune_hyperparameters() -> Vec<HyperparameterSpec> {
    vec![
        HyperparameterSpec::integer("batch_size", Scale::Log, 2, 64),
        HyperparameterSpec::real("learning_rate", Scale::Log, 1e-5, 1e-1),
        HyperparameterSpec::real("weight_decay", Scale::Log, 1e-4, 1e-1),
        HyperparameterSpec::real("momentum", Scale::Linear, 0.01, 0.99),
        HyperparameterSpec::categorical("optimizer", &["sgd", "adam", "adamw"]),
        HyperparameterSpec::categorical("scheduler", &["plateau", "cosine"]),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateMethod {
    pub id: String,
    pub kind: ModuleKind,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleStage {
    pub kind: ModuleKind,
    pub candidates: Vec<CandidateMethod>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub classification: TaskClassification,
    pub stages: Vec<ModuleStage>,
    pub hyperparameters: Vec<HyperparameterSpec>,
}

impl SearchSpace {
    pub fn stage(&self, kind: ModuleKind) -> Option<&ModuleStage> {
        self.stages.iter().find(|s| s.kind == kind)
    }

    pub fn candidate(&self, id: &str) -> Option<&CandidateMethod> {
        self.stages
            .iter()
            .flat_map(|s| s.candidates.iter())
            .find(|c| c.id == id)
    }

    pub fn hyperparameter(&self, name: &str) -> Option<&HyperparameterSpec> {
        self.hyperparameters.iter().find(|h| h.name == name)
    }

    /// Drops the given candidate from its stage; the stage itself stays even
    /// when it becomes empty so validation can report it.
    pub fn remove_candidate(&mut self, id: &str) {
        for stage in &mut self.stages {
            stage.candidates.retain(|c| c.id != id);
        }
    }

    /// True when `solution` picks one existing candidate per stage and every
    /// hyperparameter value lies in its spec.
    pub fn admits(&self, solution: &Solution) -> bool {
        self.stages.len() == solution.choices.len()
            && self.stages.iter().all(|stage| {
                solution
                    .choices
                    .get(&stage.kind)
                    .is_some_and(|id| stage.candidates.iter().any(|c| &c.id == id))
            })
            && self.hyperparameters.len() == solution.hyperparameters.len()
            && self.hyperparameters.iter().all(|spec| {
                solution
                    .hyperparameters
                    .get(&spec.name)
                    .is_some_and(|v| spec.contains(v))
            })
    }
}

/// A rule broken by a search space, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

fn violation(field: impl Into<String>, rule: impl Into<String>) -> Violation {
    Violation {
        field: field.into(),
        rule: rule.into(),
    }
}

/// Lists every broken search-space invariant; empty means valid.
pub fn validate_search_space(space: &SearchSpace) -> Vec<Violation> {
    let mut out = Vec::new();
    if space.stages.is_empty() {
        out.push(violation("stages", "at least one stage is required"));
    }
    let mut kinds = HashSet::new();
    let mut ids = HashSet::new();
    for (i, stage) in space.stages.iter().enumerate() {
        let field = format!("stages[{i}]({})", stage.kind);
        if !kinds.insert(stage.kind) {
            out.push(violation(&field, "stage kind appears more than once"));
        }
        if stage.candidates.is_empty() {
            out.push(violation(&field, "stage has no candidate methods"));
        }
        for cand in &stage.candidates {
            if cand.id.is_empty() {
                out.push(violation(&field, "candidate id is empty"));
            } else if !ids.insert(cand.id.as_str()) {
                out.push(violation(
                    format!("{field}.{}", cand.id),
                    "candidate id is not unique",
                ));
            }
            if cand.kind != stage.kind {
                out.push(violation(
                    format!("{field}.{}", cand.id),
                    "candidate kind differs from its stage",
                ));
            }
        }
    }
    let mut names = HashSet::new();
    for spec in &space.hyperparameters {
        let field = format!("hyperparameters.{}", spec.name);
        if !names.insert(spec.name.as_str()) {
            out.push(violation(&field, "hyperparameter name is not unique"));
        }
        match (&spec.domain, spec.kind) {
            (ParamDomain::Range { lower, upper }, ParamKind::Integer | ParamKind::Real) => {
                if !(lower.is_finite() && upper.is_finite()) {
                    out.push(violation(&field, "bounds must be finite"));
                } else if lower >= upper {
                    out.push(violation(&field, "lower bound must be below upper bound"));
                }
                if spec.scale == Scale::Log && !(*lower > 0.0 && *upper > 0.0) {
                    out.push(violation(&field, "log scale requires strictly positive bounds"));
                }
                if spec.kind == ParamKind::Integer && (lower.fract() != 0.0 || upper.fract() != 0.0)
                {
                    out.push(violation(&field, "integer bounds must be whole numbers"));
                }
            }
            (ParamDomain::Choices { choices }, ParamKind::Categorical) => {
                if choices.is_empty() {
                    out.push(violation(&field, "categorical needs at least one choice"));
                }
                let distinct: HashSet<_> = choices.iter().collect();
                if distinct.len() != choices.len() {
                    out.push(violation(&field, "categorical choices must be distinct"));
                }
                if spec.scale == Scale::Log {
                    out.push(violation(&field, "categorical parameters have no scale"));
                }
            }
            _ => out.push(violation(&field, "kind does not match its range or choices")),
        }
    }
    let class = &space.classification;
    if class.output_format != OutputFormat::NotApplicable && !class.category.is_classification() {
        out.push(violation(
            "classification.output_format",
            "output format applies only to classification categories",
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Choice(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Real(v) => Some(*v),
            ParamValue::Choice(_) => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Choice(c) => f.write_str(c),
        }
    }
}

/// One point of the search space: a candidate per stage plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub choices: BTreeMap<ModuleKind, String>,
    pub hyperparameters: BTreeMap<String, ParamValue>,
}

impl Solution {
    pub fn choice(&self, kind: ModuleKind) -> Option<&str> {
        self.choices.get(&kind).map(String::as_str)
    }

    /// The module pathway, e.g. `dp:scale>m:linear>pp:identity`.
    pub fn pathway(&self) -> String {
        self.choices
            .values()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join(">")
    }
}

fn sample_value<R: Rng + ?Sized>(spec: &HyperparameterSpec, rng: &mut R) -> ParamValue {
    match &spec.domain {
        ParamDomain::Choices { choices } => {
            ParamValue::Choice(choices[rng.random_range(0..choices.len())].clone())
        }
        ParamDomain::Range { lower, upper } => {
            let (lo, hi) = (*lower, *upper);
            let x = if hi <= lo {
                lo
            } else if spec.scale == Scale::Log {
                rng.random_range(lo.ln()..=hi.ln()).exp().clamp(lo, hi)
            } else {
                rng.random_range(lo..=hi)
            };
            match spec.kind {
                ParamKind::Integer => {
                    let (min, max) = (lo.ceil() as i64, hi.floor() as i64);
                    ParamValue::Int((x.round() as i64).clamp(min, max.max(min)))
                }
                _ => ParamValue::Real(x),
            }
        }
    }
}

/// Draws a solution: candidates uniformly per stage, log-scale parameters
/// uniformly in the log domain, integers rounded to the nearest valid value.
/// Degenerate ranges `[v, v]` yield `v`.
pub fn sample_solution<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Solution {
    let choices = space
        .stages
        .iter()
        .filter(|s| !s.candidates.is_empty())
        .map(|s| {
            let pick = &s.candidates[rng.random_range(0..s.candidates.len())];
            (s.kind, pick.id.clone())
        })
        .collect();
    let hyperparameters = space
        .hyperparameters
        .iter()
        .map(|spec| (spec.name.clone(), sample_value(spec, rng)))
        .collect();
    Solution {
        choices,
        hyperparameters,
    }
}

/// Verified candidate ids per stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateNetwork {
    pub stages: Vec<(ModuleKind, Vec<String>)>,
}

/// Number of assemblable pathways: the product of verified counts per stage.
pub fn count_pathways(network: &CandidateNetwork) -> u64 {
    network
        .stages
        .iter()
        .map(|(_, ids)| ids.len() as u64)
        .fold(1u64, |acc, n| acc.saturating_mul(n))
}
