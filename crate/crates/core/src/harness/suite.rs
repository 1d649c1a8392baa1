use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::plan::{DataContractPlan, Dtype, TensorSpec};
use super::protocol::{Detail, ProgenitorProtocol, Side};
use crate::task::{ModuleKind, OutputFormat};

/// Rows of synthetic data fed to modeling and post-processing tests.
pub const TEST_BATCH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Inputs,
    Outputs,
    /// What `forward` returned (one tensor).
    Predictions,
    /// What `postprocess` returned (one tensor).
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRef {
    pub view: View,
    pub tensor: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisRef {
    pub view: View,
    pub tensor: usize,
    pub axis: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum CheckKind {
    Callable { name: String },
    ScalarFinite { name: String },
    TensorCount { view: View, count: usize },
    Rank { at: TensorRef, rank: usize },
    DimSize { at: AxisRef, size: u64 },
    DimRange { at: AxisRef, lo: u64, hi: u64 },
    Isomorphic { a: AxisRef, b: AxisRef },
    Dtype { at: TensorRef, dtype: Dtype },
    ValueRange { at: TensorRef, lo: f64, hi: f64 },
    ProbabilityRows { at: TensorRef },
    Finite { at: TensorRef },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(flatten)]
    pub kind: CheckKind,
}

/// Unit tests derived from a plan: checks per module kind, plus the
/// validity test every synthetic dataset must pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitTestSuite {
    pub modules: BTreeMap<ModuleKind, Vec<Check>>,
    pub synthetic: Vec<Check>,
    pub classes: Option<u64>,
    pub batch: usize,
}

impl UnitTestSuite {
    pub fn checks(&self, kind: ModuleKind) -> &[Check] {
        self.modules.get(&kind).map(Vec::as_slice).unwrap_or(&[])
    }
}

fn view_of(side: Side) -> View {
    match side {
        Side::Inputs => View::Inputs,
        Side::Outputs => View::Outputs,
    }
}

fn label(view: View, tensor: usize) -> String {
    match view {
        View::Inputs => format!("inputs[{tensor}]"),
        View::Outputs => format!("outputs[{tensor}]"),
        View::Predictions => "predictions".into(),
        View::Final => "final".into(),
    }
}

struct Builder {
    checks: Vec<Check>,
}

impl Builder {
    fn new() -> Self {
        Self { checks: Vec::new() }
    }

    fn push(&mut self, name: String, kind: CheckKind) {
        self.checks.push(Check { name, kind });
    }

    fn callable(&mut self, name: &str) {
        self.push(format!("callable:{name}"), CheckKind::Callable { name: name.into() });
    }

    /// Structure and content checks of one tensor against its spec.
    /// Axis 0 (the batch) is never size-checked: batches vary.
    fn tensor(&mut self, view: View, tensor: usize, spec: &TensorSpec, full: bool) {
        let at = TensorRef { view, tensor };
        let l = label(view, tensor);
        self.push(format!("{l}.rank"), CheckKind::Rank { at, rank: spec.rank });
        if !full {
            return;
        }
        for (axis, d) in spec.dims.iter().enumerate().skip(1) {
            let ax = AxisRef { view, tensor, axis };
            if let Some(size) = d.size {
                self.push(format!("{l}.dim[{axis}].size"), CheckKind::DimSize { at: ax, size });
            }
            if let Some([lo, hi]) = d.range {
                self.push(format!("{l}.dim[{axis}].range"), CheckKind::DimRange { at: ax, lo, hi });
            }
        }
        if let Some(dtype) = spec.dtype {
            self.push(format!("{l}.dtype"), CheckKind::Dtype { at, dtype });
        }
        if let Some([lo, hi]) = spec.value_range {
            self.push(format!("{l}.value_range"), CheckKind::ValueRange { at, lo, hi });
        }
        self.push(format!("{l}.finite"), CheckKind::Finite { at });
    }

    fn same_axis(&mut self, a: AxisRef, b: AxisRef) {
        let name = format!(
            "{}.dim[{}]~{}.dim[{}]",
            label(a.view, a.tensor),
            a.axis,
            label(b.view, b.tensor),
            b.axis
        );
        self.push(name, CheckKind::Isomorphic { a, b });
    }
}

/// Checks a produced dataset must pass: what data preparation returns and
/// what every synthetic-data program generates.
fn data_checks(plan: &DataContractPlan, protocol: &ProgenitorProtocol) -> Vec<Check> {
    let full = protocol.detail == Detail::Full;
    let mut b = Builder::new();
    for side in [Side::Inputs, Side::Outputs] {
        let tensors = plan.side(side);
        b.push(
            format!("{}.count", side.as_str()),
            CheckKind::TensorCount { view: view_of(side), count: tensors.len() },
        );
        for (i, t) in tensors.iter().enumerate() {
            b.tensor(view_of(side), i, t, full);
        }
    }
    if full {
        for group in &plan.isomorphic {
            let axes: Vec<AxisRef> = group
                .iter()
                .filter_map(|r| {
                    let (side, tensor) = plan.locate(&r.tensor)?;
                    let want = protocol.canonical(&r.dim);
                    let axis = plan.side(side)[tensor]
                        .dims
                        .iter()
                        .position(|d| protocol.canonical(&d.meaning) == want)?;
                    Some(AxisRef { view: view_of(side), tensor, axis })
                })
                .collect();
            for pair in axes.windows(2) {
                b.same_axis(pair[0], pair[1]);
            }
        }
        // Every tensor shares the leading batch axis.
        let first = AxisRef { view: View::Inputs, tensor: 0, axis: 0 };
        for side in [Side::Inputs, Side::Outputs] {
            for tensor in 0..plan.side(side).len() {
                let other = AxisRef { view: view_of(side), tensor, axis: 0 };
                if other != first && !b.checks.iter().any(|c| c.kind == CheckKind::Isomorphic { a: first, b: other }) {
                    b.same_axis(first, other);
                }
            }
        }
    }
    b.checks
}

fn modeling_checks(plan: &DataContractPlan, protocol: &ProgenitorProtocol, classes: Option<u64>) -> Vec<Check> {
    let full = protocol.detail == Detail::Full;
    let mut b = Builder::new();
    for name in ["build_model", "model.train_step", "model.forward"] {
        b.callable(name);
    }
    b.push("train_step.loss".into(), CheckKind::ScalarFinite { name: "loss".into() });
    let at = TensorRef { view: View::Predictions, tensor: 0 };
    match (classes, plan.outputs.first()) {
        (Some(classes), _) => {
            b.push("predictions.rank".into(), CheckKind::Rank { at, rank: 2 });
            if full {
                b.push(
                    "predictions.dim[1].size".into(),
                    CheckKind::DimSize { at: AxisRef { view: View::Predictions, tensor: 0, axis: 1 }, size: classes },
                );
                b.push("predictions.finite".into(), CheckKind::Finite { at });
            }
        }
        (None, Some(target)) => {
            b.push("predictions.rank".into(), CheckKind::Rank { at, rank: target.rank });
            if full {
                for (axis, d) in target.dims.iter().enumerate().skip(1) {
                    if let Some(size) = d.size {
                        b.push(
                            format!("predictions.dim[{axis}].size"),
                            CheckKind::DimSize { at: AxisRef { view: View::Predictions, tensor: 0, axis }, size },
                        );
                    }
                }
                b.push("predictions.finite".into(), CheckKind::Finite { at });
            }
        }
        (None, None) => {}
    }
    if full {
        b.same_axis(
            AxisRef { view: View::Inputs, tensor: 0, axis: 0 },
            AxisRef { view: View::Predictions, tensor: 0, axis: 0 },
        );
    }
    b.checks
}

fn post_processing_checks(plan: &DataContractPlan, protocol: &ProgenitorProtocol) -> Vec<Check> {
    let full = protocol.detail == Detail::Full;
    let mut b = Builder::new();
    b.callable("postprocess");
    if let Some(target) = plan.outputs.first() {
        b.tensor(View::Final, 0, target, full);
        let probability = plan
            .classification
            .is_some_and(|c| c.category.is_classification() && c.output_format == OutputFormat::ProbabilityLabels);
        if full && probability {
            b.push("final.probability_rows".into(), CheckKind::ProbabilityRows { at: TensorRef { view: View::Final, tensor: 0 } });
        }
        if full {
            b.same_axis(
                AxisRef { view: View::Predictions, tensor: 0, axis: 0 },
                AxisRef { view: View::Final, tensor: 0, axis: 0 },
            );
        }
    }
    b.checks
}

/// Instantiates the unit tests of every module kind from a verified plan.
/// Pure: the same plan and protocol always give the same suite.
pub fn build_unit_tests(plan: &DataContractPlan, protocol: &ProgenitorProtocol) -> UnitTestSuite {
    let classes = plan.num_classes();
    let data = data_checks(plan, protocol);
    let mut prepare = Vec::with_capacity(data.len() + 1);
    prepare.push(Check { name: "callable:prepare".into(), kind: CheckKind::Callable { name: "prepare".into() } });
    prepare.extend(data.iter().cloned());
    let mut synthetic = vec![Check { name: "callable:generate".into(), kind: CheckKind::Callable { name: "generate".into() } }];
    synthetic.extend(data);
    let mut modules = BTreeMap::new();
    modules.insert(ModuleKind::DataPreparation, prepare);
    modules.insert(ModuleKind::Modeling, modeling_checks(plan, protocol, classes));
    modules.insert(ModuleKind::PostProcessing, post_processing_checks(plan, protocol));
    UnitTestSuite {
        modules,
        synthetic,
        classes,
        batch: TEST_BATCH,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::plan::tests::{cv_plan, tabular_plan};
    use crate::task::Modality;
    use proptest::prelude::*;

    #[test]
    fn probability_plan_asks_for_class_scores() {
        let suite = build_unit_tests(&cv_plan(), &ProgenitorProtocol::builtin(Modality::Cv));
        let modeling = suite.checks(ModuleKind::Modeling);
        let find = |name: &str| modeling.iter().find(|c| c.name == name).unwrap().kind.clone();
        assert_eq!(
            find("predictions.rank"),
            CheckKind::Rank { at: TensorRef { view: View::Predictions, tensor: 0 }, rank: 2 }
        );
        assert_eq!(
            find("predictions.dim[1].size"),
            CheckKind::DimSize { at: AxisRef { view: View::Predictions, tensor: 0, axis: 1 }, size: 10 }
        );
        assert!(matches!(find("inputs[0].dim[0]~predictions.dim[0]"), CheckKind::Isomorphic { .. }));
    }

    #[test]
    fn tabular_suite_checks_rank_only() {
        let suite = build_unit_tests(&tabular_plan(), &ProgenitorProtocol::builtin(Modality::Tabular));
        for checks in suite.modules.values().chain([&suite.synthetic]) {
            for c in checks {
                assert!(
                    matches!(
                        c.kind,
                        CheckKind::Rank { .. } | CheckKind::TensorCount { .. } | CheckKind::Callable { .. } | CheckKind::ScalarFinite { .. }
                    ),
                    "{c:?}"
                );
            }
        }
        let ranks: Vec<_> = suite
            .synthetic
            .iter()
            .filter_map(|c| match c.kind {
                CheckKind::Rank { rank, .. } => Some(rank),
                _ => None,
            })
            .collect();
        assert_eq!(ranks, [2, 1]);
    }

    #[test]
    fn synthetic_test_equals_data_preparation_contract() {
        let suite = build_unit_tests(&cv_plan(), &ProgenitorProtocol::builtin(Modality::Cv));
        assert_eq!(suite.synthetic[1..], suite.checks(ModuleKind::DataPreparation)[1..]);
    }

    #[test]
    fn check_names_are_unique() {
        let suite = build_unit_tests(&cv_plan(), &ProgenitorProtocol::builtin(Modality::Cv));
        for checks in suite.modules.values() {
            let mut names: Vec<_> = checks.iter().map(|c| &c.name).collect();
            names.sort();
            let before = names.len();
            names.dedup();
            assert_eq!(before, names.len());
        }
    }

    proptest! {
        #[test]
        fn suite_is_deterministic(classes in 2u64..50, size in 4u64..64) {
            let mut plan = cv_plan();
            plan.outputs[0].value_range = Some([0.0, (classes - 1) as f64]);
            plan.inputs[0].dims[2].size = Some(size);
            plan.inputs[0].dims[2].range = Some([4, 64]);
            let protocol = ProgenitorProtocol::builtin(Modality::Cv);
            let a = build_unit_tests(&plan, &protocol);
            let b = build_unit_tests(&plan.clone(), &protocol.clone());
            prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
            prop_assert_eq!(a.classes, Some(classes));
        }
    }
}
