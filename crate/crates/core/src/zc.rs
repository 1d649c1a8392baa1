//! Zero-cost proxies: scores that predict how well a modeling candidate will
//! train, computed from one forward/backward pass on synthetic data.
//!
//! The proxy arithmetic runs in an external probe program inside the
//! sandbox. This module writes probe request documents, reads the result
//! documents back, aggregates the scores by average relative rank and
//! removes the worst fraction of modeling candidates from the search space.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::generation::ModuleArtifact;
use crate::harness::{DataContractPlan, Runner, SandboxError, SyntheticDataProgram};
use crate::task::{ModuleKind, SearchSpace};

pub const PROBE_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MU: f64 = 0.5;
pub const PROBE_REQUEST: &str = "request.json";
pub const PROBE_RESULT: &str = "result.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProxyKind {
    Flops,
    Params,
    Naswot,
    Synflow,
}

impl ProxyKind {
    pub const ALL: [ProxyKind; 4] = [ProxyKind::Flops, ProxyKind::Params, ProxyKind::Naswot, ProxyKind::Synflow];

    pub fn as_str(self) -> &'static str {
        match self {
            ProxyKind::Flops => "flops",
            ProxyKind::Params => "params",
            ProxyKind::Naswot => "naswot",
            ProxyKind::Synflow => "synflow",
        }
    }
}

impl fmt::Display for ProxyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    HigherIsBetter,
    LowerIsBetter,
}

/// Which proxies to request and how to read each one. By default all four
/// are higher-is-better; flops and params then act as capacity proxies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyBattery {
    pub proxies: Vec<(ProxyKind, Orientation)>,
}

impl Default for ProxyBattery {
    fn default() -> Self {
        Self {
            proxies: ProxyKind::ALL.iter().map(|&p| (p, Orientation::HigherIsBetter)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRef {
    /// Generator script inside the probe's working directory.
    pub generator: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRequest {
    pub schema_version: u32,
    pub model: String,
    pub data: SyntheticRef,
    pub plan: String,
    pub hparams: Value,
    pub proxies: Vec<ProxyKind>,
    pub seed: u64,
    pub result: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub schema_version: u32,
    #[serde(default)]
    pub scores: BTreeMap<ProxyKind, f64>,
    /// Proxies the probe could not compute, with the reason.
    #[serde(default)]
    pub errors: BTreeMap<ProxyKind, String>,
    #[serde(default)]
    pub param_count: Option<u64>,
    /// Seconds spent inside the probe.
    #[serde(default)]
    pub duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Probe command; it is given the request and result document paths.
    pub command: Vec<String>,
    pub battery: ProxyBattery,
    pub hparams: Value,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            command: vec!["text2ml-probe".into()],
            battery: ProxyBattery::default(),
            hparams: Value::Object(Default::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyRow {
    pub candidate_id: String,
    /// One score per battery column, averaged over dataset seeds.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingScores {
    pub candidate_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyScoreMatrix {
    pub columns: Vec<(ProxyKind, Orientation)>,
    pub rows: Vec<ProxyRow>,
    /// Candidates with at least one failed probe. They are kept in the
    /// search space and take no part in ranking.
    pub missing: Vec<MissingScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub mu: f64,
    pub kept: Vec<String>,
    pub removed: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ZcError {
    #[error("filter fraction must lie in [0, 1], got {0}")]
    Fraction(f64),
    #[error("stability needs at least two samples with a nonzero mean")]
    UndefinedStability,
    #[error("mean ranks cover unknown modeling candidate {0:?}")]
    UnknownCandidate(String),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

fn probe_once(
    model: &ModuleArtifact,
    synthetic: &SyntheticDataProgram,
    plan_json: &[u8],
    config: &ProbeConfig,
    runner: &Runner,
) -> Result<Result<ProbeResult, String>, SandboxError> {
    let request = ProbeRequest {
        schema_version: PROBE_SCHEMA_VERSION,
        model: "model.py".into(),
        data: SyntheticRef {
            generator: "synthetic.py".into(),
            seed: synthetic.seed,
        },
        plan: "plan.json".into(),
        hparams: config.hparams.clone(),
        proxies: config.battery.proxies.iter().map(|p| p.0).collect(),
        seed: synthetic.seed,
        result: PROBE_RESULT.into(),
    };
    let mut command = config.command.clone();
    command.push(PROBE_REQUEST.into());
    command.push(PROBE_RESULT.into());
    let files = vec![
        ("model.py".to_string(), model.code.clone().into_bytes()),
        ("synthetic.py".to_string(), synthetic.code.clone().into_bytes()),
        ("plan.json".to_string(), plan_json.to_vec()),
        (PROBE_REQUEST.to_string(), serde_json::to_vec(&request).expect("request serializes")),
    ];
    let report = runner.run_command(&command, files)?;
    if !report.status.success() {
        return Ok(Err(format!("probe {:?}: {}", report.status, report.stderr_tail(400))));
    }
    let Some(doc) = report.result else {
        return Ok(Err("probe wrote no result document".into()));
    };
    let result: ProbeResult = match serde_json::from_value(doc) {
        Ok(r) => r,
        Err(e) => return Ok(Err(format!("malformed probe result: {e}"))),
    };
    if result.schema_version != PROBE_SCHEMA_VERSION {
        return Ok(Err(format!("probe result schema {} unsupported", result.schema_version)));
    }
    let requested = || config.battery.proxies.iter().map(|p| p.0);
    if let Some((proxy, err)) = requested().find_map(|p| result.errors.get(&p).map(|e| (p, e))) {
        return Ok(Err(format!("{proxy}: {err}")));
    }
    for proxy in requested() {
        match result.scores.get(&proxy) {
            Some(v) if v.is_finite() => {}
            Some(v) => return Ok(Err(format!("{proxy}: non-finite score {v}"))),
            None => return Ok(Err(format!("{proxy}: missing from result"))),
        }
    }
    Ok(Ok(result))
}

/// Probes every modeling artifact on every synthetic dataset. Scores are
/// averaged over datasets; a candidate whose probe fails on any dataset is
/// listed as missing.
pub fn collect_proxy_scores(
    models: &[ModuleArtifact],
    plan: &DataContractPlan,
    synthetic: &[SyntheticDataProgram],
    config: &ProbeConfig,
    runner: &Runner,
) -> Result<ProxyScoreMatrix, ZcError> {
    let plan_json = serde_json::to_vec_pretty(plan).expect("plan serializes");
    let jobs: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|m| (0..synthetic.len()).map(move |d| (m, d)))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(m, d)| probe_once(&models[m], &synthetic[d], &plan_json, config, runner))
        .collect::<Result<Vec<_>, _>>()?;

    let mut matrix = ProxyScoreMatrix {
        columns: config.battery.proxies.clone(),
        rows: Vec::new(),
        missing: Vec::new(),
    };
    for (m, model) in models.iter().enumerate() {
        let runs = &outcomes[m * synthetic.len()..(m + 1) * synthetic.len()];
        if let Some(Err(reason)) = runs.iter().find(|r| r.is_err()) {
            matrix.missing.push(MissingScores {
                candidate_id: model.candidate_id.clone(),
                reason: reason.clone(),
            });
            continue;
        }
        let scores = matrix
            .columns
            .iter()
            .map(|(proxy, _)| {
                let sum: f64 = runs.iter().map(|r| r.as_ref().expect("checked")[proxy]).sum();
                sum / runs.len() as f64
            })
            .collect();
        matrix.rows.push(ProxyRow {
            candidate_id: model.candidate_id.clone(),
            scores,
        });
    }
    Ok(matrix)
}

impl std::ops::Index<&ProxyKind> for ProbeResult {
    type Output = f64;
    fn index(&self, proxy: &ProxyKind) -> &f64 {
        &self.scores[proxy]
    }
}

/// Ranks of `values` with 1 for the best, tied values sharing the average
/// of the positions they span.
fn fractional_ranks(values: &[f64], orientation: Orientation) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let c = values[a].total_cmp(&values[b]);
        match orientation {
            Orientation::HigherIsBetter => c.reverse(),
            Orientation::LowerIsBetter => c,
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Mean over proxies of each candidate's rank, in row order.
pub fn average_relative_rank(matrix: &ProxyScoreMatrix) -> Vec<(String, f64)> {
    let n = matrix.rows.len();
    let mut totals = vec![0.0; n];
    for (c, (_, orientation)) in matrix.columns.iter().enumerate() {
        let column: Vec<f64> = matrix.rows.iter().map(|r| r.scores[c]).collect();
        for (t, r) in totals.iter_mut().zip(fractional_ranks(&column, *orientation)) {
            *t += r;
        }
    }
    let k = matrix.columns.len().max(1) as f64;
    matrix
        .rows
        .iter()
        .zip(totals)
        .map(|(row, t)| (row.candidate_id.clone(), t / k))
        .collect()
}

/// Removes the `floor(mu * n)` worst-ranked modeling candidates, where `n`
/// counts the ranked ones. Among equal mean ranks the candidate with the
/// later id goes first. Unranked candidates and other stages are untouched.
pub fn filter_search_space(
    space: &SearchSpace,
    mean_ranks: &[(String, f64)],
    mu: f64,
) -> Result<(FilterDecision, SearchSpace), ZcError> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(ZcError::Fraction(mu));
    }
    let modeling = space.stage(ModuleKind::Modeling);
    for (id, _) in mean_ranks {
        if !modeling.is_some_and(|s| s.candidates.iter().any(|c| &c.id == id)) {
            return Err(ZcError::UnknownCandidate(id.clone()));
        }
    }
    let mut order: Vec<&(String, f64)> = mean_ranks.iter().collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let n = order.len();
    let remove = ((mu * n as f64) + 1e-9).floor() as usize;
    let removed: Vec<String> = order[n - remove..].iter().map(|(id, _)| id.clone()).collect();

    let mut reduced = space.clone();
    for id in &removed {
        reduced.remove_candidate(id);
    }
    let kept = reduced
        .stage(ModuleKind::Modeling)
        .map(|s| s.candidates.iter().map(|c| c.id.clone()).collect())
        .unwrap_or_default();
    Ok((FilterDecision { mu, kept, removed }, reduced))
}

/// Mean relative deviation: mean(|x - mean|) / |mean|.
pub fn stability_mrd(scores: &[f64]) -> Result<f64, ZcError> {
    if scores.len() < 2 {
        return Err(ZcError::UndefinedStability);
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(ZcError::UndefinedStability);
    }
    Ok(scores.iter().map(|x| (x - mean).abs()).sum::<f64>() / n / mean.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{FakeSandbox, SandboxReport};
    use crate::task::{CandidateMethod, Modality, ModuleStage, OutputFormat, TaskCategory, TaskClassification};
    use proptest::prelude::*;
    use serde_json::json;
    use std::sync::Arc;

    fn matrix(rows: &[(&str, [f64; 4])]) -> ProxyScoreMatrix {
        ProxyScoreMatrix {
            columns: ProxyBattery::default().proxies,
            rows: rows
                .iter()
                .map(|(id, s)| ProxyRow { candidate_id: id.to_string(), scores: s.to_vec() })
                .collect(),
            missing: vec![],
        }
    }

    fn space(models: &[&str]) -> SearchSpace {
        let stage = |kind, ids: &[&str]| ModuleStage {
            kind,
            candidates: ids
                .iter()
                .map(|id| CandidateMethod { id: id.to_string(), kind, description: String::new() })
                .collect(),
        };
        SearchSpace {
            classification: TaskClassification {
                modality: Modality::Cv,
                category: TaskCategory::MultiClassClassification,
                output_format: OutputFormat::IntegerLabels,
            },
            stages: vec![
                stage(ModuleKind::DataPreparation, &["dp"]),
                stage(ModuleKind::Modeling, models),
                stage(ModuleKind::PostProcessing, &["pp"]),
            ],
            hyperparameters: vec![],
        }
    }

    #[test]
    fn best_everywhere_gets_rank_one() {
        let m = matrix(&[("a", [9.0, 9.0, 9.0, 9.0]), ("b", [1.0, 2.0, 3.0, 4.0]), ("c", [0.0, 0.0, 0.0, 0.0])]);
        let r = average_relative_rank(&m);
        assert_eq!(r[0], ("a".to_string(), 1.0));
        assert_eq!(r[1].1, 2.0);
        assert_eq!(r[2].1, 3.0);
    }

    #[test]
    fn ranks_one_two_two_three_average_two() {
        // Candidate "x" ranks 1, 2, 2 and 3 on the four proxies.
        let m = matrix(&[
            ("x", [5.0, 4.0, 4.0, 3.0]),
            ("y", [1.0, 5.0, 1.0, 5.0]),
            ("z", [0.0, 0.0, 5.0, 4.0]),
        ]);
        assert_eq!(average_relative_rank(&m)[0].1, 2.0);
    }

    #[test]
    fn identical_rows_tie() {
        let m = matrix(&[("a", [1.0, 2.0, 3.0, 4.0]), ("b", [1.0, 2.0, 3.0, 4.0]), ("c", [0.0; 4])]);
        let r = average_relative_rank(&m);
        assert_eq!(r[0].1, 1.5);
        assert_eq!(r[1].1, 1.5);
    }

    #[test]
    fn lower_is_better_columns_flip() {
        let mut m = matrix(&[("a", [1.0; 4]), ("b", [2.0; 4])]);
        m.columns[0].1 = Orientation::LowerIsBetter;
        let r = average_relative_rank(&m);
        assert_eq!(r[0].1, (1.0 + 2.0 * 3.0) / 4.0);
    }

    #[test]
    fn filter_examples() {
        let ranks = |ids: &[&str]| ids.iter().enumerate().map(|(i, id)| (id.to_string(), i as f64 + 1.0)).collect::<Vec<_>>();
        let s4 = space(&["m1", "m2", "m3", "m4"]);
        let (d, reduced) = filter_search_space(&s4, &ranks(&["m1", "m2", "m3", "m4"]), 0.5).unwrap();
        assert_eq!(d.removed, ["m3", "m4"]);
        assert_eq!(d.kept, ["m1", "m2"]);
        assert_eq!(reduced.stages[0], s4.stages[0]);
        assert_eq!(reduced.stages[2], s4.stages[2]);
        assert!(filter_search_space(&s4, &ranks(&["m1", "m2", "m3", "m4"]), 0.0).unwrap().0.removed.is_empty());
        let s5 = space(&["a", "b", "c", "d", "e"]);
        assert_eq!(filter_search_space(&s5, &ranks(&["a", "b", "c", "d", "e"]), 0.5).unwrap().0.removed.len(), 2);
        assert!(matches!(filter_search_space(&s4, &[], 1.5), Err(ZcError::Fraction(_))));
    }

    #[test]
    fn ties_at_the_cut_drop_the_later_id() {
        let s = space(&["a", "b", "c", "d"]);
        let ranks = vec![("d".into(), 2.0), ("a".into(), 1.0), ("c".into(), 2.0), ("b".into(), 2.0)];
        let (d, _) = filter_search_space(&s, &ranks, 0.5).unwrap();
        assert_eq!(d.removed, ["c", "d"]);
    }

    #[test]
    fn unranked_candidates_are_kept() {
        let s = space(&["a", "b", "c", "flaky"]);
        let ranks = vec![("a".into(), 1.0), ("b".into(), 2.0), ("c".into(), 3.0)];
        let (d, _) = filter_search_space(&s, &ranks, 0.5).unwrap();
        assert_eq!(d.removed, ["c"]);
        assert!(d.kept.contains(&"flaky".to_string()));
    }

    #[test]
    fn mrd_examples() {
        assert_eq!(stability_mrd(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
        assert!((stability_mrd(&[9.0, 11.0]).unwrap() - 0.1).abs() < 1e-15);
        assert!(stability_mrd(&[1.0, -1.0]).is_err());
        assert!(stability_mrd(&[1.0]).is_err());
    }

    fn probe_doc(scores: [f64; 4]) -> SandboxReport {
        SandboxReport::exited(
            0,
            Some(json!({
                "schema_version": 1,
                "scores": {"flops": scores[0], "params": scores[1], "naswot": scores[2], "synflow": scores[3]},
                "param_count": scores[1] as u64,
            })),
        )
    }

    fn synthetic(seed: u64) -> SyntheticDataProgram {
        SyntheticDataProgram { code: "def generate(seed):\n    return {}\n".into(), seed, digest: String::new(), data: "{}".into() }
    }

    fn plan() -> DataContractPlan {
        serde_json::from_str(include_str!("../tests/fixtures/shapes/plan.json")).unwrap()
    }

    #[test]
    fn canned_probe_documents_fill_the_matrix() {
        let table: BTreeMap<&str, [f64; 4]> = [
            ("linear", [24.0, 27.0, 10.0, 3.0]),
            ("mlp", [30.0, 37.0, 12.0, 5.0]),
            ("conv", [324.0, 10.0, 20.0, 7.0]),
            ("attn", [100.0, 50.0, 15.0, 1.0]),
        ]
        .into();
        let sandbox = Arc::new(FakeSandbox::new(move |req| {
            let code = String::from_utf8(req.file("model.py").unwrap().to_vec()).unwrap();
            let request: ProbeRequest = serde_json::from_slice(req.file(PROBE_REQUEST).unwrap()).unwrap();
            assert_eq!(request.proxies, ProxyKind::ALL);
            assert_eq!(req.command[1..], [PROBE_REQUEST, PROBE_RESULT]);
            let mut s = table[code.trim()];
            s[3] += request.seed as f64 * 0.5;
            Ok(probe_doc(s))
        }));
        let runner = Runner::new(sandbox.clone()).with_scratch(tempfile::tempdir().unwrap().keep());
        let models: Vec<ModuleArtifact> = ["linear", "mlp", "conv", "attn"]
            .iter()
            .map(|id| ModuleArtifact::prewritten(ModuleKind::Modeling, *id, *id))
            .collect();
        let m = collect_proxy_scores(&models, &plan(), &[synthetic(0), synthetic(2)], &ProbeConfig::default(), &runner).unwrap();
        assert_eq!(sandbox.calls(), 8);
        assert_eq!(m.rows.len(), 4);
        assert!(m.missing.is_empty());
        assert_eq!(m.rows[0].scores, [24.0, 27.0, 10.0, 3.5]);
        let ranks = average_relative_rank(&m);
        let (d, _) = filter_search_space(&space(&["linear", "mlp", "conv", "attn"]), &ranks, DEFAULT_MU).unwrap();
        assert_eq!(d.removed.len(), 2);
    }

    #[test]
    fn failed_probe_flags_the_candidate() {
        let sandbox = Arc::new(FakeSandbox::new(|req| {
            let code = std::str::from_utf8(req.file("model.py").unwrap()).unwrap();
            Ok(match code {
                "slow" => SandboxReport { status: crate::harness::ExitState::TimedOut, ..SandboxReport::exited(0, None) },
                "partial" => SandboxReport::exited(0, Some(json!({"schema_version": 1, "scores": {"flops": 1.0}, "errors": {"naswot": "singular kernel"}}))),
                _ => probe_doc([1.0, 2.0, 3.0, 4.0]),
            })
        }));
        let runner = Runner::new(sandbox).with_scratch(tempfile::tempdir().unwrap().keep());
        let models: Vec<ModuleArtifact> = ["a", "slow", "b", "partial", "c"]
            .iter()
            .map(|id| ModuleArtifact::prewritten(ModuleKind::Modeling, *id, *id))
            .collect();
        let m = collect_proxy_scores(&models, &plan(), &[synthetic(0)], &ProbeConfig::default(), &runner).unwrap();
        assert_eq!(m.rows.iter().map(|r| r.candidate_id.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
        assert_eq!(m.missing.len(), 2);
        assert!(m.missing[1].reason.contains("naswot"), "{:?}", m.missing);
    }

    fn arb_matrix() -> impl Strategy<Value = ProxyScoreMatrix> {
        prop::collection::vec(prop::array::uniform4(0u32..20), 1..12).prop_map(|rows| ProxyScoreMatrix {
            columns: ProxyBattery::default().proxies,
            rows: rows
                .into_iter()
                .enumerate()
                .map(|(i, s)| ProxyRow { candidate_id: format!("m{i:02}"), scores: s.iter().map(|&v| v as f64).collect() })
                .collect(),
            missing: vec![],
        })
    }

    proptest! {
        #[test]
        fn scaling_a_column_keeps_ranks(m in arb_matrix(), col in 0usize..4, factor in 0.01f64..1000.0) {
            let mut scaled = m.clone();
            for r in &mut scaled.rows {
                r.scores[col] *= factor;
            }
            prop_assert_eq!(average_relative_rank(&m), average_relative_rank(&scaled));
        }

        #[test]
        fn filter_removes_floor_mu_n(n in 0usize..=100, mu in prop::sample::select(vec![0.0, 0.25, 0.5, 1.0]), seed in any::<u64>()) {
            let ids: Vec<String> = (0..n).map(|i| format!("m{i:03}")).collect();
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            let s = space(&refs);
            let ranks: Vec<(String, f64)> = ids.iter().enumerate().map(|(i, id)| (id.clone(), ((i as u64 ^ seed) % 7) as f64)).collect();
            let (d, reduced) = filter_search_space(&s, &ranks, mu).unwrap();
            prop_assert_eq!(d.removed.len(), (mu * n as f64).floor() as usize);
            prop_assert_eq!(d.kept.len() + d.removed.len(), n);
            prop_assert!(d.kept.iter().all(|k| !d.removed.contains(k)));
            prop_assert_eq!(reduced.stage(ModuleKind::Modeling).unwrap().candidates.len(), d.kept.len());
            let (again, _) = filter_search_space(&s, &ranks, mu).unwrap();
            prop_assert_eq!(again, d);
        }
    }
}
