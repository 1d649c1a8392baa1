//! Reports computed from the files a run leaves behind.
//!
//! Numbers are printed with two decimals using Rust's `{:.2}` formatting,
//! which rounds the exact binary value half to even. Missing values print
//! as `-`. Nothing in a report depends on wall-clock time, so replaying a
//! run reproduces its report byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::{read_attempt_log, AttemptLogLine};
use crate::harness::{summarize, FpEntry, FpSummary};
use crate::search::{prefix_at_cost, rank_against_samples, select_best, CostLedger, ZcOutcome};
use crate::task::{Direction, HistoryError, MetricSpec, ModuleKind, OptimizationHistory, ParamValue, RecordStatus, Solution};

/// Cost levels, in full evaluations, at which search strategies are ranked.
pub const RANK_COSTS: [u64; 2] = [25, 100];
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const ZC_FILE: &str = "zc.json";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub fn fmt2(value: f64) -> String {
    if value.is_finite() {
        format!("{value:.2}")
    } else {
        "-".into()
    }
}

pub fn fmt_opt(value: Option<f64>) -> String {
    value.map_or_else(|| "-".into(), fmt2)
}

fn fmt_rank(rank: Option<usize>) -> String {
    rank.map_or_else(|| "-".into(), |r| r.to_string())
}

/// Hyperparameter values keep their magnitude: reals below 0.01 switch to
/// two-decimal scientific notation.
fn fmt_param(value: &ParamValue) -> String {
    match value {
        ParamValue::Real(x) if *x != 0.0 && x.abs() < 0.01 => format!("{x:.2e}"),
        ParamValue::Real(x) => fmt2(*x),
        ParamValue::Int(n) => n.to_string(),
        ParamValue::Choice(c) => c.clone(),
    }
}

/// Reads a JSONL file of `T`, naming the first bad line in the error.
fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ReportError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_fp_log(path: &Path) -> Result<Vec<FpEntry>, ReportError> {
    read_jsonl(path)
}

fn read_attempts(path: &Path) -> Result<Vec<AttemptLogLine>, ReportError> {
    read_attempt_log(path).map_err(|message| {
        // The log reader reports "path:line: message"; keep the line.
        let line = message
            .strip_prefix(&format!("{}:", path.display()))
            .and_then(|rest| rest.split(':').next())
            .and_then(|n| n.parse().ok())
            .unwrap_or(0);
        ReportError::Corrupt { path: path.to_path_buf(), line, message }
    })
}

/// Attempts per valid program, as in "mean ± std over the programs that
/// passed, within a fixed attempt budget".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptsReport {
    pub cap: usize,
    pub programs: usize,
    pub valid_programs: usize,
    pub attempts_per_valid: Vec<usize>,
    pub mean: Option<f64>,
    /// Sample standard deviation (n - 1).
    pub std: Option<f64>,
}

impl AttemptsReport {
    /// A program is valid when every one of its stages has a passing
    /// attempt.
    pub fn from_log(lines: &[AttemptLogLine], cap: usize) -> Self {
        let mut programs: BTreeMap<usize, Vec<&AttemptLogLine>> = BTreeMap::new();
        for line in lines {
            programs.entry(line.program).or_default().push(line);
        }
        let attempts_per_valid: Vec<usize> = programs
            .values()
            .filter(|lines| {
                let stages = lines.first().map_or(0, |l| l.stages);
                stages > 0 && (0..stages).all(|s| lines.iter().any(|l| l.stage == s && l.attempt.feedback.passed))
            })
            .map(Vec::len)
            .collect();
        let (mean, std) = if attempts_per_valid.is_empty() {
            (None, None)
        } else {
            let xs: Vec<f64> = attempts_per_valid.iter().map(|&n| n as f64).collect();
            let (m, s) = crate::util::mean_std(&xs);
            (Some(m), Some(s))
        };
        Self { cap, programs: programs.len(), valid_programs: attempts_per_valid.len(), attempts_per_valid, mean, std }
    }

    /// `mean ± std`, or `-` when no program was valid within the budget.
    pub fn summary(&self) -> String {
        match (self.mean, self.std) {
            (Some(m), Some(s)) => format!("{} ± {}", fmt2(m), fmt2(s)),
            _ => "-".into(),
        }
    }

    pub fn render(&self, preamble: &[String]) -> String {
        let mut out = comment_lines(preamble);
        out.push_str(&format!("attempts per valid program: {}\n", self.summary()));
        out.push_str(&format!(
            "valid programs: {} of {} within {} attempts\n",
            self.valid_programs, self.programs, self.cap
        ));
        out
    }
}

/// Generation effort for one module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleAttemptsRow {
    pub kind: ModuleKind,
    pub candidate_id: String,
    pub attempts: usize,
    pub resets: usize,
    pub verified: bool,
}

pub fn module_attempts(lines: &[AttemptLogLine]) -> Vec<ModuleAttemptsRow> {
    let mut rows: BTreeMap<(usize, ModuleKind, String), ModuleAttemptsRow> = BTreeMap::new();
    for line in lines {
        let row = rows.entry((line.program, line.kind, line.candidate_id.clone())).or_insert_with(|| ModuleAttemptsRow {
            kind: line.kind,
            candidate_id: line.candidate_id.clone(),
            attempts: 0,
            resets: 0,
            verified: false,
        });
        row.attempts += 1;
        row.resets += usize::from(line.attempt.reset_after);
        row.verified |= line.attempt.feedback.passed;
    }
    rows.into_values().collect()
}

/// Cost accounting over a history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub evaluations: usize,
    /// Exact total in full evaluations, as `numer/denom`.
    pub total_cost: String,
    pub total_cost_f64: f64,
    pub by_status: BTreeMap<String, usize>,
    /// Evaluation count per budget fraction.
    pub by_budget: BTreeMap<String, usize>,
}

pub fn ledger_summary(history: &OptimizationHistory) -> LedgerSummary {
    let ledger = CostLedger::from_budgets(history.records.iter().map(|r| &r.budget));
    let mut by_status = BTreeMap::new();
    let mut by_budget = BTreeMap::new();
    for r in &history.records {
        let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        *by_status.entry(status).or_insert(0) += 1;
        *by_budget.entry(r.budget.fraction.to_string()).or_insert(0) += 1;
    }
    LedgerSummary { evaluations: history.records.len(), total_cost: ledger.total().to_string(), total_cost_f64: ledger.total_f64(), by_status, by_budget }
}

fn sample_scores(samples: &OptimizationHistory) -> Vec<f64> {
    samples
        .records
        .iter()
        .filter(|r| r.status == RecordStatus::Evaluated)
        .filter_map(|r| r.score.filter(|s| s.is_finite()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestEntry {
    pub record: usize,
    pub pathway: String,
    pub solution: Solution,
    pub score: f64,
    pub budget: String,
}

/// The summary document of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_digest: String,
    pub seed: u64,
    pub strategy: String,
    pub metric: MetricSpec,
    pub best: Option<BestEntry>,
    /// Rank of the best score among sampled configurations, when samples
    /// were supplied.
    pub rank: Option<usize>,
    pub ledger: LedgerSummary,
    pub attempts: Vec<ModuleAttemptsRow>,
    pub fp: FpSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zc: Option<ZcSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZcSummary {
    pub mu: f64,
    pub mean_ranks: Vec<(String, f64)>,
    pub removed: Vec<String>,
    pub unranked: Vec<String>,
}

impl From<&ZcOutcome> for ZcSummary {
    fn from(zc: &ZcOutcome) -> Self {
        Self {
            mu: zc.decision.mu,
            mean_ranks: zc.mean_ranks.clone(),
            removed: zc.decision.removed.clone(),
            unranked: zc.matrix.missing.iter().map(|m| m.candidate_id.clone()).collect(),
        }
    }
}

impl RunReport {
    pub fn build(
        history: &OptimizationHistory,
        attempts: &[AttemptLogLine],
        fp: &[FpEntry],
        zc: Option<ZcSummary>,
        samples: Option<&OptimizationHistory>,
    ) -> Self {
        let best = select_best(history).map(|(i, r)| BestEntry {
            record: i,
            pathway: r.solution.pathway(),
            solution: r.solution.clone(),
            score: r.score.expect("best record has a score"),
            budget: r.budget.fraction.to_string(),
        });
        let rank = match (&best, samples) {
            (Some(b), Some(s)) => Some(rank_against_samples(b.score, &sample_scores(s), history.direction())),
            _ => None,
        };
        Self {
            config_digest: history.header.config_digest.clone(),
            seed: history.header.seed,
            strategy: history.header.strategy.clone(),
            metric: history.header.metric.clone(),
            best,
            rank,
            ledger: ledger_summary(history),
            attempts: module_attempts(attempts),
            fp: summarize(fp),
            zc,
        }
    }

    /// Loads a run directory: `history.jsonl` plus, when present,
    /// `attempts.jsonl`, `fp.jsonl` and `zc.json`.
    pub fn from_dir(dir: &Path, samples: Option<&OptimizationHistory>) -> Result<Self, ReportError> {
        let history = OptimizationHistory::load(&dir.join(crate::search::HISTORY_FILE))?;
        let attempts_path = dir.join(crate::search::ATTEMPT_LOG_FILE);
        let attempts = if attempts_path.exists() { read_attempts(&attempts_path)? } else { Vec::new() };
        let fp_path = dir.join(crate::search::FP_LOG_FILE);
        let fp = if fp_path.exists() { read_fp_log(&fp_path)? } else { Vec::new() };
        let zc_path = dir.join(ZC_FILE);
        let zc = if zc_path.exists() {
            let text = std::fs::read_to_string(&zc_path).map_err(|source| ReportError::Io { path: zc_path.clone(), source })?;
            let outcome: ZcOutcome = serde_json::from_str(&text).map_err(|e| ReportError::Corrupt {
                path: zc_path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
            Some(ZcSummary::from(&outcome))
        } else {
            None
        };
        Ok(Self::build(&history, &attempts, &fp, zc, samples))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn render(&self) -> String {
        let mut out = comment_lines(&[format!("config_digest={}", self.config_digest), format!("seed={}", self.seed)]);
        let direction = match self.metric.direction {
            Direction::Maximize => "maximize",
            Direction::Minimize => "minimize",
        };
        out.push_str(&format!("strategy: {}\nmetric: {} ({direction})\n", self.strategy, self.metric.name));
        match &self.best {
            None => out.push_str("best: -\n"),
            Some(b) => {
                out.push_str(&format!("best: {} score {} at budget {} (record {})\n", b.pathway, fmt2(b.score), b.budget, b.record));
                let params: Vec<String> =
                    b.solution.hyperparameters.iter().map(|(k, v)| format!("{k}={}", fmt_param(v))).collect();
                out.push_str(&format!("hyperparameters: {}\n", params.join(", ")));
            }
        }
        out.push_str(&format!("rank: {}\n", fmt_rank(self.rank)));
        let statuses: Vec<String> = self.ledger.by_status.iter().map(|(k, v)| format!("{k} {v}")).collect();
        let total = self.ledger.total_cost_f64;
        out.push_str(&format!(
            "ledger: {} evaluations, cost {} full evaluations ({})\n",
            self.ledger.evaluations,
            fmt2(total),
            if statuses.is_empty() { "-".into() } else { statuses.join(", ") }
        ));
        out.push_str("modules:\n  kind\tcandidate\tattempts\tresets\tverified\n");
        for row in &self.attempts {
            out.push_str(&format!(
                "  {}\t{}\t{}\t{}\t{}\n",
                row.kind.as_str(),
                row.candidate_id,
                row.attempts,
                row.resets,
                if row.verified { "yes" } else { "no" }
            ));
        }
        out.push_str(&render_fp(&self.fp));
        if let Some(zc) = &self.zc {
            let removed = if zc.removed.is_empty() { "-".into() } else { zc.removed.join(", ") };
            out.push_str(&format!("zero-cost filter (mu {}): removed {removed}\n", fmt2(zc.mu)));
        }
        out
    }
}

fn comment_lines(lines: &[String]) -> String {
    lines.iter().map(|l| format!("# {l}\n")).collect()
}

pub fn render_fp(fp: &FpSummary) -> String {
    format!(
        "fp: {} verified, rate before gate {}, after gate {}\n",
        fp.verified,
        fmt_opt(fp.rate_before),
        fmt_opt(fp.rate_after)
    )
}

/// Ranks of one search run at each of [`RANK_COSTS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub source: String,
    pub strategy: String,
    pub seed: u64,
    pub records: usize,
    pub best: Vec<Option<f64>>,
    pub ranks: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRanks {
    pub strategy: String,
    pub runs: usize,
    /// Mean and sample standard deviation of the rank per cost level, over
    /// runs that produced one.
    pub mean: Vec<Option<f64>>,
    pub std: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub costs: Vec<u64>,
    pub samples: usize,
    pub rows: Vec<RankRow>,
    pub strategies: Vec<StrategyRanks>,
    pub fp: Option<FpSummary>,
}

/// Best record within each cost level of every history, ranked against the
/// evaluated sample scores (rank 1 beats every sample).
pub fn rank_report(
    histories: &[(String, OptimizationHistory)],
    samples: Option<&OptimizationHistory>,
    fp: Option<&[FpEntry]>,
) -> RankReport {
    let scores = samples.map(sample_scores);
    let rows: Vec<RankRow> = histories
        .iter()
        .map(|(source, h)| {
            let best: Vec<Option<f64>> = RANK_COSTS
                .iter()
                .map(|&k| select_best(&prefix_at_cost(h, k)).and_then(|(_, r)| r.score))
                .collect();
            let ranks = best
                .iter()
                .map(|b| match (b, &scores) {
                    (Some(b), Some(s)) => Some(rank_against_samples(*b, s, h.direction())),
                    _ => None,
                })
                .collect();
            RankRow { source: source.clone(), strategy: h.header.strategy.clone(), seed: h.header.seed, records: h.records.len(), best, ranks }
        })
        .collect();
    let mut grouped: BTreeMap<&str, Vec<&RankRow>> = BTreeMap::new();
    for row in &rows {
        grouped.entry(row.strategy.as_str()).or_default().push(row);
    }
    let strategies = grouped
        .into_iter()
        .map(|(strategy, rows)| {
            let (mean, std) = (0..RANK_COSTS.len())
                .map(|i| {
                    let xs: Vec<f64> = rows.iter().filter_map(|r| r.ranks[i]).map(|r| r as f64).collect();
                    if xs.is_empty() {
                        (None, None)
                    } else {
                        let (m, s) = crate::util::mean_std(&xs);
                        (Some(m), Some(s))
                    }
                })
                .unzip();
            StrategyRanks { strategy: strategy.to_string(), runs: rows.len(), mean, std }
        })
        .collect();
    RankReport {
        costs: RANK_COSTS.to_vec(),
        samples: scores.map_or(0, |s| s.len()),
        rows,
        strategies,
        fp: fp.map(summarize),
    }
}

impl RankReport {
    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(|r| r.records == 0)
    }

    pub fn render(&self, preamble: &[String]) -> String {
        let mut out = comment_lines(preamble);
        if self.is_empty() {
            out.push_str("empty report: no evaluated records\n");
        }
        out.push_str(&format!("samples: {}\n", self.samples));
        let heads: Vec<String> = self.costs.iter().flat_map(|k| [format!("best@{k}"), format!("rank@{k}")]).collect();
        out.push_str(&format!("source\tstrategy\tseed\trecords\t{}\n", heads.join("\t")));
        for row in &self.rows {
            let cells: Vec<String> =
                row.best.iter().zip(&row.ranks).flat_map(|(b, r)| [fmt_opt(*b), fmt_rank(*r)]).collect();
            out.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", row.source, row.strategy, row.seed, row.records, cells.join("\t")));
        }
        for s in &self.strategies {
            let cells: Vec<String> = self
                .costs
                .iter()
                .zip(s.mean.iter().zip(&s.std))
                .map(|(k, (m, sd))| match (m, sd) {
                    (Some(m), Some(sd)) => format!("rank@{k} {} ± {}", fmt2(*m), fmt2(*sd)),
                    _ => format!("rank@{k} -"),
                })
                .collect();
            out.push_str(&format!("{} ({} runs): {}\n", s.strategy, s.runs, cells.join(", ")));
        }
        if let Some(fp) = &self.fp {
            out.push_str(&render_fp(fp));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::{EvaluationFeedback, FeedbackPhase, GenerationAttempt};
    use crate::search::{Budget, BudgetUnit};
    use crate::task::{HistoryHeader, OptimizationRecord};

    fn line(program: usize, stage: usize, stages: usize, passed: bool) -> AttemptLogLine {
        AttemptLogLine {
            schema_version: 1,
            program,
            stage,
            stages,
            kind: ModuleKind::ALL[stage],
            candidate_id: format!("c{stage}"),
            attempt: GenerationAttempt {
                index: 1,
                instruction: String::new(),
                output: String::new(),
                feedback: if passed { EvaluationFeedback::pass() } else { EvaluationFeedback::fail(FeedbackPhase::Contract, "no") },
                reflection: None,
                reset_after: false,
                started_ms: 0,
                elapsed_ms: 0,
            },
        }
    }

    #[test]
    fn constant_four_attempts() {
        let lines: Vec<_> = (0..25)
            .flat_map(|p| [line(p, 0, 1, false), line(p, 0, 1, false), line(p, 0, 1, false), line(p, 0, 1, true)])
            .collect();
        let report = AttemptsReport::from_log(&lines, 100);
        assert_eq!(report.valid_programs, 25);
        assert_eq!((report.mean, report.std), (Some(4.0), Some(0.0)));
        assert_eq!(report.summary(), "4.00 ± 0.00");
    }

    #[test]
    fn no_valid_program_is_a_dash() {
        let lines: Vec<_> = (0..100).map(|_| line(0, 0, 1, false)).collect();
        let report = AttemptsReport::from_log(&lines, 100);
        assert_eq!((report.programs, report.valid_programs), (1, 0));
        assert_eq!(report.summary(), "-");
        assert!(report.render(&[]).contains("0 of 1 within 100"));
    }

    #[test]
    fn a_program_needs_every_stage() {
        let lines = vec![line(0, 0, 3, true), line(0, 1, 3, true), line(1, 0, 3, true), line(1, 1, 3, true), line(1, 2, 3, false), line(1, 2, 3, true)];
        let report = AttemptsReport::from_log(&lines, 100);
        assert_eq!(report.attempts_per_valid, [4]);
        assert_eq!(report.programs, 2);
    }

    #[test]
    fn spread_uses_the_sample_deviation() {
        let mut lines = vec![line(0, 0, 1, true)];
        lines.extend([line(1, 0, 1, false), line(1, 0, 1, false), line(1, 0, 1, true)]);
        let report = AttemptsReport::from_log(&lines, 100);
        assert_eq!(report.summary(), format!("2.00 ± {}", fmt2(2f64.sqrt())));
    }

    fn history(strategy: &str, direction: Direction, scores: &[(f64, u64)]) -> OptimizationHistory {
        let mut h = OptimizationHistory::new(HistoryHeader {
            metric: MetricSpec { name: "m".into(), direction },
            strategy: strategy.into(),
            seed: 1,
            config_digest: "d".into(),
        });
        for &(s, denom) in scores {
            h.push(OptimizationRecord {
                solution: Solution { choices: BTreeMap::new(), hyperparameters: BTreeMap::new() },
                score: Some(s),
                budget: Budget::fraction_of(1, denom, 1.0, BudgetUnit::DatasetFraction),
                wall_time: 0.5,
                status: RecordStatus::Evaluated,
            })
            .unwrap();
        }
        h
    }

    #[test]
    fn known_optimum_ranks_first_at_both_costs() {
        let samples = history("samples", Direction::Minimize, &[(1.0, 1), (2.0, 1), (3.0, 1)]);
        let run = history("bohb", Direction::Minimize, &[(0.5, 1)]);
        let report = rank_report(&[("run".into(), run)], Some(&samples), None);
        assert_eq!(report.rows[0].ranks, [Some(1), Some(1)]);
        assert_eq!(report.samples, 3);
    }

    #[test]
    fn ranks_follow_the_cost_prefix() {
        let samples = history("samples", Direction::Maximize, &(0..10).map(|i| (i as f64, 1)).collect::<Vec<_>>());
        // 30 full evaluations scoring 4.5, then one scoring 8.5.
        let mut scores = vec![(4.5, 1); 30];
        scores.push((8.5, 1));
        let run = history("random", Direction::Maximize, &scores);
        let report = rank_report(&[("a".into(), run)], Some(&samples), None);
        // 5..=9 beat 4.5; only 9 beats 8.5.
        assert_eq!(report.rows[0].ranks, [Some(6), Some(2)]);
        assert_eq!(report.rows[0].best, [Some(4.5), Some(8.5)]);
        assert_eq!(report.strategies[0].mean, [Some(6.0), Some(2.0)]);
    }

    #[test]
    fn empty_history_renders_an_empty_report() {
        let run = history("bohb", Direction::Minimize, &[]);
        let report = rank_report(&[("a".into(), run)], None, None);
        assert!(report.is_empty());
        let text = report.render(&[]);
        assert!(text.starts_with("empty report"));
        assert!(text.contains("a\tbohb\t1\t0\t-\t-\t-\t-"));
    }

    #[test]
    fn run_report_is_stable_and_ignores_wall_time() {
        let mut a = history("bohb", Direction::Minimize, &[(0.3, 3), (0.2, 1), (0.25, 1)]);
        let report = RunReport::build(&a, &[line(0, 0, 1, true)], &[], None, None);
        let best = report.best.as_ref().unwrap();
        assert_eq!((best.record, best.score, best.budget.as_str()), (1, 0.2, "1"));
        assert_eq!(report.ledger.total_cost, "7/3");
        assert_eq!(report.ledger.by_budget["1/3"], 1);
        for r in &mut a.records {
            r.wall_time = 99.0;
        }
        let again = RunReport::build(&a, &[line(0, 0, 1, true)], &[], None, None);
        assert_eq!(report.to_json(), again.to_json());
        let text = report.render();
        assert!(text.starts_with("# config_digest=d\n# seed=1\n"));
        assert!(text.contains("cost 2.33 full evaluations"));
        assert!(text.contains("rank: -"));
    }

    #[test]
    fn corrupt_fp_line_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fp.jsonl");
        std::fs::write(&path, "{\"pathway\":\"a\",\"stage\":\"gate\",\"valid\":true}\n\nnot json\n").unwrap();
        match read_fp_log(&path) {
            Err(ReportError::Corrupt { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn formatting() {
        assert_eq!(fmt2(2.867_971_99), "2.87");
        assert_eq!(fmt2(f64::NAN), "-");
        assert_eq!(fmt_opt(None), "-");
        assert_eq!(fmt_param(&ParamValue::Real(0.000_123)), "1.23e-4");
        assert_eq!(fmt_param(&ParamValue::Int(7)), "7");
    }
}
