use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::bohb::{bohb_next, BohbConfig, BohbState, Proposal};
use super::budget::{Budget, BudgetUnit, CostLedger};
use crate::task::{
    sample_solution, Direction, HistoryError, HistoryWriter, OptimizationHistory,
    OptimizationRecord, RecordStatus, SearchSpace, Solution,
};

/// An i.i.d. draw at the full budget.
pub fn random_search_next<R: Rng + ?Sized>(space: &SearchSpace, max: f64, unit: BudgetUnit, rng: &mut R) -> Proposal {
    Proposal {
        solution: sample_solution(space, rng),
        budget: Budget::full(max, unit),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Random,
    Bohb,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Bohb => "bohb",
        }
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(StrategyKind::Random),
            "bohb" => Ok(StrategyKind::Bohb),
            other => Err(format!("unknown strategy {other:?} (expected random or bohb)")),
        }
    }
}

/// When to stop searching. At least one limit must be set.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchLimits {
    /// Cost in full evaluations; a proposal that would exceed it is not run.
    pub max_cost: Option<u64>,
    pub max_evaluations: Option<usize>,
    #[serde(default, with = "opt_secs")]
    pub wall_clock: Option<Duration>,
}

mod opt_secs {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        d.map(|d| d.as_secs_f64()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.map(Duration::from_secs_f64))
    }
}

impl SearchLimits {
    pub fn cost(k: u64) -> Self {
        Self { max_cost: Some(k), ..Self::default() }
    }

    pub fn is_bounded(&self) -> bool {
        self.max_cost.is_some() || self.max_evaluations.is_some() || self.wall_clock.is_some()
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("no search limit set: give a cost, evaluation-count or wall-clock limit")]
    Unbounded,
    #[error("evaluation protocol violated: {0}")]
    Protocol(String),
    #[error("evaluation could not be run: {0}")]
    Infrastructure(String),
    #[error(transparent)]
    History(#[from] HistoryError),
}

/// Runs one configuration at one budget. Ordinary failures of the program
/// are records with status `failed`; only errors that make the whole
/// search meaningless are `Err`.
pub trait Objective {
    fn evaluate(&mut self, solution: &Solution, budget: &Budget) -> Result<OptimizationRecord, SearchError>;
}

impl<F> Objective for F
where
    F: FnMut(&Solution, &Budget) -> Result<OptimizationRecord, SearchError>,
{
    fn evaluate(&mut self, solution: &Solution, budget: &Budget) -> Result<OptimizationRecord, SearchError> {
        self(solution, budget)
    }
}

#[derive(Debug, Clone)]
pub enum Strategy {
    Random { max_budget: f64, unit: BudgetUnit },
    Bohb(Box<BohbState>),
}

impl Strategy {
    pub fn new(kind: StrategyKind, config: BohbConfig, space: &SearchSpace, history: &OptimizationHistory) -> Self {
        match kind {
            StrategyKind::Random => Strategy::Random { max_budget: config.max_budget, unit: config.unit },
            StrategyKind::Bohb => Strategy::Bohb(Box::new(BohbState::new(config, space, history))),
        }
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            Strategy::Random { .. } => StrategyKind::Random,
            Strategy::Bohb(_) => StrategyKind::Bohb,
        }
    }

    pub fn next<R: Rng + ?Sized>(
        &mut self,
        space: &SearchSpace,
        history: &OptimizationHistory,
        rng: &mut R,
    ) -> Option<Proposal> {
        match self {
            Strategy::Random { max_budget, unit } => Some(random_search_next(space, *max_budget, *unit, rng)),
            Strategy::Bohb(state) => bohb_next(space, history, state, rng),
        }
    }
}

/// Why the search loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Cost,
    Evaluations,
    WallClock,
    /// The strategy had nothing left to propose.
    Exhausted,
}

/// Proposes, evaluates and records until a limit is hit. Evaluations run
/// one at a time and every record is appended (and flushed) before the
/// next proposal.
pub fn run_search<R: Rng + ?Sized>(
    space: &SearchSpace,
    strategy: &mut Strategy,
    objective: &mut dyn Objective,
    limits: &SearchLimits,
    history: &HistoryWriter,
    rng: &mut R,
) -> Result<StopReason, SearchError> {
    if !limits.is_bounded() {
        return Err(SearchError::Unbounded);
    }
    let started = Instant::now();
    let mut spent: Ratio<u64> = Ratio::from_integer(0);
    let mut evaluations = 0usize;
    loop {
        if limits.max_evaluations.is_some_and(|m| evaluations >= m) {
            return Ok(StopReason::Evaluations);
        }
        if limits.wall_clock.is_some_and(|w| started.elapsed() >= w) {
            return Ok(StopReason::WallClock);
        }
        let snapshot = history.snapshot();
        let Some(proposal) = strategy.next(space, &snapshot, rng) else {
            return Ok(StopReason::Exhausted);
        };
        if limits
            .max_cost
            .is_some_and(|k| spent + proposal.budget.fraction > Ratio::from_integer(k))
        {
            return Ok(StopReason::Cost);
        }
        let record = objective.evaluate(&proposal.solution, &proposal.budget)?;
        spent += record.budget.fraction;
        evaluations += 1;
        history.append(record)?;
    }
}

/// The record the search outputs: the optimum, under the metric direction,
/// among evaluated records at the highest budget any evaluated record
/// reached. Ties go to the earliest record. Single-fidelity histories
/// reduce to the plain optimum.
pub fn select_best(history: &OptimizationHistory) -> Option<(usize, &OptimizationRecord)> {
    let direction = history.direction();
    let evaluated = || {
        history
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.status == RecordStatus::Evaluated && r.score.is_some_and(f64::is_finite))
    };
    let top = evaluated().map(|(_, r)| r.budget.fraction).max()?;
    let mut best: Option<(usize, &OptimizationRecord)> = None;
    for (i, r) in evaluated().filter(|(_, r)| r.budget.fraction == top) {
        let better = match best {
            None => true,
            Some((_, b)) => direction.better(r.score.unwrap(), b.score.unwrap()),
        };
        if better {
            best = Some((i, r));
        }
    }
    best
}

/// 1-based rank of `best` among `samples`: one plus the number of samples
/// strictly better under `direction`. Equal scores do not push `best`
/// down, so matching the fifth-best sample gives rank 5.
pub fn rank_against_samples(best: f64, samples: &[f64], direction: Direction) -> usize {
    1 + samples.iter().filter(|&&s| direction.better(s, best)).count()
}

/// Records a cost@K view takes: the leading records whose cumulative cost
/// stays within `k` full evaluations.
pub fn prefix_at_cost(history: &OptimizationHistory, k: u64) -> OptimizationHistory {
    let ledger = CostLedger::from_budgets(history.records.iter().map(|r| &r.budget));
    let n = ledger.prefix_within(k);
    OptimizationHistory {
        header: history.header.clone(),
        records: history.records[..n].to_vec(),
    }
}
