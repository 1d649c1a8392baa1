use std::collections::BTreeMap;

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::budget::{Budget, BudgetUnit};
use super::hyperband::{hyperband_ladder, Bracket};
use super::tpe::{Encoding, TpeConfig, TpeModel};
use crate::task::{sample_solution, Direction, OptimizationHistory, RecordStatus, SearchSpace, Solution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BohbConfig {
    pub eta: u64,
    /// Number of halvings in the most aggressive bracket; the smallest
    /// budget is `max_budget / eta^s_max`.
    pub s_max: u32,
    pub max_budget: f64,
    pub unit: BudgetUnit,
    pub tpe: TpeConfig,
}

impl BohbConfig {
    /// Thirty epochs, halving rate 3, three budget levels.
    pub fn epochs(max_budget: f64) -> Self {
        Self {
            eta: 3,
            s_max: 2,
            max_budget,
            unit: BudgetUnit::Epochs,
            tpe: TpeConfig::default(),
        }
    }
}

/// A configuration to evaluate and the budget to evaluate it at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub solution: Solution,
    pub budget: Budget,
}

#[derive(Debug, Clone, PartialEq)]
struct Trial {
    solution: Option<Solution>,
    /// Lower is better; failed and pruned runs are +inf.
    loss: Option<f64>,
}

/// Hyperband bracket schedule plus the per-budget observations the density
/// model is fitted on. Evaluations are observed in the order they were
/// proposed.
#[derive(Debug, Clone)]
pub struct BohbState {
    pub config: BohbConfig,
    ladder: Vec<Bracket>,
    direction: Direction,
    encoding: Encoding,
    /// Brackets started so far; the active one is `ladder[(started - 1) % len]`.
    started: usize,
    rung: usize,
    trials: Vec<Trial>,
    next_issue: usize,
    /// Trial indices proposed but not yet observed, in order.
    outstanding: Vec<usize>,
    /// History records already consumed.
    synced: usize,
    observations: BTreeMap<Ratio<u64>, Vec<(Vec<f64>, f64)>>,
    pub model_proposals: usize,
    pub random_proposals: usize,
}

impl BohbState {
    /// State for `space`; records already in `history` are not treated as
    /// this run's results.
    pub fn new(config: BohbConfig, space: &SearchSpace, history: &OptimizationHistory) -> Self {
        Self {
            ladder: hyperband_ladder(config.eta, config.s_max),
            config,
            direction: history.direction(),
            encoding: Encoding::new(space),
            started: 0,
            rung: 0,
            trials: Vec::new(),
            next_issue: 0,
            outstanding: Vec::new(),
            synced: history.records.len(),
            observations: BTreeMap::new(),
            model_proposals: 0,
            random_proposals: 0,
        }
    }

    pub fn ladder(&self) -> &[Bracket] {
        &self.ladder
    }

    fn bracket(&self) -> &Bracket {
        &self.ladder[(self.started - 1) % self.ladder.len()]
    }

    fn budget(&self) -> Budget {
        let fraction = self.bracket().rungs[self.rung].fraction;
        Budget::fraction_of(*fraction.numer(), *fraction.denom(), self.config.max_budget, self.config.unit)
    }

    fn loss_of(&self, status: RecordStatus, score: Option<f64>) -> f64 {
        match (status, score) {
            (RecordStatus::Evaluated, Some(s)) if s.is_finite() => match self.direction {
                Direction::Minimize => s,
                Direction::Maximize => -s,
            },
            _ => f64::INFINITY,
        }
    }

    fn sync(&mut self, history: &OptimizationHistory) {
        while self.synced < history.records.len() && !self.outstanding.is_empty() {
            let record = &history.records[self.synced];
            self.synced += 1;
            let trial = self.outstanding.remove(0);
            let loss = self.loss_of(record.status, record.score);
            self.trials[trial].loss = Some(loss);
            if let Some(v) = self.encoding.encode(&record.solution) {
                self.observations.entry(record.budget.fraction).or_default().push((v, loss));
            }
        }
    }

    fn start_bracket(&mut self) {
        self.started += 1;
        self.rung = 0;
        let n = self.bracket().rungs[0].n as usize;
        self.trials = vec![Trial { solution: None, loss: None }; n];
        self.next_issue = 0;
    }

    /// Keeps the best `n` of the finished rung; ties go to the earlier trial.
    fn halve(&mut self) {
        let n = self.bracket().rungs[self.rung + 1].n as usize;
        let mut order: Vec<usize> = (0..self.trials.len()).collect();
        order.sort_by(|&a, &b| {
            let (la, lb) = (self.trials[a].loss.unwrap_or(f64::INFINITY), self.trials[b].loss.unwrap_or(f64::INFINITY));
            la.total_cmp(&lb)
        });
        let keep: Vec<Trial> = order
            .into_iter()
            .take(n)
            .map(|i| Trial { solution: self.trials[i].solution.clone(), loss: None })
            .collect();
        self.trials = keep;
        self.rung += 1;
        self.next_issue = 0;
    }

    fn sample<R: Rng + ?Sized>(&mut self, space: &SearchSpace, rng: &mut R) -> Solution {
        let tpe = self.config.tpe;
        if rng.random::<f64>() >= tpe.random_fraction {
            // Largest budget with enough observations for a model.
            let model = self
                .observations
                .iter()
                .rev()
                .find_map(|(_, obs)| TpeModel::fit(&self.encoding, obs, &tpe));
            if let Some(model) = model {
                self.model_proposals += 1;
                return self.encoding.decode(&model.propose(&tpe, rng));
            }
        }
        self.random_proposals += 1;
        sample_solution(space, rng)
    }
}

/// Next configuration and budget under BOHB, after taking in every result
/// appended to `history` since the previous call. `None` while results of
/// the current rung are still outstanding.
pub fn bohb_next<R: Rng + ?Sized>(
    space: &SearchSpace,
    history: &OptimizationHistory,
    state: &mut BohbState,
    rng: &mut R,
) -> Option<Proposal> {
    state.sync(history);
    if state.started == 0 {
        state.start_bracket();
    }
    if state.next_issue == state.trials.len() {
        if !state.outstanding.is_empty() {
            return None;
        }
        if state.rung + 1 < state.bracket().rungs.len() {
            state.halve();
        } else {
            state.start_bracket();
        }
    }
    let i = state.next_issue;
    if state.trials[i].solution.is_none() {
        let s = state.sample(space, rng);
        state.trials[i].solution = Some(s);
    }
    state.next_issue += 1;
    state.outstanding.push(i);
    Some(Proposal {
        solution: state.trials[i].solution.clone().expect("solution drawn"),
        budget: state.budget(),
    })
}
