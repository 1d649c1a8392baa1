//! A cheap, budget-faithful objective for comparing search strategies
//! without running any generated code.
//!
//! The loss is a sum of per-stage offsets and quadratic bowls over the
//! hyperparameters. An observation at budget fraction `f` adds Gaussian noise
//! with standard deviation `noise / sqrt(f)`, so low-fidelity runs rank
//! configurations roughly right and full runs rank them well.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::bohb::BohbConfig;
use super::budget::Budget;
use super::driver::{prefix_at_cost, rank_against_samples, run_search, select_best, SearchError, SearchLimits, Strategy, StrategyKind};
use crate::task::{
    sample_solution, CandidateMethod, Direction, HistoryHeader, HistoryWriter, MetricSpec, Modality,
    ModuleKind, ModuleStage, OptimizationHistory, OptimizationRecord, OutputFormat, RecordStatus,
    Scale, SearchSpace, Solution, TaskCategory, TaskClassification, HyperparameterSpec,
};

const OFFSETS: [(ModuleKind, &[(&str, f64)]); 3] = [
    (ModuleKind::DataPreparation, &[("standardize", 0.0), ("raw", 0.15)]),
    (ModuleKind::Modeling, &[("mlp", 0.0), ("linear", 0.25), ("tree", 0.4)]),
    (ModuleKind::PostProcessing, &[("identity", 0.0)]),
];

pub fn quadratic_space() -> SearchSpace {
    SearchSpace {
        classification: TaskClassification {
            modality: Modality::Tabular,
            category: TaskCategory::SingleOutputRegression,
            output_format: OutputFormat::NotApplicable,
        },
        stages: OFFSETS
            .iter()
            .map(|(kind, options)| ModuleStage {
                kind: *kind,
                candidates: options
                    .iter()
                    .map(|(id, _)| CandidateMethod {
                        id: (*id).to_string(),
                        kind: *kind,
                        description: format!("{id} {}", kind.as_str()),
                    })
                    .collect(),
            })
            .collect(),
        hyperparameters: vec![
            HyperparameterSpec::real("x", Scale::Linear, -1.0, 1.0),
            HyperparameterSpec::real("learning_rate", Scale::Log, 1e-4, 1e-1),
            HyperparameterSpec::integer("width", Scale::Log, 8, 512),
        ],
    }
}

/// Noise-free loss; lower is better. The optimum is 0.
pub fn true_loss(solution: &Solution) -> f64 {
    let offset: f64 = OFFSETS
        .iter()
        .map(|(kind, options)| {
            let chosen = solution.choice(*kind).unwrap_or_default();
            options.iter().find(|(id, _)| *id == chosen).map_or(1.0, |(_, o)| *o)
        })
        .sum();
    let hp = |name: &str| solution.hyperparameters.get(name).and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
    let x = hp("x") - 0.35;
    let lr = (hp("learning_rate").log10() + 2.5) / 1.5;
    let width = (hp("width").log2() - 7.0) / 3.0;
    offset + x * x + 0.5 * lr * lr + 0.25 * width * width
}

#[derive(Debug, Clone, Copy)]
pub struct NoisyQuadratic {
    /// Standard deviation of the noise at the full budget.
    pub noise: f64,
}

impl NoisyQuadratic {
    pub fn observe(&self, solution: &Solution, budget: &Budget, rng: &mut ChaCha8Rng) -> f64 {
        let sd = self.noise / budget.fraction_f64().sqrt();
        true_loss(solution) + Normal::new(0.0, sd).expect("finite sd").sample(rng)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategyComparison {
    pub cost: u64,
    pub samples: usize,
    pub bohb_ranks: Vec<usize>,
    pub random_ranks: Vec<usize>,
}

impl StrategyComparison {
    pub fn bohb(&self) -> (f64, f64) {
        mean_sd(&self.bohb_ranks)
    }

    pub fn random(&self) -> (f64, f64) {
        mean_sd(&self.random_ranks)
    }
}

/// Mean and sample standard deviation (n - 1 denominator).
pub fn mean_sd(values: &[usize]) -> (f64, f64) {
    let xs: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    crate::util::mean_std(&xs)
}

fn run_strategy(
    kind: StrategyKind,
    objective: NoisyQuadratic,
    cost: u64,
    seed: u64,
) -> Result<OptimizationHistory, SearchError> {
    let space = quadratic_space();
    let dir = tempfile::tempdir().map_err(|e| SearchError::Infrastructure(e.to_string()))?;
    let header = HistoryHeader {
        metric: MetricSpec { name: "loss".into(), direction: Direction::Minimize },
        strategy: kind.as_str().into(),
        seed,
        config_digest: String::new(),
    };
    let writer = HistoryWriter::create(&dir.path().join("history.jsonl"), header)?;
    let mut strategy = Strategy::new(kind, BohbConfig::epochs(30.0), &space, &writer.snapshot());
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6f697365);
    let mut f = |s: &Solution, b: &Budget| {
        Ok(OptimizationRecord {
            solution: s.clone(),
            score: Some(objective.observe(s, b, &mut noise_rng)),
            budget: *b,
            wall_time: 0.0,
            status: RecordStatus::Evaluated,
        })
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_search(&space, &mut strategy, &mut f, &SearchLimits::cost(cost), &writer, &mut rng)?;
    Ok(writer.snapshot())
}

/// Runs BOHB and random search for `cost` full evaluations on each seed and
/// ranks the true loss of each incumbent among `samples` random
/// configurations drawn for that seed.
pub fn compare_strategies(
    objective: NoisyQuadratic,
    seeds: impl IntoIterator<Item = u64>,
    cost: u64,
    samples: usize,
) -> Result<StrategyComparison, SearchError> {
    let space = quadratic_space();
    let mut out = StrategyComparison { cost, samples, bohb_ranks: vec![], random_ranks: vec![] };
    for seed in seeds {
        let mut sample_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1 << 32));
        let reference: Vec<f64> = (0..samples).map(|_| true_loss(&sample_solution(&space, &mut sample_rng))).collect();
        for kind in [StrategyKind::Bohb, StrategyKind::Random] {
            let history = run_strategy(kind, objective, cost, seed)?;
            let within = prefix_at_cost(&history, cost);
            let (_, best) = select_best(&within).ok_or_else(|| SearchError::Protocol("no evaluated record".into()))?;
            let rank = rank_against_samples(true_loss(&best.solution), &reference, Direction::Minimize);
            match kind {
                StrategyKind::Bohb => out.bohb_ranks.push(rank),
                StrategyKind::Random => out.random_ranks.push(rank),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::validate_search_space;

    #[test]
    fn space_is_valid_and_optimum_is_zero() {
        let space = quadratic_space();
        assert!(validate_search_space(&space).is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = sample_solution(&space, &mut rng);
        s.choices.insert(ModuleKind::DataPreparation, "standardize".into());
        s.choices.insert(ModuleKind::Modeling, "mlp".into());
        s.hyperparameters.insert("x".into(), crate::task::ParamValue::Real(0.35));
        s.hyperparameters.insert("learning_rate".into(), crate::task::ParamValue::Real(10f64.powf(-2.5)));
        s.hyperparameters.insert("width".into(), crate::task::ParamValue::Int(128));
        assert!(true_loss(&s).abs() < 1e-12);
    }

    #[test]
    fn noise_shrinks_with_budget() {
        let space = quadratic_space();
        let s = sample_solution(&space, &mut ChaCha8Rng::seed_from_u64(3));
        let obj = NoisyQuadratic { noise: 0.1 };
        let spread = |b: Budget| {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let xs: Vec<f64> = (0..2000).map(|_| obj.observe(&s, &b, &mut rng) - true_loss(&s)).collect();
            (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
        };
        let low = spread(Budget::fraction_of(1, 9, 30.0, crate::search::BudgetUnit::Epochs));
        let full = spread(Budget::full(30.0, crate::search::BudgetUnit::Epochs));
        assert!((low / full - 3.0).abs() < 0.3, "{low} {full}");
    }

    #[test]
    fn sample_sd_uses_n_minus_one() {
        let (m, sd) = mean_sd(&[1, 2, 3, 4]);
        assert_eq!(m, 2.5);
        assert!((sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}

