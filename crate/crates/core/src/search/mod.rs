//! Search over module pathways and hyperparameters: random search, BOHB
//! (Hyperband brackets with a Parzen density sampler), the cost ledger, and
//! the end-to-end driver.

mod benchmark;
mod bohb;
mod budget;
mod driver;
mod hyperband;
mod pipeline;
mod tpe;

pub use benchmark::{compare_strategies, mean_sd, quadratic_space, true_loss, NoisyQuadratic, StrategyComparison};
pub use bohb::{bohb_next, BohbConfig, BohbState, Proposal};
pub use budget::{Budget, BudgetUnit, CostLedger};
pub use driver::{
    prefix_at_cost, random_search_next, rank_against_samples, run_search, select_best,
    Objective, SearchError, SearchLimits, StopReason, Strategy, StrategyKind,
};
pub use hyperband::{hyperband_ladder, s_max_for, Bracket, Rung};
pub use pipeline::{
    budget_scale, evaluate_solution, generate_programs, run_text_to_ml, GenerateOptions, GenerateOutcome, BestProgram, EvaluationRequest, PipelineContext,
    PipelineError, RunOptions, RunOutcome, ZcOutcome, ATTEMPT_LOG_FILE, DEFAULT_MAX_EPOCHS, FP_LOG_FILE,
    DEFAULT_SYNTHETIC_PROGRAMS, HISTORY_FILE,
};
pub use tpe::{Encoding, Kde, TpeConfig, TpeModel};
