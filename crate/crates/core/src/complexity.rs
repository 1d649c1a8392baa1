//! Expected number of generations per valid output.
//!
//! A generation is modelled as a chain of token steps: step `i` succeeds with
//! probability `p(i)` and any failure throws the whole output away. Producing
//! the output in one piece therefore costs `1 / prod p(i)` generations on
//! average, which grows exponentially in the output length. Producing it as
//! independently retried modules of at most `M` tokens costs a sum of
//! per-module waits, which grows linearly.
//!
//! Closed forms live next to a Monte-Carlo simulator so each can check the
//! other.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Total simulated generations allowed per run before it is cut short.
pub const DEFAULT_SAFETY_BOUND: u64 = 100_000_000;
pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_EPSILON: f64 = 0.9;
pub const DEFAULT_MODULE_TOKENS: usize = 2;
pub const DEFAULT_GAMMAS: [usize; 4] = [5, 10, 15, 20];

const CHUNK_TRIALS: u64 = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComplexityError {
    #[error("probability {value} at position {index} is outside (0, 1]")]
    Probability { index: usize, value: f64 },
    #[error("a chain needs at least one token")]
    EmptyChain,
    #[error("module size {m} must lie in 1..={gamma}")]
    ModuleSize { m: usize, gamma: usize },
    #[error("threshold {0} is outside (0, 1]")]
    Threshold(f64),
    #[error("at least one trial is required")]
    NoTrials,
    #[error("token counts must be strictly ascending and positive")]
    Grid,
    #[error("safety bound of {bound} generations reached before any trial finished")]
    SafetyBound { bound: u64 },
}

fn check_probability(index: usize, value: f64) -> Result<(), ComplexityError> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(ComplexityError::Probability { index, value })
    }
}

/// Per-position success probabilities of a single-piece generation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenChainSpec {
    probabilities: Vec<f64>,
}

impl TokenChainSpec {
    pub fn new(probabilities: Vec<f64>) -> Result<Self, ComplexityError> {
        if probabilities.is_empty() {
            return Err(ComplexityError::EmptyChain);
        }
        for (i, &p) in probabilities.iter().enumerate() {
            check_probability(i, p)?;
        }
        Ok(Self { probabilities })
    }

    pub fn uniform(epsilon: f64, gamma: usize) -> Result<Self, ComplexityError> {
        Self::new(vec![epsilon; gamma])
    }

    pub fn gamma(&self) -> usize {
        self.probabilities.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }
}

/// Probability that every token of the chain comes out right.
pub fn success_probability(spec: &TokenChainSpec) -> f64 {
    spec.probabilities.iter().product()
}

/// Number of positions whose success probability is below `threshold`.
pub fn token_level_complexity(spec: &TokenChainSpec, threshold: f64) -> Result<usize, ComplexityError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(ComplexityError::Threshold(threshold));
    }
    Ok(spec.probabilities.iter().filter(|&&p| p < threshold).count())
}

pub fn expected_generations_monolithic(epsilon: f64, gamma: usize) -> f64 {
    epsilon.powi(-(gamma as i32))
}

/// Upper bound for modular generation: `ceil(gamma / m)` modules, each no
/// harder than one of exactly `m` tokens.
pub fn expected_generations_modular(epsilon: f64, gamma: usize, m: usize) -> f64 {
    gamma.div_ceil(m) as f64 * epsilon.powi(-(m as i32))
}

/// Sharper single-piece estimate when only `xi` positions are hard: the
/// remaining positions are taken to be certain.
pub fn expected_generations_refined(epsilon: f64, xi: usize) -> f64 {
    epsilon.powi(-(xi as i32))
}

/// A program split into modules of the given token counts, every token
/// succeeding with probability `epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModularChainSpec {
    epsilon: f64,
    module_tokens: Vec<usize>,
}

impl ModularChainSpec {
    pub fn new(epsilon: f64, module_tokens: Vec<usize>) -> Result<Self, ComplexityError> {
        check_probability(0, epsilon)?;
        if module_tokens.is_empty() || module_tokens.contains(&0) {
            return Err(ComplexityError::EmptyChain);
        }
        Ok(Self { epsilon, module_tokens })
    }

    /// `gamma` tokens cut into modules of `m`, the last one taking the rest.
    pub fn even(epsilon: f64, gamma: usize, m: usize) -> Result<Self, ComplexityError> {
        if m == 0 || m > gamma {
            return Err(ComplexityError::ModuleSize { m, gamma });
        }
        let mut sizes = vec![m; gamma / m];
        if !gamma.is_multiple_of(m) {
            sizes.push(gamma % m);
        }
        Self::new(epsilon, sizes)
    }

    pub fn gamma(&self) -> usize {
        self.module_tokens.iter().sum()
    }

    pub fn max_module(&self) -> usize {
        self.module_tokens.iter().copied().max().unwrap_or(0)
    }

    pub fn modules(&self) -> usize {
        self.module_tokens.len()
    }

    /// Exact expectation: the sum of each module's geometric wait.
    pub fn expected_generations(&self) -> f64 {
        self.module_tokens.iter().map(|&z| expected_generations_monolithic(self.epsilon, z)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ChainSpec {
    Monolithic(TokenChainSpec),
    Modular(ModularChainSpec),
}

impl ChainSpec {
    pub fn closed_form(&self) -> f64 {
        match self {
            ChainSpec::Monolithic(spec) => 1.0 / success_probability(spec),
            ChainSpec::Modular(spec) => spec.expected_generations(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub trials: u64,
    pub seed: u64,
    pub safety_bound: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { trials: DEFAULT_TRIALS, seed: 0, safety_bound: DEFAULT_SAFETY_BOUND }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationResult {
    pub estimate: f64,
    pub trials: u64,
    pub std_error: f64,
    pub closed_form: f64,
    /// Set when the safety bound stopped the run early; `trials` then counts
    /// only the trials that finished.
    pub truncated: bool,
}

impl SimulationResult {
    /// Distance from the closed form in standard errors.
    pub fn z_score(&self) -> f64 {
        if self.std_error == 0.0 {
            if self.estimate == self.closed_form { 0.0 } else { f64::INFINITY }
        } else {
            (self.estimate - self.closed_form).abs() / self.std_error
        }
    }
}

/// Running count, mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        Moments { n, mean, m2 }
    }
}

/// Generations until one pass of the chain succeeds, or `None` once
/// `allowance` generations have been spent.
fn wait_for_success(probabilities: &[f64], rng: &mut ChaCha8Rng, allowance: &mut u64) -> Option<u64> {
    let mut count = 0;
    loop {
        if *allowance == 0 {
            return None;
        }
        *allowance -= 1;
        count += 1;
        if probabilities.iter().all(|&p| p >= 1.0 || rng.random::<f64>() < p) {
            return Some(count);
        }
    }
}

fn one_trial(spec: &ChainSpec, modules: &[Vec<f64>], rng: &mut ChaCha8Rng, allowance: &mut u64) -> Option<u64> {
    match spec {
        ChainSpec::Monolithic(chain) => wait_for_success(&chain.probabilities, rng, allowance),
        ChainSpec::Modular(_) => {
            let mut total = 0;
            for module in modules {
                total += wait_for_success(module, rng, allowance)?;
            }
            Some(total)
        }
    }
}

/// Monte-Carlo estimate of the expected generations per valid output.
///
/// Trials are split into fixed chunks, each with its own ChaCha stream, so
/// the estimate depends only on the seed and not on the thread count. Each
/// chunk gets an equal share of the safety bound; a chunk that spends its
/// share drops the trial in progress and the result is flagged truncated.
pub fn simulate(spec: &ChainSpec, config: &SimulationConfig) -> Result<SimulationResult, ComplexityError> {
    if config.trials == 0 {
        return Err(ComplexityError::NoTrials);
    }
    let modules: Vec<Vec<f64>> = match spec {
        ChainSpec::Monolithic(_) => Vec::new(),
        ChainSpec::Modular(m) => m.module_tokens.iter().map(|&z| vec![m.epsilon; z]).collect(),
    };
    let chunks = config.trials.div_ceil(CHUNK_TRIALS);
    let per_chunk: Vec<(Moments, bool)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(chunk);
            let trials = CHUNK_TRIALS.min(config.trials - chunk * CHUNK_TRIALS);
            let share = (config.safety_bound as u128 * trials as u128 / config.trials as u128) as u64;
            let mut allowance = share.max(1);
            let mut moments = Moments::default();
            for _ in 0..trials {
                match one_trial(spec, &modules, &mut rng, &mut allowance) {
                    Some(count) => moments.push(count as f64),
                    None => return (moments, true),
                }
            }
            (moments, false)
        })
        .collect();
    let truncated = per_chunk.iter().any(|(_, t)| *t);
    let moments = per_chunk.into_iter().fold(Moments::default(), |acc, (m, _)| acc.merge(m));
    if moments.n == 0 {
        return Err(ComplexityError::SafetyBound { bound: config.safety_bound });
    }
    let variance = if moments.n > 1 { moments.m2 / (moments.n - 1) as f64 } else { 0.0 };
    Ok(SimulationResult {
        estimate: moments.mean,
        trials: moments.n,
        std_error: (variance / moments.n as f64).sqrt(),
        closed_form: spec.closed_form(),
        truncated,
    })
}

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    LinearFit { slope, intercept, r_squared }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloRow {
    pub monolithic: SimulationResult,
    pub modular: SimulationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub gamma: usize,
    pub monolithic: f64,
    pub modular: f64,
    pub ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloRow>,
}

/// Fits of one column against the token count: the single-piece column on a
/// log scale, the modular column on a linear one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingFits {
    pub monolithic_log: LinearFit,
    pub modular: LinearFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub epsilon: f64,
    pub m: usize,
    pub rows: Vec<ScalingRow>,
    /// `-ln epsilon`, the slope of log E[G] for single-piece generation.
    pub expected_log_slope: f64,
    /// `epsilon^-m / m`, the asymptotic slope of the modular bound.
    pub expected_modular_slope: f64,
    pub closed_form_fits: ScalingFits,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo_fits: Option<ScalingFits>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
}

fn fits(gammas: &[f64], monolithic: &[f64], modular: &[f64]) -> ScalingFits {
    let logs: Vec<f64> = monolithic.iter().map(|v| v.ln()).collect();
    ScalingFits { monolithic_log: linear_fit(gammas, &logs), modular: linear_fit(gammas, modular) }
}

/// Closed-form table over `gammas`, optionally with Monte-Carlo columns.
///
/// The modular column is the `ceil(gamma / m) * epsilon^-m` bound. The
/// simulated modular chain splits `gamma` into modules of `m` tokens plus a
/// remainder, so its estimate is compared against that chain's own exact
/// expectation.
pub fn scaling_report(
    epsilon: f64,
    gammas: &[usize],
    m: usize,
    simulation: Option<SimulationConfig>,
) -> Result<ScalingReport, ComplexityError> {
    check_probability(0, epsilon)?;
    if gammas.is_empty() || gammas[0] == 0 || gammas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ComplexityError::Grid);
    }
    if m == 0 || m > gammas[0] {
        return Err(ComplexityError::ModuleSize { m, gamma: gammas[0] });
    }
    let mut rows = Vec::with_capacity(gammas.len());
    for (i, &gamma) in gammas.iter().enumerate() {
        let monolithic = expected_generations_monolithic(epsilon, gamma);
        let modular = expected_generations_modular(epsilon, gamma, m);
        let monte_carlo = match &simulation {
            None => None,
            Some(cfg) => {
                let seed = cfg.seed.wrapping_add(2 * i as u64);
                let mono = ChainSpec::Monolithic(TokenChainSpec::uniform(epsilon, gamma)?);
                let modu = ChainSpec::Modular(ModularChainSpec::even(epsilon, gamma, m)?);
                Some(MonteCarloRow {
                    monolithic: simulate(&mono, &SimulationConfig { seed, ..*cfg })?,
                    modular: simulate(&modu, &SimulationConfig { seed: seed + 1, ..*cfg })?,
                })
            }
        };
        rows.push(ScalingRow { gamma, monolithic, modular, ratio: monolithic / modular, monte_carlo });
    }
    let xs: Vec<f64> = gammas.iter().map(|&g| g as f64).collect();
    let column = |f: fn(&ScalingRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let closed_form_fits = fits(&xs, &column(|r| r.monolithic), &column(|r| r.modular));
    let monte_carlo_fits = simulation.map(|_| {
        fits(
            &xs,
            &column(|r| r.monte_carlo.expect("simulated").monolithic.estimate),
            &column(|r| r.monte_carlo.expect("simulated").modular.estimate),
        )
    });
    Ok(ScalingReport {
        epsilon,
        m,
        rows,
        expected_log_slope: -epsilon.ln(),
        expected_modular_slope: epsilon.powi(-(m as i32)) / m as f64,
        closed_form_fits,
        monte_carlo_fits,
        simulation,
    })
}

impl ScalingReport {
    /// Tab-separated table, numbers to two decimals. `preamble` lines are
    /// written first as `#` comments.
    pub fn to_tsv(&self, preamble: &[String]) -> String {
        let mut out = String::new();
        for line in preamble {
            out.push_str(&format!("# {line}\n"));
        }
        out.push_str(&format!("# epsilon={} m={}\n", self.epsilon, self.m));
        let mc = self.simulation.is_some();
        out.push_str("gamma\tmonolithic\tmodular\tratio");
        if mc {
            out.push_str("\tmc_monolithic\tse_monolithic\tmc_modular\tse_modular\tmodular_exact");
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{}\t{:.2}\t{:.2}\t{:.2}", row.gamma, row.monolithic, row.modular, row.ratio));
            if let Some(sim) = &row.monte_carlo {
                out.push_str(&format!(
                    "\t{:.2}\t{:.2e}\t{:.2}\t{:.2e}\t{:.2}",
                    sim.monolithic.estimate,
                    sim.monolithic.std_error,
                    sim.modular.estimate,
                    sim.modular.std_error,
                    sim.modular.closed_form
                ));
            }
            out.push('\n');
        }
        let f = &self.closed_form_fits;
        out.push_str(&format!(
            "# log-monolithic slope {:.4} (expected {:.4}); modular slope {:.4} (expected {:.4}), r2 {:.4}\n",
            f.monolithic_log.slope + 0.0, self.expected_log_slope + 0.0, f.modular.slope, self.expected_modular_slope, f.modular.r_squared
        ));
        if let Some(f) = &self.monte_carlo_fits {
            out.push_str(&format!(
                "# simulated: log-monolithic slope {:.4}; modular slope {:.4}, r2 {:.4}\n",
                f.monolithic_log.slope + 0.0, f.modular.slope, f.modular.r_squared
            ));
        }
        out
    }

    /// Whitespace-separated `gamma monolithic modular` columns for plotting.
    pub fn plot_data(&self) -> String {
        let mut out = String::from("gamma monolithic modular\n");
        for row in &self.rows {
            out.push_str(&format!("{} {:.6} {:.6}\n", row.gamma, row.monolithic, row.modular));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn success_probability_is_the_product() {
        assert_eq!(success_probability(&TokenChainSpec::uniform(1.0, 13).unwrap()), 1.0);
        let p = success_probability(&TokenChainSpec::uniform(0.9, 10).unwrap());
        assert!((p - 0.348_678_440_1).abs() < 1e-10);
        assert_eq!(success_probability(&TokenChainSpec::new(vec![0.5, 1.0, 0.5]).unwrap()), 0.25);
    }

    #[test]
    fn token_level_complexity_counts_hard_positions() {
        let easy = TokenChainSpec::uniform(1.0, 4).unwrap();
        assert_eq!(token_level_complexity(&easy, 1.0).unwrap(), 0);
        let mixed = TokenChainSpec::new(vec![0.3, 0.9, 0.95]).unwrap();
        assert_eq!(token_level_complexity(&mixed, 0.9).unwrap(), 1);
        let uniform = TokenChainSpec::uniform(0.9, 7).unwrap();
        assert_eq!(token_level_complexity(&uniform, 1.0).unwrap(), 7);
        assert_eq!(token_level_complexity(&uniform, 0.0), Err(ComplexityError::Threshold(0.0)));
    }

    #[test]
    fn closed_forms() {
        assert_eq!(expected_generations_monolithic(1.0, 50), 1.0);
        assert!((expected_generations_monolithic(0.9, 10) - 2.867_971_990_8).abs() < 1e-9);
        assert_eq!(expected_generations_monolithic(0.5, 20), 1_048_576.0);
        assert_eq!(expected_generations_modular(1.0, 10, 3), 4.0);
        assert!((expected_generations_modular(0.9, 10, 2) - 5.0 / 0.81).abs() < 1e-12);
        assert_eq!(expected_generations_modular(0.8, 5, 5), expected_generations_monolithic(0.8, 5));
        assert_eq!(expected_generations_refined(0.5, 3), 8.0);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert_eq!(TokenChainSpec::new(vec![]), Err(ComplexityError::EmptyChain));
        assert_eq!(TokenChainSpec::new(vec![0.5, 0.0]), Err(ComplexityError::Probability { index: 1, value: 0.0 }));
        assert!(TokenChainSpec::new(vec![1.5]).is_err());
        assert_eq!(ModularChainSpec::even(0.9, 3, 4), Err(ComplexityError::ModuleSize { m: 4, gamma: 3 }));
        assert_eq!(scaling_report(0.9, &[10, 5], 2, None), Err(ComplexityError::Grid));
        let one = ChainSpec::Monolithic(TokenChainSpec::uniform(0.9, 1).unwrap());
        assert_eq!(simulate(&one, &SimulationConfig { trials: 0, ..Default::default() }), Err(ComplexityError::NoTrials));
    }

    #[test]
    fn even_split_keeps_the_remainder() {
        let spec = ModularChainSpec::even(0.9, 7, 3).unwrap();
        assert_eq!(spec.module_tokens, [3, 3, 1]);
        assert_eq!((spec.gamma(), spec.max_module(), spec.modules()), (7, 3, 3));
    }

    #[test]
    fn certain_tokens_cost_one_generation_per_piece() {
        let cfg = SimulationConfig { trials: 500, ..Default::default() };
        let mono = simulate(&ChainSpec::Monolithic(TokenChainSpec::uniform(1.0, 9).unwrap()), &cfg).unwrap();
        assert_eq!((mono.estimate, mono.std_error, mono.trials), (1.0, 0.0, 500));
        let modu = simulate(&ChainSpec::Modular(ModularChainSpec::even(1.0, 9, 2).unwrap()), &cfg).unwrap();
        assert_eq!((modu.estimate, modu.std_error), (5.0, 0.0));
    }

    #[test]
    fn simulation_matches_closed_forms() {
        let cfg = SimulationConfig { trials: 100_000, seed: 5, ..Default::default() };
        let mono = simulate(&ChainSpec::Monolithic(TokenChainSpec::uniform(0.9, 10).unwrap()), &cfg).unwrap();
        assert!(mono.z_score() < 3.0, "{mono:?}");
        let modu = simulate(&ChainSpec::Modular(ModularChainSpec::even(0.9, 10, 2).unwrap()), &cfg).unwrap();
        assert!((modu.closed_form - 6.172_839_506).abs() < 1e-8);
        assert!(modu.z_score() < 3.0, "{modu:?}");
        let mixed = ChainSpec::Monolithic(TokenChainSpec::new(vec![0.5, 1.0, 0.5]).unwrap());
        let est = simulate(&mixed, &cfg).unwrap();
        assert_eq!(est.closed_form, 4.0);
        assert!(est.z_score() < 3.0, "{est:?}");
    }

    #[test]
    fn simulation_is_reproducible_from_the_seed() {
        let spec = ChainSpec::Monolithic(TokenChainSpec::uniform(0.8, 6).unwrap());
        let cfg = SimulationConfig { trials: 5000, seed: 42, ..Default::default() };
        let a = simulate(&spec, &cfg).unwrap();
        let b = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| simulate(&spec, &cfg).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, simulate(&spec, &SimulationConfig { seed: 43, ..cfg }).unwrap());
    }

    #[test]
    fn safety_bound_flags_partial_estimates() {
        let spec = ChainSpec::Monolithic(TokenChainSpec::uniform(0.5, 20).unwrap());
        let err = simulate(&spec, &SimulationConfig { trials: 10, seed: 1, safety_bound: 1000 }).unwrap_err();
        assert_eq!(err, ComplexityError::SafetyBound { bound: 1000 });
        let spec = ChainSpec::Monolithic(TokenChainSpec::uniform(0.7, 4).unwrap());
        let partial = simulate(&spec, &SimulationConfig { trials: 10_000, seed: 1, safety_bound: 20_000 }).unwrap();
        assert!(partial.truncated);
        assert!(partial.trials < 10_000 && partial.trials > 1000);
        assert!(partial.std_error.is_finite());
    }

    #[test]
    fn moments_merge_matches_one_pass() {
        let xs: Vec<f64> = (0..37).map(|i| ((i * 7919) % 31) as f64).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let (mut a, mut b) = (Moments::default(), Moments::default());
        xs[..11].iter().for_each(|&x| a.push(x));
        xs[11..].iter().for_each(|&x| b.push(x));
        let merged = a.merge(b);
        assert_eq!(merged.n, whole.n);
        assert!((merged.mean - whole.mean).abs() < 1e-12);
        assert!((merged.m2 - whole.m2).abs() < 1e-9);
    }

    #[test]
    fn default_grid_table() {
        let report = scaling_report(0.9, &DEFAULT_GAMMAS, 2, None).unwrap();
        let mono: Vec<String> = report.rows.iter().map(|r| format!("{:.2}", r.monolithic)).collect();
        let modu: Vec<String> = report.rows.iter().map(|r| format!("{:.2}", r.modular)).collect();
        assert_eq!(mono, ["1.69", "2.87", "4.86", "8.23"]);
        assert_eq!(modu, ["3.70", "6.17", "9.88", "12.35"]);
        let fit = report.closed_form_fits;
        assert!((fit.monolithic_log.slope - 0.9f64.ln().abs()).abs() < 1e-12);
        assert!((fit.modular.slope / report.expected_modular_slope - 1.0).abs() < 0.05);
        assert!(fit.modular.r_squared > 0.99);
    }

    #[test]
    fn certain_tokens_give_a_trivial_table() {
        let report = scaling_report(1.0, &[2, 4, 6], 2, None).unwrap();
        for row in &report.rows {
            assert_eq!(row.monolithic, 1.0);
            assert_eq!(row.modular, row.gamma.div_ceil(2) as f64);
            assert_eq!(row.ratio, 1.0 / row.modular);
        }
    }

    #[test]
    fn tsv_has_one_line_per_gamma() {
        let cfg = SimulationConfig { trials: 200, seed: 3, ..Default::default() };
        let report = scaling_report(0.9, &[4, 8], 2, Some(cfg)).unwrap();
        let tsv = report.to_tsv(&["seed=3".into()]);
        assert!(tsv.starts_with("# seed=3\n"));
        let data: Vec<&str> = tsv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 3);
        assert_eq!(data[0].split('\t').count(), 9);
        assert!(data[1].starts_with("4\t1.52\t2.47\t"));
        assert_eq!(report.plot_data().lines().count(), 3);
    }

    proptest! {
        #[test]
        fn expectations_are_monotone(eps in 0.5f64..1.0, de in 0.0f64..0.5, gamma in 1usize..30, m in 1usize..6) {
            let m = m.min(gamma);
            let hi = (eps + de).min(1.0);
            prop_assert!(expected_generations_monolithic(hi, gamma) <= expected_generations_monolithic(eps, gamma));
            prop_assert!(expected_generations_modular(hi, gamma, m) <= expected_generations_modular(eps, gamma, m));
            prop_assert!(expected_generations_monolithic(eps, gamma) <= expected_generations_monolithic(eps, gamma + 1));
            prop_assert!(expected_generations_modular(eps, gamma, m) <= expected_generations_modular(eps, gamma + 1, m));
        }

        #[test]
        fn ratio_grows_over_the_default_grid(eps in 0.5f64..=0.9) {
            let report = scaling_report(eps, &DEFAULT_GAMMAS, DEFAULT_MODULE_TOKENS, None).unwrap();
            for w in report.rows.windows(2) {
                prop_assert!(w[1].ratio > w[0].ratio);
            }
        }

        #[test]
        fn complexity_is_bounded_by_length(ps in prop::collection::vec(0.01f64..=1.0, 1..40), t in 0.01f64..=1.0) {
            let spec = TokenChainSpec::new(ps.clone()).unwrap();
            let xi = token_level_complexity(&spec, t).unwrap();
            prop_assert!(xi <= spec.gamma());
            let below = TokenChainSpec::uniform(t * 0.99, ps.len()).unwrap();
            prop_assert_eq!(token_level_complexity(&below, t).unwrap(), ps.len());
            // Hard positions alone bound the success probability.
            prop_assert!(success_probability(&spec) <= t.powi(xi as i32) + 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(4))]

        #[test]
        fn simulation_agrees_with_closed_forms(eps in 0.5f64..1.0, gamma in 1usize..30, m in 1usize..6, seed in any::<u64>()) {
            // Keep the expected cost of a trial small enough for a unit test.
            let gamma = gamma.min((30f64.ln() / -eps.ln()).floor().max(1.0) as usize);
            let m = m.min(gamma);
            let cfg = SimulationConfig { trials: 100_000, seed, ..Default::default() };
            let mono = simulate(&ChainSpec::Monolithic(TokenChainSpec::uniform(eps, gamma).unwrap()), &cfg).unwrap();
            prop_assert!(mono.z_score() < 3.5, "{:?}", mono);
            let modu = simulate(&ChainSpec::Modular(ModularChainSpec::even(eps, gamma, m).unwrap()), &cfg).unwrap();
            prop_assert!(modu.z_score() < 3.5, "{:?}", modu);
            prop_assert!(modu.closed_form <= expected_generations_modular(eps, gamma, m) + 1e-9);
        }
    }
}
