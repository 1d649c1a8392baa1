//! Tree-structured Parzen density model over encoded solutions.
//!
//! Every solution maps to a vector: stage choices and categorical
//! hyperparameters become category indices, numeric hyperparameters a
//! coordinate in [0, 1] (in the log domain for log scales). Two product
//! kernel densities are fitted on the best and the remaining observations;
//! proposals maximise their ratio.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::task::{
    HyperparameterSpec, ModuleKind, ParamDomain, ParamKind, ParamValue, Scale, SearchSpace,
    Solution,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    pub random_fraction: f64,
    pub top_n_percent: usize,
    pub num_samples: usize,
    pub bandwidth_factor: f64,
    pub min_bandwidth: f64,
    /// Observations needed before a model is fitted; `None` means d + 1.
    pub min_points_in_model: Option<usize>,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            random_fraction: 1.0 / 3.0,
            top_n_percent: 15,
            num_samples: 64,
            bandwidth_factor: 3.0,
            min_bandwidth: 1e-3,
            min_points_in_model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Dim {
    Stage { kind: ModuleKind, ids: Vec<String> },
    Choice { name: String, choices: Vec<String> },
    Numeric { spec: HyperparameterSpec, lo: f64, hi: f64 },
}

impl Dim {
    fn levels(&self) -> Option<usize> {
        match self {
            Dim::Stage { ids, .. } => Some(ids.len()),
            Dim::Choice { choices, .. } => Some(choices.len()),
            Dim::Numeric { .. } => None,
        }
    }
}

/// Bijection between solutions of one space and vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    dims: Vec<Dim>,
}

impl Encoding {
    pub fn new(space: &SearchSpace) -> Self {
        let mut dims: Vec<Dim> = space
            .stages
            .iter()
            .filter(|s| !s.candidates.is_empty())
            .map(|s| Dim::Stage {
                kind: s.kind,
                ids: s.candidates.iter().map(|c| c.id.clone()).collect(),
            })
            .collect();
        for spec in &space.hyperparameters {
            dims.push(match &spec.domain {
                ParamDomain::Choices { choices } => Dim::Choice {
                    name: spec.name.clone(),
                    choices: choices.clone(),
                },
                ParamDomain::Range { lower, upper } => {
                    let (lo, hi) = match spec.scale {
                        Scale::Log => (lower.ln(), upper.ln()),
                        Scale::Linear => (*lower, *upper),
                    };
                    Dim::Numeric { spec: spec.clone(), lo, hi }
                }
            });
        }
        Self { dims }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// `None` when the solution names something outside the space.
    pub fn encode(&self, solution: &Solution) -> Option<Vec<f64>> {
        self.dims
            .iter()
            .map(|d| match d {
                Dim::Stage { kind, ids } => {
                    let id = solution.choice(*kind)?;
                    ids.iter().position(|x| x == id).map(|i| i as f64)
                }
                Dim::Choice { name, choices } => match solution.hyperparameters.get(name)? {
                    ParamValue::Choice(c) => choices.iter().position(|x| x == c).map(|i| i as f64),
                    _ => None,
                },
                Dim::Numeric { spec, lo, hi } => {
                    let v = solution.hyperparameters.get(&spec.name)?.as_f64()?;
                    let v = if spec.scale == Scale::Log { v.ln() } else { v };
                    Some(if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 })
                }
            })
            .collect()
    }

    pub fn decode(&self, vector: &[f64]) -> Solution {
        let mut solution = Solution {
            choices: Default::default(),
            hyperparameters: Default::default(),
        };
        for (d, &x) in self.dims.iter().zip(vector) {
            match d {
                Dim::Stage { kind, ids } => {
                    let i = (x.round().max(0.0) as usize).min(ids.len() - 1);
                    solution.choices.insert(*kind, ids[i].clone());
                }
                Dim::Choice { name, choices } => {
                    let i = (x.round().max(0.0) as usize).min(choices.len() - 1);
                    solution.hyperparameters.insert(name.clone(), ParamValue::Choice(choices[i].clone()));
                }
                Dim::Numeric { spec, lo, hi } => {
                    let t = lo + x.clamp(0.0, 1.0) * (hi - lo);
                    let v = if spec.scale == Scale::Log { t.exp() } else { t };
                    let ParamDomain::Range { lower, upper } = spec.domain else { unreachable!() };
                    let value = match spec.kind {
                        ParamKind::Integer => {
                            let (min, max) = (lower.ceil() as i64, upper.floor() as i64);
                            ParamValue::Int((v.round() as i64).clamp(min, max.max(min)))
                        }
                        _ => ParamValue::Real(v.clamp(lower, upper)),
                    };
                    solution.hyperparameters.insert(spec.name.clone(), value);
                }
            }
        }
        solution
    }
}

/// Product kernel density: Gaussian kernels on numeric coordinates,
/// Aitchison-Aitken kernels on categories, normal-reference bandwidths.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    data: Vec<Vec<f64>>,
    bandwidth: Vec<f64>,
    levels: Vec<Option<usize>>,
}

impl Kde {
    fn fit(data: Vec<Vec<f64>>, levels: Vec<Option<usize>>, min_bandwidth: f64) -> Self {
        let n = data.len() as f64;
        let d = levels.len();
        let bandwidth = (0..d)
            .map(|j| {
                let mean = data.iter().map(|x| x[j]).sum::<f64>() / n;
                let var = data.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
                let h = (1.06 * var.sqrt() * n.powf(-1.0 / (4.0 + d as f64))).max(min_bandwidth);
                match levels[j] {
                    // Beyond (c-1)/c the categorical kernel would favour
                    // the levels it did not observe.
                    Some(c) if c > 1 => h.min((c as f64 - 1.0) / c as f64),
                    Some(_) => 0.0,
                    None => h,
                }
            })
            .collect();
        Self { data, bandwidth, levels }
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        let total: f64 = self
            .data
            .iter()
            .map(|xi| {
                let mut k = 1.0;
                for (j, level) in self.levels.iter().enumerate() {
                    let h = self.bandwidth[j];
                    k *= match level {
                        None => {
                            let u = (x[j] - xi[j]) / h;
                            (-0.5 * u * u).exp() / (h * (2.0 * std::f64::consts::PI).sqrt())
                        }
                        Some(c) => {
                            if x[j] == xi[j] {
                                1.0 - h
                            } else if *c > 1 {
                                h / (*c as f64 - 1.0)
                            } else {
                                0.0
                            }
                        }
                    };
                }
                k
            })
            .sum();
        total / self.data.len() as f64
    }
}

/// Good and bad densities fitted on observations at one budget.
#[derive(Debug, Clone, PartialEq)]
pub struct TpeModel {
    good: Kde,
    bad: Kde,
}

impl TpeModel {
    /// Fits on (vector, loss) pairs, lower loss being better. `None` when
    /// there are too few observations for either density.
    pub fn fit(encoding: &Encoding, observations: &[(Vec<f64>, f64)], config: &TpeConfig) -> Option<Self> {
        let d = encoding.len();
        let min_points = config.min_points_in_model.unwrap_or(d + 1).max(1);
        let n = observations.len();
        if n < min_points {
            return None;
        }
        let n_good = min_points.max(config.top_n_percent * n / 100);
        let n_bad = min_points.max((100 - config.top_n_percent) * n / 100);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| observations[a].1.total_cmp(&observations[b].1));
        let pick = |idx: &[usize]| idx.iter().map(|&i| observations[i].0.clone()).collect::<Vec<_>>();
        let good = pick(&order[..n_good.min(n)]);
        let bad = pick(&order[n_good.min(n)..(n_good + n_bad).min(n)]);
        if good.len() <= d || bad.len() <= d {
            return None;
        }
        let levels: Vec<Option<usize>> = encoding.dims.iter().map(Dim::levels).collect();
        Some(Self {
            good: Kde::fit(good, levels.clone(), config.min_bandwidth),
            bad: Kde::fit(bad, levels, config.min_bandwidth),
        })
    }

    /// Draws `num_samples` candidates around good observations and returns
    /// the one with the smallest bad/good density ratio.
    pub fn propose<R: Rng + ?Sized>(&self, config: &TpeConfig, rng: &mut R) -> Vec<f64> {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..config.num_samples.max(1) {
            let datum = &self.good.data[rng.random_range(0..self.good.data.len())];
            let vector: Vec<f64> = datum
                .iter()
                .enumerate()
                .map(|(j, &m)| {
                    let bw = self.good.bandwidth[j].max(config.min_bandwidth);
                    match self.good.levels[j] {
                        None => truncated_normal(m, bw * config.bandwidth_factor, rng),
                        Some(c) => {
                            if rng.random::<f64>() < 1.0 - bw {
                                m
                            } else {
                                rng.random_range(0..c.max(1)) as f64
                            }
                        }
                    }
                })
                .collect();
            let ratio = self.bad.pdf(&vector).max(1e-32) / self.good.pdf(&vector).max(1e-32);
            if ratio.is_finite() && best.as_ref().is_none_or(|(r, _)| ratio < *r) {
                best = Some((ratio, vector));
            }
        }
        best.map(|(_, v)| v).unwrap_or_else(|| self.good.data[0].clone())
    }
}

/// Normal(m, sd) restricted to [0, 1], by rejection.
fn truncated_normal<R: Rng + ?Sized>(m: f64, sd: f64, rng: &mut R) -> f64 {
    for _ in 0..1000 {
        let z: f64 = StandardNormal.sample(rng);
        let x = m + sd * z;
        if (0.0..=1.0).contains(&x) {
            return x;
        }
    }
    rng.random::<f64>()
}
