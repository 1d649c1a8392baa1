use num_rational::Ratio;
use serde::{Deserialize, Serialize};

/// One successive-halving stage: `n` configurations at `fraction` of the
/// maximum budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rung {
    pub n: u64,
    pub fraction: Ratio<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bracket {
    pub s: u32,
    pub rungs: Vec<Rung>,
}

impl Bracket {
    /// Cost in full evaluations: Σ nᵢ·bᵢ/b_max.
    pub fn cost(&self) -> Ratio<u64> {
        self.rungs
            .iter()
            .map(|r| r.fraction * Ratio::from_integer(r.n))
            .fold(Ratio::from_integer(0), |a, b| a + b)
    }
}

/// Hyperband brackets for halving rate `eta` and `s_max + 1` budget levels
/// (`b_max / eta^s_max` up to `b_max`), most aggressive bracket first.
///
/// Bracket `s` starts `floor((s_max + 1) / (s + 1)) * eta^s` configurations
/// at `eta^-s` of the maximum budget; each halving keeps the top
/// `ceil(n / eta)`.
pub fn hyperband_ladder(eta: u64, s_max: u32) -> Vec<Bracket> {
    assert!(eta >= 2, "halving rate must be at least 2");
    (0..=s_max)
        .rev()
        .map(|s| {
            let mut n = (s_max as u64 + 1) / (s as u64 + 1) * eta.pow(s);
            let rungs = (0..=s)
                .map(|i| {
                    let rung = Rung {
                        n,
                        fraction: Ratio::new(1, eta.pow(s - i)),
                    };
                    n = n.div_ceil(eta);
                    rung
                })
                .collect();
            Bracket { s, rungs }
        })
        .collect()
}

/// Largest `s` with `b_max / eta^s >= b_min`.
pub fn s_max_for(max_budget: f64, min_budget: f64, eta: u64) -> u32 {
    assert!(min_budget > 0.0 && min_budget <= max_budget);
    let mut s = 0;
    while max_budget / (eta as f64).powi(s as i32 + 1) >= min_budget * (1.0 - 1e-12) {
        s += 1;
    }
    s
}
