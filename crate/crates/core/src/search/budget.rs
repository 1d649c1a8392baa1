use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetUnit {
    Epochs,
    /// Fraction of the training set (tabular tasks have no epochs).
    DatasetFraction,
    EvaluationCost,
}

/// Fidelity of one evaluation, kept as an exact fraction of the maximum
/// budget so ledger sums are exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub fraction: Ratio<u64>,
    pub max: f64,
    pub unit: BudgetUnit,
}

impl Budget {
    pub fn full(max: f64, unit: BudgetUnit) -> Self {
        Self {
            fraction: Ratio::from_integer(1),
            max,
            unit,
        }
    }

    /// `numer / denom` of `max`. Panics unless `0 < numer <= denom`.
    pub fn fraction_of(numer: u64, denom: u64, max: f64, unit: BudgetUnit) -> Self {
        assert!(numer > 0 && numer <= denom, "budget fraction must lie in (0, 1]");
        Self {
            fraction: Ratio::new(numer, denom),
            max,
            unit,
        }
    }

    pub fn value(&self) -> f64 {
        self.max * (*self.fraction.numer() as f64) / (*self.fraction.denom() as f64)
    }

    pub fn fraction_f64(&self) -> f64 {
        *self.fraction.numer() as f64 / *self.fraction.denom() as f64
    }

    pub fn is_full(&self) -> bool {
        self.fraction == Ratio::from_integer(1)
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ({} of max)", self.value(), self.fraction)
    }
}

/// Running cost in full-evaluation units: each evaluation is charged its
/// budget divided by the maximum budget.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostLedger {
    charges: Vec<Ratio<u64>>,
    total: Ratio<u64>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, budget: &Budget) {
        self.charges.push(budget.fraction);
        self.total += budget.fraction;
    }

    pub fn total(&self) -> Ratio<u64> {
        self.total
    }

    pub fn total_f64(&self) -> f64 {
        *self.total.numer() as f64 / *self.total.denom() as f64
    }

    pub fn charges(&self) -> &[Ratio<u64>] {
        &self.charges
    }

    /// Number of leading records whose cumulative cost stays within `limit`
    /// full evaluations.
    pub fn prefix_within(&self, limit: u64) -> usize {
        let limit = Ratio::from_integer(limit);
        let mut acc = Ratio::from_integer(0);
        let mut n = 0;
        for c in &self.charges {
            acc += *c;
            if acc > limit {
                break;
            }
            n += 1;
        }
        n
    }

    pub fn from_budgets<'a>(budgets: impl IntoIterator<Item = &'a Budget>) -> Self {
        let mut ledger = Self::new();
        for b in budgets {
            ledger.charge(b);
        }
        ledger
    }
}
