use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SplitSpec;
use crate::seed::rng_from;

/// A budget multiplier resolved against a split: `⌊m·|test|⌋` nodes capped
/// at the query pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub multiplier: f64,
    pub realized_nodes: usize,
    pub realized_fraction: f64,
}

impl BudgetSpec {
    pub fn resolve(multiplier: f64, splits: &SplitSpec, num_nodes: usize) -> Result<Self> {
        if !(multiplier > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "budget multiplier must be positive, got {multiplier}"
            )));
        }
        let raw = (multiplier * splits.test.len() as f64).floor() as usize;
        if raw == 0 {
            return Err(Error::DegenerateBudget {
                multiplier,
                test_size: splits.test.len(),
            });
        }
        let realized_nodes = raw.min(splits.query.len());
        Ok(Self {
            multiplier,
            realized_nodes,
            realized_fraction: realized_nodes as f64 / num_nodes as f64,
        })
    }
}

/// Uniform sample without replacement from the query split, returned in
/// sampling order.
pub fn sample_budget_nodes(splits: &SplitSpec, budget: &BudgetSpec, seed: u64) -> Vec<usize> {
    let pool = &splits.query;
    let k = budget.realized_nodes.min(pool.len());
    let mut rng = rng_from(seed);
    sample(&mut rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn splits(test: usize, query: usize) -> SplitSpec {
        SplitSpec {
            train: vec![],
            val: vec![],
            test: (0..test).collect(),
            query: (test..test + query).collect(),
        }
    }

    #[test]
    fn quarter_of_hundred() {
        let s = splits(100, 200);
        let b = BudgetSpec::resolve(0.25, &s, 300).unwrap();
        assert_eq!(b.realized_nodes, 25);
        let nodes = sample_budget_nodes(&s, &b, 3);
        assert_eq!(nodes.len(), 25);
        assert!(nodes.iter().all(|&i| (100..300).contains(&i)));
        assert_eq!(nodes, sample_budget_nodes(&s, &b, 3));
    }

    #[test]
    fn capped_at_pool() {
        let s = splits(100, 150);
        let b = BudgetSpec::resolve(2.0, &s, 250).unwrap();
        assert_eq!(b.realized_nodes, 150);
        let mut nodes = sample_budget_nodes(&s, &b, 0);
        nodes.sort_unstable();
        assert_eq!(nodes, s.query);
    }

    #[test]
    fn degenerate_budget() {
        let s = splits(10, 10);
        assert!(matches!(
            BudgetSpec::resolve(0.05, &s, 20),
            Err(Error::DegenerateBudget { .. })
        ));
    }
}
