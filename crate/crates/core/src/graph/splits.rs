use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Four disjoint node-index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub query: Vec<usize>,
}

impl SplitSpec {
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        if self.test.is_empty() || self.query.is_empty() {
            return Err(Error::InvalidArgument(
                "test and query splits must be non-empty".into(),
            ));
        }
        let mut owner = vec![None; num_nodes];
        for (name, set) in self.named() {
            for &i in set {
                if i >= num_nodes {
                    return Err(Error::InvalidArgument(format!(
                        "{name} split index {i} out of range for {num_nodes} nodes"
                    )));
                }
                if let Some(prev) = owner[i] {
                    return Err(Error::InvalidArgument(format!(
                        "node {i} appears in both {prev} and {name} splits"
                    )));
                }
                owner[i] = Some(name);
            }
        }
        Ok(())
    }

    pub fn named(&self) -> [(&'static str, &[usize]); 4] {
        [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
            ("query", &self.query),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub query: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.2,
            val: 0.1,
            test: 0.3,
            query: 0.4,
        }
    }
}

impl SplitFractions {
    fn as_array(&self) -> [f64; 4] {
        [self.train, self.val, self.test, self.query]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub spec: SplitSpec,
    /// False when some class was too small to stratify and the split fell
    /// back to a plain random partition.
    pub stratified: bool,
}

/// Disjoint train/val/test/query split with sizes `⌊fraction·N⌋`,
/// stratified by label when every class has at least one node per split.
pub fn make_splits(g: &Graph, fractions: &SplitFractions, seed: u64) -> Result<SplitOutcome> {
    let fr = fractions.as_array();
    if fr.iter().any(|&f| !(f > 0.0)) || fr.iter().sum::<f64>() > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be positive with sum <= 1, got {fr:?}"
        )));
    }
    let n = g.num_nodes();
    let targets: Vec<usize> = fr.iter().map(|f| (f * n as f64).floor() as usize).collect();
    let mut rng = rng_from(seed);

    let c = g.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &y) in g.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    let populated: Vec<usize> = (0..c).filter(|&k| !by_class[k].is_empty()).collect();
    let stratify = populated.iter().all(|&k| by_class[k].len() >= fr.len());

    let mut sets: [Vec<usize>; 4] = Default::default();
    if stratify {
        // Per-class quota: floor of the proportional share; each split's
        // shortfall goes one node at a time to classes ordered by largest
        // remainder, then most spare capacity, then a seeded rank.
        let mut alloc = vec![[0usize; 4]; c];
        for &k in &populated {
            for s in 0..4 {
                alloc[k][s] = (fr[s] * by_class[k].len() as f64).floor() as usize;
            }
        }
        let mut rank: Vec<usize> = (0..c).collect();
        rank.shuffle(&mut rng);
        for s in 0..4 {
            let assigned: usize = populated.iter().map(|&k| alloc[k][s]).sum();
            let mut need = targets[s].saturating_sub(assigned);
            while need > 0 {
                let spare = |k: usize| by_class[k].len() - alloc[k].iter().sum::<usize>();
                let mut order: Vec<usize> =
                    populated.iter().copied().filter(|&k| spare(k) > 0).collect();
                if order.is_empty() {
                    break;
                }
                let rem = |k: usize| {
                    let share = fr[s] * by_class[k].len() as f64;
                    share - (alloc[k][s] as f64).min(share.floor())
                };
                order.sort_by(|&a, &b| {
                    rem(b)
                        .total_cmp(&rem(a))
                        .then(spare(b).cmp(&spare(a)))
                        .then(rank[a].cmp(&rank[b]))
                });
                for k in order.into_iter().take(need) {
                    alloc[k][s] += 1;
                    need -= 1;
                }
            }
        }
        for &k in &populated {
            let mut it = by_class[k].iter().copied();
            for s in 0..4 {
                sets[s].extend(it.by_ref().take(alloc[k][s]));
            }
        }
    } else {
        log::warn!("class too small to stratify; falling back to an unstratified split");
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        let mut it = all.into_iter();
        for s in 0..4 {
            sets[s].extend(it.by_ref().take(targets[s]));
        }
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    let [train, val, test, query] = sets;
    let spec = SplitSpec {
        train,
        val,
        test,
        query,
    };
    spec.validate(n)?;
    Ok(SplitOutcome {
        spec,
        stratified: stratify,
    })
}
