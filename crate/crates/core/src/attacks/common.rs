use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::AttackSpec;
use crate::error::Result;
use crate::graph::{canonical_edges, Edge, GraphOps};
use crate::nn::{train, GnnModel, LabelMode, LossTerm, Matrix, TrainConfig};
use crate::oracle::{QueryOracle, QueryResponse};
use crate::seed::SeedTree;

/// Per-run attack state: the oracle, the seed tree and the query tally.
pub(crate) struct Ctx<'a> {
    pub spec: &'a AttackSpec,
    pub oracle: &'a mut QueryOracle,
    pub tree: SeedTree,
    pub queries: usize,
    pub log: Vec<String>,
}

impl<'a> Ctx<'a> {
    pub fn new(spec: &'a AttackSpec, oracle: &'a mut QueryOracle, seed: u64) -> Self {
        Self {
            spec,
            oracle,
            tree: SeedTree::new(seed),
            queries: 0,
            log: Vec::new(),
        }
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::debug!("{}: {msg}", self.spec.kind.name());
        self.log.push(msg);
    }

    fn clip<'b>(&mut self, ids: &'b [usize]) -> &'b [usize] {
        let room = self.oracle.remaining();
        if ids.len() > room {
            self.note(format!(
                "budget exhausted: {} of {} requested nodes answered",
                room,
                ids.len()
            ));
            &ids[..room]
        } else {
            ids
        }
    }

    /// Queries deployed-graph nodes, truncating at the remaining budget.
    pub fn ask(&mut self, ids: &[usize]) -> Result<QueryResponse> {
        let ids = self.clip(ids);
        let r = self.oracle.query(ids)?;
        self.queries += ids.len();
        Ok(r)
    }

    /// Queries nodes of an attacker-built graph.
    pub fn ask_graph(&mut self, ops: &GraphOps, x: &Matrix, ids: &[usize]) -> Result<QueryResponse> {
        let ids = self.clip(ids);
        let r = self.oracle.query_graph(ops, x, ids)?;
        self.queries += ids.len();
        Ok(r)
    }

    pub fn num_classes(&self) -> usize {
        self.oracle.num_classes()
    }

    pub fn init_surrogate(&self, feat_dim: usize, label: &str) -> GnnModel {
        GnnModel::init(
            self.spec.surrogate_backbone,
            feat_dim,
            self.spec.surrogate_hidden,
            self.num_classes(),
            self.spec.dropout,
            self.tree.child(label).child("init").seed(),
        )
    }

    pub fn train_config(&self, label: &str, epochs: usize, mode: LabelMode) -> TrainConfig {
        TrainConfig {
            epochs,
            label_mode: mode,
            seed: self.tree.child(label).child("dropout").seed(),
            ..TrainConfig::default()
        }
    }

    /// Fresh surrogate fitted to hard labels on `nodes`.
    pub fn fit_hard(
        &self,
        ops: &GraphOps,
        x: &Matrix,
        nodes: Vec<usize>,
        labels: Vec<usize>,
        label: &str,
    ) -> Result<GnnModel> {
        let init = self.init_surrogate(x.cols(), label);
        if nodes.is_empty() {
            return Ok(init);
        }
        let cfg = self.train_config(label, self.spec.epochs, LabelMode::Hard);
        train(&init, ops, x, &[LossTerm::hard(nodes, labels)], &cfg)
    }
}

/// Each row's `k` most cosine-similar rows (ties by index), symmetrised.
/// All-zero rows get no neighbours.
pub fn cosine_knn_edges(x: &Matrix, k: usize) -> Vec<Edge> {
    let n = x.rows();
    let norms: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let live: Vec<usize> = (0..n).filter(|&i| norms[i] > 0.0).collect();
    let mut raw = Vec::new();
    for &u in &live {
        let mut sims: Vec<(f64, usize)> = live
            .iter()
            .filter(|&&v| v != u)
            .map(|&v| {
                let s = crate::nn::dot(x.row(u), x.row(v)) / (norms[u] * norms[v]);
                (s, v)
            })
            .collect();
        sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        raw.extend(sims.into_iter().take(k).map(|(_, v)| (u, v)));
    }
    canonical_edges(n, raw).expect("indices in range").0
}

/// G(n, p) with pairs `u < v` drawn in lexicographic order.
pub fn erdos_renyi_edges(n: usize, p: f64, rng: &mut impl Rng) -> Vec<Edge> {
    let mut out = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                out.push((u, v));
            }
        }
    }
    out
}

pub fn gaussian_features(n: usize, d: usize, rng: &mut impl Rng) -> Matrix {
    let data = (0..n * d).map(|_| StandardNormal.sample(&mut *rng)).collect();
    Matrix::from_vec(n, d, data).expect("sized buffer")
}

pub fn merge_edges(n: usize, a: &[Edge], b: &[Edge]) -> Result<Vec<Edge>> {
    Ok(canonical_edges(n, a.iter().chain(b).copied())?.0)
}

/// Induced subgraph on `keep` (ascending), with ids remapped to positions.
pub fn induced(keep: &[usize], edges: &[Edge], n: usize) -> Result<Vec<Edge>> {
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in keep.iter().enumerate() {
        pos[i] = k;
    }
    let sub = edges
        .iter()
        .filter(|&&(u, v)| pos[u] != usize::MAX && pos[v] != usize::MAX)
        .map(|&(u, v)| (pos[u], pos[v]));
    Ok(canonical_edges(keep.len(), sub)?.0)
}

/// Normalized prediction entropy in [0,1].
pub fn normalized_entropy(p: &[f64]) -> f64 {
    if p.len() < 2 {
        return 0.0;
    }
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    h / (p.len() as f64).ln()
}
