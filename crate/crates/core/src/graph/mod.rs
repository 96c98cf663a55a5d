//! Attributed undirected graphs and everything built directly on them.

mod adjacency;
mod bundle;
mod regime;
mod sbm;
mod splits;
mod stats;

pub use adjacency::{normalized_adjacency, GraphOps};
pub use bundle::{load_graph_bundle, write_graph_bundle, Bundle, BundleMeta, LoadReport};
pub use regime::{apply_regime, Provenance, Regime, RegimeKind, RegimeView};
pub use sbm::{generate_sbm, SbmParams};
pub use splits::{make_splits, SplitFractions, SplitOutcome, SplitSpec};
pub use stats::{edge_homophily, structural_stats, Homophily, StructuralStats};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Undirected edge stored with `u < v`.
pub type Edge = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<Edge>,
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
}

/// Counts of input pairs discarded while canonicalising an edge list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeCleanup {
    pub duplicates: usize,
    pub self_loops: usize,
}

/// Canonicalises raw pairs: symmetrises, drops self-loops and duplicates,
/// and sorts. Fails on an out-of-range endpoint.
pub fn canonical_edges(
    num_nodes: usize,
    raw: impl IntoIterator<Item = (usize, usize)>,
) -> Result<(Vec<Edge>, EdgeCleanup)> {
    let mut cleanup = EdgeCleanup::default();
    let mut edges = Vec::new();
    for (u, v) in raw {
        if u >= num_nodes || v >= num_nodes {
            return Err(Error::InvalidGraph(format!(
                "edge ({u}, {v}) out of range for {num_nodes} nodes"
            )));
        }
        if u == v {
            cleanup.self_loops += 1;
            continue;
        }
        edges.push((u.min(v), u.max(v)));
    }
    edges.sort_unstable();
    let before = edges.len();
    edges.dedup();
    cleanup.duplicates = before - edges.len();
    Ok((edges, cleanup))
}

impl Graph {
    /// Validating constructor. Edges are canonicalised; the cleanup counts
    /// are discarded (use [`canonical_edges`] to observe them).
    pub fn new(
        features: Matrix,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let num_nodes = features.rows();
        let (edges, _) = canonical_edges(num_nodes, edges)?;
        Self::from_canonical(features, edges, labels, num_classes)
    }

    pub(crate) fn from_canonical(
        features: Matrix,
        edges: Vec<Edge>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let num_nodes = features.rows();
        if labels.len() != num_nodes {
            return Err(Error::InvalidGraph(format!(
                "{} labels for {num_nodes} nodes",
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::InvalidGraph(format!(
                "num_classes = {num_classes}, need at least 2"
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::InvalidGraph(format!(
                "label {y} at node {i} exceeds num_classes = {num_classes}"
            )));
        }
        debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(edges.iter().all(|&(u, v)| u < v && v < num_nodes));
        Ok(Self {
            num_nodes,
            edges,
            features,
            labels,
            num_classes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feat_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Copy with node labels replaced. Used for label-shuffled controls.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::from_canonical(
            self.features.clone(),
            self.edges.clone(),
            labels,
            self.num_classes,
        )
    }

    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        if features.shape() != self.features.shape() {
            return Err(Error::Shape(format!(
                "replacement features {:?} vs {:?}",
                features.shape(),
                self.features.shape()
            )));
        }
        Self::from_canonical(
            features,
            self.edges.clone(),
            self.labels.clone(),
            self.num_classes,
        )
    }

    /// Appends `other` as a disconnected component; node ids of `other` are
    /// shifted by `self.num_nodes()`.
    pub fn disjoint_union(&self, other: &Graph) -> Result<Graph> {
        if self.feat_dim() != other.feat_dim() {
            return Err(Error::Shape("disjoint union of mismatched feature dims".into()));
        }
        let off = self.num_nodes;
        let features = self.features.vstack(&other.features)?;
        let mut edges = self.edges.clone();
        edges.extend(other.edges.iter().map(|&(u, v)| (u + off, v + off)));
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Graph::from_canonical(
            features,
            edges,
            labels,
            self.num_classes.max(other.num_classes),
        )
    }

    /// Sorted neighbour lists.
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        adjacency_lists(self.num_nodes, &self.edges)
    }
}

pub fn adjacency_lists(n: usize, edges: &[Edge]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    for l in &mut adj {
        l.sort_unstable();
    }
    adj
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalisation_counts_dropped_pairs() {
        let (e, c) = canonical_edges(4, [(0, 1), (1, 0), (2, 2), (3, 1), (1, 3)]).unwrap();
        assert_eq!(e, vec![(0, 1), (1, 3)]);
        assert_eq!(c.duplicates, 2);
        assert_eq!(c.self_loops, 1);
    }

    #[test]
    fn rejects_bad_graphs() {
        let x = Matrix::zeros(3, 2);
        assert!(Graph::new(x.clone(), [(0, 3)], vec![0, 1, 0], 2).is_err());
        assert!(Graph::new(x.clone(), [(0, 1)], vec![0, 1], 2).is_err());
        assert!(Graph::new(x.clone(), [(0, 1)], vec![0, 2, 0], 2).is_err());
        assert!(Graph::new(x, [(0, 1)], vec![0, 0, 0], 1).is_err());
    }

    #[test]
    fn disjoint_union_shifts_ids() {
        let a = Graph::new(Matrix::zeros(2, 1), [(0, 1)], vec![0, 1], 2).unwrap();
        let b = Graph::new(Matrix::filled(3, 1, 1.0), [(1, 2)], vec![1, 1, 0], 2).unwrap();
        let u = a.disjoint_union(&b).unwrap();
        assert_eq!(u.num_nodes(), 5);
        assert_eq!(u.edges(), &[(0, 1), (3, 4)]);
        assert_eq!(u.labels(), &[0, 1, 1, 1, 0]);
    }
}
