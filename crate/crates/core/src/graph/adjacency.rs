use super::{adjacency_lists, Edge, Graph};
use crate::nn::CsrMatrix;

/// `D̃^{-1/2}(A+I)D̃^{-1/2}` with `D̃ = rowsum(A+I)`.
pub fn normalized_adjacency(n: usize, edges: &[Edge]) -> CsrMatrix {
    let adj = adjacency_lists(n, edges);
    normalized_from_lists(&adj)
}

fn normalized_from_lists(adj: &[Vec<usize>]) -> CsrMatrix {
    let n = adj.len();
    let inv_sqrt: Vec<f64> = adj
        .iter()
        .map(|l| 1.0 / ((l.len() + 1) as f64).sqrt())
        .collect();
    let rows = (0..n)
        .map(|i| {
            with_self(&adj[i], i)
                .into_iter()
                .map(|(j, _)| (j, inv_sqrt[i] * inv_sqrt[j]))
                .collect()
        })
        .collect();
    CsrMatrix::from_rows(n, rows)
}

fn with_self(neigh: &[usize], i: usize) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(neigh.len() + 1);
    let mut placed = false;
    for &j in neigh {
        if !placed && j > i {
            out.push((i, 0.0));
            placed = true;
        }
        out.push((j, 0.0));
    }
    if !placed {
        out.push((i, 0.0));
    }
    out
}

/// Precomputed propagation operators for one edge set.
///
/// Holds the GCN operator `Â`, the neighbour-mean operator used by SAGE
/// (isolated nodes aggregate to zero), and the self-inclusive sorted
/// neighbourhoods GAT attends over.
#[derive(Debug, Clone)]
pub struct GraphOps {
    n: usize,
    norm_adj: CsrMatrix,
    mean_agg: CsrMatrix,
    attn_offsets: Vec<usize>,
    attn_cols: Vec<usize>,
    degrees: Vec<usize>,
}

impl GraphOps {
    pub fn new(n: usize, edges: &[Edge]) -> Self {
        let adj = adjacency_lists(n, edges);
        let norm_adj = normalized_from_lists(&adj);
        let mean_agg = CsrMatrix::from_rows(
            n,
            adj.iter()
                .map(|l| {
                    let w = 1.0 / l.len().max(1) as f64;
                    l.iter().map(|&j| (j, w)).collect()
                })
                .collect(),
        );
        let mut attn_offsets = Vec::with_capacity(n + 1);
        let mut attn_cols = Vec::new();
        attn_offsets.push(0);
        for (i, l) in adj.iter().enumerate() {
            attn_cols.extend(with_self(l, i).into_iter().map(|(j, _)| j));
            attn_offsets.push(attn_cols.len());
        }
        Self {
            n,
            norm_adj,
            mean_agg,
            attn_offsets,
            attn_cols,
            degrees: adj.iter().map(|l| l.len()).collect(),
        }
    }

    pub fn from_graph(g: &Graph) -> Self {
        Self::new(g.num_nodes(), g.edges())
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn norm_adj(&self) -> &CsrMatrix {
        &self.norm_adj
    }

    pub fn mean_agg(&self) -> &CsrMatrix {
        &self.mean_agg
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// Self-inclusive neighbourhood of `i`, ascending.
    pub fn attn_neighbors(&self, i: usize) -> &[usize] {
        &self.attn_cols[self.attn_offsets[i]..self.attn_offsets[i + 1]]
    }

    pub fn attn_offsets(&self) -> &[usize] {
        &self.attn_offsets
    }

    pub fn attn_len(&self) -> usize {
        self.attn_cols.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;

    #[test]
    fn empty_edges_give_identity() {
        assert_eq!(normalized_adjacency(3, &[]).to_dense(), Matrix::identity(3));
    }

    #[test]
    fn single_edge_is_all_halves() {
        // D̃ = diag(2,2): every entry of Â is 1/√2·1/√2 = 1/2.
        let a = normalized_adjacency(2, &[(0, 1)]).to_dense();
        for i in 0..2 {
            for j in 0..2 {
                assert!((a.get(i, j) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn symmetric_on_path() {
        let a = normalized_adjacency(4, &[(0, 1), (1, 2), (2, 3)]).to_dense();
        assert_eq!(a, a.transpose());
    }

    #[test]
    fn attention_neighbourhoods_include_self_sorted() {
        let ops = GraphOps::new(4, &[(0, 2), (1, 2), (2, 3)]);
        assert_eq!(ops.attn_neighbors(2), &[0, 1, 2, 3]);
        assert_eq!(ops.attn_neighbors(3), &[2, 3]);
        assert_eq!(ops.degrees(), &[1, 1, 3, 1]);
    }
}
