use serde::{Deserialize, Serialize};

use super::Graph;

/// Edge homophily with a flag for the empty-edge-set case, where the value
/// is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homophily {
    pub value: f64,
    pub empty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralStats {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub avg_degree: f64,
    pub density: f64,
    pub edge_homophily: f64,
}

/// Fraction of edges whose endpoints share a label.
pub fn edge_homophily(g: &Graph) -> Homophily {
    let e = g.num_edges();
    if e == 0 {
        return Homophily {
            value: 0.0,
            empty: true,
        };
    }
    let y = g.labels();
    let same = g.edges().iter().filter(|&&(u, v)| y[u] == y[v]).count();
    Homophily {
        value: same as f64 / e as f64,
        empty: false,
    }
}

pub fn structural_stats(g: &Graph) -> StructuralStats {
    let n = g.num_nodes();
    let e = g.num_edges();
    let avg_degree = if n == 0 { 0.0 } else { 2.0 * e as f64 / n as f64 };
    let density = if n < 2 {
        0.0
    } else {
        2.0 * e as f64 / (n as f64 * (n as f64 - 1.0))
    };
    StructuralStats {
        num_nodes: n,
        num_edges: e,
        avg_degree,
        density,
        edge_homophily: edge_homophily(g).value,
    }
}
