use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::seed::rng_from;

/// Planted-partition generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub n: usize,
    pub num_classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feat_dim: usize,
    /// Norm of each class-mean feature vector; noise is unit Gaussian per dim.
    pub feat_signal: f64,
}

/// Planted-partition graph with balanced classes (`label = i mod C`).
///
/// Each pair `u < v` is sampled in lexicographic order with probability
/// `p_in` for same-class pairs and `p_out` otherwise. Class `c` draws a
/// random unit direction scaled to `feat_signal`; node features are the
/// class mean plus isotropic unit Gaussian noise.
pub fn generate_sbm(p: &SbmParams, seed: u64) -> Result<Graph> {
    let valid = |x: f64| (0.0..=1.0).contains(&x);
    if !(valid(p.p_in) && valid(p.p_out) && p.p_out <= p.p_in) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= p_out <= p_in <= 1, got p_in = {}, p_out = {}",
            p.p_in, p.p_out
        )));
    }
    if p.num_classes < 2 || p.n < p.num_classes {
        return Err(Error::InvalidArgument(format!(
            "need 2 <= num_classes <= n, got {} classes for {} nodes",
            p.num_classes, p.n
        )));
    }
    if p.feat_dim == 0 {
        return Err(Error::InvalidArgument("feat_dim must be positive".into()));
    }

    let mut rng = rng_from(seed);
    let labels: Vec<usize> = (0..p.n).map(|i| i % p.num_classes).collect();

    let mut means = Matrix::zeros(p.num_classes, p.feat_dim);
    for c in 0..p.num_classes {
        let row = means.row_mut(c);
        for x in row.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        for x in row.iter_mut() {
            *x *= p.feat_signal / norm;
        }
    }

    let mut edges = Vec::new();
    for u in 0..p.n {
        for v in u + 1..p.n {
            let prob = if labels[u] == labels[v] { p.p_in } else { p.p_out };
            if rng.random::<f64>() < prob {
                edges.push((u, v));
            }
        }
    }

    let mut features = Matrix::zeros(p.n, p.feat_dim);
    for i in 0..p.n {
        let mean = means.row(labels[i]).to_vec();
        for (x, m) in features.row_mut(i).iter_mut().zip(mean) {
            let noise: f64 = StandardNormal.sample(&mut rng);
            *x = m + noise;
        }
    }

    Graph::from_canonical(features, edges, labels, p.num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::edge_homophily;

    fn params(n: usize, c: usize, p_in: f64, p_out: f64) -> SbmParams {
        SbmParams {
            n,
            num_classes: c,
            p_in,
            p_out,
            feat_dim: 4,
            feat_signal: 1.0,
        }
    }

    #[test]
    fn no_cross_edges_means_full_homophily() {
        let g = generate_sbm(&params(120, 3, 0.1, 0.0), 4).unwrap();
        assert!(g.num_edges() > 0);
        assert_eq!(edge_homophily(&g).value, 1.0);
    }

    #[test]
    fn equal_probabilities_give_half_homophily() {
        let g = generate_sbm(&params(2000, 2, 0.005, 0.005), 11).unwrap();
        // Oracle: enumerate the generated edges directly.
        let y = g.labels();
        let same = g.edges().iter().filter(|&&(u, v)| y[u] == y[v]).count();
        let h = same as f64 / g.num_edges() as f64;
        assert!((h - 0.5).abs() <= 0.05, "homophily {h}");
    }

    #[test]
    fn same_seed_same_bytes() {
        let p = params(80, 4, 0.2, 0.02);
        let a = serde_json::to_vec(&generate_sbm(&p, 5).unwrap()).unwrap();
        let b = serde_json::to_vec(&generate_sbm(&p, 5).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_probabilities() {
        assert!(generate_sbm(&params(10, 2, 0.1, 0.2), 0).is_err());
        assert!(generate_sbm(&params(10, 2, 1.5, 0.2), 0).is_err());
        assert!(generate_sbm(&params(1, 2, 0.5, 0.2), 0).is_err());
    }
}
