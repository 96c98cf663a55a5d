//! Structure-completing attack: a small MLP edge scorer is fitted on the
//! visible edges, its confident top-k links are added, and the completed
//! graph is extracted like MEA0.

use std::collections::HashSet;

use rand::Rng;

use super::common::{cosine_knn_edges, merge_edges, Ctx};
use super::AttackInput;
use crate::error::Result;
use crate::graph::{Edge, GraphOps};
use crate::nn::{Adam, GnnModel, Matrix};

const HIDDEN: usize = 16;

/// Pair scorer `σ(w2 · relu(x_u Wa + x_v Wb + b1) + b2)`, evaluated in both
/// orientations and averaged so scores are symmetric.
#[derive(Debug, Clone)]
struct EdgeMlp {
    params: Vec<Matrix>, // wa, wb, b1, w2, b2
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl EdgeMlp {
    fn init(d: usize, rng: &mut impl Rng) -> Self {
        let glorot = |r: usize, c: usize, rng: &mut dyn rand::RngCore| {
            let a = (6.0 / (r + c) as f64).sqrt();
            let data = (0..r * c).map(|_| rng.random_range(-a..a)).collect();
            Matrix::from_vec(r, c, data).expect("sized buffer")
        };
        Self {
            params: vec![
                glorot(d, HIDDEN, rng),
                glorot(d, HIDDEN, rng),
                Matrix::zeros(1, HIDDEN),
                glorot(HIDDEN, 1, rng),
                Matrix::zeros(1, 1),
            ],
        }
    }

    /// Per-node projections `(X Wa, X Wb)`.
    fn project(&self, x: &Matrix) -> (Matrix, Matrix) {
        (x.matmul(&self.params[0]), x.matmul(&self.params[1]))
    }

    fn pre(&self, p: &Matrix, q: &Matrix, u: usize, v: usize) -> Vec<f64> {
        let b1 = self.params[2].row(0);
        (0..HIDDEN).map(|h| p.get(u, h) + q.get(v, h) + b1[h]).collect()
    }

    fn logit(&self, a: &[f64]) -> f64 {
        let w2 = self.params[3].as_slice();
        a.iter().zip(w2).map(|(v, w)| v.max(0.0) * w).sum::<f64>() + self.params[4].get(0, 0)
    }

    fn score(&self, p: &Matrix, q: &Matrix, u: usize, v: usize) -> f64 {
        let s1 = sigmoid(self.logit(&self.pre(p, q, u, v)));
        let s2 = sigmoid(self.logit(&self.pre(p, q, v, u)));
        0.5 * (s1 + s2)
    }

    /// Full-batch BCE gradient over ordered pairs.
    fn grad(&self, x: &Matrix, pairs: &[(usize, usize, f64)]) -> Vec<Matrix> {
        let n = x.rows();
        let (p, q) = self.project(x);
        let w2 = self.params[3].as_slice();
        let mut dp = Matrix::zeros(n, HIDDEN);
        let mut dq = Matrix::zeros(n, HIDDEN);
        let mut db1 = Matrix::zeros(1, HIDDEN);
        let mut dw2 = Matrix::zeros(HIDDEN, 1);
        let mut db2 = 0.0;
        let m = pairs.len() as f64;
        for &(u, v, y) in pairs {
            let a = self.pre(&p, &q, u, v);
            let dz = (sigmoid(self.logit(&a)) - y) / m;
            db2 += dz;
            for h in 0..HIDDEN {
                if a[h] > 0.0 {
                    let dw = dw2.as_mut_slice();
                    dw[h] += dz * a[h];
                    let da = dz * w2[h];
                    dp.row_mut(u)[h] += da;
                    dq.row_mut(v)[h] += da;
                    db1.row_mut(0)[h] += da;
                }
            }
        }
        vec![
            x.t_matmul(&dp),
            x.t_matmul(&dq),
            db1,
            dw2,
            Matrix::filled(1, 1, db2),
        ]
    }
}

pub(crate) fn run(ctx: &mut Ctx<'_>, input: AttackInput<'_>) -> Result<GnnModel> {
    let view = input.view;
    let n = view.num_nodes();
    let x = &view.features;
    let edges = complete_structure(ctx, x, &view.edges)?;
    let ops = GraphOps::new(n, &edges);
    let r = ctx.ask(input.budget_nodes)?;
    let nodes = input.budget_nodes[..r.len()].to_vec();
    ctx.fit_hard(&ops, x, nodes, r.labels, "surrogate")
}

fn complete_structure(ctx: &mut Ctx<'_>, x: &Matrix, visible: &[Edge]) -> Result<Vec<Edge>> {
    let n = x.rows();
    if visible.is_empty() {
        ctx.note("no visible edges: edge scorer falls back to kNN");
        return Ok(cosine_knn_edges(x, ctx.spec.knn_k));
    }
    let present: HashSet<Edge> = visible.iter().copied().collect();
    let mut rng = ctx.tree.child("edge-negatives").rng();
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for &(u, v) in visible {
        pairs.push((u, v, 1.0));
        pairs.push((v, u, 1.0));
    }
    let mut negatives = 0;
    let mut tries = 0;
    while negatives < visible.len() && tries < 20 * visible.len() {
        tries += 1;
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v && !present.contains(&(u.min(v), u.max(v))) {
            pairs.push((u, v, 0.0));
            pairs.push((v, u, 0.0));
            negatives += 1;
        }
    }

    let mut mlp = EdgeMlp::init(x.cols(), &mut ctx.tree.child("edge-init").rng());
    let mut adam = Adam::new(0.01, 0.9, 0.999, 1e-8, 0.0);
    for _ in 0..ctx.spec.edge_model_epochs {
        let g = mlp.grad(x, &pairs);
        adam.step(&mut mlp.params, &g, &[false; 5]);
    }

    let (p, q) = mlp.project(x);
    let k = ctx.spec.knn_k;
    let mut added = Vec::new();
    for u in 0..n {
        let mut best: Vec<(f64, usize)> = (0..n)
            .filter(|&v| v != u)
            .map(|v| (mlp.score(&p, &q, u, v), v))
            .filter(|&(s, _)| s > ctx.spec.edge_threshold)
            .collect();
        best.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        added.extend(best.into_iter().take(k).map(|(_, v)| (u, v)));
    }
    let out = merge_edges(n, visible, &added)?;
    ctx.note(format!(
        "edge scorer grew {} visible edges to {}",
        visible.len(),
        out.len()
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    #[test]
    fn scorer_gradient_matches_finite_differences() {
        let mut rng = rng_from(3);
        let x = Matrix::from_vec(4, 3, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let mlp = EdgeMlp::init(3, &mut rng);
        let pairs = vec![(0, 1, 1.0), (2, 3, 0.0), (1, 3, 1.0), (3, 0, 0.0)];
        let loss = |m: &EdgeMlp| {
            let (p, q) = m.project(&x);
            pairs
                .iter()
                .map(|&(u, v, y)| {
                    let s = sigmoid(m.logit(&m.pre(&p, &q, u, v)));
                    -(y * s.ln() + (1.0 - y) * (1.0 - s).ln())
                })
                .sum::<f64>()
                / pairs.len() as f64
        };
        let g = mlp.grad(&x, &pairs);
        let h = 1e-6;
        for (k, gk) in g.iter().enumerate() {
            for idx in 0..gk.as_slice().len() {
                let mut plus = mlp.clone();
                plus.params[k].as_mut_slice()[idx] += h;
                let mut minus = mlp.clone();
                minus.params[k].as_mut_slice()[idx] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = gk.as_slice()[idx];
                assert!((fd - an).abs() < 1e-6, "param {k}[{idx}]: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn score_is_symmetric() {
        let mut rng = rng_from(5);
        let x = Matrix::from_vec(3, 2, vec![0.1, 0.5, -0.3, 0.2, 0.9, -0.4]).unwrap();
        let mlp = EdgeMlp::init(2, &mut rng);
        let (p, q) = mlp.project(&x);
        assert_eq!(mlp.score(&p, &q, 0, 2), mlp.score(&p, &q, 2, 0));
    }
}
