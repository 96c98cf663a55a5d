//! The MEA family. All six train on hard oracle labels for the queried
//! nodes; they differ in how the training graph is assembled from the
//! view.

use std::collections::HashSet;

use rand::Rng;

use super::common::{
    cosine_knn_edges, erdos_renyi_edges, gaussian_features, induced, merge_edges, Ctx,
};
use super::{AttackInput, AttackKind};
use crate::error::Result;
use crate::graph::{adjacency_lists, Edge, GraphOps};
use crate::nn::{Adam, GnnModel, Matrix};

pub(crate) fn run(ctx: &mut Ctx<'_>, input: AttackInput<'_>) -> Result<GnnModel> {
    let view = input.view;
    let n = view.num_nodes();
    let kind = ctx.spec.kind;

    if kind == AttackKind::Mea2 {
        // regime-blind: synthetic inputs regardless of what the view holds
        let mut rng = ctx.tree.child("synthetic").rng();
        let x = gaussian_features(n, ctx.oracle.feat_dim(), &mut rng);
        let edges = erdos_renyi_edges(n, ctx.spec.er_edge_prob, &mut rng);
        let ops = GraphOps::new(n, &edges);
        let r = ctx.ask_graph(&ops, &x, input.budget_nodes)?;
        let nodes = input.budget_nodes[..r.len()].to_vec();
        return ctx.fit_hard(&ops, &x, nodes, r.labels, "surrogate");
    }

    let r = ctx.ask(input.budget_nodes)?;
    let nodes = input.budget_nodes[..r.len()].to_vec();
    let labels = r.labels;

    match kind {
        AttackKind::Mea0 => {
            let ops = GraphOps::new(n, &view.edges);
            ctx.fit_hard(&ops, &view.features, nodes, labels, "surrogate")
        }
        AttackKind::Mea1 => {
            let edges = knn_completed(ctx, input)?;
            let ops = GraphOps::new(n, &edges);
            ctx.fit_hard(&ops, &view.features, nodes, labels, "surrogate")
        }
        AttackKind::Mea3 => {
            let adj = adjacency_lists(n, &view.edges);
            let mut keep: HashSet<usize> = nodes.iter().copied().collect();
            let mut frontier: Vec<usize> = nodes.clone();
            for _ in 0..2 {
                let mut next = Vec::new();
                for &u in &frontier {
                    for &v in &adj[u] {
                        if keep.insert(v) {
                            next.push(v);
                        }
                    }
                }
                frontier = next;
            }
            let mut keep: Vec<usize> = keep.into_iter().collect();
            keep.sort_unstable();
            ctx.note(format!("2-hop expansion: {} -> {} nodes", nodes.len(), keep.len()));
            let sub_edges = induced(&keep, &view.edges, n)?;
            let x = view.features.select_rows(&keep);
            let ops = GraphOps::new(keep.len(), &sub_edges);
            let local: Vec<usize> = nodes
                .iter()
                .map(|i| keep.binary_search(i).expect("queried node kept"))
                .collect();
            ctx.fit_hard(&ops, &x, local, labels, "surrogate")
        }
        AttackKind::Mea4 => {
            let edges = logistic_edges(ctx, &view.features, &view.edges)?;
            let ops = GraphOps::new(n, &edges);
            ctx.fit_hard(&ops, &view.features, nodes, labels, "surrogate")
        }
        AttackKind::Mea5 => {
            let edges = knn_completed(ctx, input)?;
            let ops = GraphOps::new(n, &edges);
            let x = ops.norm_adj().spmm(&view.features);
            ctx.fit_hard(&ops, &x, nodes, labels, "surrogate")
        }
        _ => unreachable!("non-MEA kind dispatched to the MEA runner"),
    }
}

/// Visible edges, plus a cosine kNN graph when structure is partial.
fn knn_completed(ctx: &mut Ctx<'_>, input: AttackInput<'_>) -> Result<Vec<Edge>> {
    let view = input.view;
    if view.regime.a_ratio >= 1.0 {
        return Ok(view.edges.clone());
    }
    let knn = cosine_knn_edges(&view.features, ctx.spec.knn_k);
    ctx.note(format!("kNN(k={}) added {} candidate edges", ctx.spec.knn_k, knn.len()));
    merge_edges(view.num_nodes(), &view.edges, &knn)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Visible edges plus kNN candidates accepted by a logistic model on
/// Hadamard pair features, trained on visible edges against random
/// non-edges. Without visible edges the kNN graph is used as-is.
fn logistic_edges(ctx: &mut Ctx<'_>, x: &Matrix, visible: &[Edge]) -> Result<Vec<Edge>> {
    let n = x.rows();
    let candidates = cosine_knn_edges(x, ctx.spec.edge_candidates);
    if visible.is_empty() {
        ctx.note("no visible edges: edge predictor falls back to kNN");
        let knn = cosine_knn_edges(x, ctx.spec.knn_k);
        return Ok(knn);
    }
    let present: HashSet<Edge> = visible.iter().copied().collect();
    let mut rng = ctx.tree.child("edge-negatives").rng();
    let mut pairs: Vec<(Edge, f64)> = visible.iter().map(|&e| (e, 1.0)).collect();
    let mut tries = 0;
    let mut negatives = 0;
    while negatives < visible.len() && tries < 20 * visible.len() {
        tries += 1;
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        let e = (u.min(v), u.max(v));
        if u != v && !present.contains(&e) {
            pairs.push((e, 0.0));
            negatives += 1;
        }
    }
    let d = x.cols();
    let feats = |(u, v): Edge| -> Vec<f64> {
        x.row(u).iter().zip(x.row(v)).map(|(a, b)| a * b).collect()
    };
    let phi: Vec<Vec<f64>> = pairs.iter().map(|&(e, _)| feats(e)).collect();
    let mut params = vec![Matrix::zeros(d, 1), Matrix::zeros(1, 1)];
    let mut adam = Adam::new(0.01, 0.9, 0.999, 1e-8, 0.0);
    let m = pairs.len() as f64;
    for _ in 0..ctx.spec.edge_model_epochs {
        let mut gw = Matrix::zeros(d, 1);
        let mut gb = 0.0;
        for (f, &(_, y)) in phi.iter().zip(&pairs) {
            let z = crate::nn::dot(f, params[0].as_slice()) + params[1].get(0, 0);
            let err = (sigmoid(z) - y) / m;
            for (g, v) in gw.as_mut_slice().iter_mut().zip(f) {
                *g += err * v;
            }
            gb += err;
        }
        let grads = vec![gw, Matrix::filled(1, 1, gb)];
        adam.step(&mut params, &grads, &[false, false]);
    }
    let accepted: Vec<Edge> = candidates
        .into_iter()
        .filter(|&e| {
            let z = crate::nn::dot(&feats(e), params[0].as_slice()) + params[1].get(0, 0);
            sigmoid(z) > ctx.spec.edge_threshold
        })
        .collect();
    ctx.note(format!("edge predictor accepted {} candidate edges", accepted.len()));
    merge_edges(n, visible, &accepted)
}
