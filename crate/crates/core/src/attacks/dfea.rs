//! Data-free extraction. Every input is synthesized: Gaussian features on
//! Erdős–Rényi graphs, one graph per round, all of whose nodes are queried.
//! The attacker's view is never read.

use super::common::{erdos_renyi_edges, gaussian_features, Ctx};
use super::AttackKind;
use crate::error::Result;
use crate::graph::{Edge, GraphOps};
use crate::nn::{
    log_softmax, softmax_rows, train, ExtraGrad, GnnModel, LabelMode, LossTerm, Matrix, Trainer,
};

/// The disjoint union of all queried synthetic rounds.
#[derive(Debug, Clone)]
pub(crate) struct Synthetic {
    pub ops: GraphOps,
    pub x: Matrix,
    /// Answered node ids (in the union) per round.
    pub rounds: Vec<Vec<usize>>,
    pub labels: Vec<usize>,
    /// Response rows aligned with the concatenated `rounds`; `None` for
    /// hard-label oracles.
    pub probs: Option<Matrix>,
}

impl Synthetic {
    fn nodes_of(&self, pick: impl Fn(usize) -> bool) -> (Vec<usize>, Vec<usize>) {
        let mut nodes = Vec::new();
        let mut labels = Vec::new();
        let mut at = 0;
        for (r, ids) in self.rounds.iter().enumerate() {
            if pick(r) {
                nodes.extend_from_slice(ids);
                labels.extend_from_slice(&self.labels[at..at + ids.len()]);
            }
            at += ids.len();
        }
        (nodes, labels)
    }
}

pub(crate) fn synthesize(ctx: &mut Ctx<'_>, budget: usize) -> Result<Synthetic> {
    let rounds = ctx.spec.dfea_rounds.min(budget).max(1);
    let d = ctx.oracle.feat_dim();
    let mut x: Option<Matrix> = None;
    let mut edges: Vec<Edge> = Vec::new();
    let mut ids_by_round = Vec::new();
    let mut labels = Vec::new();
    let mut probs: Option<Matrix> = None;
    let mut soft = true;
    let mut offset = 0;
    for r in 0..rounds {
        let size = budget / rounds + usize::from(r < budget % rounds);
        if size == 0 || ctx.oracle.remaining() == 0 {
            continue;
        }
        let mut rng = ctx.tree.child_idx("round", r as u64).rng();
        let xr = gaussian_features(size, d, &mut rng);
        let er = erdos_renyi_edges(size, ctx.spec.er_edge_prob, &mut rng);
        let ops = GraphOps::new(size, &er);
        let ids: Vec<usize> = (0..size).collect();
        let resp = ctx.ask_graph(&ops, &xr, &ids)?;
        let answered = resp.len();
        match (&resp.probs, soft) {
            (Some(p), true) => {
                probs = Some(match probs {
                    None => p.clone(),
                    Some(acc) => acc.vstack(p)?,
                })
            }
            _ => {
                soft = false;
                probs = None;
            }
        }
        labels.extend(resp.labels);
        ids_by_round.push((offset..offset + answered).collect());
        edges.extend(er.iter().map(|&(u, v)| (u + offset, v + offset)));
        x = Some(match x {
            None => xr,
            Some(acc) => acc.vstack(&xr)?,
        });
        offset += size;
    }
    let x = x.unwrap_or_else(|| Matrix::zeros(0, d));
    Ok(Synthetic {
        ops: GraphOps::new(offset, &edges),
        x,
        rounds: ids_by_round,
        labels,
        probs,
    })
}

pub(crate) fn run(ctx: &mut Ctx<'_>, budget: usize) -> Result<GnnModel> {
    let syn = synthesize(ctx, budget)?;
    match ctx.spec.kind {
        AttackKind::DfeaI if syn.probs.is_some() => {
            let (nodes, _) = syn.nodes_of(|_| true);
            let probs = syn.probs.clone().expect("guarded by the match arm");
            let init = ctx.init_surrogate(syn.x.cols(), "surrogate");
            if nodes.is_empty() {
                return Ok(init);
            }
            let cfg = ctx.train_config("surrogate", ctx.spec.epochs, LabelMode::Soft);
            train(&init, &syn.ops, &syn.x, &[LossTerm::soft(nodes, probs)], &cfg)
        }
        AttackKind::DfeaIII => fit_pair(ctx, &syn),
        kind => {
            if kind == AttackKind::DfeaI {
                ctx.note("oracle returns labels only: soft distillation falls back to hard labels");
            }
            let (nodes, labels) = syn.nodes_of(|_| true);
            ctx.fit_hard(&syn.ops, &syn.x, nodes, labels, "surrogate")
        }
    }
}

/// Symmetric KL between row softmaxes, averaged over rows, and its gradient
/// with respect to `za` (the other side held fixed).
pub(crate) fn sym_kl_grad(za: &Matrix, zb: &Matrix) -> (f64, Matrix) {
    let (n, c) = za.shape();
    let mut grad = Matrix::zeros(n, c);
    let mut loss = 0.0;
    if n == 0 {
        return (0.0, grad);
    }
    let pa = softmax_rows(za);
    let pb = softmax_rows(zb);
    for i in 0..n {
        let la = log_softmax(za.row(i));
        let lb = log_softmax(zb.row(i));
        let l: Vec<f64> = la.iter().zip(&lb).map(|(a, b)| a - b).collect();
        let (a, b) = (pa.row(i), pb.row(i));
        let mean_l: f64 = a.iter().zip(&l).map(|(p, v)| p * v).sum();
        let kl_ba: f64 = b.iter().zip(&l).map(|(p, v)| -p * v).sum();
        loss += mean_l + kl_ba;
        for j in 0..c {
            grad.set(i, j, ((a[j] - b[j]) + a[j] * (l[j] - mean_l)) / n as f64);
        }
    }
    (loss / n as f64, grad)
}

/// Two surrogates on alternating rounds, tied by a weighted symmetric-KL
/// consistency term over every synthetic node. Returns the first.
fn fit_pair(ctx: &mut Ctx<'_>, syn: &Synthetic) -> Result<GnnModel> {
    let (na, ya) = syn.nodes_of(|r| r % 2 == 0);
    let (nb, yb) = syn.nodes_of(|r| r % 2 == 1);
    let mut a = ctx.init_surrogate(syn.x.cols(), "surrogate-a");
    let mut b = ctx.init_surrogate(syn.x.cols(), "surrogate-b");
    if na.is_empty() {
        return Ok(a);
    }
    let ta = [LossTerm::hard(na, ya)];
    let tb: Vec<LossTerm> = if nb.is_empty() {
        Vec::new()
    } else {
        vec![LossTerm::hard(nb, yb)]
    };
    let w = ctx.spec.consistency_weight;
    let mut tr_a = Trainer::new(&ctx.train_config("surrogate-a", ctx.spec.epochs, LabelMode::Hard));
    let mut tr_b = Trainer::new(&ctx.train_config("surrogate-b", ctx.spec.epochs, LabelMode::Hard));
    let consistency = |other: &Matrix| {
        let other = other.clone();
        move |cache: &crate::nn::ForwardCache| -> Result<ExtraGrad> {
            let (l, mut g) = sym_kl_grad(&cache.logits, &other);
            g.scale(w);
            Ok(ExtraGrad {
                loss: w * l,
                d_logits: Some(g),
                d_hidden: None,
            })
        }
    };
    for _ in 0..ctx.spec.epochs {
        let za = a.forward(&syn.ops, &syn.x)?;
        let zb = b.forward(&syn.ops, &syn.x)?;
        tr_a.step_with(&mut a, &syn.ops, &syn.x, &ta, consistency(&zb))?;
        tr_b.step_with(&mut b, &syn.ops, &syn.x, &tb, consistency(&za))?;
    }
    ctx.note(format!("consistency weight {w}"));
    Ok(a)
}
