//! Attacks that choose or shape their queries using an interim surrogate.

use rand::seq::SliceRandom;

use super::common::{normalized_entropy, Ctx};
use super::AttackInput;
use crate::error::Result;
use crate::graph::GraphOps;
use crate::nn::{argmax, input_gradient, softmax, train, GnnModel, LabelMode, LossTerm};

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Splits `items` into `rounds` consecutive batches, earlier batches taking
/// the remainder.
fn batches<T: Clone>(items: &[T], rounds: usize) -> Vec<Vec<T>> {
    let base = items.len() / rounds;
    let extra = items.len() % rounds;
    let mut out = Vec::with_capacity(rounds);
    let mut at = 0;
    for r in 0..rounds {
        let len = base + usize::from(r < extra);
        out.push(items[at..at + len].to_vec());
        at += len;
    }
    out
}

/// Queries the budget nodes in rounds. After the first round each batch is
/// pushed one signed-gradient step away from the interim surrogate's own
/// prediction before it is sent, probing near the decision boundary.
pub(crate) fn adv_mea(ctx: &mut Ctx<'_>, input: AttackInput<'_>) -> Result<GnnModel> {
    let view = input.view;
    let n = view.num_nodes();
    let ops = GraphOps::new(n, &view.edges);
    let (lo, hi) = view.features.min_max().unwrap_or((0.0, 0.0));
    let mut order = input.budget_nodes.to_vec();
    order.shuffle(&mut ctx.tree.child("order").rng());
    let rounds = ctx.spec.adv_rounds.min(order.len()).max(1);

    let mut x = view.features.clone();
    let mut nodes: Vec<usize> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut interim: Option<GnnModel> = None;
    for (r, batch) in batches(&order, rounds).into_iter().enumerate() {
        if batch.is_empty() || ctx.oracle.remaining() == 0 {
            continue;
        }
        let resp = match &interim {
            None => ctx.ask(&batch)?,
            Some(model) => {
                let logits = model.forward(&ops, &x)?;
                let own: Vec<usize> = batch.iter().map(|&i| argmax(logits.row(i))).collect();
                let term = LossTerm::hard(batch.clone(), own);
                let (_, grad) = input_gradient(model, &ops, &x, &[term])?;
                for &i in &batch {
                    let step: Vec<f64> = grad.row(i).iter().map(|&g| sign(g)).collect();
                    for (v, s) in x.row_mut(i).iter_mut().zip(step) {
                        *v = (*v + ctx.spec.adv_step * s).clamp(lo, hi);
                    }
                }
                ctx.ask_graph(&ops, &x, &batch)?
            }
        };
        nodes.extend_from_slice(&batch[..resp.len()]);
        labels.extend(resp.labels);
        let label = format!("interim-{r}");
        let init = ctx.init_surrogate(x.cols(), &label);
        let cfg = ctx.train_config(&label, ctx.spec.adv_epochs, LabelMode::Hard);
        interim = Some(train(
            &init,
            &ops,
            &x,
            &[LossTerm::hard(nodes.clone(), labels.clone())],
            &cfg,
        )?);
    }
    ctx.note(format!("{} perturbed queries over {rounds} rounds", nodes.len()));
    ctx.fit_hard(&ops, &x, nodes, labels, "surrogate")
}

/// Active selection from the query pool: visible-degree centrality blended
/// with interim-surrogate uncertainty. The first round uses centrality
/// alone. Ties go to the lower node id.
pub(crate) fn cega(ctx: &mut Ctx<'_>, input: AttackInput<'_>) -> Result<GnnModel> {
    let view = input.view;
    let n = view.num_nodes();
    let ops = GraphOps::new(n, &view.edges);
    let x = &view.features;
    let total = input.budget_nodes.len().min(input.query_pool.len());
    let rounds = ctx.spec.cega_rounds.min(total).max(1);
    let quota: Vec<usize> = batches(&vec![(); total], rounds)
        .iter()
        .map(Vec::len)
        .collect();
    let deg = ops.degrees();
    let max_deg = input
        .query_pool
        .iter()
        .map(|&i| deg[i])
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let lambda = ctx.spec.cega_lambda;

    let mut chosen = vec![false; n];
    let mut nodes: Vec<usize> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut interim: Option<GnnModel> = None;
    for (r, &want) in quota.iter().enumerate() {
        if ctx.oracle.remaining() == 0 {
            break;
        }
        let logits = match &interim {
            Some(m) => Some(m.forward(&ops, x)?),
            None => None,
        };
        let mut scored: Vec<(f64, usize)> = input
            .query_pool
            .iter()
            .filter(|&&i| !chosen[i])
            .map(|&i| {
                let central = deg[i] as f64 / max_deg;
                let s = match &logits {
                    None => central,
                    Some(z) => {
                        lambda * central + (1.0 - lambda) * normalized_entropy(&softmax(z.row(i)))
                    }
                };
                (s, i)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let batch: Vec<usize> = scored.into_iter().take(want).map(|(_, i)| i).collect();
        let resp = ctx.ask(&batch)?;
        for &i in &batch[..resp.len()] {
            chosen[i] = true;
        }
        nodes.extend_from_slice(&batch[..resp.len()]);
        labels.extend(resp.labels);
        if r + 1 < quota.len() {
            let label = format!("interim-{r}");
            let init = ctx.init_surrogate(x.cols(), &label);
            let cfg = ctx.train_config(&label, ctx.spec.cega_epochs, LabelMode::Hard);
            interim = Some(train(
                &init,
                &ops,
                x,
                &[LossTerm::hard(nodes.clone(), labels.clone())],
                &cfg,
            )?);
        }
    }
    ctx.note(format!("selected {} pool nodes over {rounds} rounds", nodes.len()));
    ctx.fit_hard(&ops, x, nodes, labels, "surrogate")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_cover_in_order() {
        let b = batches(&[1, 2, 3, 4, 5, 6, 7], 3);
        assert_eq!(b, vec![vec![1, 2, 3], vec![4, 5], vec![6, 7]]);
        assert_eq!(batches(&[1], 1), vec![vec![1]]);
    }

    #[test]
    fn sign_of_zero_is_zero() {
        assert_eq!(sign(0.0), 0.0);
        assert_eq!(sign(-2.0), -1.0);
    }
}
