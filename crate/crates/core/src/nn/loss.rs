use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::model::{GnnModel, Gradients};
use crate::error::{Error, Result};
use crate::graph::GraphOps;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Softmax cross-entropy against class ids.
    #[default]
    Hard,
    /// KL(target ‖ softmax(logits)) against probability vectors.
    Soft,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Hard(Vec<usize>),
    /// One probability row per supervised node.
    Soft(Matrix),
}

/// One supervised term: `weight · mean_{i ∈ nodes} ℓ(logits_i, target_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub nodes: Vec<usize>,
    pub targets: Targets,
    pub weight: f64,
}

impl LossTerm {
    pub fn hard(nodes: Vec<usize>, labels: Vec<usize>) -> Self {
        Self {
            nodes,
            targets: Targets::Hard(labels),
            weight: 1.0,
        }
    }

    pub fn soft(nodes: Vec<usize>, probs: Matrix) -> Self {
        Self {
            nodes,
            targets: Targets::Soft(probs),
            weight: 1.0,
        }
    }

    pub fn weighted(mut self, w: f64) -> Self {
        self.weight = w;
        self
    }

    /// Term over `mask` reading targets for those nodes out of full-graph
    /// arrays.
    pub fn from_mask(mask: &[usize], full: &Targets) -> Self {
        let targets = match full {
            Targets::Hard(y) => Targets::Hard(mask.iter().map(|&i| y[i]).collect()),
            Targets::Soft(p) => Targets::Soft(p.select_rows(mask)),
        };
        Self {
            nodes: mask.to_vec(),
            targets,
            weight: 1.0,
        }
    }
}

/// Softmax with the max subtracted first.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        out.row_mut(i).copy_from_slice(&softmax(logits.row(i)));
    }
    out
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub probs: Matrix,
    pub hard: Vec<usize>,
}

impl Predictions {
    pub fn from_logits(logits: &Matrix) -> Self {
        Self::from_probs(softmax_rows(logits))
    }

    pub fn from_probs(probs: Matrix) -> Self {
        let hard = (0..probs.rows()).map(|i| argmax(probs.row(i))).collect();
        Self { probs, hard }
    }
}

/// Sum of weighted mean losses and the gradient with respect to the logits.
pub fn loss_terms(logits: &Matrix, terms: &[LossTerm]) -> Result<(f64, Matrix)> {
    let c = logits.cols();
    let mut grad = Matrix::zeros(logits.rows(), c);
    let mut total = 0.0;
    for term in terms {
        if term.nodes.is_empty() {
            return Err(Error::InvalidArgument("loss term with an empty node mask".into()));
        }
        let scale = term.weight / term.nodes.len() as f64;
        let mut sum = 0.0;
        for (k, &i) in term.nodes.iter().enumerate() {
            let logp = log_softmax(logits.row(i));
            let g = grad.row_mut(i);
            match &term.targets {
                Targets::Hard(y) => {
                    let yk = y[k];
                    if yk >= c {
                        return Err(Error::InvalidArgument(format!("target class {yk} >= {c}")));
                    }
                    sum -= logp[yk];
                    for (j, gj) in g.iter_mut().enumerate() {
                        let p = logp[j].exp();
                        *gj += scale * (p - if j == yk { 1.0 } else { 0.0 });
                    }
                }
                Targets::Soft(t) => {
                    let trow = t.row(k);
                    if trow.len() != c {
                        return Err(Error::Shape(format!(
                            "soft target width {} vs {c} classes",
                            trow.len()
                        )));
                    }
                    for (j, gj) in g.iter_mut().enumerate() {
                        let tj = trow[j];
                        if tj > 0.0 {
                            sum += tj * (tj.ln() - logp[j]);
                        }
                        *gj += scale * (logp[j].exp() - tj);
                    }
                }
            }
        }
        total += scale * sum;
    }
    Ok((total, grad))
}

/// Loss over `mask` with full-graph targets, and exact gradients for every
/// parameter. Runs without dropout.
pub fn loss_and_grad(
    model: &GnnModel,
    ops: &GraphOps,
    x: &Matrix,
    targets: &Targets,
    mask: &[usize],
    mode: LabelMode,
) -> Result<(f64, Gradients)> {
    match (mode, targets) {
        (LabelMode::Hard, Targets::Hard(_)) | (LabelMode::Soft, Targets::Soft(_)) => {}
        _ => {
            return Err(Error::InvalidArgument(format!(
                "label mode {mode:?} does not match target kind"
            )))
        }
    }
    if mask.is_empty() {
        return Err(Error::InvalidArgument("empty mask".into()));
    }
    let cache = model.forward_train::<rand_chacha::ChaCha8Rng>(ops, x, None)?;
    let term = LossTerm::from_mask(mask, targets);
    let (loss, d_logits) = loss_terms(&cache.logits, std::slice::from_ref(&term))?;
    Ok((loss, model.backward(ops, &cache, &d_logits, None, false)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_rows_sum_to_one() {
        let z = Matrix::from_rows(&[vec![1000.0, -1000.0, 3.0], vec![0.1, 0.2, 0.3]]).unwrap();
        let p = softmax_rows(&z);
        for i in 0..2 {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[1.0 / 3.0; 3]), 0);
    }

    #[test]
    fn confident_correct_logits_have_near_zero_loss() {
        let z = Matrix::from_rows(&[vec![60.0, 0.0], vec![0.0, 60.0]]).unwrap();
        let (l, _) = loss_terms(&z, &[LossTerm::hard(vec![0, 1], vec![0, 1])]).unwrap();
        assert!(l < 1e-20);
    }

    #[test]
    fn self_distillation_is_zero() {
        let z = Matrix::from_rows(&[vec![0.3, -1.0, 2.0]]).unwrap();
        let t = softmax_rows(&z);
        let (l, g) = loss_terms(&z, &[LossTerm::soft(vec![0], t)]).unwrap();
        assert!(l.abs() < 1e-15);
        assert!(g.as_slice().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn empty_mask_is_an_error() {
        let z = Matrix::zeros(2, 2);
        assert!(loss_terms(&z, &[LossTerm::hard(vec![], vec![])]).is_err());
    }
}
