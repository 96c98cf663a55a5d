use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_terms, LabelMode, LossTerm};
use super::matrix::Matrix;
use super::model::{ForwardCache, GnnModel};
use super::optim::Adam;
use crate::error::{Error, Result};
use crate::graph::GraphOps;
use crate::seed::rng_from;

/// Full-batch training settings. Defaults are the usual Planetoid GCN
/// settings: Adam(0.9, 0.999, 1e-8), lr 0.01, weight decay 5e-4, 200 epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub label_mode: LabelMode,
    /// Seeds the dropout stream.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            label_mode: LabelMode::Hard,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Extra objective evaluated on the forward cache each step.
#[derive(Debug, Clone, Default)]
pub struct ExtraGrad {
    pub loss: f64,
    pub d_logits: Option<Matrix>,
    pub d_hidden: Option<Matrix>,
}

/// Stateful single-model optimiser loop: owns Adam moments and the dropout
/// stream so callers can interleave steps with other work.
#[derive(Debug, Clone)]
pub struct Trainer {
    adam: Adam,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            adam: Adam::new(
                cfg.learning_rate,
                cfg.beta1,
                cfg.beta2,
                cfg.eps,
                cfg.weight_decay,
            ),
            rng: rng_from(cfg.seed),
            epoch: 0,
        }
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn step(
        &mut self,
        model: &mut GnnModel,
        ops: &GraphOps,
        x: &Matrix,
        terms: &[LossTerm],
    ) -> Result<f64> {
        self.step_with(model, ops, x, terms, |_| Ok(ExtraGrad::default()))
    }

    /// One full-batch step on `terms` plus whatever `extra` contributes.
    pub fn step_with(
        &mut self,
        model: &mut GnnModel,
        ops: &GraphOps,
        x: &Matrix,
        terms: &[LossTerm],
        extra: impl FnOnce(&ForwardCache) -> Result<ExtraGrad>,
    ) -> Result<f64> {
        let mut extra = Some(extra);
        self.step_parts(model, &[Part { ops, x, terms }], |_, cache| {
            (extra.take().expect("single part"))(cache)
        })
    }

    /// One step on the summed objective of several input views of the same
    /// model. `extra` is called once per part with its forward cache.
    pub fn step_parts(
        &mut self,
        model: &mut GnnModel,
        parts: &[Part<'_>],
        mut extra: impl FnMut(usize, &ForwardCache) -> Result<ExtraGrad>,
    ) -> Result<f64> {
        let mut total = 0.0;
        let mut grads: Option<Vec<Matrix>> = None;
        for (k, part) in parts.iter().enumerate() {
            let cache = model.forward_train(part.ops, part.x, Some(&mut self.rng))?;
            let (mut loss, mut d_logits) = if part.terms.is_empty() {
                (0.0, Matrix::zeros(cache.logits.rows(), cache.logits.cols()))
            } else {
                loss_terms(&cache.logits, part.terms)?
            };
            let ex = extra(k, &cache)?;
            loss += ex.loss;
            if let Some(d) = &ex.d_logits {
                d_logits.add_assign(d);
            }
            total += loss;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch: self.epoch + 1,
                    loss,
                });
            }
            let g = model.backward(part.ops, &cache, &d_logits, ex.d_hidden.as_ref(), false);
            match &mut grads {
                None => grads = Some(g.params),
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(&g.params) {
                        a.add_assign(b);
                    }
                }
            }
        }
        self.epoch += 1;
        let Some(grads) = grads else {
            return Err(Error::InvalidArgument("training step with no parts".into()));
        };
        let decay = model.decay_mask();
        self.adam.step(model.params_mut(), &grads, &decay);
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                epoch: self.epoch,
                loss: total,
            });
        }
        Ok(total)
    }
}

/// One input view contributing to a training step.
#[derive(Debug, Clone, Copy)]
pub struct Part<'a> {
    pub ops: &'a GraphOps,
    pub x: &'a Matrix,
    pub terms: &'a [LossTerm],
}

/// Trains a copy of `init` for `cfg.epochs` full-batch Adam steps.
pub fn train(
    init: &GnnModel,
    ops: &GraphOps,
    x: &Matrix,
    terms: &[LossTerm],
    cfg: &TrainConfig,
) -> Result<GnnModel> {
    cfg.validate()?;
    let mut model = init.clone();
    let mut trainer = Trainer::new(cfg);
    for _ in 0..cfg.epochs {
        trainer.step(&mut model, ops, x, terms)?;
    }
    Ok(model)
}

/// Loss and its gradient with respect to the input features (no dropout,
/// parameters untouched).
pub fn input_gradient(
    model: &GnnModel,
    ops: &GraphOps,
    x: &Matrix,
    terms: &[LossTerm],
) -> Result<(f64, Matrix)> {
    let cache = model.forward_train::<ChaCha8Rng>(ops, x, None)?;
    let (loss, d_logits) = loss_terms(&cache.logits, terms)?;
    let g = model.backward(ops, &cache, &d_logits, None, true);
    Ok((loss, g.input.expect("input gradient requested")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Backbone;

    #[test]
    fn loss_falls_on_a_separable_problem() {
        // Two cliques with opposite features; no dropout, no decay.
        let edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)];
        let ops = GraphOps::new(6, &edges);
        let x = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.9, 0.1],
            vec![1.0, 0.2],
            vec![0.0, 1.0],
            vec![0.1, 0.9],
            vec![0.2, 1.0],
        ])
        .unwrap();
        let terms = [LossTerm::hard(vec![0, 1, 2, 3, 4, 5], vec![0, 0, 0, 1, 1, 1])];
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        for b in Backbone::ALL {
            let mut model = GnnModel::init(b, 2, 8, 2, 0.0, 3);
            let mut trainer = Trainer::new(&cfg);
            let losses: Vec<f64> = (0..100)
                .map(|_| trainer.step(&mut model, &ops, &x, &terms).unwrap())
                .collect();
            assert!(losses[99] < 0.1 * losses[0], "{b:?}: {} -> {}", losses[0], losses[99]);
            assert!(losses.windows(10).step_by(10).all(|w| w[9] <= w[0] + 1e-9));
        }
    }
}
