//! The black-box endpoint: a (possibly defended) target behind a hard
//! query budget.
//!
//! Queries name nodes of the deployed graph and are answered from the
//! target's full-graph forward pass. Attacks that fabricate their own
//! inputs submit a whole graph with [`QueryOracle::query_graph`]; only the
//! nodes they ask about are charged.

mod budget;

pub use budget::{sample_budget_nodes, BudgetSpec};

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::defenses::inference::{
    add_logit_noise, misinform, probs_to_logits, quantize, redirect, top1, uniform,
    InferenceTransform, PradaState,
};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphOps};
use crate::nn::{argmax, softmax, GnnModel, Matrix};
use crate::seed::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ResponseMode {
    #[default]
    SoftProbs,
    HardLabel,
    /// Probabilities rounded to `bits` bits per entry.
    Quantized { bits: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResponse {
    pub mode: ResponseMode,
    /// One probability row per queried node; `None` in hard-label mode.
    pub probs: Option<Matrix>,
    /// Argmax of the served response, one per queried node.
    pub labels: Vec<usize>,
}

impl QueryResponse {
    fn empty(mode: ResponseMode) -> Self {
        Self {
            mode,
            probs: None,
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryLogEntry {
    pub ids: Vec<usize>,
    /// True when the batch was answered on an attacker-supplied graph.
    pub synthetic: bool,
    pub at: Duration,
}

/// The deployed model together with the graph it serves.
#[derive(Debug, Clone)]
pub struct Deployment {
    pub model: Arc<GnnModel>,
    pub graph: Arc<Graph>,
    pub ops: Arc<GraphOps>,
    logits: Arc<Matrix>,
}

impl Deployment {
    pub fn new(model: Arc<GnnModel>, graph: Arc<Graph>, ops: Arc<GraphOps>) -> Result<Self> {
        let logits = Arc::new(model.forward(&ops, graph.features())?);
        Ok(Self {
            model,
            graph,
            ops,
            logits,
        })
    }

    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    /// Undefended hard predictions on the deployed graph.
    pub fn predictions(&self) -> Vec<usize> {
        (0..self.logits.rows())
            .map(|i| argmax(self.logits.row(i)))
            .collect()
    }
}

#[derive(Debug)]
pub struct QueryOracle {
    deployment: Deployment,
    chain: Vec<InferenceTransform>,
    mode: ResponseMode,
    budget_limit: usize,
    queries_used: usize,
    log: Vec<QueryLogEntry>,
    noise: ChaCha8Rng,
    prada: Vec<PradaState>,
    started: Instant,
    query_time: Duration,
}

impl QueryOracle {
    /// `defense_seed` drives every random transform in the chain.
    pub fn new(
        deployment: Deployment,
        chain: Vec<InferenceTransform>,
        mode: ResponseMode,
        budget_limit: usize,
        defense_seed: u64,
    ) -> Result<Self> {
        if budget_limit == 0 {
            return Err(Error::InvalidArgument("oracle budget must be at least 1".into()));
        }
        let prada = vec![PradaState::default(); chain.len()];
        Ok(Self {
            deployment,
            chain,
            mode,
            budget_limit,
            queries_used: 0,
            log: Vec::new(),
            noise: rng_from(defense_seed),
            prada,
            started: Instant::now(),
            query_time: Duration::ZERO,
        })
    }

    pub fn deployment(&self) -> &Deployment {
        &self.deployment
    }

    pub fn mode(&self) -> ResponseMode {
        self.mode
    }

    pub fn num_classes(&self) -> usize {
        self.deployment.model.num_classes
    }

    pub fn num_nodes(&self) -> usize {
        self.deployment.graph.num_nodes()
    }

    pub fn feat_dim(&self) -> usize {
        self.deployment.model.feat_dim
    }

    pub fn budget_limit(&self) -> usize {
        self.budget_limit
    }

    pub fn queries_used(&self) -> usize {
        self.queries_used
    }

    pub fn remaining(&self) -> usize {
        self.budget_limit - self.queries_used
    }

    pub fn query_log(&self) -> &[QueryLogEntry] {
        &self.log
    }

    pub fn query_time(&self) -> Duration {
        self.query_time
    }

    /// Whether any detector stage in the chain has tripped.
    pub fn detector_tripped(&self) -> bool {
        self.prada.iter().any(|p| p.tripped)
    }

    fn charge(&mut self, ids: &[usize], n: usize, synthetic: bool) -> Result<()> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidArgument(format!(
                "query for node {bad} on a {n}-node graph"
            )));
        }
        if self.queries_used + ids.len() > self.budget_limit {
            return Err(Error::BudgetExhausted {
                used: self.queries_used,
                limit: self.budget_limit,
                requested: ids.len(),
            });
        }
        self.queries_used += ids.len();
        self.log.push(QueryLogEntry {
            ids: ids.to_vec(),
            synthetic,
            at: self.started.elapsed(),
        });
        Ok(())
    }

    /// Answers a batch of deployed-graph node ids. Duplicates are charged
    /// individually.
    pub fn query(&mut self, ids: &[usize]) -> Result<QueryResponse> {
        if ids.is_empty() {
            return Ok(QueryResponse::empty(self.mode));
        }
        let t0 = Instant::now();
        self.charge(ids, self.num_nodes(), false)?;
        let dep = self.deployment.clone();
        let resp = self.respond(ids, dep.logits(), dep.graph.features());
        self.query_time += t0.elapsed();
        Ok(resp)
    }

    /// Answers node ids of an attacker-supplied graph by running the target
    /// on it.
    pub fn query_graph(
        &mut self,
        ops: &GraphOps,
        features: &Matrix,
        ids: &[usize],
    ) -> Result<QueryResponse> {
        if ids.is_empty() {
            return Ok(QueryResponse::empty(self.mode));
        }
        let t0 = Instant::now();
        self.charge(ids, ops.num_nodes(), true)?;
        let logits = self.deployment.model.forward(ops, features)?;
        let resp = self.respond(ids, &logits, features);
        self.query_time += t0.elapsed();
        Ok(resp)
    }

    fn respond(&mut self, ids: &[usize], logits: &Matrix, features: &Matrix) -> QueryResponse {
        let c = logits.cols();
        let mut probs = Matrix::zeros(ids.len(), c);
        let mut labels = Vec::with_capacity(ids.len());
        for (r, &i) in ids.iter().enumerate() {
            let row = self.transform_row(logits.row(i), features.row(i));
            let row = match self.mode {
                ResponseMode::Quantized { bits } => quantize(&row, bits),
                _ => row,
            };
            labels.push(argmax(&row));
            probs.row_mut(r).copy_from_slice(&row);
        }
        QueryResponse {
            mode: self.mode,
            probs: (self.mode != ResponseMode::HardLabel).then_some(probs),
            labels,
        }
    }

    fn transform_row(&mut self, logits: &[f64], feature_row: &[f64]) -> Vec<f64> {
        enum Stage {
            Logits(Vec<f64>),
            Probs(Vec<f64>),
        }
        fn probs(s: Stage) -> Vec<f64> {
            match s {
                Stage::Logits(z) => softmax(&z),
                Stage::Probs(p) => p,
            }
        }
        let c = logits.len();
        let mut stage = Stage::Logits(logits.to_vec());
        for k in 0..self.chain.len() {
            stage = match &self.chain[k] {
                InferenceTransform::LogitNoise { sigma } => {
                    let z = match stage {
                        Stage::Logits(z) => z,
                        Stage::Probs(p) if *sigma == 0.0 => {
                            stage = Stage::Probs(p);
                            continue;
                        }
                        Stage::Probs(p) => probs_to_logits(&p),
                    };
                    Stage::Logits(add_logit_noise(&z, *sigma, &mut self.noise))
                }
                InferenceTransform::Quantize { bits } => Stage::Probs(quantize(&probs(stage), *bits)),
                InferenceTransform::Top1 => Stage::Probs(top1(&probs(stage))),
                InferenceTransform::Misinform { threshold } => {
                    Stage::Probs(misinform(&probs(stage), *threshold))
                }
                InferenceTransform::Redirect { strength } => {
                    Stage::Probs(redirect(&probs(stage), *strength))
                }
                InferenceTransform::Prada(cfg) => {
                    let cfg = *cfg;
                    if self.prada[k].observe(&cfg, feature_row) {
                        Stage::Probs(uniform(c))
                    } else {
                        Stage::Probs(probs(stage))
                    }
                }
            };
        }
        probs(stage)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmParams};
    use crate::nn::{Backbone, Predictions};

    fn deployment() -> Deployment {
        let g = generate_sbm(
            &SbmParams {
                n: 30,
                num_classes: 3,
                p_in: 0.3,
                p_out: 0.02,
                feat_dim: 4,
                feat_signal: 2.0,
            },
            0,
        )
        .unwrap();
        let ops = GraphOps::from_graph(&g);
        let m = GnnModel::init(Backbone::Gcn, 4, 8, 3, 0.5, 1);
        Deployment::new(Arc::new(m), Arc::new(g), Arc::new(ops)).unwrap()
    }

    #[test]
    fn undefended_soft_equals_predictions() {
        let dep = deployment();
        let pred = Predictions::from_logits(dep.logits());
        let mut o = QueryOracle::new(dep, vec![], ResponseMode::SoftProbs, 100, 0).unwrap();
        let ids: Vec<usize> = (0..30).collect();
        let r = o.query(&ids).unwrap();
        assert_eq!(r.probs.unwrap(), pred.probs);
        assert_eq!(r.labels, pred.hard);
    }

    #[test]
    fn top1_chain_is_one_hot() {
        let mut o = QueryOracle::new(
            deployment(),
            vec![InferenceTransform::Top1],
            ResponseMode::SoftProbs,
            100,
            0,
        )
        .unwrap();
        let r = o.query(&[0, 1, 2]).unwrap();
        let p = r.probs.unwrap();
        for i in 0..3 {
            assert_eq!(p.row(i).iter().sum::<f64>(), 1.0);
            assert_eq!(p.row(i)[r.labels[i]], 1.0);
        }
    }

    #[test]
    fn budget_counter_arithmetic() {
        let mut o = QueryOracle::new(deployment(), vec![], ResponseMode::HardLabel, 10, 0).unwrap();
        o.query(&[0, 1, 2, 3]).unwrap();
        o.query(&[4, 5, 6, 7]).unwrap();
        let err = o.query(&[8, 9, 10, 11]).unwrap_err();
        assert!(matches!(err, Error::BudgetExhausted { used: 8, limit: 10, requested: 4 }));
        assert_eq!(o.queries_used(), 8);
        assert_eq!(o.query_log().len(), 2);
    }

    #[test]
    fn repeats_charged_and_identical() {
        let mut o = QueryOracle::new(deployment(), vec![], ResponseMode::SoftProbs, 10, 0).unwrap();
        let a = o.query(&[5]).unwrap();
        let b = o.query(&[5]).unwrap();
        assert_eq!(a, b);
        assert_eq!(o.queries_used(), 2);
        assert!(o.query(&[]).unwrap().is_empty());
        assert_eq!(o.queries_used(), 2);
    }

    #[test]
    fn noisy_responses_differ_but_mostly_keep_argmax() {
        let dep = deployment();
        let clean = dep.predictions();
        let mut o = QueryOracle::new(
            dep,
            vec![InferenceTransform::LogitNoise { sigma: 0.05 }],
            ResponseMode::SoftProbs,
            100,
            7,
        )
        .unwrap();
        let a = o.query(&(0..30).collect::<Vec<_>>()).unwrap();
        let b = o.query(&(0..30).collect::<Vec<_>>()).unwrap();
        assert_ne!(a.probs, b.probs);
        let stable = a.labels.iter().zip(&clean).filter(|(x, y)| x == y).count();
        assert!(stable >= 24, "{stable}/30 argmax stable");
    }

    #[test]
    fn out_of_range_ids_rejected() {
        let mut o = QueryOracle::new(deployment(), vec![], ResponseMode::SoftProbs, 10, 0).unwrap();
        assert!(o.query(&[30]).is_err());
        assert_eq!(o.queries_used(), 0);
    }
}
