//! Black-box extraction attacks.
//!
//! Every attack sees only the attacker's [`RegimeView`], the node ids it
//! may spend its budget on, and the oracle. Ground-truth labels never reach
//! this module. Surrogates are trained on oracle responses for queried
//! nodes only.

mod adaptive;
mod common;
mod dfea;
mod mea;
mod realistic;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RegimeView;
use crate::nn::{Backbone, GnnModel};
use crate::oracle::QueryOracle;

pub use common::{cosine_knn_edges, erdos_renyi_edges};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttackKind {
    #[serde(rename = "MEA0")]
    Mea0,
    #[serde(rename = "MEA1")]
    Mea1,
    #[serde(rename = "MEA2")]
    Mea2,
    #[serde(rename = "MEA3")]
    Mea3,
    #[serde(rename = "MEA4")]
    Mea4,
    #[serde(rename = "MEA5")]
    Mea5,
    #[serde(rename = "AdvMEA")]
    AdvMea,
    #[serde(rename = "CEGA")]
    Cega,
    Realistic,
    #[serde(rename = "DFEA_I")]
    DfeaI,
    #[serde(rename = "DFEA_II")]
    DfeaII,
    #[serde(rename = "DFEA_III")]
    DfeaIII,
}

impl AttackKind {
    pub const ALL: [AttackKind; 12] = [
        AttackKind::Mea0,
        AttackKind::Mea1,
        AttackKind::Mea2,
        AttackKind::Mea3,
        AttackKind::Mea4,
        AttackKind::Mea5,
        AttackKind::AdvMea,
        AttackKind::Cega,
        AttackKind::Realistic,
        AttackKind::DfeaI,
        AttackKind::DfeaII,
        AttackKind::DfeaIII,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::Mea0 => "MEA0",
            AttackKind::Mea1 => "MEA1",
            AttackKind::Mea2 => "MEA2",
            AttackKind::Mea3 => "MEA3",
            AttackKind::Mea4 => "MEA4",
            AttackKind::Mea5 => "MEA5",
            AttackKind::AdvMea => "AdvMEA",
            AttackKind::Cega => "CEGA",
            AttackKind::Realistic => "Realistic",
            AttackKind::DfeaI => "DFEA_I",
            AttackKind::DfeaII => "DFEA_II",
            AttackKind::DfeaIII => "DFEA_III",
        }
    }

    /// Attacks that synthesize every input and never read the view.
    pub fn is_data_free(&self) -> bool {
        matches!(self, AttackKind::DfeaI | AttackKind::DfeaII | AttackKind::DfeaIII)
    }
}

/// Attack configuration. Only `kind` is required when deserializing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub surrogate_backbone: Backbone,
    pub surrogate_hidden: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub knn_k: usize,
    pub er_edge_prob: f64,
    /// Logistic edge-predictor acceptance threshold.
    pub edge_threshold: f64,
    /// Candidate neighbours per node scored by the edge models.
    pub edge_candidates: usize,
    pub edge_model_epochs: usize,
    pub cega_rounds: usize,
    pub cega_lambda: f64,
    pub cega_epochs: usize,
    pub adv_rounds: usize,
    pub adv_epochs: usize,
    pub adv_step: f64,
    pub dfea_rounds: usize,
    pub consistency_weight: f64,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            kind: AttackKind::Mea0,
            surrogate_backbone: Backbone::Gcn,
            surrogate_hidden: 16,
            dropout: 0.5,
            epochs: 200,
            knn_k: 5,
            er_edge_prob: 0.01,
            edge_threshold: 0.5,
            edge_candidates: 20,
            edge_model_epochs: 100,
            cega_rounds: 5,
            cega_lambda: 0.5,
            cega_epochs: 40,
            adv_rounds: 5,
            adv_epochs: 40,
            adv_step: 0.1,
            dfea_rounds: 5,
            consistency_weight: 1.0,
        }
    }
}

impl AttackSpec {
    pub fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("{}: {m}", self.kind.name())));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.surrogate_hidden == 0 {
            return bad("surrogate_hidden must be positive");
        }
        if !(0.0..=1.0).contains(&self.er_edge_prob) || !(0.0..=1.0).contains(&self.cega_lambda) {
            return bad("probabilities must lie in [0,1]");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0,1)");
        }
        if self.adv_step < 0.0 || self.consistency_weight < 0.0 {
            return bad("adv_step and consistency_weight must be non-negative");
        }
        let rounds = match self.kind {
            AttackKind::Cega => self.cega_rounds,
            AttackKind::AdvMea => self.adv_rounds,
            k if k.is_data_free() => self.dfea_rounds,
            _ => 1,
        };
        if rounds == 0 {
            return bad("round count must be at least 1");
        }
        Ok(())
    }

    /// Oracle queries charged per budget node. Every attack spends at most
    /// one query per budget node.
    pub fn query_multiplicity(&self) -> usize {
        1
    }
}

/// What the attacker brings to a run besides the oracle.
#[derive(Debug, Clone, Copy)]
pub struct AttackInput<'a> {
    pub view: &'a RegimeView,
    /// The nodes this run's budget was sampled to; its length is the query
    /// budget.
    pub budget_nodes: &'a [usize],
    /// Nodes adaptive selectors may choose from (the query split).
    pub query_pool: &'a [usize],
}

#[derive(Debug, Clone)]
pub struct SurrogateResult {
    pub surrogate: GnnModel,
    pub queries_used: usize,
    pub wall_time: f64,
    pub log: Vec<String>,
}

/// Runs one attack to completion. A budget that runs out mid-attack ends
/// querying; the surrogate is trained on what was answered.
pub fn run_attack(
    spec: &AttackSpec,
    oracle: &mut QueryOracle,
    input: AttackInput<'_>,
    seed: u64,
) -> Result<SurrogateResult> {
    spec.validate()?;
    if input.view.feat_dim() != oracle.feat_dim() && !spec.kind.is_data_free() {
        return Err(Error::Shape(format!(
            "view has {} features, target expects {}",
            input.view.feat_dim(),
            oracle.feat_dim()
        )));
    }
    let start = Instant::now();
    let mut ctx = common::Ctx::new(spec, oracle, seed);
    let surrogate = match spec.kind {
        AttackKind::Mea0
        | AttackKind::Mea1
        | AttackKind::Mea2
        | AttackKind::Mea3
        | AttackKind::Mea4
        | AttackKind::Mea5 => mea::run(&mut ctx, input)?,
        AttackKind::AdvMea => adaptive::adv_mea(&mut ctx, input)?,
        AttackKind::Cega => adaptive::cega(&mut ctx, input)?,
        AttackKind::Realistic => realistic::run(&mut ctx, input)?,
        AttackKind::DfeaI | AttackKind::DfeaII | AttackKind::DfeaIII => {
            dfea::run(&mut ctx, input.budget_nodes.len())?
        }
    };
    Ok(SurrogateResult {
        surrogate,
        queries_used: ctx.queries,
        wall_time: start.elapsed().as_secs_f64(),
        log: ctx.log,
    })
}

#[cfg(test)]
pub(crate) mod fixture {
    use std::sync::Arc;

    use crate::defenses::{train_clean, TargetSpec};
    use crate::graph::{generate_sbm, make_splits, Graph, GraphOps, SbmParams, SplitFractions, SplitSpec};
    use crate::nn::GnnModel;
    use crate::oracle::{Deployment, QueryOracle, ResponseMode};

    pub struct World {
        pub graph: Arc<Graph>,
        pub ops: Arc<GraphOps>,
        pub splits: SplitSpec,
        pub target: Arc<GnnModel>,
    }

    pub fn world() -> World {
        let g = generate_sbm(
            &SbmParams {
                n: 150,
                num_classes: 3,
                p_in: 0.1,
                p_out: 0.01,
                feat_dim: 8,
                feat_signal: 1.5,
            },
            4,
        )
        .unwrap();
        let ops = GraphOps::from_graph(&g);
        let splits = make_splits(&g, &SplitFractions::default(), 5).unwrap().spec;
        let target = train_clean(&TargetSpec::default(), &g, &ops, &splits, 6).unwrap();
        World {
            graph: Arc::new(g),
            ops: Arc::new(ops),
            splits,
            target: Arc::new(target),
        }
    }

    impl World {
        pub fn oracle(&self, mode: ResponseMode, budget: usize) -> QueryOracle {
            let dep = Deployment::new(self.target.clone(), self.graph.clone(), self.ops.clone())
                .unwrap();
            QueryOracle::new(dep, Vec::new(), mode, budget, 0).unwrap()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixture::world;
    use super::*;
    use crate::graph::{apply_regime, Regime, RegimeKind};
    use crate::metrics::fidelity;
    use crate::nn::Predictions;
    use crate::oracle::ResponseMode;

    fn quick(kind: AttackKind) -> AttackSpec {
        AttackSpec {
            epochs: 60,
            edge_model_epochs: 30,
            cega_epochs: 20,
            adv_epochs: 20,
            ..AttackSpec::new(kind)
        }
    }

    fn run(
        w: &fixture::World,
        spec: &AttackSpec,
        regime: Regime,
        mode: ResponseMode,
        seed: u64,
    ) -> (SurrogateResult, usize) {
        let view = apply_regime(&w.graph, &regime, 11).unwrap();
        let budget = &w.splits.query[..30];
        let mut oracle = w.oracle(mode, budget.len());
        let input = AttackInput {
            view: &view,
            budget_nodes: budget,
            query_pool: &w.splits.query,
        };
        let r = run_attack(spec, &mut oracle, input, seed).unwrap();
        (r, oracle.queries_used())
    }

    #[test]
    fn every_attack_respects_budget_and_is_deterministic() {
        let w = world();
        for kind in AttackKind::ALL {
            let spec = quick(kind);
            let (a, used) = run(&w, &spec, Regime::both(), ResponseMode::SoftProbs, 3);
            assert_eq!(a.queries_used, used, "{}", kind.name());
            assert!(used <= 30 && used > 0, "{}: {used}", kind.name());
            let (b, _) = run(&w, &spec, Regime::both(), ResponseMode::SoftProbs, 3);
            assert_eq!(a.surrogate, b.surrogate, "{} not deterministic", kind.name());
        }
    }

    #[test]
    fn mea0_beats_chance() {
        let w = world();
        let (r, _) = run(&w, &quick(AttackKind::Mea0), Regime::both(), ResponseMode::HardLabel, 1);
        let s = Predictions::from_logits(&r.surrogate.forward(&w.ops, w.graph.features()).unwrap());
        let t = Predictions::from_logits(&w.target.forward(&w.ops, w.graph.features()).unwrap());
        let f = fidelity(&s.hard, &t.hard, &w.splits.test);
        assert!(f.value > 0.6, "fidelity {}", f.value);
    }

    #[test]
    fn mea1_on_complete_structure_is_mea0() {
        let w = world();
        let (a, _) = run(&w, &quick(AttackKind::Mea0), Regime::both(), ResponseMode::HardLabel, 2);
        let (b, _) = run(&w, &quick(AttackKind::Mea1), Regime::both(), ResponseMode::HardLabel, 2);
        assert_eq!(a.surrogate, b.surrogate);
    }

    #[test]
    fn regime_blind_attacks_ignore_the_view() {
        let w = world();
        for kind in [AttackKind::Mea2, AttackKind::DfeaI, AttackKind::DfeaII, AttackKind::DfeaIII] {
            let spec = quick(kind);
            let (a, _) = run(&w, &spec, Regime::both(), ResponseMode::SoftProbs, 4);
            let (b, _) = run(&w, &spec, Regime::of(RegimeKind::DataFree), ResponseMode::SoftProbs, 4);
            assert_eq!(a.surrogate, b.surrogate, "{}", kind.name());
        }
    }

    #[test]
    fn dfea_soft_falls_back_on_hard_oracle() {
        let w = world();
        let (r, _) = run(&w, &quick(AttackKind::DfeaI), Regime::both(), ResponseMode::HardLabel, 5);
        assert!(r.log.iter().any(|l| l.contains("falls back")));
    }

    #[test]
    fn spec_defaults_from_kind_only() {
        let s: AttackSpec = serde_json::from_str(r#"{"kind":"DFEA_III"}"#).unwrap();
        assert_eq!(s, AttackSpec::new(AttackKind::DfeaIII));
        assert_eq!(s.consistency_weight, 1.0);
        assert_eq!((s.knn_k, s.er_edge_prob), (5, 0.01));
        assert!(serde_json::from_str::<AttackSpec>(r#"{"kind":"MEA9"}"#).is_err());
    }

    #[test]
    fn names_round_trip() {
        for k in AttackKind::ALL {
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
    }

    #[test]
    fn zero_epochs_rejected() {
        let mut s = AttackSpec::new(AttackKind::Mea0);
        s.epochs = 0;
        assert!(s.validate().is_err());
    }
}
