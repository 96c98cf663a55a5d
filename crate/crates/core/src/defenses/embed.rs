//! Training-time defenses: clean targets, watermark embedding and
//! fingerprinting.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::artifact::WatermarkArtifact;
use super::inference::InferenceTransform;
use super::snnl::snnl_with_grad;
use super::spec::DefenseSpec;
use super::verify::{apply_delta, apply_pattern, apply_trigger};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphOps, SplitSpec};
use crate::nn::{
    argmax, input_gradient, Backbone, ExtraGrad, GnnModel, LossTerm, Matrix, Part, TrainConfig,
    Trainer,
};
use crate::seed::SeedTree;

/// Architecture and optimiser settings shared by targets and defended
/// models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetSpec {
    pub backbone: Backbone,
    pub hidden: usize,
    pub dropout: f64,
    pub train: TrainConfig,
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self {
            backbone: Backbone::Gcn,
            hidden: 16,
            dropout: 0.5,
            train: TrainConfig::default(),
        }
    }
}

impl TargetSpec {
    /// Initial model and training config for run seed `seed`. Clean and
    /// defended targets share both, so a zero-weight watermark reproduces
    /// the clean model.
    fn start(&self, g: &Graph, seed: u64) -> (GnnModel, TrainConfig) {
        let tree = SeedTree::new(seed);
        let model = GnnModel::init(
            self.backbone,
            g.feat_dim(),
            self.hidden,
            g.num_classes(),
            self.dropout,
            tree.child("target-init").seed(),
        );
        let cfg = self.train.clone().with_seed(tree.child("target-dropout").seed());
        (model, cfg)
    }
}

/// A defended deployment: the model, its verification material and the
/// response transforms the endpoint applies.
#[derive(Debug, Clone)]
pub struct DefendedTarget {
    pub model: GnnModel,
    pub artifact: WatermarkArtifact,
    pub chain: Vec<InferenceTransform>,
}

fn train_labels(g: &Graph, splits: &SplitSpec) -> LossTerm {
    LossTerm::hard(
        splits.train.clone(),
        splits.train.iter().map(|&i| g.labels()[i]).collect(),
    )
}

/// Undefended target trained on the train split's ground-truth labels.
pub fn train_clean(
    spec: &TargetSpec,
    g: &Graph,
    ops: &GraphOps,
    splits: &SplitSpec,
    seed: u64,
) -> Result<GnnModel> {
    let (model, cfg) = spec.start(g, seed);
    crate::nn::train(&model, ops, g.features(), &[train_labels(g, splits)], &cfg)
}

/// Hard predictions of `model` on the deployed graph.
pub fn predict(model: &GnnModel, ops: &GraphOps, x: &Matrix) -> Result<Vec<usize>> {
    let z = model.forward(ops, x)?;
    Ok((0..z.rows()).map(|i| argmax(z.row(i))).collect())
}

/// Builds any defense. Response-side kinds and Integrity reuse `clean`;
/// the four watermarks train their own model.
pub fn build_defense(
    spec: &DefenseSpec,
    target: &TargetSpec,
    g: &Graph,
    ops: &GraphOps,
    splits: &SplitSpec,
    clean: &GnnModel,
    seed: u64,
) -> Result<DefendedTarget> {
    spec.validate()?;
    if spec.is_training_time() {
        let (model, artifact) = match spec {
            DefenseSpec::Integrity { fingerprint_count } => (
                clean.clone(),
                fingerprint(clean, ops, g.features(), *fingerprint_count)?,
            ),
            _ => train_defended(spec, target, g, ops, splits, seed)?,
        };
        return Ok(DefendedTarget {
            model,
            artifact,
            chain: Vec::new(),
        });
    }
    let labels = predict(clean, ops, g.features())?;
    Ok(DefendedTarget {
        model: clean.clone(),
        artifact: WatermarkArtifact::Marker {
            nodes: splits.test.clone(),
            labels: splits.test.iter().map(|&i| labels[i]).collect(),
        },
        chain: spec.inference_chain(),
    })
}

/// Trains a defended model for one of the five training-time kinds.
pub fn train_defended(
    spec: &DefenseSpec,
    target: &TargetSpec,
    g: &Graph,
    ops: &GraphOps,
    splits: &SplitSpec,
    seed: u64,
) -> Result<(GnnModel, WatermarkArtifact)> {
    spec.validate()?;
    let wrap = |e: Error| match e {
        Error::Diverged { epoch, loss } => Error::Defense {
            kind: spec.name().into(),
            seed,
            msg: format!("joint training diverged at epoch {epoch} (loss {loss})"),
        },
        other => other,
    };
    let mut rng = SeedTree::new(seed).child("defense").rng();
    let c = g.num_classes();
    let check_class = |t: usize| {
        if t >= c {
            Err(Error::Config(format!(
                "{}: target_class {t} but only {c} classes",
                spec.name()
            )))
        } else {
            Ok(())
        }
    };
    match spec {
        DefenseSpec::BackdoorWm {
            trigger_rate,
            min_triggers,
            trigger_dims,
            trigger_value,
            joint_alpha,
            target_class,
        } => {
            check_class(*target_class)?;
            let eligible: Vec<usize> = splits
                .train
                .iter()
                .copied()
                .filter(|&i| g.labels()[i] != *target_class)
                .collect();
            let want = ((trigger_rate * splits.train.len() as f64).floor() as usize)
                .max(*min_triggers)
                .min(eligible.len());
            let triggers = sorted_sample(&mut rng, &eligible, want);
            let ell = (*trigger_dims).min(g.feat_dim());
            let dims = sorted_sample(&mut rng, &(0..g.feat_dim()).collect::<Vec<_>>(), ell);
            let x_trig = apply_trigger(g.features(), &triggers, &dims, *trigger_value)?;
            let model = joint_train(
                target,
                g,
                ops,
                splits,
                seed,
                &x_trig,
                &triggers,
                *target_class,
                *joint_alpha,
            )
            .map_err(wrap)?;
            Ok((
                model,
                WatermarkArtifact::Backdoor {
                    trigger_nodes: triggers,
                    trigger_dims: dims,
                    trigger_value: *trigger_value,
                    target_class: *target_class,
                },
            ))
        }
        DefenseSpec::RandomWm {
            wm_node_ratio,
            wm_nodes,
            wm_min_nodes,
            wm_avg_degree,
        } => {
            let s = wm_nodes.unwrap_or_else(|| {
                ((wm_node_ratio * g.num_nodes() as f64).floor() as usize).max(*wm_min_nodes)
            });
            let wm = random_graph(&mut rng, s, g.feat_dim(), c, *wm_avg_degree)?;
            let union = g.disjoint_union(&wm)?;
            let union_ops = GraphOps::from_graph(&union);
            let n = g.num_nodes();
            let mut nodes = splits.train.clone();
            nodes.extend(n..n + s);
            let labels = nodes.iter().map(|&i| union.labels()[i]).collect();
            let (init, cfg) = target.start(g, seed);
            let model = crate::nn::train(
                &init,
                &union_ops,
                union.features(),
                &[LossTerm::hard(nodes, labels)],
                &cfg,
            )
            .map_err(wrap)?;
            Ok((model, WatermarkArtifact::WatermarkGraph { graph: wm }))
        }
        DefenseSpec::SurviveWm {
            wm_strength,
            snnl_alpha,
            key_ratio,
            t_opt,
            key_scale,
        } => {
            let k = ((key_ratio * splits.train.len() as f64).floor() as usize).max(1);
            let keys = sorted_sample(&mut rng, &splits.train, k);
            let others: Vec<usize> = splits
                .train
                .iter()
                .copied()
                .filter(|i| keys.binary_search(i).is_err())
                .collect();
            let refs = sorted_sample(&mut rng, &others, k.min(others.len()));
            let key_labels: Vec<usize> = keys
                .iter()
                .map(|&i| (g.labels()[i] + 1 + rng.random_range(0..c - 1)) % c)
                .collect();
            let mut pattern: Vec<f64> = (0..g.feat_dim())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let norm = pattern.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            pattern.iter_mut().for_each(|v| *v *= key_scale / norm);
            let x_key = apply_pattern(g.features(), &keys, &pattern)?;

            // embeddings of key inputs are pulled toward clean ones
            let mut probe: Vec<usize> = keys.clone();
            probe.extend(&refs);
            let group: Vec<usize> = (0..probe.len()).map(|j| usize::from(j < k)).collect();
            let (mut model, cfg) = target.start(g, seed);
            let mut trainer = Trainer::new(&cfg);
            let clean_terms = [train_labels(g, splits)];
            let key_terms = [LossTerm::hard(keys.clone(), key_labels.clone()).weighted(*wm_strength)];
            let parts = [
                Part {
                    ops,
                    x: g.features(),
                    terms: &clean_terms,
                },
                Part {
                    ops,
                    x: &x_key,
                    terms: &key_terms,
                },
            ];
            for _ in 0..cfg.epochs {
                trainer
                    .step_parts(&mut model, &parts, |part, cache| {
                        if part == 0 || *snnl_alpha == 0.0 || refs.is_empty() {
                            return Ok(ExtraGrad::default());
                        }
                        let h = cache.hidden.select_rows(&probe);
                        let (l, gh) = snnl_with_grad(&h, &group, *t_opt);
                        let mut d_hidden = Matrix::zeros(cache.hidden.rows(), cache.hidden.cols());
                        for (r, &i) in probe.iter().enumerate() {
                            for (d, v) in d_hidden.row_mut(i).iter_mut().zip(gh.row(r)) {
                                *d -= snnl_alpha * v;
                            }
                        }
                        Ok(ExtraGrad {
                            loss: -snnl_alpha * l,
                            d_logits: None,
                            d_hidden: Some(d_hidden),
                        })
                    })
                    .map_err(wrap)?;
            }
            Ok((
                model,
                WatermarkArtifact::KeyInputs {
                    key_nodes: keys,
                    key_pattern: pattern,
                    key_labels,
                },
            ))
        }
        DefenseSpec::ImperceptibleWm {
            epsilon,
            trigger_count,
            joint_alpha,
            target_class,
            rounds,
            model_epochs,
            trigger_steps,
        } => {
            check_class(*target_class)?;
            let eligible: Vec<usize> = splits
                .train
                .iter()
                .copied()
                .filter(|&i| g.labels()[i] != *target_class)
                .collect();
            let triggers = sorted_sample(&mut rng, &eligible, (*trigger_count).min(eligible.len()));
            let mut delta = Matrix::zeros(triggers.len(), g.feat_dim());
            let (mut model, cfg) = target.start(g, seed);
            let mut trainer = Trainer::new(&cfg);
            let clean_terms = [train_labels(g, splits).weighted(1.0 - joint_alpha)];
            let trig_terms = [
                LossTerm::hard(triggers.clone(), vec![*target_class; triggers.len()])
                    .weighted(*joint_alpha),
            ];
            let pgd_terms = [LossTerm::hard(
                triggers.clone(),
                vec![*target_class; triggers.len()],
            )];
            let step = epsilon / 4.0;
            for _ in 0..*rounds {
                let x_trig = apply_delta(g.features(), &triggers, &delta)?;
                let mut parts = vec![Part {
                    ops,
                    x: g.features(),
                    terms: &clean_terms,
                }];
                if *joint_alpha > 0.0 && !triggers.is_empty() {
                    parts.push(Part {
                        ops,
                        x: &x_trig,
                        terms: &trig_terms,
                    });
                }
                for _ in 0..*model_epochs {
                    trainer
                        .step_parts(&mut model, &parts, |_, _| Ok(ExtraGrad::default()))
                        .map_err(wrap)?;
                }
                if triggers.is_empty() {
                    continue;
                }
                for _ in 0..*trigger_steps {
                    let x_trig = apply_delta(g.features(), &triggers, &delta)?;
                    let (_, dx) = input_gradient(&model, ops, &x_trig, &pgd_terms)?;
                    for (r, &i) in triggers.iter().enumerate() {
                        for (d, &gx) in delta.row_mut(r).iter_mut().zip(dx.row(i)) {
                            let sign = if gx > 0.0 {
                                1.0
                            } else if gx < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            *d = (*d - step * sign).clamp(-epsilon, *epsilon);
                        }
                    }
                }
            }
            Ok((
                model,
                WatermarkArtifact::Perturbation {
                    trigger_nodes: triggers,
                    delta,
                    target_class: *target_class,
                },
            ))
        }
        DefenseSpec::Integrity { fingerprint_count } => {
            let model = train_clean(target, g, ops, splits, seed)?;
            let art = fingerprint(&model, ops, g.features(), *fingerprint_count)?;
            Ok((model, art))
        }
        other => Err(Error::Config(format!(
            "{} is a response-side defense, not a training-time one",
            other.name()
        ))),
    }
}

/// `(1−α)·clean + α·trigger` training where the trigger term reads the
/// modified features. A zero weight drops its view entirely.
#[allow(clippy::too_many_arguments)]
fn joint_train(
    target: &TargetSpec,
    g: &Graph,
    ops: &GraphOps,
    splits: &SplitSpec,
    seed: u64,
    x_trig: &Matrix,
    triggers: &[usize],
    target_class: usize,
    alpha: f64,
) -> Result<GnnModel> {
    let (mut model, cfg) = target.start(g, seed);
    let mut trainer = Trainer::new(&cfg);
    let clean_terms = [train_labels(g, splits).weighted(1.0 - alpha)];
    let trig_terms =
        [LossTerm::hard(triggers.to_vec(), vec![target_class; triggers.len()]).weighted(alpha)];
    let mut parts = Vec::new();
    if alpha < 1.0 {
        parts.push(Part {
            ops,
            x: g.features(),
            terms: &clean_terms,
        });
    }
    if alpha > 0.0 && !triggers.is_empty() {
        parts.push(Part {
            ops,
            x: x_trig,
            terms: &trig_terms,
        });
    }
    for _ in 0..cfg.epochs {
        trainer.step_parts(&mut model, &parts, |_, _| Ok(ExtraGrad::default()))?;
    }
    Ok(model)
}

/// The `count` nodes with the smallest top-1/top-2 logit margin (ties by
/// node index) and the model's labels on them.
pub fn fingerprint(
    model: &GnnModel,
    ops: &GraphOps,
    x: &Matrix,
    count: usize,
) -> Result<WatermarkArtifact> {
    let z = model.forward(ops, x)?;
    let mut margins: Vec<(f64, usize)> = (0..z.rows())
        .map(|i| {
            let row = z.row(i);
            let top = argmax(row);
            let second = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != top)
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            (row[top] - second, i)
        })
        .collect();
    margins.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let nodes: Vec<usize> = margins.iter().take(count).map(|&(_, i)| i).collect();
    let labels = nodes.iter().map(|&i| argmax(z.row(i))).collect();
    Ok(WatermarkArtifact::Fingerprint { nodes, labels })
}

/// Ascending uniform sample of `k` items from `pool`.
fn sorted_sample(rng: &mut impl Rng, pool: &[usize], k: usize) -> Vec<usize> {
    let mut out: Vec<usize> = sample(rng, pool.len(), k.min(pool.len()))
        .into_iter()
        .map(|i| pool[i])
        .collect();
    out.sort_unstable();
    out
}

/// Erdős–Rényi graph with Gaussian features and uniform labels.
fn random_graph(
    rng: &mut impl Rng,
    n: usize,
    feat_dim: usize,
    num_classes: usize,
    avg_degree: f64,
) -> Result<Graph> {
    let p = if n > 1 {
        (avg_degree / (n - 1) as f64).min(1.0)
    } else {
        0.0
    };
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let feats: Vec<f64> = (0..n * feat_dim)
        .map(|_| StandardNormal.sample(&mut *rng))
        .collect();
    let labels = (0..n).map(|_| rng.random_range(0..num_classes)).collect();
    Graph::new(Matrix::from_vec(n, feat_dim, feats)?, edges, labels, num_classes)
}
