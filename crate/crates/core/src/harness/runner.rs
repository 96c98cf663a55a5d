use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{expand_sweep, DatasetConfig, ExperimentConfig, Track};
use super::record::RunRecord;
use crate::attacks::{run_attack, AttackInput, AttackSpec};
use crate::defenses::{
    build_defense, predict, train_clean, verify, DefendedTarget, DefenseSpec, Subject,
};
use crate::error::{Error, Result};
use crate::graph::{
    apply_regime, generate_sbm, load_graph_bundle, make_splits, Graph, GraphOps, Regime,
    SplitSpec,
};
use crate::metrics::{fidelity, utility_drop};
use crate::nn::{accuracy, classification_report, GnnModel};
use crate::oracle::{sample_budget_nodes, BudgetSpec, Deployment, QueryOracle, ResponseMode};
use crate::seed::SeedTree;

/// A loaded or generated dataset, shared read-only by all cells.
#[derive(Debug)]
struct Dataset {
    name: String,
    graph: Arc<Graph>,
    ops: Arc<GraphOps>,
    fixed_splits: Option<SplitSpec>,
}

fn load_dataset(d: &DatasetConfig, root: &SeedTree) -> Result<Dataset> {
    let (graph, fixed_splits) = match (&d.bundle, &d.sbm) {
        (Some(path), None) => {
            let b = load_graph_bundle(path)?;
            (b.graph, Some(b.splits))
        }
        (None, Some(p)) => {
            let seed = d
                .graph_seed
                .unwrap_or_else(|| root.child("dataset-gen").child(&d.name).seed());
            (generate_sbm(p, seed)?, None)
        }
        _ => {
            return Err(Error::Config(format!(
                "dataset {:?} needs exactly one of bundle or sbm",
                d.name
            )))
        }
    };
    let ops = GraphOps::from_graph(&graph);
    Ok(Dataset {
        name: d.name.clone(),
        graph: Arc::new(graph),
        ops: Arc::new(ops),
        fixed_splits,
    })
}

/// Per-(dataset, seed) state: splits, the clean target and its labels.
#[derive(Debug)]
struct Cell {
    tree: SeedTree,
    splits: SplitSpec,
    target: Arc<GnnModel>,
    target_preds: Vec<usize>,
    target_time: f64,
}

fn cell_tree(root: &SeedTree, dataset: &str, seed: u64) -> SeedTree {
    root.child("cell").child(dataset).child_idx("seed", seed)
}

fn build_cell(cfg: &ExperimentConfig, ds: &Dataset, root: &SeedTree, seed: u64) -> Result<Cell> {
    let tree = cell_tree(root, &ds.name, seed);
    let splits = match &ds.fixed_splits {
        Some(s) => s.clone(),
        None => make_splits(&ds.graph, &cfg.splits, tree.child("splits").seed())?.spec,
    };
    let t0 = Instant::now();
    let target = train_clean(
        &cfg.target,
        &ds.graph,
        &ds.ops,
        &splits,
        tree.child("target-init").seed(),
    )?;
    let target_time = t0.elapsed().as_secs_f64();
    let target_preds = predict(&target, &ds.ops, ds.graph.features())?;
    Ok(Cell {
        tree,
        splits,
        target: Arc::new(target),
        target_preds,
        target_time,
    })
}

/// A defended target plus its owner-side measurements.
#[derive(Debug)]
struct Defended {
    target: DefendedTarget,
    model: Arc<GnnModel>,
    /// Labels the endpoint serves on the test split (after transforms).
    served_test: Vec<usize>,
    verification: f64,
    time: f64,
}

fn oracle_for(
    ds: &Dataset,
    model: Arc<GnnModel>,
    chain: Vec<crate::defenses::InferenceTransform>,
    mode: ResponseMode,
    budget: usize,
    noise_seed: u64,
) -> Result<QueryOracle> {
    let dep = Deployment::new(model, ds.graph.clone(), ds.ops.clone())?;
    QueryOracle::new(dep, chain, mode, budget.max(1), noise_seed)
}

fn build_defended(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    cell: &Cell,
    spec: &DefenseSpec,
) -> Result<Defended> {
    let t0 = Instant::now();
    let dtree = cell.tree.child("defense").child(spec.name());
    let target = build_defense(
        spec,
        &cfg.target,
        &ds.graph,
        &ds.ops,
        &cell.splits,
        &cell.target,
        dtree.seed(),
    )
    .map_err(|e| match e {
        e @ Error::Defense { .. } => e,
        other => Error::Defense {
            kind: spec.name().into(),
            seed: dtree.seed(),
            msg: other.to_string(),
        },
    })?;
    let time = t0.elapsed().as_secs_f64();
    let model = Arc::new(target.model.clone());
    let test = &cell.splits.test;
    let vtree = cell.tree.child("verify-noise").child(spec.name());
    let (served_test, verification) = if target.chain.is_empty() {
        let preds = predict(&model, &ds.ops, ds.graph.features())?;
        let rate = verify(
            &target.artifact,
            &mut Subject::Model(&model),
            &ds.graph,
            &ds.ops,
        )?
        .rate;
        (test.iter().map(|&i| preds[i]).collect(), rate)
    } else {
        let mut served = oracle_for(
            ds,
            model.clone(),
            target.chain.clone(),
            ResponseMode::SoftProbs,
            test.len(),
            vtree.child("served").seed(),
        )?;
        let labels = served.query(test)?.labels;
        let mut probe = oracle_for(
            ds,
            model.clone(),
            target.chain.clone(),
            ResponseMode::SoftProbs,
            target.artifact.n_probes(),
            vtree.child("probe").seed(),
        )?;
        let rate = verify(
            &target.artifact,
            &mut Subject::Oracle(&mut probe),
            &ds.graph,
            &ds.ops,
        )?
        .rate;
        (labels, rate)
    };
    Ok(Defended {
        target,
        model,
        served_test,
        verification,
        time,
    })
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn regime_label(r: &Regime) -> String {
    format!("{}:{}:{}", r.kind.as_str(), r.x_ratio, r.a_ratio)
}

/// Fills accuracy, macro scores and fidelity from test-split predictions.
fn score(
    rec: &mut RunRecord,
    ds: &Dataset,
    test: &[usize],
    test_preds: &[usize],
    reference: &[usize],
) {
    let n = ds.graph.num_nodes();
    let mut full = vec![0; n];
    for (&i, &p) in test.iter().zip(test_preds) {
        full[i] = p;
    }
    let rep = classification_report(&full, ds.graph.labels(), test, ds.graph.num_classes());
    rec.accuracy = finite(rep.accuracy);
    rec.macro_f1 = finite(rep.macro_f1);
    rec.precision = finite(rep.macro_precision);
    rec.recall = finite(rep.macro_recall);
    let positions: Vec<usize> = (0..test.len()).collect();
    rec.fidelity = finite(fidelity(test_preds, reference, &positions).value);
}

struct AttackCell<'a> {
    ds: &'a Dataset,
    cell: &'a Cell,
    attack: &'a AttackSpec,
    budget: f64,
    regime: &'a Regime,
    model: Arc<GnnModel>,
    chain: Vec<crate::defenses::InferenceTransform>,
    noise_seed: u64,
    reference: &'a [usize],
}

/// Runs one attack cell into `rec`, returning the surrogate.
fn run_attack_cell(
    cfg: &ExperimentConfig,
    a: AttackCell<'_>,
    rec: &mut RunRecord,
) -> Result<GnnModel> {
    let n = a.ds.graph.num_nodes();
    let bspec = BudgetSpec::resolve(a.budget, &a.cell.splits, n)?;
    rec.realized_nodes = Some(bspec.realized_nodes);
    rec.realized_fraction = Some(bspec.realized_fraction);
    let limit = bspec.realized_nodes * a.attack.query_multiplicity();
    rec.budget_limit = Some(limit);
    let budget_seed = a
        .cell
        .tree
        .child("budget-nodes")
        .child(&format!("{}", a.budget))
        .seed();
    let nodes = sample_budget_nodes(&a.cell.splits, &bspec, budget_seed);
    let view = apply_regime(
        &a.ds.graph,
        a.regime,
        a.cell.tree.child("regime").child(&regime_label(a.regime)).seed(),
    )?;
    let mut oracle = oracle_for(a.ds, a.model, a.chain, cfg.response_mode, limit, a.noise_seed)?;
    let attack_seed = a
        .cell
        .tree
        .child("attack")
        .child(a.attack.kind.name())
        .child(&format!("{}", a.budget))
        .seed();
    let input = AttackInput {
        view: &view,
        budget_nodes: &nodes,
        query_pool: &a.cell.splits.query,
    };
    let res = run_attack(a.attack, &mut oracle, input, attack_seed)?;
    rec.queries_used = Some(res.queries_used);
    rec.detector_tripped = Some(oracle.detector_tripped());
    rec.query_time = oracle.query_time().as_secs_f64();
    rec.surrogate_train_time = (res.wall_time - rec.query_time).max(0.0);
    rec.notes = res.log;
    if res.queries_used != oracle.queries_used() || res.queries_used > limit {
        return Err(Error::BudgetExhausted {
            used: oracle.queries_used(),
            limit,
            requested: res.queries_used,
        });
    }
    let preds = predict(&res.surrogate, &a.ds.ops, a.ds.graph.features())?;
    let test = &a.cell.splits.test;
    let test_preds: Vec<usize> = test.iter().map(|&i| preds[i]).collect();
    score(rec, a.ds, test, &test_preds, a.reference);
    Ok(res.surrogate)
}

/// Bounded worker pool; `None` lets rayon pick.
fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w.max(1));
    }
    b.build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs the config's track. The record stream is a pure function of the
/// config, `config_index` and `root_seed`; worker count does not matter.
pub fn run_track(cfg: &ExperimentConfig, config_index: usize, root_seed: u64) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let root = SeedTree::new(root_seed);
    let pool = pool(cfg.workers)?;
    pool.install(|| run_in_pool(cfg, config_index, &root))
}

fn run_in_pool(cfg: &ExperimentConfig, config_index: usize, root: &SeedTree) -> Result<Vec<RunRecord>> {
    let datasets: Vec<Dataset> = cfg
        .datasets
        .iter()
        .map(|d| load_dataset(d, root))
        .collect::<Result<_>>()?;
    let backbone = cfg.target.backbone.as_str();

    // clean targets per (dataset, seed)
    let cell_keys: Vec<(usize, u64)> = (0..datasets.len())
        .flat_map(|d| cfg.seeds.iter().map(move |&s| (d, s)))
        .collect();
    let cells: BTreeMap<(usize, u64), std::result::Result<Cell, String>> = cell_keys
        .par_iter()
        .map(|&(d, s)| {
            let c = build_cell(cfg, &datasets[d], root, s).map_err(|e| e.to_string());
            ((d, s), c)
        })
        .collect();

    // defended targets per (dataset, defense, seed)
    let def_keys: Vec<(usize, usize, u64)> = if cfg.track == Track::Extraction {
        Vec::new()
    } else {
        (0..datasets.len())
            .flat_map(|d| {
                (0..cfg.defenses.len())
                    .flat_map(move |k| cfg.seeds.iter().map(move |&s| (d, k, s)))
            })
            .collect()
    };
    let defended: BTreeMap<(usize, usize, u64), std::result::Result<Defended, String>> = def_keys
        .par_iter()
        .map(|&(d, k, s)| {
            let r = match &cells[&(d, s)] {
                Err(e) => Err(format!("target training failed: {e}")),
                Ok(cell) => build_defended(cfg, &datasets[d], cell, &cfg.defenses[k])
                    .map_err(|e| e.to_string()),
            };
            ((d, k, s), r)
        })
        .collect();

    let header = |track: Track, d: usize, s: u64| {
        let mut r = RunRecord::blank(track, &datasets[d].name, s, backbone);
        r.config_index = config_index;
        r
    };
    let set_regime = |r: &mut RunRecord, g: &Regime| {
        r.regime = Some(g.kind.as_str().into());
        r.x_ratio = Some(g.x_ratio);
        r.a_ratio = Some(g.a_ratio);
    };

    let records: Vec<RunRecord> = match cfg.track {
        Track::Extraction => {
            let mut jobs = Vec::new();
            for d in 0..datasets.len() {
                for a in &cfg.attacks {
                    for &b in &cfg.budgets {
                        for g in &cfg.regimes {
                            for &s in &cfg.seeds {
                                jobs.push((d, a, b, g, s));
                            }
                        }
                    }
                }
            }
            jobs.par_iter()
                .map(|&(d, a, b, g, s)| {
                    let t0 = Instant::now();
                    let mut rec = header(Track::Extraction, d, s);
                    rec.attack = Some(a.kind.name().into());
                    rec.surrogate_backbone = Some(a.surrogate_backbone.as_str().into());
                    rec.budget_multiplier = Some(b);
                    set_regime(&mut rec, g);
                    let outcome = match &cells[&(d, s)] {
                        Err(e) => Err(format!("target training failed: {e}")),
                        Ok(cell) => {
                            rec.target_train_time = cell.target_time;
                            let reference: Vec<usize> =
                                cell.splits.test.iter().map(|&i| cell.target_preds[i]).collect();
                            let job = AttackCell {
                                ds: &datasets[d],
                                cell,
                                attack: a,
                                budget: b,
                                regime: g,
                                model: cell.target.clone(),
                                chain: Vec::new(),
                                noise_seed: cell.tree.child("noise").child("none").seed(),
                                reference: &reference,
                            };
                            run_attack_cell(cfg, job, &mut rec)
                                .map(|_| ())
                                .map_err(|e| e.to_string())
                        }
                    };
                    if let Err(e) = outcome {
                        rec.error = Some(e);
                    }
                    rec.total_time = rec.target_train_time + t0.elapsed().as_secs_f64();
                    rec
                })
                .collect()
        }
        Track::Ownership => def_keys
            .par_iter()
            .map(|&(d, k, s)| {
                let spec = &cfg.defenses[k];
                let mut rec = header(Track::Ownership, d, s);
                rec.defense = Some(spec.name().into());
                let outcome = match (&cells[&(d, s)], &defended[&(d, k, s)]) {
                    (Err(e), _) => Err(format!("target training failed: {e}")),
                    (_, Err(e)) => Err(e.clone()),
                    (Ok(cell), Ok(def)) => {
                        rec.target_train_time = cell.target_time + def.time;
                        let test = &cell.splits.test;
                        let reference: Vec<usize> =
                            test.iter().map(|&i| cell.target_preds[i]).collect();
                        score(&mut rec, &datasets[d], test, &def.served_test, &reference);
                        let base = accuracy(&cell.target_preds, datasets[d].graph.labels(), test);
                        rec.baseline_accuracy = finite(base);
                        rec.utility_drop = rec.accuracy.map(|a| utility_drop(a, base));
                        rec.verification_rate = finite(def.verification);
                        Ok(())
                    }
                };
                if let Err(e) = outcome {
                    rec.error = Some(e);
                }
                rec.total_time = rec.target_train_time;
                rec
            })
            .collect(),
        Track::Joint => {
            let mut jobs = Vec::new();
            for d in 0..datasets.len() {
                for k in 0..cfg.defenses.len() {
                    for a in &cfg.attacks {
                        for g in &cfg.regimes {
                            for &s in &cfg.seeds {
                                jobs.push((d, k, a, g, s));
                            }
                        }
                    }
                }
            }
            jobs.par_iter()
                .map(|&(d, k, a, g, s)| {
                    let t0 = Instant::now();
                    let spec = &cfg.defenses[k];
                    let mut rec = header(Track::Joint, d, s);
                    rec.defense = Some(spec.name().into());
                    rec.attack = Some(a.kind.name().into());
                    rec.surrogate_backbone = Some(a.surrogate_backbone.as_str().into());
                    rec.budget_multiplier = Some(cfg.joint_budget);
                    set_regime(&mut rec, g);
                    let outcome = match (&cells[&(d, s)], &defended[&(d, k, s)]) {
                        (Err(e), _) => Err(format!("target training failed: {e}")),
                        (_, Err(e)) => Err(e.clone()),
                        (Ok(cell), Ok(def)) => {
                            rec.target_train_time = cell.target_time + def.time;
                            rec.verification_rate = finite(def.verification);
                            let job = AttackCell {
                                ds: &datasets[d],
                                cell,
                                attack: a,
                                budget: cfg.joint_budget,
                                regime: g,
                                model: def.model.clone(),
                                chain: def.target.chain.clone(),
                                noise_seed: cell.tree.child("noise").child(spec.name()).seed(),
                                reference: &def.served_test,
                            };
                            run_attack_cell(cfg, job, &mut rec)
                                .and_then(|surrogate| {
                                    let r = verify(
                                        &def.target.artifact,
                                        &mut Subject::Model(&surrogate),
                                        &datasets[d].graph,
                                        &datasets[d].ops,
                                    )?;
                                    rec.survival_rate = finite(r.rate);
                                    Ok(())
                                })
                                .map_err(|e| e.to_string())
                        }
                    };
                    if let Err(e) = outcome {
                        rec.error = Some(e);
                    }
                    rec.total_time = rec.target_train_time + t0.elapsed().as_secs_f64();
                    rec
                })
                .collect()
        }
    };
    for r in &records {
        if let Some(e) = &r.error {
            log::warn!(
                "{} {} {:?}/{:?} seed {}: {e}",
                r.track.as_str(),
                r.dataset,
                r.attack,
                r.defense,
                r.seed
            );
        }
    }
    Ok(records)
}

/// Runs every point of `cfg.sweep`, tagging records with the point's index
/// and parameter values.
pub fn run_sweep(cfg: &ExperimentConfig, root_seed: u64) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for point in expand_sweep(cfg)? {
        let mut recs = run_track(&point.config, point.index, root_seed)?;
        for r in &mut recs {
            r.sweep_point = point.values.clone();
        }
        out.extend(recs);
    }
    Ok(out)
}
