use serde::{Deserialize, Serialize};

use super::artifact::WatermarkArtifact;
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphOps};
use crate::nn::{argmax, GnnModel, Matrix};
use crate::oracle::QueryOracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyMode {
    TriggerHit,
    WmGraphAcc,
    FingerprintMatch,
    MarkerAcc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub rate: f64,
    pub mode: VerifyMode,
    pub n_probes: usize,
    pub matches: usize,
}

impl VerificationReport {
    fn new(mode: VerifyMode, matches: usize, n_probes: usize) -> Self {
        Self {
            rate: if n_probes == 0 {
                0.0
            } else {
                matches as f64 / n_probes as f64
            },
            mode,
            n_probes,
            matches,
        }
    }
}

/// Whatever is being checked for the watermark: a model held locally, or a
/// black-box endpoint (queries are charged to its budget).
#[derive(Debug)]
pub enum Subject<'a> {
    Model(&'a GnnModel),
    Oracle(&'a mut QueryOracle),
}

impl Subject<'_> {
    fn feat_dim(&self) -> usize {
        match self {
            Subject::Model(m) => m.feat_dim,
            Subject::Oracle(o) => o.feat_dim(),
        }
    }

    /// Hard labels for `ids` on the deployed graph (`custom = None`) or on
    /// supplied inputs.
    fn labels(
        &mut self,
        deployed: (&GraphOps, &Matrix),
        custom: Option<(&GraphOps, &Matrix)>,
        ids: &[usize],
    ) -> Result<Vec<usize>> {
        match self {
            Subject::Model(m) => {
                let (ops, x) = custom.unwrap_or(deployed);
                let logits = m.forward(ops, x)?;
                Ok(ids.iter().map(|&i| argmax(logits.row(i))).collect())
            }
            Subject::Oracle(o) => Ok(match custom {
                None => o.query(ids)?.labels,
                Some((ops, x)) => o.query_graph(ops, x, ids)?.labels,
            }),
        }
    }
}

/// Measures the artifact's secret behaviour on `subject`. `graph` and
/// `ops` describe the deployed (clean) graph the artifact refers to.
pub fn verify(
    artifact: &WatermarkArtifact,
    subject: &mut Subject<'_>,
    graph: &Graph,
    ops: &GraphOps,
) -> Result<VerificationReport> {
    if subject.feat_dim() != graph.feat_dim() {
        return Err(Error::Shape(format!(
            "subject expects {} features, graph has {}",
            subject.feat_dim(),
            graph.feat_dim()
        )));
    }
    let n = graph.num_nodes();
    let check_ids = |ids: &[usize]| match ids.iter().find(|&&i| i >= n) {
        Some(i) => Err(Error::InvalidArgument(format!(
            "artifact node {i} outside the {n}-node graph"
        ))),
        None => Ok(()),
    };
    let deployed = (ops, graph.features());
    let count = |pred: &[usize], want: &dyn Fn(usize) -> usize| {
        pred.iter().enumerate().filter(|&(k, &p)| p == want(k)).count()
    };
    match artifact {
        WatermarkArtifact::Backdoor {
            trigger_nodes,
            trigger_dims,
            trigger_value,
            target_class,
        } => {
            check_ids(trigger_nodes)?;
            let x = apply_trigger(graph.features(), trigger_nodes, trigger_dims, *trigger_value)?;
            let pred = subject.labels(deployed, Some((ops, &x)), trigger_nodes)?;
            Ok(VerificationReport::new(
                VerifyMode::TriggerHit,
                count(&pred, &|_| *target_class),
                pred.len(),
            ))
        }
        WatermarkArtifact::WatermarkGraph { graph: wm } => {
            let wm_ops = GraphOps::from_graph(wm);
            let ids: Vec<usize> = (0..wm.num_nodes()).collect();
            let pred = subject.labels(deployed, Some((&wm_ops, wm.features())), &ids)?;
            Ok(VerificationReport::new(
                VerifyMode::WmGraphAcc,
                count(&pred, &|k| wm.labels()[k]),
                pred.len(),
            ))
        }
        WatermarkArtifact::KeyInputs {
            key_nodes,
            key_pattern,
            key_labels,
        } => {
            check_ids(key_nodes)?;
            let x = apply_pattern(graph.features(), key_nodes, key_pattern)?;
            let pred = subject.labels(deployed, Some((ops, &x)), key_nodes)?;
            Ok(VerificationReport::new(
                VerifyMode::TriggerHit,
                count(&pred, &|k| key_labels[k]),
                pred.len(),
            ))
        }
        WatermarkArtifact::Perturbation {
            trigger_nodes,
            delta,
            target_class,
        } => {
            check_ids(trigger_nodes)?;
            let x = apply_delta(graph.features(), trigger_nodes, delta)?;
            let pred = subject.labels(deployed, Some((ops, &x)), trigger_nodes)?;
            Ok(VerificationReport::new(
                VerifyMode::TriggerHit,
                count(&pred, &|_| *target_class),
                pred.len(),
            ))
        }
        WatermarkArtifact::Fingerprint { nodes, labels }
        | WatermarkArtifact::Marker { nodes, labels } => {
            check_ids(nodes)?;
            let pred = subject.labels(deployed, None, nodes)?;
            let mode = if matches!(artifact, WatermarkArtifact::Fingerprint { .. }) {
                VerifyMode::FingerprintMatch
            } else {
                VerifyMode::MarkerAcc
            };
            Ok(VerificationReport::new(
                mode,
                count(&pred, &|k| labels[k]),
                pred.len(),
            ))
        }
    }
}

/// Copy of `x` with `dims` of each trigger row set to `value`.
pub fn apply_trigger(x: &Matrix, nodes: &[usize], dims: &[usize], value: f64) -> Result<Matrix> {
    if let Some(&d) = dims.iter().find(|&&d| d >= x.cols()) {
        return Err(Error::Shape(format!("trigger dim {d} outside {} features", x.cols())));
    }
    let mut out = x.clone();
    for &i in nodes {
        for &d in dims {
            out.set(i, d, value);
        }
    }
    Ok(out)
}

/// Copy of `x` with `pattern` added to each listed row.
pub fn apply_pattern(x: &Matrix, nodes: &[usize], pattern: &[f64]) -> Result<Matrix> {
    if pattern.len() != x.cols() {
        return Err(Error::Shape(format!(
            "pattern of length {} for {} features",
            pattern.len(),
            x.cols()
        )));
    }
    let mut out = x.clone();
    for &i in nodes {
        for (v, p) in out.row_mut(i).iter_mut().zip(pattern) {
            *v += p;
        }
    }
    Ok(out)
}

/// Copy of `x` with row `k` of `delta` added to row `nodes[k]`.
pub fn apply_delta(x: &Matrix, nodes: &[usize], delta: &Matrix) -> Result<Matrix> {
    if delta.shape() != (nodes.len(), x.cols()) {
        return Err(Error::Shape(format!(
            "perturbation {:?} for {} nodes of {} features",
            delta.shape(),
            nodes.len(),
            x.cols()
        )));
    }
    let mut out = x.clone();
    for (k, &i) in nodes.iter().enumerate() {
        for (v, d) in out.row_mut(i).iter_mut().zip(delta.row(k)) {
            *v += d;
        }
    }
    Ok(out)
}

/// 1 when the subject retains more of the watermark than both references
/// (strictly).
pub fn e_ave(subject_rate: f64, clean_rate: f64, random_rate: f64) -> u8 {
    u8::from(subject_rate > clean_rate && subject_rate > random_rate)
}

/// Mean of per-trial outcomes; 0 for no trials.
pub fn e_ave_aggregate(outcomes: &[u8]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    outcomes.iter().map(|&o| f64::from(o)).sum::<f64>() / outcomes.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmParams};
    use crate::metrics::fidelity;
    use crate::nn::Backbone;

    fn graph() -> Graph {
        generate_sbm(
            &SbmParams {
                n: 40,
                num_classes: 4,
                p_in: 0.2,
                p_out: 0.02,
                feat_dim: 6,
                feat_signal: 1.0,
            },
            9,
        )
        .unwrap()
    }

    #[test]
    fn e_ave_cases() {
        assert_eq!(e_ave(0.9, 0.1, 0.12), 1);
        assert_eq!(e_ave(0.1, 0.1, 0.0), 0);
        assert_eq!(e_ave(0.5, 0.2, 0.5), 0);
        assert!((e_ave_aggregate(&[1, 0, 1]) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(format!("{:.3}", e_ave_aggregate(&[1, 0, 1])), "0.667");
    }

    #[test]
    fn fingerprint_rate_is_restricted_fidelity() {
        let g = graph();
        let ops = GraphOps::from_graph(&g);
        let a = GnnModel::init(Backbone::Gcn, 6, 8, 4, 0.5, 1);
        let b = GnnModel::init(Backbone::Gcn, 6, 8, 4, 0.5, 2);
        let la: Vec<usize> = {
            let z = a.forward(&ops, g.features()).unwrap();
            (0..40).map(|i| argmax(z.row(i))).collect()
        };
        let lb: Vec<usize> = {
            let z = b.forward(&ops, g.features()).unwrap();
            (0..40).map(|i| argmax(z.row(i))).collect()
        };
        let nodes = vec![3, 7, 11, 19, 23, 31];
        let art = WatermarkArtifact::Fingerprint {
            labels: nodes.iter().map(|&i| la[i]).collect(),
            nodes: nodes.clone(),
        };
        let r = verify(&art, &mut Subject::Model(&b), &g, &ops).unwrap();
        assert_eq!(r.rate, fidelity(&lb, &la, &nodes).value);
        let self_check = verify(&art, &mut Subject::Model(&a), &g, &ops).unwrap();
        assert_eq!(self_check.rate, 1.0);
        assert_eq!(
            verify(&art, &mut Subject::Model(&b), &g, &ops).unwrap(),
            r,
            "verification must be pure"
        );
    }

    #[test]
    fn trigger_helpers() {
        let x = Matrix::zeros(3, 2);
        let t = apply_trigger(&x, &[1], &[0], 0.99).unwrap();
        assert_eq!(t.row(1), &[0.99, 0.0]);
        assert_eq!(t.row(0), &[0.0, 0.0]);
        let p = apply_pattern(&x, &[0, 2], &[1.0, -1.0]).unwrap();
        assert_eq!(p.row(2), &[1.0, -1.0]);
        let d = apply_delta(&x, &[2], &Matrix::from_vec(1, 2, vec![0.25, 0.1]).unwrap()).unwrap();
        assert_eq!(d.row(2), &[0.25, 0.1]);
        assert!(apply_trigger(&x, &[0], &[5], 1.0).is_err());
    }

    #[test]
    fn feature_mismatch_rejected() {
        let g = graph();
        let ops = GraphOps::from_graph(&g);
        let m = GnnModel::init(Backbone::Gcn, 5, 8, 4, 0.5, 1);
        let art = WatermarkArtifact::Marker {
            nodes: vec![0],
            labels: vec![0],
        };
        assert!(verify(&art, &mut Subject::Model(&m), &g, &ops).is_err());
    }
}
