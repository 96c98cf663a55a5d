use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};
use crate::graph::GraphOps;
use crate::seed::rng_from;

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Backbone {
    #[serde(rename = "GCN", alias = "gcn")]
    Gcn,
    #[serde(rename = "SAGE", alias = "sage")]
    Sage,
    #[serde(rename = "GAT", alias = "gat")]
    Gat,
}

impl Backbone {
    pub const ALL: [Backbone; 3] = [Backbone::Gcn, Backbone::Sage, Backbone::Gat];

    pub fn as_str(&self) -> &'static str {
        match self {
            Backbone::Gcn => "GCN",
            Backbone::Sage => "SAGE",
            Backbone::Gat => "GAT",
        }
    }

    /// Parameter names of one layer, in declaration order.
    fn layer_param_names(&self) -> &'static [&'static str] {
        match self {
            Backbone::Gcn => &["w", "b"],
            Backbone::Sage => &["w_self", "w_neigh", "b"],
            Backbone::Gat => &["w", "a_src", "a_dst", "b"],
        }
    }

    fn per_layer(&self) -> usize {
        self.layer_param_names().len()
    }

    pub fn param_names(&self) -> Vec<String> {
        (0..2)
            .flat_map(|l| {
                self.layer_param_names()
                    .iter()
                    .map(move |n| format!("{n}{l}"))
            })
            .collect()
    }

    fn layer_shapes(&self, input: usize, output: usize) -> Vec<(usize, usize)> {
        match self {
            Backbone::Gcn => vec![(input, output), (1, output)],
            Backbone::Sage => vec![(input, output), (input, output), (1, output)],
            Backbone::Gat => vec![(input, output), (1, output), (1, output), (1, output)],
        }
    }
}

/// Two-layer node classifier. Parameters are stored as a flat list in
/// declaration order: layer 0 then layer 1, each as
/// GCN `[w, b]`, SAGE `[w_self, w_neigh, b]`, GAT `[w, a_src, a_dst, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnModel {
    pub backbone: Backbone,
    pub feat_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub dropout: f64,
    pub seed: u64,
    params: Vec<Matrix>,
}

#[derive(Debug, Clone)]
enum LayerCache {
    Gcn {
        input: Matrix,
    },
    Sage {
        input: Matrix,
        agg: Matrix,
    },
    Gat {
        input: Matrix,
        proj: Matrix,
        alpha: Vec<f64>,
        pre: Vec<f64>,
    },
}

/// Intermediate values of one forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    first: LayerCache,
    pre_hidden: Matrix,
    /// Post-ReLU hidden embeddings, before dropout.
    pub hidden: Matrix,
    drop_scale: Option<Vec<f64>>,
    second: LayerCache,
    pub logits: Matrix,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<Matrix>,
    /// Gradient with respect to the input features, when requested.
    pub input: Option<Matrix>,
}

impl GnnModel {
    /// Glorot-uniform weights and zero biases drawn from `seed`.
    pub fn init(
        backbone: Backbone,
        feat_dim: usize,
        hidden_dim: usize,
        num_classes: usize,
        dropout: f64,
        seed: u64,
    ) -> Self {
        let mut rng = rng_from(seed);
        let mut params = Vec::new();
        for (input, output) in [(feat_dim, hidden_dim), (hidden_dim, num_classes)] {
            let names = backbone.layer_param_names();
            for (name, (r, c)) in names.iter().zip(backbone.layer_shapes(input, output)) {
                let mut m = Matrix::zeros(r, c);
                if *name != "b" {
                    let bound = (6.0 / (r + c) as f64).sqrt();
                    for v in m.as_mut_slice() {
                        *v = rng.random_range(-bound..bound);
                    }
                }
                params.push(m);
            }
        }
        Self {
            backbone,
            feat_dim,
            hidden_dim,
            num_classes,
            dropout,
            seed,
            params,
        }
    }

    /// Builds a model from explicit parameters, checking every shape.
    pub fn from_params(
        backbone: Backbone,
        feat_dim: usize,
        hidden_dim: usize,
        num_classes: usize,
        dropout: f64,
        seed: u64,
        params: Vec<Matrix>,
    ) -> Result<Self> {
        let mut expected = backbone.layer_shapes(feat_dim, hidden_dim);
        expected.extend(backbone.layer_shapes(hidden_dim, num_classes));
        if params.len() != expected.len() {
            return Err(Error::Shape(format!(
                "{} parameters for {}, expected {}",
                params.len(),
                backbone.as_str(),
                expected.len()
            )));
        }
        for (i, (p, s)) in params.iter().zip(&expected).enumerate() {
            if p.shape() != *s {
                return Err(Error::Shape(format!(
                    "parameter {i} has shape {:?}, expected {s:?}",
                    p.shape()
                )));
            }
            if !p.is_finite() {
                return Err(Error::InvalidArgument(format!("parameter {i} is not finite")));
            }
        }
        Ok(Self {
            backbone,
            feat_dim,
            hidden_dim,
            num_classes,
            dropout,
            seed,
            params,
        })
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    /// Which parameters receive weight decay (everything but biases).
    pub fn decay_mask(&self) -> Vec<bool> {
        self.backbone
            .param_names()
            .iter()
            .map(|n| !n.starts_with('b'))
            .collect()
    }

    fn check_inputs(&self, ops: &GraphOps, x: &Matrix) -> Result<()> {
        if x.cols() != self.feat_dim || x.rows() != ops.num_nodes() {
            return Err(Error::Shape(format!(
                "features {:?} for a {}-node graph and feat_dim {}",
                x.shape(),
                ops.num_nodes(),
                self.feat_dim
            )));
        }
        Ok(())
    }

    /// Inference logits (dropout disabled).
    pub fn forward(&self, ops: &GraphOps, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_train::<rand_chacha::ChaCha8Rng>(ops, x, None)?.logits)
    }

    /// Forward pass keeping intermediates. Dropout on the hidden layer is
    /// applied only when `dropout_rng` is given.
    pub fn forward_train<R: Rng>(
        &self,
        ops: &GraphOps,
        x: &Matrix,
        dropout_rng: Option<&mut R>,
    ) -> Result<ForwardCache> {
        self.check_inputs(ops, x)?;
        let k = self.backbone.per_layer();
        let (mut pre_hidden, first) = layer_forward(self.backbone, ops, x, &self.params[..k]);
        let hidden = pre_hidden.map(|v| v.max(0.0));
        let mut dropped = hidden.clone();
        let drop_scale = match dropout_rng {
            Some(rng) if self.dropout > 0.0 => {
                let keep = 1.0 / (1.0 - self.dropout);
                let scale: Vec<f64> = (0..hidden.as_slice().len())
                    .map(|_| if rng.random::<f64>() < self.dropout { 0.0 } else { keep })
                    .collect();
                for (v, s) in dropped.as_mut_slice().iter_mut().zip(&scale) {
                    *v *= s;
                }
                Some(scale)
            }
            _ => None,
        };
        let (logits, second) = layer_forward(self.backbone, ops, &dropped, &self.params[k..]);
        // pre-activation is only needed for the ReLU mask
        for v in pre_hidden.as_mut_slice() {
            *v = if *v > 0.0 { 1.0 } else { 0.0 };
        }
        Ok(ForwardCache {
            first,
            pre_hidden,
            hidden,
            drop_scale,
            second,
            logits,
        })
    }

    /// Backpropagates `d_logits` (and optionally an extra gradient on the
    /// post-ReLU hidden embeddings) through the network.
    pub fn backward(
        &self,
        ops: &GraphOps,
        cache: &ForwardCache,
        d_logits: &Matrix,
        d_hidden_extra: Option<&Matrix>,
        want_input_grad: bool,
    ) -> Gradients {
        let k = self.backbone.per_layer();
        let (g2, d_dropped) =
            layer_backward(self.backbone, ops, &cache.second, &self.params[k..], d_logits, true);
        let mut d_hidden = d_dropped.expect("hidden gradient");
        if let Some(scale) = &cache.drop_scale {
            for (v, s) in d_hidden.as_mut_slice().iter_mut().zip(scale) {
                *v *= s;
            }
        }
        if let Some(extra) = d_hidden_extra {
            d_hidden.add_assign(extra);
        }
        let d_pre = d_hidden.hadamard(&cache.pre_hidden);
        let (g1, d_input) = layer_backward(
            self.backbone,
            ops,
            &cache.first,
            &self.params[..k],
            &d_pre,
            want_input_grad,
        );
        let mut params = g1;
        params.extend(g2);
        Gradients {
            params,
            input: d_input,
        }
    }

    /// Post-ReLU hidden embeddings at inference.
    pub fn embed(&self, ops: &GraphOps, x: &Matrix) -> Result<Matrix> {
        Ok(self
            .forward_train::<rand_chacha::ChaCha8Rng>(ops, x, None)?
            .hidden)
    }
}

fn layer_forward(
    backbone: Backbone,
    ops: &GraphOps,
    x: &Matrix,
    p: &[Matrix],
) -> (Matrix, LayerCache) {
    match backbone {
        Backbone::Gcn => {
            let proj = x.matmul(&p[0]);
            let mut out = ops.norm_adj().spmm(&proj);
            out.add_row_broadcast(&p[1]);
            (out, LayerCache::Gcn { input: x.clone() })
        }
        Backbone::Sage => {
            let agg = ops.mean_agg().spmm(x);
            let mut out = x.matmul(&p[0]);
            out.add_assign(&agg.matmul(&p[1]));
            out.add_row_broadcast(&p[2]);
            (
                out,
                LayerCache::Sage {
                    input: x.clone(),
                    agg,
                },
            )
        }
        Backbone::Gat => {
            let proj = x.matmul(&p[0]);
            let n = proj.rows();
            let width = proj.cols();
            let src: Vec<f64> = (0..n).map(|j| dot(proj.row(j), p[1].row(0))).collect();
            let dst: Vec<f64> = (0..n).map(|i| dot(proj.row(i), p[2].row(0))).collect();
            let mut alpha = vec![0.0; ops.attn_len()];
            let mut pre = vec![0.0; ops.attn_len()];
            let mut out = Matrix::zeros(n, width);
            let offsets = ops.attn_offsets();
            for i in 0..n {
                let nbrs = ops.attn_neighbors(i);
                let base = offsets[i];
                let mut max = f64::NEG_INFINITY;
                for (t, &j) in nbrs.iter().enumerate() {
                    let z = src[j] + dst[i];
                    pre[base + t] = z;
                    let e = leaky(z);
                    alpha[base + t] = e;
                    max = max.max(e);
                }
                let mut sum = 0.0;
                for t in 0..nbrs.len() {
                    let e = (alpha[base + t] - max).exp();
                    alpha[base + t] = e;
                    sum += e;
                }
                let orow = out.row_mut(i);
                for (t, &j) in nbrs.iter().enumerate() {
                    let a = alpha[base + t] / sum;
                    alpha[base + t] = a;
                    for (o, v) in orow.iter_mut().zip(proj.row(j)) {
                        *o += a * v;
                    }
                }
            }
            out.add_row_broadcast(&p[3]);
            (
                out,
                LayerCache::Gat {
                    input: x.clone(),
                    proj,
                    alpha,
                    pre,
                },
            )
        }
    }
}

#[inline]
fn leaky(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAKY_SLOPE * z
    }
}

fn layer_backward(
    backbone: Backbone,
    ops: &GraphOps,
    cache: &LayerCache,
    p: &[Matrix],
    d_out: &Matrix,
    want_input: bool,
) -> (Vec<Matrix>, Option<Matrix>) {
    let d_bias = d_out.col_sums();
    match (backbone, cache) {
        (Backbone::Gcn, LayerCache::Gcn { input }) => {
            let d_proj = ops.norm_adj().spmm_t(d_out);
            let d_w = input.t_matmul(&d_proj);
            let d_in = want_input.then(|| d_proj.matmul_t(&p[0]));
            (vec![d_w, d_bias], d_in)
        }
        (Backbone::Sage, LayerCache::Sage { input, agg }) => {
            let d_self = input.t_matmul(d_out);
            let d_neigh = agg.t_matmul(d_out);
            let d_in = want_input.then(|| {
                let mut d = d_out.matmul_t(&p[0]);
                d.add_assign(&ops.mean_agg().spmm_t(&d_out.matmul_t(&p[1])));
                d
            });
            (vec![d_self, d_neigh, d_bias], d_in)
        }
        (
            Backbone::Gat,
            LayerCache::Gat {
                input,
                proj,
                alpha,
                pre,
            },
        ) => {
            let n = proj.rows();
            let width = proj.cols();
            let mut d_proj = Matrix::zeros(n, width);
            let mut d_src = vec![0.0; n];
            let mut d_dst = vec![0.0; n];
            let offsets = ops.attn_offsets();
            let mut d_alpha = Vec::new();
            for i in 0..n {
                let nbrs = ops.attn_neighbors(i);
                let base = offsets[i];
                let g = d_out.row(i);
                d_alpha.clear();
                let mut weighted = 0.0;
                for (t, &j) in nbrs.iter().enumerate() {
                    let a = alpha[base + t];
                    for (dp, gv) in d_proj.row_mut(j).iter_mut().zip(g) {
                        *dp += a * gv;
                    }
                    let da = dot(g, proj.row(j));
                    weighted += a * da;
                    d_alpha.push(da);
                }
                for (t, &j) in nbrs.iter().enumerate() {
                    let a = alpha[base + t];
                    let d_e = a * (d_alpha[t] - weighted);
                    let d_pre = if pre[base + t] > 0.0 { d_e } else { LEAKY_SLOPE * d_e };
                    d_src[j] += d_pre;
                    d_dst[i] += d_pre;
                }
            }
            let mut d_a_src = Matrix::zeros(1, width);
            let mut d_a_dst = Matrix::zeros(1, width);
            for j in 0..n {
                let prow = proj.row(j);
                for (k, v) in prow.iter().enumerate() {
                    d_a_src.as_mut_slice()[k] += d_src[j] * v;
                    d_a_dst.as_mut_slice()[k] += d_dst[j] * v;
                }
            }
            let (a_src, a_dst) = (p[1].row(0), p[2].row(0));
            for j in 0..n {
                let (s, t) = (d_src[j], d_dst[j]);
                for ((dp, as_), ad) in d_proj.row_mut(j).iter_mut().zip(a_src).zip(a_dst) {
                    *dp += s * as_ + t * ad;
                }
            }
            let d_w = input.t_matmul(&d_proj);
            let d_in = want_input.then(|| d_proj.matmul_t(&p[0]));
            (vec![d_w, d_a_src, d_a_dst, d_bias], d_in)
        }
        _ => unreachable!("layer cache does not match backbone"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_chain_on_empty_graph() {
        let ops = GraphOps::new(3, &[]);
        let id = Matrix::identity(3);
        let z = Matrix::zeros(1, 3);
        let m = GnnModel::from_params(
            Backbone::Gcn,
            3,
            3,
            3,
            0.0,
            0,
            vec![id.clone(), z.clone(), id.clone(), z],
        )
        .unwrap();
        assert_eq!(m.forward(&ops, &id).unwrap(), id);
    }

    #[test]
    fn two_node_gcn_closed_form() {
        // Â = [[.5,.5],[.5,.5]]. X = [[1,0],[0,2]], W0 = [[1],[-1]] (2×1), b0 = 0,
        // W1 = [[2, -1]], b1 = [0.5, 0].
        // X W0 = [1, -2]ᵀ, Â(XW0) = [-0.5, -0.5]ᵀ, ReLU → 0, logits = b1 on both rows.
        // With W0 = [[1],[1]]: XW0 = [1,2]ᵀ, ÂXW0 = [1.5,1.5]ᵀ, H = 1.5,
        // Â H W1 = [[3, -1.5],[3, -1.5]] + b1 = [[3.5, -1.5], [3.5, -1.5]].
        let ops = GraphOps::new(2, &[(0, 1)]);
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let mk = |w0: Vec<f64>| {
            GnnModel::from_params(
                Backbone::Gcn,
                2,
                1,
                2,
                0.0,
                0,
                vec![
                    Matrix::from_vec(2, 1, w0).unwrap(),
                    Matrix::zeros(1, 1),
                    Matrix::from_vec(1, 2, vec![2.0, -1.0]).unwrap(),
                    Matrix::from_vec(1, 2, vec![0.5, 0.0]).unwrap(),
                ],
            )
            .unwrap()
        };
        let out = mk(vec![1.0, -1.0]).forward(&ops, &x).unwrap();
        assert_eq!(out.as_slice(), &[0.5, 0.0, 0.5, 0.0]);
        let out = mk(vec![1.0, 1.0]).forward(&ops, &x).unwrap();
        for (a, b) in out.as_slice().iter().zip([3.5, -1.5, 3.5, -1.5]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_shapes() {
        let m = GnnModel::init(Backbone::Gat, 4, 8, 3, 0.5, 1);
        let ops = GraphOps::new(5, &[(0, 1)]);
        assert!(m.forward(&ops, &Matrix::zeros(5, 3)).is_err());
        assert!(m.forward(&ops, &Matrix::zeros(4, 4)).is_err());
        assert!(GnnModel::from_params(Backbone::Gcn, 4, 8, 3, 0.0, 0, vec![]).is_err());
    }

    #[test]
    fn init_is_deterministic_and_finite() {
        for b in Backbone::ALL {
            let a = GnnModel::init(b, 5, 16, 3, 0.5, 42);
            assert_eq!(a, GnnModel::init(b, 5, 16, 3, 0.5, 42));
            assert!(a.params().iter().all(|p| p.is_finite()));
            assert_eq!(a.params().len(), b.param_names().len());
        }
    }

    #[test]
    fn gat_with_zero_attention_is_mean_over_closed_neighbourhood() {
        let edges = [(0, 1), (1, 2), (1, 3)];
        let ops = GraphOps::new(4, &edges);
        let x = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 2.0],
            vec![3.0, 1.0],
            vec![-1.0, 4.0],
        ])
        .unwrap();
        let m = GnnModel::init(Backbone::Gat, 2, 3, 2, 0.0, 9);
        let mut p = m.params().to_vec();
        for k in [1, 2, 5, 6] {
            p[k] = Matrix::zeros(1, p[k].cols());
        }
        let m = GnnModel::from_params(Backbone::Gat, 2, 3, 2, 0.0, 9, p.clone()).unwrap();
        let closed: Vec<Vec<usize>> = vec![vec![0, 1], vec![0, 1, 2, 3], vec![1, 2], vec![1, 3]];
        let mean = |h: &Matrix, w: &Matrix, b: &Matrix| {
            let proj = h.matmul(w);
            let mut out = Matrix::zeros(4, w.cols());
            for (i, nb) in closed.iter().enumerate() {
                for c in 0..w.cols() {
                    let s: f64 = nb.iter().map(|&j| proj.get(j, c)).sum();
                    out.set(i, c, s / nb.len() as f64 + b.get(0, c));
                }
            }
            out
        };
        let hidden = mean(&x, &p[0], &p[3]).map(|v| v.max(0.0));
        let want = mean(&hidden, &p[4], &p[7]);
        let got = m.forward(&ops, &x).unwrap();
        for (a, b) in got.as_slice().iter().zip(want.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
