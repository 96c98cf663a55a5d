use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{Edge, Graph};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::seed::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    Both,
    XOnly,
    AOnly,
    DataFree,
}

impl RegimeKind {
    pub const ALL: [RegimeKind; 4] = [
        RegimeKind::Both,
        RegimeKind::XOnly,
        RegimeKind::AOnly,
        RegimeKind::DataFree,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeKind::Both => "both",
            RegimeKind::XOnly => "x_only",
            RegimeKind::AOnly => "a_only",
            RegimeKind::DataFree => "data_free",
        }
    }
}

/// Attacker data availability: which real features and edges are visible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub kind: RegimeKind,
    pub x_ratio: f64,
    pub a_ratio: f64,
}

impl Regime {
    pub fn both() -> Self {
        Self::of(RegimeKind::Both)
    }

    pub fn data_free() -> Self {
        Self::of(RegimeKind::DataFree)
    }

    /// The canonical ratios for a kind: full visibility of whatever the
    /// kind exposes.
    pub fn of(kind: RegimeKind) -> Self {
        let (x, a) = match kind {
            RegimeKind::Both => (1.0, 1.0),
            RegimeKind::XOnly => (1.0, 0.0),
            RegimeKind::AOnly => (0.0, 1.0),
            RegimeKind::DataFree => (0.0, 0.0),
        };
        Self {
            kind,
            x_ratio: x,
            a_ratio: a,
        }
    }

    pub fn new(kind: RegimeKind, x_ratio: f64, a_ratio: f64) -> Result<Self> {
        let r = Self {
            kind,
            x_ratio,
            a_ratio,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let ok = unit(self.x_ratio)
            && unit(self.a_ratio)
            && match self.kind {
                RegimeKind::Both => self.x_ratio == 1.0 && self.a_ratio == 1.0,
                RegimeKind::XOnly => self.a_ratio == 0.0,
                RegimeKind::AOnly => self.x_ratio == 0.0,
                RegimeKind::DataFree => self.x_ratio == 0.0 && self.a_ratio == 0.0,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "inconsistent regime {:?} with x_ratio = {}, a_ratio = {}",
                self.kind, self.x_ratio, self.a_ratio
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Real,
    Masked,
    Synthetic,
}

/// What the attacker sees of the deployed graph. Masked rows are zeroed
/// rather than removed so every regime shares one matrix shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeView {
    pub regime: Regime,
    pub features: Matrix,
    pub edges: Vec<Edge>,
    pub row_provenance: Vec<Provenance>,
    /// Whether `edges` are real edges of the deployed graph.
    pub edges_real: bool,
}

impl RegimeView {
    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn feat_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn real_rows(&self) -> usize {
        self.row_provenance
            .iter()
            .filter(|p| **p == Provenance::Real)
            .count()
    }

    /// Re-masks an existing view. `both` is the identity.
    pub fn reapply(&self, regime: &Regime, seed: u64) -> Result<RegimeView> {
        regime.validate()?;
        Ok(mask(
            &self.features,
            &self.edges,
            &self.row_provenance,
            self.edges_real,
            regime,
            seed,
        ))
    }
}

/// Keeps a uniform random `⌊x_ratio·N⌋` rows and `⌊a_ratio·E⌋` edges.
pub fn apply_regime(g: &Graph, regime: &Regime, seed: u64) -> Result<RegimeView> {
    regime.validate()?;
    let prov = vec![Provenance::Real; g.num_nodes()];
    Ok(mask(g.features(), g.edges(), &prov, true, regime, seed))
}

fn mask(
    features: &Matrix,
    edges: &[Edge],
    prov: &[Provenance],
    edges_real: bool,
    regime: &Regime,
    seed: u64,
) -> RegimeView {
    let n = features.rows();
    let mut rng = rng_from(seed);

    let keep_rows = (regime.x_ratio * n as f64).floor() as usize;
    let mut kept = vec![false; n];
    if keep_rows == n {
        kept.iter_mut().for_each(|k| *k = true);
    } else {
        for i in sample(&mut rng, n, keep_rows) {
            kept[i] = true;
        }
    }
    let mut vis = features.clone();
    let mut row_provenance = prov.to_vec();
    for i in 0..n {
        if !kept[i] {
            vis.row_mut(i).iter_mut().for_each(|x| *x = 0.0);
            row_provenance[i] = Provenance::Masked;
        }
    }

    let keep_edges = (regime.a_ratio * edges.len() as f64).floor() as usize;
    let visible_edges = if keep_edges == edges.len() {
        edges.to_vec()
    } else {
        let mut idx: Vec<usize> = sample(&mut rng, edges.len(), keep_edges).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| edges[i]).collect()
    };

    RegimeView {
        regime: *regime,
        features: vis,
        edges_real: edges_real && !visible_edges.is_empty(),
        edges: visible_edges,
        row_provenance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmParams};

    fn g() -> Graph {
        generate_sbm(
            &SbmParams {
                n: 10,
                num_classes: 2,
                p_in: 0.6,
                p_out: 0.1,
                feat_dim: 3,
                feat_signal: 1.0,
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn both_is_identity() {
        let g = g();
        let v = apply_regime(&g, &Regime::both(), 5).unwrap();
        assert_eq!(&v.features, g.features());
        assert_eq!(v.edges, g.edges());
        assert_eq!(v.reapply(&Regime::both(), 99).unwrap(), v);
    }

    #[test]
    fn data_free_has_no_real_content() {
        let v = apply_regime(&g(), &Regime::data_free(), 5).unwrap();
        assert_eq!(v.real_rows(), 0);
        assert!(v.edges.is_empty());
        assert!(!v.edges_real);
        assert!(v.features.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn half_rows_visible() {
        let r = Regime::new(RegimeKind::XOnly, 0.5, 0.0).unwrap();
        let v = apply_regime(&g(), &r, 5).unwrap();
        assert_eq!(v.real_rows(), 5);
        assert!(v.edges.is_empty());
        assert_eq!(v, apply_regime(&g(), &r, 5).unwrap());
    }

    #[test]
    fn inconsistent_ratios_rejected() {
        assert!(Regime::new(RegimeKind::Both, 0.5, 1.0).is_err());
        assert!(Regime::new(RegimeKind::AOnly, 0.2, 1.0).is_err());
        assert!(Regime::new(RegimeKind::DataFree, 0.0, 0.1).is_err());
    }
}
