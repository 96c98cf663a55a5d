use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::attacks::AttackSpec;
use crate::defenses::{DefenseSpec, TargetSpec};
use crate::error::{Error, Result};
use crate::graph::{Regime, RegimeKind, SbmParams, SplitFractions};
use crate::oracle::ResponseMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Track {
    #[default]
    Extraction,
    Ownership,
    Joint,
}

impl Track {
    pub fn as_str(&self) -> &'static str {
        match self {
            Track::Extraction => "extraction",
            Track::Ownership => "ownership",
            Track::Joint => "joint",
        }
    }
}

impl std::str::FromStr for Track {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extraction" => Ok(Track::Extraction),
            "ownership" => Ok(Track::Ownership),
            "joint" => Ok(Track::Joint),
            _ => Err(Error::Config(format!("unknown track {s:?}"))),
        }
    }
}

/// A dataset is either a bundle directory or generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sbm: Option<SbmParams>,
    /// Generator seed; derived from the root seed and name when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_seed: Option<u64>,
}

impl DatasetConfig {
    pub fn sbm(name: &str, params: SbmParams) -> Self {
        Self {
            name: name.into(),
            bundle: None,
            sbm: Some(params),
            graph_seed: None,
        }
    }
}

pub const DEFAULT_BUDGETS: [f64; 5] = [0.05, 0.10, 0.25, 0.50, 1.00];

/// Accepts either a full regime object or a bare kind name.
fn de_regimes<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Regime>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Kind(RegimeKind),
        Full(Regime),
    }
    let entries = Vec::<Entry>::deserialize(d)?;
    entries
        .into_iter()
        .map(|e| {
            let r = match e {
                Entry::Kind(k) => Regime::of(k),
                Entry::Full(r) => r,
            };
            r.validate().map_err(serde::de::Error::custom)?;
            Ok(r)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetConfig>,
    pub attacks: Vec<AttackSpec>,
    pub defenses: Vec<DefenseSpec>,
    pub budgets: Vec<f64>,
    #[serde(deserialize_with = "de_regimes")]
    pub regimes: Vec<Regime>,
    pub seeds: Vec<u64>,
    pub track: Track,
    pub output_dir: PathBuf,
    pub target: TargetSpec,
    pub splits: SplitFractions,
    pub response_mode: ResponseMode,
    /// Budget multiplier for every joint-track cell.
    pub joint_budget: f64,
    /// Overridden by the `BENCH_ROOT_SEED` environment variable in the CLI.
    pub root_seed: u64,
    pub workers: Option<usize>,
    /// JSON-pointer paths into this config mapped to value lists; expanded
    /// as a cartesian product by [`expand_sweep`].
    pub sweep: BTreeMap<String, Vec<Value>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            attacks: Vec::new(),
            defenses: Vec::new(),
            budgets: DEFAULT_BUDGETS.to_vec(),
            regimes: vec![Regime::both()],
            seeds: vec![0, 1, 2],
            track: Track::Extraction,
            output_dir: PathBuf::from("out"),
            target: TargetSpec::default(),
            splits: SplitFractions::default(),
            response_mode: ResponseMode::SoftProbs,
            joint_budget: 0.25,
            root_seed: 0,
            workers: None,
            sweep: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.datasets.is_empty() {
            return bad("no datasets".into());
        }
        for d in &self.datasets {
            if d.bundle.is_some() == d.sbm.is_some() {
                return bad(format!("dataset {:?} needs exactly one of bundle or sbm", d.name));
            }
        }
        let names: BTreeSet<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        if names.len() != self.datasets.len() {
            return bad("dataset names must be distinct".into());
        }
        if self.seeds.is_empty() {
            return bad("no seeds".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        let needs_attacks = self.track != Track::Ownership;
        let needs_defenses = self.track != Track::Extraction;
        if needs_attacks && self.attacks.is_empty() {
            return bad(format!("{} track needs attacks", self.track.as_str()));
        }
        if needs_defenses && self.defenses.is_empty() {
            return bad(format!("{} track needs defenses", self.track.as_str()));
        }
        if needs_attacks && self.regimes.is_empty() {
            return bad("no regimes".into());
        }
        if self.track == Track::Extraction && self.budgets.is_empty() {
            return bad("no budgets".into());
        }
        let budgets = self.budgets.iter().chain([&self.joint_budget]);
        if let Some(b) = budgets.into_iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return bad(format!("budget multipliers must be positive, got {b}"));
        }
        for a in &self.attacks {
            a.validate()?;
        }
        for d in &self.defenses {
            d.validate()?;
        }
        for r in &self.regimes {
            r.validate()?;
        }
        Ok(())
    }

    /// Number of records a run of this config emits, error rows included.
    pub fn expected_records(&self) -> usize {
        let (d, s) = (self.datasets.len(), self.seeds.len());
        match self.track {
            Track::Extraction => {
                d * self.attacks.len() * self.budgets.len() * self.regimes.len() * s
            }
            Track::Ownership => d * self.defenses.len() * s,
            Track::Joint => d * self.defenses.len() * self.attacks.len() * self.regimes.len() * s,
        }
    }
}

/// One point of an expanded sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub index: usize,
    pub values: BTreeMap<String, Value>,
    pub config: ExperimentConfig,
}

/// Cartesian expansion of `cfg.sweep`, keys in lexical order with the last
/// key varying fastest. No sweep entries gives the config itself as point 0.
pub fn expand_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    let mut base = cfg.clone();
    base.sweep.clear();
    let base_json = serde_json::to_value(&base)?;
    let axes: Vec<(&String, &Vec<Value>)> = cfg.sweep.iter().collect();
    if let Some((k, _)) = axes.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::Config(format!("sweep axis {k} has no values")));
    }
    let total: usize = axes.iter().map(|(_, v)| v.len()).product();
    let mut out = Vec::with_capacity(total);
    for index in 0..total {
        let mut json = base_json.clone();
        let mut values = BTreeMap::new();
        let mut rest = index;
        for (path, vals) in axes.iter().rev() {
            let v = &vals[rest % vals.len()];
            rest /= vals.len();
            let slot = json
                .pointer_mut(path)
                .ok_or_else(|| Error::Config(format!("sweep path {path} not found in config")))?;
            *slot = v.clone();
            values.insert((*path).clone(), v.clone());
        }
        let config: ExperimentConfig = serde_json::from_value(json)
            .map_err(|e| Error::Config(format!("sweep point {index}: {e}")))?;
        config.validate()?;
        out.push(SweepPoint {
            index,
            values,
            config,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        serde_json::from_str(
            r#"{
                "datasets": [{"name": "s", "sbm": {"n": 60, "num_classes": 3, "p_in": 0.1,
                    "p_out": 0.01, "feat_dim": 4, "feat_signal": 1.0}}],
                "defenses": [{"kind": "OP_low"}],
                "track": "ownership",
                "regimes": ["both", {"kind": "x_only", "x_ratio": 0.5, "a_ratio": 0.0}]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_and_regime_forms() {
        let c = base();
        c.validate().unwrap();
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert_eq!(c.budgets, DEFAULT_BUDGETS.to_vec());
        assert_eq!(c.regimes[0], Regime::both());
        assert_eq!(c.regimes[1].x_ratio, 0.5);
        assert_eq!(c.expected_records(), 3);
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let mut c = base();
        c.seeds = vec![1, 1];
        assert!(c.validate().is_err());
    }

    #[test]
    fn sweep_expands_cartesian() {
        let mut c = base();
        c.sweep.insert(
            "/defenses/0/sigma".into(),
            vec![0.01.into(), 0.1.into(), 0.5.into()],
        );
        c.sweep.insert("/seeds".into(), vec![vec![0].into(), vec![1].into()]);
        let pts = expand_sweep(&c).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1].config.seeds, vec![1]);
        assert_eq!(pts[2].config.defenses[0], DefenseSpec::OpLow { sigma: 0.1 });
        assert!(pts.iter().all(|p| p.config.sweep.is_empty()));
    }

    #[test]
    fn empty_sweep_is_identity() {
        let c = base();
        let pts = expand_sweep(&c).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].config, c);
    }

    #[test]
    fn bad_sweep_path_rejected() {
        let mut c = base();
        c.sweep.insert("/nope".into(), vec![1.into()]);
        assert!(expand_sweep(&c).is_err());
    }
}
