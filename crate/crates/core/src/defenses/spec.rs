use serde::{Deserialize, Serialize};

use super::inference::{InferenceTransform, PradaConfig};
use crate::error::{Error, Result};

fn d_wm_ratio() -> f64 {
    0.002
}
fn d_wm_min_nodes() -> usize {
    10
}
fn d_wm_degree() -> f64 {
    4.0
}
fn d_trigger_rate() -> f64 {
    0.01
}
fn d_min_triggers() -> usize {
    20
}
fn d_trigger_dims() -> usize {
    20
}
fn d_trigger_value() -> f64 {
    0.99
}
fn d_joint_alpha() -> f64 {
    0.3
}
fn d_wm_strength() -> f64 {
    0.25
}
fn d_snnl_alpha() -> f64 {
    0.1
}
fn d_key_ratio() -> f64 {
    0.1
}
fn d_t_opt() -> f64 {
    20.0
}
fn d_key_scale() -> f64 {
    2.0
}
fn d_epsilon() -> f64 {
    0.25
}
fn d_trigger_count() -> usize {
    20
}
fn d_rounds() -> usize {
    10
}
fn d_model_epochs() -> usize {
    20
}
fn d_trigger_steps() -> usize {
    10
}
fn d_fingerprint_count() -> usize {
    20
}
fn d_sigma_low() -> f64 {
    0.05
}
fn d_sigma_high() -> f64 {
    0.20
}
fn d_bits() -> u32 {
    2
}
fn d_window() -> usize {
    PradaConfig::default().window
}
fn d_quantile() -> f64 {
    PradaConfig::default().quantile
}
fn d_prada_threshold() -> f64 {
    PradaConfig::default().threshold
}
fn d_misinfo_threshold() -> f64 {
    0.6
}
fn d_redirect() -> f64 {
    0.5
}

/// A defense and its hyperparameters. Serialized with a `kind` tag; every
/// omitted field takes its default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum DefenseSpec {
    /// Random watermark graph appended as a disjoint component.
    #[serde(rename = "RandomWM")]
    RandomWm {
        #[serde(default = "d_wm_ratio")]
        wm_node_ratio: f64,
        /// Explicit watermark size; overrides the ratio.
        #[serde(default)]
        wm_nodes: Option<usize>,
        #[serde(default = "d_wm_min_nodes")]
        wm_min_nodes: usize,
        /// Expected degree inside the watermark graph.
        #[serde(default = "d_wm_degree")]
        wm_avg_degree: f64,
    },
    /// Feature-pattern backdoor on a subset of training nodes.
    #[serde(rename = "BackdoorWM")]
    BackdoorWm {
        #[serde(default = "d_trigger_rate")]
        trigger_rate: f64,
        #[serde(default = "d_min_triggers")]
        min_triggers: usize,
        #[serde(default = "d_trigger_dims")]
        trigger_dims: usize,
        #[serde(default = "d_trigger_value")]
        trigger_value: f64,
        #[serde(default = "d_joint_alpha")]
        joint_alpha: f64,
        #[serde(default)]
        target_class: usize,
    },
    /// Key inputs with assigned labels plus an embedding-entanglement term.
    #[serde(rename = "SurviveWM")]
    SurviveWm {
        #[serde(default = "d_wm_strength")]
        wm_strength: f64,
        #[serde(default = "d_snnl_alpha")]
        snnl_alpha: f64,
        #[serde(default = "d_key_ratio")]
        key_ratio: f64,
        #[serde(default = "d_t_opt")]
        t_opt: f64,
        /// Norm of the secret key pattern added to key-input features.
        #[serde(default = "d_key_scale")]
        key_scale: f64,
    },
    /// Bounded learned feature perturbation that maps trigger nodes to a
    /// target class.
    #[serde(rename = "ImperceptibleWM")]
    ImperceptibleWm {
        #[serde(default = "d_epsilon")]
        epsilon: f64,
        #[serde(default = "d_trigger_count")]
        trigger_count: usize,
        #[serde(default = "d_joint_alpha")]
        joint_alpha: f64,
        #[serde(default)]
        target_class: usize,
        #[serde(default = "d_rounds")]
        rounds: usize,
        #[serde(default = "d_model_epochs")]
        model_epochs: usize,
        #[serde(default = "d_trigger_steps")]
        trigger_steps: usize,
    },
    /// Low-margin fingerprint nodes and their recorded labels.
    Integrity {
        #[serde(default = "d_fingerprint_count")]
        fingerprint_count: usize,
    },
    #[serde(rename = "OP_low")]
    OpLow {
        #[serde(default = "d_sigma_low")]
        sigma: f64,
    },
    #[serde(rename = "OP_high")]
    OpHigh {
        #[serde(default = "d_sigma_high")]
        sigma: f64,
    },
    #[serde(rename = "PR_2bit")]
    Pr2Bit {
        #[serde(default = "d_bits")]
        bits: u32,
    },
    #[serde(rename = "PR_top1")]
    PrTop1 {},
    #[serde(rename = "PRADA")]
    Prada {
        #[serde(default = "d_window")]
        window: usize,
        #[serde(default = "d_quantile")]
        quantile: f64,
        #[serde(default = "d_prada_threshold")]
        threshold: f64,
    },
    AdaptMisinfo {
        #[serde(default = "d_misinfo_threshold")]
        threshold: f64,
    },
    GradRedir {
        #[serde(default = "d_redirect")]
        redirect_strength: f64,
    },
}

impl DefenseSpec {
    pub const ALL_NAMES: [&'static str; 12] = [
        "RandomWM",
        "BackdoorWM",
        "SurviveWM",
        "ImperceptibleWM",
        "Integrity",
        "OP_low",
        "OP_high",
        "PR_2bit",
        "PR_top1",
        "PRADA",
        "AdaptMisinfo",
        "GradRedir",
    ];

    /// The spec with all defaults for a kind name.
    pub fn default_for(name: &str) -> Result<Self> {
        serde_json::from_value(serde_json::json!({ "kind": name }))
            .map_err(|e| Error::Config(format!("unknown defense {name:?}: {e}")))
    }

    pub fn all_defaults() -> Vec<Self> {
        Self::ALL_NAMES
            .iter()
            .map(|n| Self::default_for(n).expect("built-in defense name"))
            .collect()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::RandomWm { .. } => "RandomWM",
            Self::BackdoorWm { .. } => "BackdoorWM",
            Self::SurviveWm { .. } => "SurviveWM",
            Self::ImperceptibleWm { .. } => "ImperceptibleWM",
            Self::Integrity { .. } => "Integrity",
            Self::OpLow { .. } => "OP_low",
            Self::OpHigh { .. } => "OP_high",
            Self::Pr2Bit { .. } => "PR_2bit",
            Self::PrTop1 {} => "PR_top1",
            Self::Prada { .. } => "PRADA",
            Self::AdaptMisinfo { .. } => "AdaptMisinfo",
            Self::GradRedir { .. } => "GradRedir",
        }
    }

    /// Watermarking and fingerprinting kinds; the rest act on responses.
    pub fn is_training_time(&self) -> bool {
        matches!(
            self,
            Self::RandomWm { .. }
                | Self::BackdoorWm { .. }
                | Self::SurviveWm { .. }
                | Self::ImperceptibleWm { .. }
                | Self::Integrity { .. }
        )
    }

    /// Response transforms installed on the oracle.
    pub fn inference_chain(&self) -> Vec<InferenceTransform> {
        match self {
            Self::OpLow { sigma } | Self::OpHigh { sigma } => {
                vec![InferenceTransform::LogitNoise { sigma: *sigma }]
            }
            Self::Pr2Bit { bits } => vec![InferenceTransform::Quantize { bits: *bits }],
            Self::PrTop1 {} => vec![InferenceTransform::Top1],
            Self::Prada {
                window,
                quantile,
                threshold,
            } => vec![InferenceTransform::Prada(PradaConfig {
                window: *window,
                quantile: *quantile,
                threshold: *threshold,
            })],
            Self::AdaptMisinfo { threshold } => vec![InferenceTransform::Misinform {
                threshold: *threshold,
            }],
            Self::GradRedir { redirect_strength } => vec![InferenceTransform::Redirect {
                strength: *redirect_strength,
            }],
            _ => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{}: {what}", self.name())));
        let frac = |v: f64| (0.0..=1.0).contains(&v);
        match self {
            Self::RandomWm {
                wm_node_ratio,
                wm_nodes,
                wm_avg_degree,
                ..
            } => {
                if !frac(*wm_node_ratio) || *wm_avg_degree < 0.0 || *wm_nodes == Some(0) {
                    return bad("watermark size parameters out of range");
                }
            }
            Self::BackdoorWm {
                trigger_rate,
                trigger_dims,
                joint_alpha,
                ..
            } => {
                if !frac(*trigger_rate) || !frac(*joint_alpha) || *trigger_dims == 0 {
                    return bad("trigger parameters out of range");
                }
            }
            Self::SurviveWm {
                wm_strength,
                key_ratio,
                t_opt,
                ..
            } => {
                if *wm_strength < 0.0 || !(*key_ratio > 0.0 && *key_ratio <= 1.0) || !(*t_opt > 0.0)
                {
                    return bad("key parameters out of range");
                }
            }
            Self::ImperceptibleWm {
                epsilon,
                trigger_count,
                joint_alpha,
                ..
            } => {
                if *epsilon < 0.0 || *trigger_count == 0 || !frac(*joint_alpha) {
                    return bad("perturbation parameters out of range");
                }
            }
            Self::Integrity { fingerprint_count } => {
                if *fingerprint_count == 0 {
                    return bad("fingerprint_count must be positive");
                }
            }
            Self::OpLow { sigma } | Self::OpHigh { sigma } => {
                if !(*sigma >= 0.0) {
                    return bad("sigma must be non-negative");
                }
            }
            Self::Pr2Bit { bits } => {
                if *bits == 0 || *bits > 52 {
                    return bad("bits must be in 1..=52");
                }
            }
            Self::Prada {
                window, quantile, ..
            } => {
                if *window == 0 || !frac(*quantile) {
                    return bad("detector parameters out of range");
                }
            }
            Self::AdaptMisinfo { threshold } => {
                if !frac(*threshold) {
                    return bad("threshold must be in [0,1]");
                }
            }
            Self::GradRedir { redirect_strength } => {
                if !frac(*redirect_strength) {
                    return bad("redirect_strength must be in [0,1]");
                }
            }
            Self::PrTop1 {} => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_table() {
        assert_eq!(
            DefenseSpec::default_for("OP_low").unwrap(),
            DefenseSpec::OpLow { sigma: 0.05 }
        );
        assert_eq!(
            DefenseSpec::default_for("OP_high").unwrap(),
            DefenseSpec::OpHigh { sigma: 0.20 }
        );
        assert_eq!(
            DefenseSpec::default_for("PR_2bit").unwrap(),
            DefenseSpec::Pr2Bit { bits: 2 }
        );
        match DefenseSpec::default_for("BackdoorWM").unwrap() {
            DefenseSpec::BackdoorWm {
                trigger_rate,
                trigger_dims,
                trigger_value,
                joint_alpha,
                ..
            } => assert_eq!(
                (trigger_rate, trigger_dims, trigger_value, joint_alpha),
                (0.01, 20, 0.99, 0.3)
            ),
            other => panic!("{other:?}"),
        }
        match DefenseSpec::default_for("SurviveWM").unwrap() {
            DefenseSpec::SurviveWm {
                wm_strength,
                snnl_alpha,
                key_ratio,
                ..
            } => assert_eq!((wm_strength, snnl_alpha, key_ratio), (0.25, 0.1, 0.1)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            DefenseSpec::default_for("RandomWM").unwrap(),
            DefenseSpec::RandomWm { wm_node_ratio, .. } if wm_node_ratio == 0.002
        ));
        assert!(matches!(
            DefenseSpec::default_for("ImperceptibleWM").unwrap(),
            DefenseSpec::ImperceptibleWm { epsilon, .. } if epsilon == 0.25
        ));
    }

    #[test]
    fn all_names_round_trip() {
        for spec in DefenseSpec::all_defaults() {
            spec.validate().unwrap();
            let json = serde_json::to_string(&spec).unwrap();
            let back: DefenseSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(back, spec);
            assert_eq!(
                spec.is_training_time(),
                spec.inference_chain().is_empty(),
                "{}",
                spec.name()
            );
        }
    }

    #[test]
    fn unknown_kind_or_field_rejected() {
        assert!(DefenseSpec::default_for("Nope").is_err());
        assert!(serde_json::from_str::<DefenseSpec>(r#"{"kind":"OP_low","sigmaa":1}"#).is_err());
    }

    #[test]
    fn prada_params_default_individually() {
        let s: DefenseSpec = serde_json::from_str(r#"{"kind":"PRADA","window":50}"#).unwrap();
        match s {
            DefenseSpec::Prada {
                window, quantile, ..
            } => assert_eq!((window, quantile), (50, 0.10)),
            other => panic!("{other:?}"),
        }
    }
}
