use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::Matrix;

const MAGIC: &[u8; 8] = b"GMEBWMRK";
const VERSION: u32 = 1;

/// Secret material needed to verify ownership later.
#[derive(Debug, Clone, PartialEq)]
pub enum WatermarkArtifact {
    /// Trigger nodes whose `trigger_dims` are overwritten with
    /// `trigger_value` and should map to `target_class`.
    Backdoor {
        trigger_nodes: Vec<usize>,
        trigger_dims: Vec<usize>,
        trigger_value: f64,
        target_class: usize,
    },
    /// Standalone watermark graph with its labels.
    WatermarkGraph { graph: Graph },
    /// Key nodes with `key_pattern` added to their features and the labels
    /// they should receive.
    KeyInputs {
        key_nodes: Vec<usize>,
        key_pattern: Vec<f64>,
        key_labels: Vec<usize>,
    },
    /// Trigger nodes with `delta` (one row each) added to their features.
    Perturbation {
        trigger_nodes: Vec<usize>,
        delta: Matrix,
        target_class: usize,
    },
    /// Nodes and the target's labels recorded for them.
    Fingerprint { nodes: Vec<usize>, labels: Vec<usize> },
    /// Probe nodes and the undefended target's labels; used for
    /// response-side defenses.
    Marker { nodes: Vec<usize>, labels: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Dtype {
    U64,
    F64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SectionHeader {
    name: String,
    dtype: Dtype,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    #[serde(default)]
    scalars: Map<String, Value>,
    sections: Vec<SectionHeader>,
}

enum Section {
    U64(Vec<u64>),
    F64(Vec<f64>),
}

fn ids(v: &[usize]) -> Section {
    Section::U64(v.iter().map(|&i| i as u64).collect())
}

impl WatermarkArtifact {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Backdoor { .. } => "backdoor",
            Self::WatermarkGraph { .. } => "watermark_graph",
            Self::KeyInputs { .. } => "key_inputs",
            Self::Perturbation { .. } => "perturbation",
            Self::Fingerprint { .. } => "fingerprint",
            Self::Marker { .. } => "marker",
        }
    }

    /// Number of probes verification evaluates.
    pub fn n_probes(&self) -> usize {
        match self {
            Self::Backdoor { trigger_nodes, .. } | Self::Perturbation { trigger_nodes, .. } => {
                trigger_nodes.len()
            }
            Self::WatermarkGraph { graph } => graph.num_nodes(),
            Self::KeyInputs { key_nodes, .. } => key_nodes.len(),
            Self::Fingerprint { nodes, .. } | Self::Marker { nodes, .. } => nodes.len(),
        }
    }

    fn parts(&self) -> (Map<String, Value>, Vec<(&'static str, Section)>) {
        let mut scalars = Map::new();
        let sections = match self {
            Self::Backdoor {
                trigger_nodes,
                trigger_dims,
                trigger_value,
                target_class,
            } => {
                scalars.insert("target_class".into(), json!(target_class));
                vec![
                    ("trigger_nodes", ids(trigger_nodes)),
                    ("trigger_dims", ids(trigger_dims)),
                    ("trigger_value", Section::F64(vec![*trigger_value])),
                ]
            }
            Self::WatermarkGraph { graph } => {
                scalars.insert("num_nodes".into(), json!(graph.num_nodes()));
                scalars.insert("feat_dim".into(), json!(graph.feat_dim()));
                scalars.insert("num_classes".into(), json!(graph.num_classes()));
                let (us, vs): (Vec<usize>, Vec<usize>) = graph.edges().iter().copied().unzip();
                vec![
                    ("edges_u", ids(&us)),
                    ("edges_v", ids(&vs)),
                    ("features", Section::F64(graph.features().as_slice().to_vec())),
                    ("labels", ids(graph.labels())),
                ]
            }
            Self::KeyInputs {
                key_nodes,
                key_pattern,
                key_labels,
            } => vec![
                ("key_nodes", ids(key_nodes)),
                ("key_pattern", Section::F64(key_pattern.clone())),
                ("key_labels", ids(key_labels)),
            ],
            Self::Perturbation {
                trigger_nodes,
                delta,
                target_class,
            } => {
                scalars.insert("target_class".into(), json!(target_class));
                scalars.insert("feat_dim".into(), json!(delta.cols()));
                vec![
                    ("trigger_nodes", ids(trigger_nodes)),
                    ("delta", Section::F64(delta.as_slice().to_vec())),
                ]
            }
            Self::Fingerprint { nodes, labels } | Self::Marker { nodes, labels } => {
                vec![("nodes", ids(nodes)), ("labels", ids(labels))]
            }
        };
        (scalars, sections)
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        let (scalars, sections) = self.parts();
        let header = Header {
            kind: self.kind().into(),
            scalars,
            sections: sections
                .iter()
                .map(|(name, s)| SectionHeader {
                    name: (*name).into(),
                    dtype: match s {
                        Section::U64(_) => Dtype::U64,
                        Section::F64(_) => Dtype::F64,
                    },
                    len: match s {
                        Section::U64(v) => v.len(),
                        Section::F64(v) => v.len(),
                    },
                })
                .collect(),
        };
        let hbytes = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(hbytes.len() as u32).to_le_bytes())?;
        w.write_all(&hbytes)?;
        for (_, s) in &sections {
            match s {
                Section::U64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
                Section::F64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
            }
        }
        Ok(())
    }

    pub fn read(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a watermark artifact".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported artifact version {version}")));
        }
        r.read_exact(&mut word)?;
        let mut hbytes = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut hbytes)?;
        let header: Header = serde_json::from_slice(&hbytes)?;
        let mut u64s = std::collections::HashMap::new();
        let mut f64s = std::collections::HashMap::new();
        let mut buf = [0u8; 8];
        for s in &header.sections {
            let mut vals = Vec::with_capacity(s.len);
            for _ in 0..s.len {
                r.read_exact(&mut buf)?;
                vals.push(buf);
            }
            match s.dtype {
                Dtype::U64 => {
                    u64s.insert(
                        s.name.as_str(),
                        vals.iter().map(|b| u64::from_le_bytes(*b) as usize).collect::<Vec<_>>(),
                    );
                }
                Dtype::F64 => {
                    f64s.insert(
                        s.name.as_str(),
                        vals.iter().map(|b| f64::from_le_bytes(*b)).collect::<Vec<_>>(),
                    );
                }
            }
        }
        let mut take_ids = |name: &str| {
            u64s.remove(name)
                .ok_or_else(|| Error::Format(format!("artifact missing section {name}")))
        };
        let scalar = |name: &str| {
            header
                .scalars
                .get(name)
                .and_then(Value::as_u64)
                .map(|v| v as usize)
                .ok_or_else(|| Error::Format(format!("artifact missing scalar {name}")))
        };
        let mut take_f64 = |name: &str| {
            f64s.remove(name)
                .ok_or_else(|| Error::Format(format!("artifact missing section {name}")))
        };
        Ok(match header.kind.as_str() {
            "backdoor" => Self::Backdoor {
                trigger_nodes: take_ids("trigger_nodes")?,
                trigger_dims: take_ids("trigger_dims")?,
                trigger_value: *take_f64("trigger_value")?
                    .first()
                    .ok_or_else(|| Error::Format("empty trigger_value".into()))?,
                target_class: scalar("target_class")?,
            },
            "watermark_graph" => {
                let n = scalar("num_nodes")?;
                let d = scalar("feat_dim")?;
                let us = take_ids("edges_u")?;
                let vs = take_ids("edges_v")?;
                let features = Matrix::from_vec(n, d, take_f64("features")?)?;
                let graph = Graph::new(
                    features,
                    us.into_iter().zip(vs),
                    take_ids("labels")?,
                    scalar("num_classes")?,
                )?;
                Self::WatermarkGraph { graph }
            }
            "key_inputs" => Self::KeyInputs {
                key_nodes: take_ids("key_nodes")?,
                key_pattern: take_f64("key_pattern")?,
                key_labels: take_ids("key_labels")?,
            },
            "perturbation" => {
                let trigger_nodes = take_ids("trigger_nodes")?;
                let d = scalar("feat_dim")?;
                let delta = Matrix::from_vec(trigger_nodes.len(), d, take_f64("delta")?)?;
                Self::Perturbation {
                    trigger_nodes,
                    delta,
                    target_class: scalar("target_class")?,
                }
            }
            "fingerprint" => Self::Fingerprint {
                nodes: take_ids("nodes")?,
                labels: take_ids("labels")?,
            },
            "marker" => Self::Marker {
                nodes: take_ids("nodes")?,
                labels: take_ids("labels")?,
            },
            other => return Err(Error::Format(format!("unknown artifact kind {other:?}"))),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmParams};

    fn round_trip(a: &WatermarkArtifact) -> WatermarkArtifact {
        let mut buf = Vec::new();
        a.write(&mut buf).unwrap();
        WatermarkArtifact::read(buf.as_slice()).unwrap()
    }

    #[test]
    fn every_kind_round_trips() {
        let g = generate_sbm(
            &SbmParams {
                n: 12,
                num_classes: 3,
                p_in: 0.5,
                p_out: 0.1,
                feat_dim: 3,
                feat_signal: 1.0,
            },
            4,
        )
        .unwrap();
        let cases = vec![
            WatermarkArtifact::Backdoor {
                trigger_nodes: vec![1, 5],
                trigger_dims: vec![0, 2],
                trigger_value: 0.99,
                target_class: 2,
            },
            WatermarkArtifact::WatermarkGraph { graph: g },
            WatermarkArtifact::KeyInputs {
                key_nodes: vec![3],
                key_pattern: vec![0.1, -0.2, 1.0 / 3.0],
                key_labels: vec![1],
            },
            WatermarkArtifact::Perturbation {
                trigger_nodes: vec![0, 7],
                delta: Matrix::from_vec(2, 2, vec![0.25, -0.25, 0.1, 0.0]).unwrap(),
                target_class: 0,
            },
            WatermarkArtifact::Fingerprint {
                nodes: vec![9, 4],
                labels: vec![0, 1],
            },
            WatermarkArtifact::Marker {
                nodes: vec![],
                labels: vec![],
            },
        ];
        for a in &cases {
            assert_eq!(&round_trip(a), a, "{}", a.kind());
        }
    }

    #[test]
    fn bad_magic_rejected() {
        assert!(matches!(
            WatermarkArtifact::read(&b"NOTANARTIFACT..."[..]),
            Err(Error::Format(_))
        ));
    }
}
