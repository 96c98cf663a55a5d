//! Evaluation metrics shared by the tracks: fidelity, utility drop,
//! sample efficiency and grouped descriptive statistics.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::defenses::VerificationReport;
use crate::error::{Error, Result};

/// Hard-label agreement between two predictors over a node set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityScore {
    pub value: f64,
    pub n: usize,
}

impl FidelityScore {
    pub fn matches(&self) -> usize {
        (self.value * self.n as f64).round() as usize
    }
}

/// Fraction of `mask` nodes where the two label vectors agree; 0 on an
/// empty mask.
pub fn fidelity(surrogate: &[usize], target: &[usize], mask: &[usize]) -> FidelityScore {
    let agree = mask.iter().filter(|&&i| surrogate[i] == target[i]).count();
    FidelityScore {
        value: if mask.is_empty() {
            0.0
        } else {
            agree as f64 / mask.len() as f64
        },
        n: mask.len(),
    }
}

/// Accuracy lost to a defense, in percentage points. Inputs are fractions;
/// negative when the defended model is better.
pub fn utility_drop(defended_acc: f64, baseline_acc: f64) -> f64 {
    (baseline_acc - defended_acc) * 100.0
}

/// Smallest budget reaching 90% of the best fidelity on the curve.
/// `None` for an empty curve.
pub fn sample_efficiency(curve: &[(f64, f64)]) -> Option<f64> {
    let best = curve.iter().map(|&(_, f)| f).fold(f64::NEG_INFINITY, f64::max);
    let mut sorted = curve.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    sorted
        .into_iter()
        .find(|&(_, f)| f >= 0.9 * best)
        .map(|(b, _)| b)
}

/// Linear-interpolated (type-7) percentile of ascending data, `q` in [0,1].
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Verification of one artifact on the protected target and on a surrogate
/// extracted from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPair {
    pub on_target: VerificationReport,
    pub on_surrogate: VerificationReport,
}

impl SurvivalPair {
    pub fn new(on_target: VerificationReport, on_surrogate: VerificationReport) -> Result<Self> {
        if on_target.n_probes != on_surrogate.n_probes {
            return Err(Error::InvalidArgument(format!(
                "probe sets differ: {} on target, {} on surrogate",
                on_target.n_probes, on_surrogate.n_probes
            )));
        }
        Ok(Self {
            on_target,
            on_surrogate,
        })
    }

    /// Surrogate rate relative to the on-target rate.
    pub fn retention(&self) -> f64 {
        if self.on_target.rate == 0.0 {
            0.0
        } else {
            self.on_surrogate.rate / self.on_target.rate
        }
    }
}

/// One value tagged with its group key. `None` values (failed cells) count
/// toward the group but not the statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub key: Vec<String>,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub key: Vec<String>,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub iqr: f64,
    /// Set when the group had no usable values.
    pub warning: Option<String>,
}

/// Per-group mean, sample std, median and IQR, in ascending key order.
pub fn aggregate(obs: &[Observation]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<&[String], Vec<f64>> = BTreeMap::new();
    for o in obs {
        let vals = groups.entry(&o.key).or_default();
        if let Some(v) = o.value.filter(|v| v.is_finite()) {
            vals.push(v);
        }
    }
    groups
        .into_iter()
        .map(|(key, mut vals)| {
            if vals.is_empty() {
                return SummaryRow {
                    key: key.to_vec(),
                    n: 0,
                    mean: f64::NAN,
                    std: f64::NAN,
                    median: f64::NAN,
                    iqr: f64::NAN,
                    warning: Some("no values in group".into()),
                };
            }
            vals.sort_by(f64::total_cmp);
            let n = vals.len();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                key: key.to_vec(),
                n,
                mean,
                std,
                median: percentile_sorted(&vals, 0.5),
                iqr: percentile_sorted(&vals, 0.75) - percentile_sorted(&vals, 0.25),
                warning: None,
            }
        })
        .collect()
}

fn fmt_stat(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// CSV with columns `key_names..., n, mean, std, median, iqr, warning`.
pub fn write_summary_csv(rows: &[SummaryRow], key_names: &[&str], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = key_names.to_vec();
    header.extend(["n", "mean", "std", "median", "iqr", "warning"]);
    out.write_record(&header)?;
    for r in rows {
        if r.key.len() != key_names.len() {
            return Err(Error::InvalidArgument(format!(
                "row has {} key fields, header has {}",
                r.key.len(),
                key_names.len()
            )));
        }
        let mut rec = r.key.clone();
        rec.push(r.n.to_string());
        rec.extend([r.mean, r.std, r.median, r.iqr].map(fmt_stat));
        rec.push(r.warning.clone().unwrap_or_default());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
