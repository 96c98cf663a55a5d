use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::record::RunRecord;
use crate::attacks::AttackKind;
use crate::defenses::DefenseSpec;
use crate::error::{Error, Result};
use crate::metrics::{aggregate, percentile_sorted, Observation, SummaryRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Leaderboard,
    Curves,
    Survival,
}

impl std::str::FromStr for ReportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leaderboard" => Ok(ReportKind::Leaderboard),
            "curves" => Ok(ReportKind::Curves),
            "survival" => Ok(ReportKind::Survival),
            _ => Err(Error::Config(format!("unknown report kind {s:?}"))),
        }
    }
}

fn dash(v: &Option<String>) -> String {
    v.clone().unwrap_or_else(|| "-".into())
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn median_of(mut v: Vec<f64>) -> f64 {
    v.retain(|x| x.is_finite());
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, 0.5)
}

/// Rank of a name in a canonical order, unknown names last (then by name).
fn rank(order: &[&str], name: &str) -> (usize, String) {
    (
        order.iter().position(|n| *n == name).unwrap_or(order.len()),
        name.to_string(),
    )
}

pub fn report(records: &[RunRecord], kind: ReportKind, w: impl Write) -> Result<()> {
    match kind {
        ReportKind::Leaderboard => leaderboard(records, w),
        ReportKind::Curves => curves(records, w),
        ReportKind::Survival => survival_matrix(records, w),
    }
}

/// Per (track, dataset, defense, attack): medians of the headline metrics,
/// ordered by median fidelity (highest first), then by key.
pub fn leaderboard(records: &[RunRecord], w: impl Write) -> Result<()> {
    type Key = (String, String, String, String);
    let mut groups: BTreeMap<Key, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = (
            r.track.as_str().to_string(),
            r.dataset.clone(),
            dash(&r.defense),
            dash(&r.attack),
        );
        groups.entry(key).or_default().push(r);
    }
    let col = |rs: &[&RunRecord], f: fn(&RunRecord) -> Option<f64>| {
        median_of(rs.iter().filter_map(|r| f(r)).collect())
    };
    let mut rows: Vec<(Key, usize, usize, [f64; 5])> = groups
        .into_iter()
        .map(|(k, rs)| {
            let errors = rs.iter().filter(|r| r.is_error()).count();
            let stats = [
                col(&rs, |r| r.fidelity),
                col(&rs, |r| r.accuracy),
                col(&rs, |r| r.verification_rate),
                col(&rs, |r| r.survival_rate),
                col(&rs, |r| r.utility_drop),
            ];
            (k, rs.len(), errors, stats)
        })
        .collect();
    rows.sort_by(|a, b| {
        let (fa, fb) = (a.3[0], b.3[0]);
        match (fa.is_finite(), fb.is_finite()) {
            (true, true) => fb.total_cmp(&fa),
            (true, false) => std::cmp::Ordering::Less,
            (false, true) => std::cmp::Ordering::Greater,
            (false, false) => std::cmp::Ordering::Equal,
        }
        .then_with(|| a.0.cmp(&b.0))
    });
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "track",
        "dataset",
        "defense",
        "attack",
        "n",
        "errors",
        "fidelity_median",
        "accuracy_median",
        "verification_median",
        "survival_median",
        "utility_drop_median",
    ])?;
    for ((t, d, def, a), n, errors, stats) in rows {
        let mut rec = vec![t, d, def, a, n.to_string(), errors.to_string()];
        rec.extend(stats.map(cell));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Budget curves: fidelity per (dataset, attack, budget) as
/// `dataset, attack, budget, mean, std`, budgets ascending.
pub fn curve_rows(records: &[RunRecord]) -> Vec<SummaryRow> {
    let obs: Vec<Observation> = records
        .iter()
        .filter(|r| r.attack.is_some())
        .filter_map(|r| {
            let b = r.budget_multiplier?;
            Some(Observation {
                key: vec![r.dataset.clone(), dash(&r.attack), format!("{b}")],
                value: r.fidelity,
            })
        })
        .collect();
    let mut rows = aggregate(&obs);
    let attack_order: Vec<&str> = AttackKind::ALL.iter().map(|k| k.name()).collect();
    rows.sort_by(|a, b| {
        let budget = |r: &SummaryRow| r.key[2].parse::<f64>().unwrap_or(f64::INFINITY);
        a.key[0]
            .cmp(&b.key[0])
            .then_with(|| rank(&attack_order, &a.key[1]).cmp(&rank(&attack_order, &b.key[1])))
            .then_with(|| budget(a).total_cmp(&budget(b)))
    });
    rows
}

pub fn curves(records: &[RunRecord], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["dataset", "attack", "budget", "mean", "std"])?;
    for r in curve_rows(records) {
        let mut rec = r.key.clone();
        rec.push(cell(r.mean));
        rec.push(cell(r.std));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Attacks × defenses matrix of median survival, with a row-mean column
/// and a column-mean row. Empty cells have no joint records.
pub fn survival_matrix(records: &[RunRecord], w: impl Write) -> Result<()> {
    let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut attacks = BTreeSet::new();
    let mut defenses = BTreeSet::new();
    for r in records {
        if let (Some(a), Some(d), Some(s)) = (&r.attack, &r.defense, r.survival_rate) {
            attacks.insert(a.clone());
            defenses.insert(d.clone());
            cells.entry((a.clone(), d.clone())).or_default().push(s);
        }
    }
    let attack_order: Vec<&str> = AttackKind::ALL.iter().map(|k| k.name()).collect();
    let mut attacks: Vec<String> = attacks.into_iter().collect();
    attacks.sort_by_key(|a| rank(&attack_order, a));
    let mut defenses: Vec<String> = defenses.into_iter().collect();
    defenses.sort_by_key(|d| rank(&DefenseSpec::ALL_NAMES, d));

    let value = |a: &str, d: &str| {
        cells
            .get(&(a.to_string(), d.to_string()))
            .map_or(f64::NAN, |v| median_of(v.clone()))
    };
    let mean = |v: &[f64]| {
        let f: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
        if f.is_empty() {
            f64::NAN
        } else {
            f.iter().sum::<f64>() / f.len() as f64
        }
    };
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["attack".to_string()];
    header.extend(defenses.iter().cloned());
    header.push("mean".into());
    out.write_record(&header)?;
    for a in &attacks {
        let vals: Vec<f64> = defenses.iter().map(|d| value(a, d)).collect();
        let mut rec = vec![a.clone()];
        rec.extend(vals.iter().map(|&v| cell(v)));
        rec.push(cell(mean(&vals)));
        out.write_record(&rec)?;
    }
    let mut rec = vec!["mean".to_string()];
    let col_means: Vec<f64> = defenses
        .iter()
        .map(|d| mean(&attacks.iter().map(|a| value(a, d)).collect::<Vec<_>>()))
        .collect();
    rec.extend(col_means.iter().map(|&v| cell(v)));
    rec.push(cell(mean(&col_means)));
    out.write_record(&rec)?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Track;

    fn joint(attack: &str, defense: &str, seed: u64, s: f64) -> RunRecord {
        let mut r = RunRecord::blank(Track::Joint, "d", seed, "GCN");
        r.attack = Some(attack.into());
        r.defense = Some(defense.into());
        r.survival_rate = Some(s);
        r.fidelity = Some(0.8);
        r.budget_multiplier = Some(0.25);
        r
    }

    fn csv_rows(bytes: &[u8]) -> Vec<Vec<String>> {
        csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(bytes)
            .records()
            .map(|r| r.unwrap().iter().map(String::from).collect())
            .collect()
    }

    #[test]
    fn survival_matrix_shape() {
        let wms = ["RandomWM", "BackdoorWM", "SurviveWM", "ImperceptibleWM", "Integrity"];
        let mut recs = Vec::new();
        for a in AttackKind::ALL {
            for d in wms {
                for s in 0..3 {
                    recs.push(joint(a.name(), d, s, 0.5));
                }
            }
        }
        let mut buf = Vec::new();
        survival_matrix(&recs, &mut buf).unwrap();
        let rows = csv_rows(&buf);
        assert_eq!(rows.len(), 1 + 12 + 1);
        assert!(rows.iter().all(|r| r.len() == 1 + 5 + 1));
        assert_eq!(rows[0][1..6], wms.map(String::from));
        assert_eq!(rows[1][0], "MEA0");
        let cells: usize = rows[1..13]
            .iter()
            .map(|r| r[1..6].iter().filter(|c| !c.is_empty()).count())
            .sum();
        assert_eq!(cells, 60);
    }

    #[test]
    fn curves_schema_and_order() {
        let mut recs = Vec::new();
        for (b, f) in [(1.0, 0.9), (0.05, 0.5), (0.5, 0.88), (0.05, 0.6)] {
            let mut r = RunRecord::blank(Track::Extraction, "d", 0, "GCN");
            r.attack = Some("MEA0".into());
            r.budget_multiplier = Some(b);
            r.fidelity = Some(f);
            recs.push(r);
        }
        let mut buf = Vec::new();
        curves(&recs, &mut buf).unwrap();
        let rows = csv_rows(&buf);
        assert_eq!(rows[0], ["dataset", "attack", "budget", "mean", "std"]);
        let budgets: Vec<&str> = rows[1..].iter().map(|r| r[2].as_str()).collect();
        assert_eq!(budgets, ["0.05", "0.5", "1"]);
        // same numbers as the aggregate over that group
        let mean: f64 = rows[1][3].parse().unwrap();
        assert!((mean - 0.55).abs() < 1e-12);
    }

    #[test]
    fn leaderboard_is_deterministic() {
        let recs = vec![joint("MEA0", "Integrity", 0, 1.0), joint("CEGA", "RandomWM", 0, 0.1)];
        let mut a = Vec::new();
        leaderboard(&recs, &mut a).unwrap();
        let mut rev = recs.clone();
        rev.reverse();
        let mut b = Vec::new();
        leaderboard(&rev, &mut b).unwrap();
        assert_eq!(a, b);
    }
}
