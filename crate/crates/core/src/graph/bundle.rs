//! Graph-bundle directory format.
//!
//! ```text
//! meta.json     {"num_nodes", "feat_dim", "num_classes", "name"}
//! edges.tsv     one "u<TAB>v" pair per line, 0-based
//! features.csv  num_nodes rows of feat_dim comma-separated decimals
//! labels.csv    one integer class id per line
//! splits.json   {"train": [...], "val": [...], "test": [...], "query": [...]}
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{canonical_edges, Graph, SplitSpec};
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub num_nodes: usize,
    pub feat_dim: usize,
    pub num_classes: usize,
    pub name: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub duplicate_edges_dropped: usize,
    pub self_loops_dropped: usize,
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub name: String,
    pub graph: Graph,
    pub splits: SplitSpec,
    pub report: LoadReport,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::bundle(path, 0, format!("cannot read: {e}")))
}

/// Non-empty lines with 1-based line numbers. A lone trailing newline is
/// not a record.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn load_graph_bundle(dir: impl AsRef<Path>) -> Result<Bundle> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta: BundleMeta = serde_json::from_str(&read(&meta_path)?)
        .map_err(|e| Error::bundle(&meta_path, e.line(), e.to_string()))?;
    let n = meta.num_nodes;

    let edges_path = dir.join("edges.tsv");
    let mut raw = Vec::new();
    for (line, rec) in records(&read(&edges_path)?) {
        let mut parts = rec.split(|c: char| c == '\t' || c == ' ').filter(|s| !s.is_empty());
        let (u, v) = match (parts.next(), parts.next(), parts.next()) {
            (Some(u), Some(v), None) => (u, v),
            _ => return Err(Error::bundle(&edges_path, line, "expected two node ids")),
        };
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::bundle(&edges_path, line, format!("bad node id {s:?}")))
        };
        let (u, v) = (parse(u)?, parse(v)?);
        if u >= n || v >= n {
            return Err(Error::bundle(
                &edges_path,
                line,
                format!("edge ({u}, {v}) index out of range for num_nodes = {n}"),
            ));
        }
        raw.push((u, v));
    }
    let (edges, cleanup) = canonical_edges(n, raw)?;

    let feat_path = dir.join("features.csv");
    let mut data = Vec::with_capacity(n * meta.feat_dim);
    let mut rows = 0;
    for (line, rec) in records(&read(&feat_path)?) {
        let before = data.len();
        for tok in rec.split(',') {
            let tok = tok.trim();
            data.push(tok.parse::<f64>().map_err(|_| {
                Error::bundle(&feat_path, line, format!("bad feature value {tok:?}"))
            })?);
        }
        if data.len() - before != meta.feat_dim {
            return Err(Error::bundle(
                &feat_path,
                line,
                format!("{} values, expected feat_dim = {}", data.len() - before, meta.feat_dim),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::bundle(
            &feat_path,
            rows,
            format!("{rows} feature rows, expected num_nodes = {n}"),
        ));
    }
    let features = Matrix::from_vec(n, meta.feat_dim, data)?;

    let label_path = dir.join("labels.csv");
    let mut labels = Vec::with_capacity(n);
    for (line, rec) in records(&read(&label_path)?) {
        let y: usize = rec
            .trim()
            .parse()
            .map_err(|_| Error::bundle(&label_path, line, format!("bad label {rec:?}")))?;
        if y >= meta.num_classes {
            return Err(Error::bundle(
                &label_path,
                line,
                format!("label {y} out of range for num_classes = {}", meta.num_classes),
            ));
        }
        labels.push(y);
    }
    if labels.len() != n {
        return Err(Error::bundle(
            &label_path,
            labels.len(),
            format!("{} labels, expected num_nodes = {n}", labels.len()),
        ));
    }

    let graph = Graph::from_canonical(features, edges, labels, meta.num_classes)
        .map_err(|e| Error::bundle(&meta_path, 0, e.to_string()))?;

    let split_path = dir.join("splits.json");
    let splits: SplitSpec = serde_json::from_str(&read(&split_path)?)
        .map_err(|e| Error::bundle(&split_path, e.line(), e.to_string()))?;
    splits
        .validate(n)
        .map_err(|e| Error::bundle(&split_path, 0, e.to_string()))?;

    if cleanup.duplicates + cleanup.self_loops > 0 {
        log::info!(
            "{}: dropped {} duplicate edges and {} self-loops",
            dir.display(),
            cleanup.duplicates,
            cleanup.self_loops
        );
    }

    Ok(Bundle {
        name: meta.name,
        graph,
        splits,
        report: LoadReport {
            duplicate_edges_dropped: cleanup.duplicates,
            self_loops_dropped: cleanup.self_loops,
        },
    })
}

pub fn write_graph_bundle(
    dir: impl AsRef<Path>,
    name: &str,
    graph: &Graph,
    splits: &SplitSpec,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let meta = BundleMeta {
        num_nodes: graph.num_nodes(),
        feat_dim: graph.feat_dim(),
        num_classes: graph.num_classes(),
        name: name.to_string(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;

    let mut w = BufWriter::new(fs::File::create(dir.join("edges.tsv"))?);
    for &(u, v) in graph.edges() {
        writeln!(w, "{u}\t{v}")?;
    }
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join("features.csv"))?);
    for i in 0..graph.num_nodes() {
        let row = graph.features().row(i);
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                w.write_all(b",")?;
            }
            // `{}` on f64 prints the shortest representation that parses back exactly.
            write!(w, "{x}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join("labels.csv"))?);
    for y in graph.labels() {
        writeln!(w, "{y}")?;
    }
    w.flush()?;

    fs::write(dir.join("splits.json"), serde_json::to_string(splits)? + "\n")?;
    Ok(dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_path_bundle(dir: &Path, edges: &str) {
        fs::write(
            dir.join("meta.json"),
            r#"{"num_nodes":4,"feat_dim":2,"num_classes":2,"name":"path4"}"#,
        )
        .unwrap();
        fs::write(dir.join("edges.tsv"), edges).unwrap();
        fs::write(dir.join("features.csv"), "1,0\n0,1\n1,1\n0.5,-2\n").unwrap();
        fs::write(dir.join("labels.csv"), "0\n0\n1\n1\n").unwrap();
        fs::write(
            dir.join("splits.json"),
            r#"{"train":[0],"val":[1],"test":[2],"query":[3]}"#,
        )
        .unwrap();
    }

    #[test]
    fn reads_path_graph() {
        let tmp = tempfile::tempdir().unwrap();
        write_path_bundle(tmp.path(), "0\t1\n1\t2\n2\t3\n");
        let b = load_graph_bundle(tmp.path()).unwrap();
        assert_eq!(b.graph.num_nodes(), 4);
        assert_eq!(b.graph.num_edges(), 3);
        assert_eq!(b.graph.features().get(3, 1), -2.0);
        assert_eq!(b.splits.test, vec![2]);
    }

    #[test]
    fn reports_dropped_pairs() {
        let tmp = tempfile::tempdir().unwrap();
        write_path_bundle(tmp.path(), "0\t1\n1\t0\n2\t2\n2\t3\n");
        let b = load_graph_bundle(tmp.path()).unwrap();
        assert_eq!(b.graph.num_edges(), 2);
        assert_eq!(b.report.duplicate_edges_dropped, 1);
        assert_eq!(b.report.self_loops_dropped, 1);
    }

    #[test]
    fn out_of_range_edge_names_file_and_line() {
        let tmp = tempfile::tempdir().unwrap();
        write_path_bundle(tmp.path(), "0\t1\n5\t1\n");
        match load_graph_bundle(tmp.path()) {
            Err(Error::Bundle { file, line, msg }) => {
                assert!(file.ends_with("edges.tsv"));
                assert_eq!(line, 2);
                assert!(msg.contains("out of range"));
            }
            other => panic!("expected bundle error, got {other:?}"),
        }
    }

    #[test]
    fn overlapping_splits_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        write_path_bundle(tmp.path(), "0\t1\n");
        fs::write(
            tmp.path().join("splits.json"),
            r#"{"train":[0,1],"val":[1],"test":[2],"query":[3]}"#,
        )
        .unwrap();
        let err = load_graph_bundle(tmp.path()).unwrap_err().to_string();
        assert!(err.contains("splits.json"), "{err}");
    }

    #[test]
    fn row_count_mismatch_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        write_path_bundle(tmp.path(), "0\t1\n");
        fs::write(tmp.path().join("labels.csv"), "0\n1\n").unwrap();
        assert!(load_graph_bundle(tmp.path()).is_err());
        fs::remove_file(tmp.path().join("labels.csv")).unwrap();
        assert!(load_graph_bundle(tmp.path()).is_err());
    }
}
