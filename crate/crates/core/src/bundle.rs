//! Plain-text graph bundles.
//!
//! * `edges.txt`: one `u v` pair per line,
//! * `features.csv`: one comma-separated row per node, in node order,
//! * `labels.csv`: `node,label` lines,
//! * `patterns.csv` (optional): `node,pattern` with 1-based pattern ids.
//!
//! Blank lines and lines starting with `#` are ignored everywhere.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;

/// Paths and metadata describing a graph stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalGraphBundle {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub patterns: Option<PathBuf>,
    /// When set, labels must be class ids in `[0, k)`; for `k = 2`, `±1` is
    /// accepted too.
    pub class_count: Option<usize>,
    pub z_cap: usize,
}

impl ExternalGraphBundle {
    /// The standard file names inside `dir`, with patterns if present.
    pub fn in_dir(dir: &Path, z_cap: usize) -> Self {
        let patterns = dir.join("patterns.csv");
        Self {
            edges: dir.join("edges.txt"),
            features: dir.join("features.csv"),
            labels: dir.join("labels.csv"),
            patterns: patterns.exists().then_some(patterns),
            class_count: None,
            z_cap,
        }
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Non-comment lines with their 1-based line numbers.
fn content_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<(usize, String)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect();
    if lines.is_empty() {
        return Err(parse_err(path, 0, "file is empty"));
    }
    Ok(lines)
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse {what} `{}`", field.trim())))
}

fn read_features(path: &Path) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, text) in content_lines(path)? {
        let row = text
            .split(',')
            .map(|f| parse_num(path, line, f, "feature value"))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(
                    path,
                    line,
                    format!("dimension mismatch: {} values, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    Matrix::from_rows(&rows)
}

/// Reads `node,value` lines into a dense vector over `[0, n)`.
fn read_node_table(path: &Path, n: usize, what: &str) -> Result<Vec<i64>> {
    let mut out: Vec<Option<i64>> = vec![None; n];
    for (line, text) in content_lines(path)? {
        let (node, value) = text
            .split_once(',')
            .ok_or_else(|| parse_err(path, line, format!("expected `node,{what}`")))?;
        let node: usize = parse_num(path, line, node, "node id")?;
        if node >= n {
            return Err(parse_err(path, line, format!("dangling node id {node}; graph has {n} nodes")));
        }
        if out[node].is_some() {
            return Err(parse_err(path, line, format!("node {node} listed twice")));
        }
        out[node] = Some(parse_num(path, line, value, what)?);
    }
    out.into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| parse_err(path, 0, format!("no {what} for node {i}"))))
        .collect()
}

fn read_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (line, text) in content_lines(path)? {
        let mut it = text.split_whitespace();
        let (Some(u), Some(v), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(path, line, "expected `u v`"));
        };
        let u: usize = parse_num(path, line, u, "node id")?;
        let v: usize = parse_num(path, line, v, "node id")?;
        if u >= n || v >= n {
            return Err(parse_err(
                path,
                line,
                format!("dangling node id {}; graph has {n} nodes", u.max(v)),
            ));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

/// Loads a bundle into an undirected, deduplicated graph with unit-norm
/// features.
pub fn load_graph(bundle: &ExternalGraphBundle) -> Result<Graph> {
    let features = read_features(&bundle.features)?;
    let n = features.rows();
    let labels = read_node_table(&bundle.labels, n, "label")?;
    let labels: Vec<i32> = labels
        .into_iter()
        .enumerate()
        .map(|(node, l)| {
            let ok = match bundle.class_count {
                Some(2) => (0..2).contains(&l) || l.abs() == 1,
                Some(k) => (0..k as i64).contains(&l),
                None => i32::try_from(l).is_ok(),
            };
            if ok {
                Ok(l as i32)
            } else {
                Err(parse_err(&bundle.labels, 0, format!("label {l} of node {node} outside the class range")))
            }
        })
        .collect::<Result<_>>()?;
    let patterns = match &bundle.patterns {
        Some(p) => Some(
            read_node_table(p, n, "pattern")?
                .into_iter()
                .enumerate()
                .map(|(node, v)| {
                    if v >= 1 {
                        Ok(v as usize - 1)
                    } else {
                        Err(parse_err(p, 0, format!("pattern {v} of node {node} is not 1-based")))
                    }
                })
                .collect::<Result<Vec<usize>>>()?,
        ),
        None => None,
    };
    let edges = read_edges(&bundle.edges, n)?;
    Graph::from_parts(features, labels, patterns, &edges)
}

/// Writes `g` as a bundle into `dir` (created if missing).
pub fn export_graph(g: &Graph, dir: &Path, z_cap: usize) -> Result<ExternalGraphBundle> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| -> Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    };
    let mut edges = String::new();
    for (u, v) in g.edges() {
        let _ = writeln!(edges, "{u} {v}");
    }
    let mut feats = String::new();
    for n in 0..g.len() {
        let row: Vec<String> = g.feature(n).iter().map(|v| format!("{v:e}")).collect();
        feats.push_str(&row.join(","));
        feats.push('\n');
    }
    let mut labels = String::new();
    for (n, l) in g.labels().iter().enumerate() {
        let _ = writeln!(labels, "{n},{l}");
    }
    let patterns = match g.pattern_of() {
        Some(p) => {
            let mut body = String::new();
            for (n, v) in p.iter().enumerate() {
                let _ = writeln!(body, "{n},{}", v + 1);
            }
            Some(write("patterns.csv", body)?)
        }
        None => None,
    };
    Ok(ExternalGraphBundle {
        edges: write("edges.txt", edges)?,
        features: write("features.csv", feats)?,
        labels: write("labels.csv", labels)?,
        patterns,
        class_count: None,
        z_cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::{generate, SyntheticConfig};

    fn write_bundle(dir: &Path, edges: &str, feats: &str, labels: &str) -> ExternalGraphBundle {
        fs::write(dir.join("edges.txt"), edges).unwrap();
        fs::write(dir.join("features.csv"), feats).unwrap();
        fs::write(dir.join("labels.csv"), labels).unwrap();
        ExternalGraphBundle::in_dir(dir, 8)
    }

    #[test]
    fn triangle_has_degree_two() {
        let dir = tempfile::tempdir().unwrap();
        let b = write_bundle(dir.path(), "0 1\n1 2\n2 0\n", "1,0\n0,1\n1,1\n", "0,1\n1,-1\n2,1\n");
        let g = load_graph(&b).unwrap();
        assert!((0..3).all(|n| g.degree(n) == 2));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!(g.feature(2).iter().all(|v| (v - s).abs() < 1e-15));
    }

    #[test]
    fn duplicate_edges_collapse() {
        let dir = tempfile::tempdir().unwrap();
        let b = write_bundle(dir.path(), "0 1\n0 1\n1 0\n", "1\n1\n", "0,0\n1,1\n");
        let g = load_graph(&b).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn malformed_inputs_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let b = write_bundle(dir.path(), "0 5\n", "1\n1\n", "0,0\n1,1\n");
        let e = load_graph(&b).unwrap_err().to_string();
        assert!(e.contains("edges.txt:1") && e.contains("dangling"), "{e}");

        let b = write_bundle(dir.path(), "0 1\n", "1,0\n1\n", "0,0\n1,1\n");
        let e = load_graph(&b).unwrap_err().to_string();
        assert!(e.contains("features.csv:2") && e.contains("dimension mismatch"), "{e}");

        let b = write_bundle(dir.path(), "0 1\n", "# nothing\n", "0,0\n");
        let e = load_graph(&b).unwrap_err().to_string();
        assert!(e.contains("empty"), "{e}");

        let b = write_bundle(dir.path(), "0 1\n", "1\n1\n", "0,0\n3,1\n");
        let e = load_graph(&b).unwrap_err().to_string();
        assert!(e.contains("labels.csv:2") && e.contains("dangling"), "{e}");
    }

    #[test]
    fn class_count_bounds_labels() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = write_bundle(dir.path(), "0 1\n", "1\n1\n", "0,0\n1,3\n");
        b.class_count = Some(3);
        assert!(matches!(load_graph(&b), Err(Error::Parse { .. })));
        b.class_count = Some(4);
        assert_eq!(load_graph(&b).unwrap().labels(), &[0, 3]);
    }

    #[test]
    fn generated_graph_round_trips() {
        let syn = generate(&SyntheticConfig {
            n: 150,
            deg_min: 15,
            eps_s: 0.2,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        let g = syn.graph;
        let dir = tempfile::tempdir().unwrap();
        let b = export_graph(&g, dir.path(), 20).unwrap();
        let back = load_graph(&b).unwrap();
        assert_eq!(back.labels(), g.labels());
        assert_eq!(back.pattern_of(), g.pattern_of());
        assert_eq!(back.adjacency(), g.adjacency());
        for n in 0..g.len() {
            for (a, b) in back.feature(n).iter().zip(g.feature(n)) {
                assert!((a - b).abs() <= 1e-15);
            }
        }
    }
}
