//! Immutable attributed graph and truncated shortest-path distances.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::{normalize, Matrix};

/// Distance value meaning "at least `z_cap`, or unreachable".
///
/// Distances `0..z_cap` are exact; everything farther saturates.
pub type Spd = u8;

/// Undirected graph with unit-norm node features, signed or class labels and,
/// for generated graphs, the pattern each node was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    features: Matrix,
    labels: Vec<i32>,
    clean_labels: Vec<i32>,
    pattern_of: Option<Vec<usize>>,
    adj: Vec<Vec<usize>>,
    spd: Option<SpdTable>,
}

impl Graph {
    /// Builds a graph from raw parts. Edges are symmetrised and deduplicated,
    /// self-loops dropped and feature rows renormalized to unit length.
    ///
    /// `pattern_of` uses 0-based pattern ids: 0 is μ_1, 1 is μ_2.
    pub fn from_parts(
        mut features: Matrix,
        labels: Vec<i32>,
        pattern_of: Option<Vec<usize>>,
        edges: &[(usize, usize)],
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::Dimension(format!(
                "{} labels for {n} feature rows",
                labels.len()
            )));
        }
        if let Some(p) = &pattern_of {
            if p.len() != n {
                return Err(Error::Dimension(format!(
                    "{} pattern ids for {n} nodes",
                    p.len()
                )));
            }
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Argument(format!(
                    "edge ({u}, {v}) references a node outside [0, {n})"
                )));
            }
            if u != v {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        for i in 0..n {
            normalize(features.row_mut(i));
        }
        Ok(Self {
            features,
            clean_labels: labels.clone(),
            labels,
            pattern_of,
            adj,
            spd: None,
        })
    }

    pub(crate) fn from_adjacency(
        features: Matrix,
        labels: Vec<i32>,
        clean_labels: Vec<i32>,
        pattern_of: Option<Vec<usize>>,
        adj: Vec<Vec<usize>>,
    ) -> Self {
        Self {
            features,
            labels,
            clean_labels,
            pattern_of,
            adj,
            spd: None,
        }
    }

    /// Replaces the observed labels, keeping the current ones as the
    /// pre-corruption reference.
    pub fn with_observed_labels(mut self, labels: Vec<i32>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::Dimension("label count mismatch".into()));
        }
        self.labels = labels;
        Ok(self)
    }

    /// Attaches the all-pairs truncated distance table.
    pub fn with_spd_cache(mut self, z_cap: usize) -> Result<Self> {
        self.spd = Some(SpdTable::build(&self, z_cap)?);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature(&self, n: usize) -> &[f64] {
        self.features.row(n)
    }

    /// Observed labels (after any corruption).
    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn label(&self, n: usize) -> i32 {
        self.labels[n]
    }

    /// Labels before corruption; equal to `labels` for ingested graphs.
    pub fn clean_labels(&self) -> &[i32] {
        &self.clean_labels
    }

    pub fn pattern_of(&self) -> Option<&[usize]> {
        self.pattern_of.as_deref()
    }

    pub fn neighbors(&self, n: usize) -> &[usize] {
        &self.adj[n]
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adj
    }

    pub fn degree(&self, n: usize) -> usize {
        self.adj[n].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, l)| l.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn spd_cache(&self) -> Option<&SpdTable> {
        self.spd.as_ref()
    }

    /// Truncated distances from `n`, from the cache when its cap matches.
    pub fn spd_row(&self, n: usize, z_cap: usize) -> Result<Vec<Spd>> {
        match &self.spd {
            Some(t) if t.z_cap() == z_cap => Ok(t.row(n).to_vec()),
            _ => spd(self, n, z_cap),
        }
    }

    /// Whether node `n` is a μ_1 / μ_2 node, when patterns are known.
    pub fn is_discriminative(&self, n: usize) -> bool {
        self.pattern_of.as_ref().is_some_and(|p| p[n] < 2)
    }
}

/// All-pairs truncated SPD, row-major `N x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdTable {
    n: usize,
    z_cap: usize,
    dist: Vec<Spd>,
}

impl SpdTable {
    pub fn build(g: &Graph, z_cap: usize) -> Result<Self> {
        check_cap(z_cap)?;
        let n = g.len();
        let mut dist = vec![z_cap as Spd; n * n];
        let mut queue = VecDeque::new();
        for src in 0..n {
            bfs_into(g, src, z_cap, &mut dist[src * n..(src + 1) * n], &mut queue);
        }
        Ok(Self { n, z_cap, dist })
    }

    pub fn z_cap(&self) -> usize {
        self.z_cap
    }

    pub fn get(&self, from: usize, to: usize) -> Spd {
        self.dist[from * self.n + to]
    }

    pub fn row(&self, n: usize) -> &[Spd] {
        &self.dist[n * self.n..(n + 1) * self.n]
    }

    pub fn saturated(&self) -> Spd {
        self.z_cap as Spd
    }
}

fn check_cap(z_cap: usize) -> Result<()> {
    if !(2..=Spd::MAX as usize).contains(&z_cap) {
        return Err(Error::Argument(format!(
            "distance cap {z_cap} outside [2, {}]",
            Spd::MAX
        )));
    }
    Ok(())
}

fn bfs_into(g: &Graph, src: usize, z_cap: usize, out: &mut [Spd], queue: &mut VecDeque<usize>) {
    let sat = z_cap as Spd;
    out.iter_mut().for_each(|d| *d = sat);
    out[src] = 0;
    queue.clear();
    queue.push_back(src);
    while let Some(u) = queue.pop_front() {
        let du = out[u];
        if du as usize + 1 >= z_cap {
            continue;
        }
        for &v in g.neighbors(u) {
            if out[v] == sat {
                out[v] = du + 1;
                queue.push_back(v);
            }
        }
    }
}

/// BFS distances from `n`. Entries at distance `>= z_cap`, and unreachable
/// nodes, hold the saturation value `z_cap`.
pub fn spd(g: &Graph, n: usize, z_cap: usize) -> Result<Vec<Spd>> {
    check_cap(z_cap)?;
    if n >= g.len() {
        return Err(Error::Argument(format!("node {n} out of range")));
    }
    let mut out = vec![0; g.len()];
    bfs_into(g, n, z_cap, &mut out, &mut VecDeque::new());
    Ok(out)
}

/// The distance-`z` neighborhood of `n`, sorted ascending.
pub fn neighborhood(g: &Graph, n: usize, z: usize, z_cap: usize) -> Result<Vec<usize>> {
    if z == 0 || z >= z_cap {
        return Err(Error::Argument(format!(
            "distance {z} outside [1, {}]",
            z_cap.saturating_sub(1)
        )));
    }
    let row = g.spd_row(n, z_cap)?;
    Ok(row
        .iter()
        .enumerate()
        .filter(|(_, &d)| d as usize == z)
        .map(|(i, _)| i)
        .collect())
}
