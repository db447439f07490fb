//! Structured synthetic graphs: discriminative patterns μ_1/μ_2 that decide
//! labels through a core neighborhood, non-discriminative patterns that do
//! not, and the data-model quantities defined on top of them (winning
//! margin, core distance, confusion ratio).

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{neighborhood, Graph};
use crate::linalg::{gram_schmidt_rows, normalize, Matrix};
use crate::seed::{self, stream};

/// Pattern id of μ_1 (label +1).
pub const MU1: usize = 0;
/// Pattern id of μ_2 (label −1).
pub const MU2: usize = 1;

/// `M` orthonormal patterns in `R^d`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternBank {
    vectors: Matrix,
}

impl PatternBank {
    /// Gram–Schmidt on a seeded standard Gaussian `M x d` draw.
    pub fn generate(count: usize, dim: usize, seed: u64) -> Result<Self> {
        if count < 2 || count > dim {
            return Err(Error::Dimension(format!(
                "need 2 <= M <= d, got M={count}, d={dim}"
            )));
        }
        let mut rng = seed::rng_for(seed, &[stream::PATTERNS]);
        let raw = Matrix::gaussian(count, dim, 1.0, &mut rng);
        Self::from_matrix(gram_schmidt_rows(&raw)?)
    }

    /// Orthonormalizes the given rows.
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if m.rows() > m.cols() {
            return Err(Error::Dimension(format!(
                "{} patterns cannot be orthonormal in dimension {}",
                m.rows(),
                m.cols()
            )));
        }
        Ok(Self {
            vectors: gram_schmidt_rows(&m)?,
        })
    }

    pub fn count(&self) -> usize {
        self.vectors.rows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.vectors
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n: usize,
    pub patterns: usize,
    pub dim: usize,
    /// Feature noise standard deviation.
    pub c0: f64,
    /// Fraction of nodes carrying μ_1 or μ_2.
    pub gamma_d: f64,
    /// Target confusion ratio of the discriminative edges.
    pub eps_s: f64,
    /// Fraction of labels flipped after construction.
    pub eps_0: f64,
    pub deg_min: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            patterns: 10,
            dim: 20,
            c0: 0.01,
            gamma_d: 0.4,
            eps_s: 0.0,
            eps_0: 0.0,
            deg_min: 120,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    /// Nodes assigned to each of μ_1 and μ_2.
    pub fn discriminative_per_class(&self) -> usize {
        (self.gamma_d * self.n as f64 / 2.0).round() as usize
    }

    /// `(class-relevant, confusion)` edges of each non-discriminative node;
    /// the two always sum to `deg_min`.
    pub fn edge_counts(&self) -> (usize, usize) {
        let confusion = (self.deg_min as f64 * self.eps_s).round() as usize;
        (self.deg_min - confusion.min(self.deg_min), confusion.min(self.deg_min))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.patterns < 3 {
            return bad(format!("need at least 3 patterns, got {}", self.patterns));
        }
        if self.patterns > self.dim {
            return Err(Error::Dimension(format!(
                "{} patterns exceed feature dimension {}",
                self.patterns, self.dim
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma_d) {
            return bad(format!("gamma_d={} outside [0, 1]", self.gamma_d));
        }
        if !(0.0..0.5).contains(&self.eps_s) {
            return bad(format!("eps_s={} outside [0, 0.5)", self.eps_s));
        }
        if !(0.0..0.5).contains(&self.eps_0) {
            return bad(format!("eps_0={} outside [0, 0.5)", self.eps_0));
        }
        if !(self.c0 >= 0.0 && self.c0.is_finite()) {
            return bad(format!("c0={} must be a finite non-negative number", self.c0));
        }
        let per_class = self.discriminative_per_class();
        if 2 * per_class > self.n {
            return bad("discriminative nodes exceed node count".into());
        }
        let (relevant, confusion) = self.edge_counts();
        if 2 * per_class < self.n && per_class < relevant.max(confusion) {
            return bad(format!(
                "{per_class} nodes per discriminative class cannot supply {} distinct \
                 connections (deg_min={}, eps_s={})",
                relevant.max(confusion),
                self.deg_min,
                self.eps_s
            ));
        }
        Ok(())
    }
}

/// Realized counts reported back by the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationReport {
    pub per_pattern: Vec<usize>,
    pub relevant_edges: usize,
    pub confusion_edges: usize,
    /// Non-discriminative nodes given provisional label +1 / −1.
    pub positive_non_discriminative: usize,
    pub negative_non_discriminative: usize,
    pub top_up_edges: [usize; 2],
    pub flipped: Vec<usize>,
}

/// A generated graph with its pattern bank and construction report.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub graph: Graph,
    pub patterns: PatternBank,
    pub report: GenerationReport,
}

/// Generates the structured synthetic graph for `cfg`.
pub fn generate(cfg: &SyntheticConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let patterns = PatternBank::generate(cfg.patterns, cfg.dim, cfg.seed)?;
    let mut rng = seed::rng_for(cfg.seed, &[stream::GRAPH]);
    let n = cfg.n;
    let per_class = cfg.discriminative_per_class();

    // pattern assignment over a random node order
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut pattern_of = vec![0usize; n];
    let mut per_pattern = vec![0usize; cfg.patterns];
    let others = cfg.patterns - 2;
    for (rank, &node) in order.iter().enumerate() {
        let p = if rank < per_class {
            MU1
        } else if rank < 2 * per_class {
            MU2
        } else {
            2 + (rank - 2 * per_class) % others
        };
        pattern_of[node] = p;
        per_pattern[p] += 1;
    }

    let mut features = Matrix::zeros(n, cfg.dim);
    for (node, &p) in pattern_of.iter().enumerate() {
        let row = features.row_mut(node);
        for (x, mu) in row.iter_mut().zip(patterns.vector(p)) {
            *x = mu + cfg.c0 * rng.sample::<f64, _>(StandardNormal);
        }
        normalize(row);
    }

    let class_members: [Vec<usize>; 2] = [
        (0..n).filter(|&i| pattern_of[i] == MU1).collect(),
        (0..n).filter(|&i| pattern_of[i] == MU2).collect(),
    ];
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut labels = vec![0i32; n];
    let (relevant, confusion) = cfg.edge_counts();
    let (mut pos, mut neg) = (0, 0);
    for node in 0..n {
        match pattern_of[node] {
            MU1 => labels[node] = 1,
            MU2 => labels[node] = -1,
            _ => {
                let positive = rng.random_bool(0.5);
                let (own, other) = if positive {
                    pos += 1;
                    labels[node] = 1;
                    (&class_members[0], &class_members[1])
                } else {
                    neg += 1;
                    labels[node] = -1;
                    (&class_members[1], &class_members[0])
                };
                for (pool, count) in [(own, relevant), (other, confusion)] {
                    for idx in sample(&mut rng, pool.len(), count) {
                        let v = pool[idx];
                        adj[node].insert(v);
                        adj[v].insert(node);
                    }
                }
            }
        }
    }

    let mut top_up_edges = [0usize; 2];
    for (class, members) in class_members.iter().enumerate() {
        top_up_edges[class] = top_up(&mut adj, members, cfg.deg_min, class, &mut rng)?;
    }

    let clean_labels = labels.clone();
    let flip_count = (cfg.eps_0 * n as f64).floor() as usize;
    let mut flip_rng = seed::rng_for(cfg.seed, &[stream::CORRUPT]);
    let mut flipped: Vec<usize> = sample(&mut flip_rng, n, flip_count).into_vec();
    flipped.sort_unstable();
    for &i in &flipped {
        labels[i] = -labels[i];
    }

    let adj: Vec<Vec<usize>> = adj.into_iter().map(|s| s.into_iter().collect()).collect();
    let graph = Graph::from_adjacency(features, labels, clean_labels, Some(pattern_of), adj);
    Ok(Synthetic {
        graph,
        patterns,
        report: GenerationReport {
            per_pattern,
            relevant_edges: relevant,
            confusion_edges: confusion,
            positive_non_discriminative: pos,
            negative_non_discriminative: neg,
            top_up_edges,
            flipped,
        },
    })
}

/// Adds uniform random intra-class edges until every member has at least
/// `deg_min` same-class neighbors, always serving a member with the fewest
/// first and preferring partners still below the floor.
///
/// The floor counts same-class neighbors only: edges from non-discriminative
/// nodes already push most discriminative degrees past `deg_min`, and a
/// total-degree floor would leave μ_1/μ_2 nodes without any intra-class edge.
fn top_up<R: Rng + ?Sized>(
    adj: &mut [BTreeSet<usize>],
    members: &[usize],
    deg_min: usize,
    class: usize,
    rng: &mut R,
) -> Result<usize> {
    let class_name = if class == 0 { "mu_1" } else { "mu_2" };
    let mut in_class = vec![false; adj.len()];
    members.iter().for_each(|&u| in_class[u] = true);
    let mut intra: Vec<usize> = members
        .iter()
        .map(|&u| adj[u].iter().filter(|&&v| in_class[v]).count())
        .collect();
    let slot_of = |u: usize| members.binary_search(&u).expect("member");
    let mut added = 0;
    loop {
        let Some(lowest) = intra.iter().copied().min().filter(|&d| d < deg_min) else {
            return Ok(added);
        };
        let ties: Vec<usize> = (0..members.len()).filter(|&i| intra[i] == lowest).collect();
        let ui = ties[rng.random_range(0..ties.len())];
        let u = members[ui];
        let open: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&v| v != u && !adj[u].contains(&v))
            .collect();
        if open.is_empty() {
            return Err(Error::Generation {
                class: class_name.into(),
                reason: format!(
                    "node {u} has {lowest} < {deg_min} same-class neighbors and no remaining partner"
                ),
            });
        }
        let deficient: Vec<usize> = open
            .iter()
            .copied()
            .filter(|&v| intra[slot_of(v)] < deg_min)
            .collect();
        let pool = if deficient.is_empty() { &open } else { &deficient };
        let v = pool[rng.random_range(0..pool.len())];
        adj[u].insert(v);
        adj[v].insert(u);
        intra[ui] += 1;
        intra[slot_of(v)] += 1;
        added += 1;
    }
}

fn require_patterns(g: &Graph) -> Result<&[usize]> {
    g.pattern_of()
        .ok_or_else(|| Error::Argument("graph carries no pattern assignment".into()))
}

/// Class-relevant pattern id for a node with the given label.
pub fn relevant_pattern(label: i32) -> usize {
    if label > 0 {
        MU1
    } else {
        MU2
    }
}

/// Relevance of `s` to `n`: +1 class-relevant, −1 confusion, 0 otherwise.
/// Uses `n`'s pre-corruption label.
pub fn relevance(g: &Graph, patterns: &[usize], n: usize, s: usize) -> i32 {
    let p = patterns[s];
    if p > MU2 {
        0
    } else if p == relevant_pattern(g.clean_labels()[n]) {
        1
    } else {
        -1
    }
}

/// `Δ_n(z) = |D_* ∩ N_z| − |D_# ∩ N_z|`.
pub fn winning_margin(g: &Graph, n: usize, z: usize, z_cap: usize) -> Result<i64> {
    let patterns = require_patterns(g)?;
    Ok(neighborhood(g, n, z, z_cap)?
        .into_iter()
        .map(|s| relevance(g, patterns, n, s) as i64)
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginProfile {
    /// `Δ̄(z)` for `z = 1..z_cap-1`; index 0 holds `z = 1`.
    pub delta_bar: Vec<f64>,
    /// Core distance (1-based distance, not an index).
    pub z_m: usize,
    /// Fraction of nodes with `Δ_n(z_m) > 0`.
    pub positive_fraction: f64,
}

impl MarginProfile {
    pub fn at(&self, z: usize) -> f64 {
        self.delta_bar[z - 1]
    }
}

/// Per-node margins `Δ_n(z)` for every `z in 1..z_cap`, as `[node][z-1]`.
pub fn margin_table(g: &Graph, z_cap: usize) -> Result<Vec<Vec<i64>>> {
    let patterns = require_patterns(g)?;
    (0..g.len())
        .map(|n| {
            let row = g.spd_row(n, z_cap)?;
            let mut margins = vec![0i64; z_cap - 1];
            for (s, &d) in row.iter().enumerate() {
                let d = d as usize;
                if d >= 1 && d < z_cap {
                    margins[d - 1] += relevance(g, patterns, n, s) as i64;
                }
            }
            Ok(margins)
        })
        .collect()
}

/// Index of the maximum, ties resolved toward the smaller index.
pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn margin_profile(g: &Graph, z_cap: usize) -> Result<MarginProfile> {
    if g.is_empty() {
        return Err(Error::Argument("empty graph".into()));
    }
    let table = margin_table(g, z_cap)?;
    let n = g.len() as f64;
    let delta_bar: Vec<f64> = (0..z_cap - 1)
        .map(|z| table.iter().map(|m| m[z] as f64).sum::<f64>() / n)
        .collect();
    let best = argmax_first(&delta_bar);
    let positive = table.iter().filter(|m| m[best] > 0).count();
    Ok(MarginProfile {
        delta_bar,
        z_m: best + 1,
        positive_fraction: positive as f64 / n,
    })
}

/// One aggregation draw: the node, the set sampled for it, and when.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub node: usize,
    pub sampled: Vec<usize>,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionEstimate {
    pub ratio: f64,
    pub used: usize,
    /// Records without any sampled discriminative node in `N_{z_m}`.
    pub skipped: usize,
}

/// Mean over records of `|S_# ∩ N_{z_m}| / |(S_* ∪ S_#) ∩ N_{z_m}|`.
pub fn confusion_ratio(
    g: &Graph,
    z_m: usize,
    z_cap: usize,
    records: &[SampleRecord],
) -> Result<ConfusionEstimate> {
    let patterns = require_patterns(g)?;
    let (mut sum, mut used, mut skipped) = (0.0, 0usize, 0usize);
    for rec in records {
        let row = g.spd_row(rec.node, z_cap)?;
        let (mut conf, mut disc) = (0usize, 0usize);
        for &s in &rec.sampled {
            if row[s] as usize != z_m {
                continue;
            }
            match relevance(g, patterns, rec.node, s) {
                1 => disc += 1,
                -1 => {
                    conf += 1;
                    disc += 1;
                }
                _ => {}
            }
        }
        if disc == 0 {
            skipped += 1;
        } else {
            sum += conf as f64 / disc as f64;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::UndefinedEstimate(format!(
            "all {skipped} records have no sampled discriminative node at distance {z_m}"
        )));
    }
    Ok(ConfusionEstimate {
        ratio: sum / used as f64,
        used,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SyntheticConfig {
        SyntheticConfig {
            n: 40,
            gamma_d: 0.5,
            deg_min: 8,
            eps_s: 0.25,
            seed: 11,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn patterns_are_orthonormal() {
        let bank = PatternBank::generate(10, 20, 5).unwrap();
        let g = bank.matrix().row_gram();
        for i in 0..10 {
            for j in 0..10 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - want).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn identity_patterns_are_a_fixed_point() {
        let bank = PatternBank::from_matrix(Matrix::eye(4, 4)).unwrap();
        assert_eq!(bank.matrix(), &Matrix::eye(4, 4));
    }

    #[test]
    fn too_many_patterns_is_a_dimension_error() {
        assert!(matches!(
            PatternBank::generate(5, 4, 0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn reference_scale_counts() {
        let cfg = SyntheticConfig {
            eps_s: 0.05,
            ..SyntheticConfig::default()
        };
        assert_eq!(cfg.discriminative_per_class(), 200);
        assert_eq!(cfg.edge_counts(), (114, 6));
        let syn = generate(&cfg).unwrap();
        assert_eq!(syn.report.per_pattern[..2], [200, 200]);
        assert!(syn.report.per_pattern[2..].iter().all(|&c| c == 75));
        let p = syn.graph.pattern_of().unwrap();
        for n in 0..cfg.n {
            if p[n] < 2 {
                continue;
            }
            let own = relevant_pattern(syn.graph.label(n));
            let same = syn.graph.neighbors(n).iter().filter(|&&s| p[s] == own).count();
            let other = syn
                .graph
                .neighbors(n)
                .iter()
                .filter(|&&s| p[s] < 2 && p[s] != own)
                .count();
            assert_eq!((same, other), (114, 6));
        }
    }

    #[test]
    fn zero_confusion_means_class_pure_edges() {
        let syn = generate(&SyntheticConfig {
            eps_s: 0.0,
            ..small_cfg()
        })
        .unwrap();
        let g = &syn.graph;
        let p = g.pattern_of().unwrap();
        for n in (0..g.len()).filter(|&n| p[n] >= 2) {
            let own = relevant_pattern(g.label(n));
            assert!(g.neighbors(n).iter().all(|&s| p[s] == own));
        }
    }

    #[test]
    fn infeasible_connections_are_config_errors() {
        let cfg = SyntheticConfig {
            gamma_d: 0.2,
            ..SyntheticConfig::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn exhausted_class_is_a_generation_error() {
        // four mu_1 nodes can never reach degree 8 among themselves
        let cfg = SyntheticConfig {
            n: 8,
            patterns: 3,
            gamma_d: 1.0,
            deg_min: 8,
            ..SyntheticConfig::default()
        };
        let err = generate(&cfg).unwrap_err();
        assert!(matches!(err, Error::Generation { ref class, .. } if class == "mu_1"));
    }

    #[test]
    fn label_flips_follow_eps0() {
        let syn = generate(&SyntheticConfig {
            eps_0: 0.1,
            ..small_cfg()
        })
        .unwrap();
        let g = &syn.graph;
        let flipped: Vec<usize> = (0..g.len())
            .filter(|&i| g.labels()[i] != g.clean_labels()[i])
            .collect();
        assert_eq!(flipped, syn.report.flipped);
        assert_eq!(flipped.len(), 4);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small_cfg()).unwrap();
        let b = generate(&small_cfg()).unwrap();
        assert_eq!(a.graph, b.graph);
        let c = generate(&SyntheticConfig {
            seed: 12,
            ..small_cfg()
        })
        .unwrap();
        assert_ne!(a.graph, c.graph);
    }

    #[test]
    fn empty_discriminative_set_gives_flat_profile() {
        // every node non-discriminative, no edges
        let feats = Matrix::eye(4, 4);
        let g = Graph::from_parts(feats, vec![1, -1, 1, -1], Some(vec![2, 3, 2, 3]), &[(0, 1)])
            .unwrap();
        let prof = margin_profile(&g, 20).unwrap();
        assert!(prof.delta_bar.iter().all(|&d| d == 0.0));
        assert_eq!(prof.z_m, 1);
        assert_eq!(prof.positive_fraction, 0.0);
    }

    #[test]
    fn confusion_ratio_direct() {
        // node 0 non-discriminative, label +1, star to ten discriminative nodes
        let n = 11;
        let mut patterns = vec![MU1; n];
        patterns[0] = 2;
        for p in patterns.iter_mut().skip(8) {
            *p = MU2;
        }
        let labels: Vec<i32> = patterns.iter().map(|&p| if p == MU2 { -1 } else { 1 }).collect();
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        let g = Graph::from_parts(Matrix::eye(n, n), labels, Some(patterns), &edges).unwrap();
        let rec = SampleRecord {
            node: 0,
            sampled: (0..n).collect(),
            iteration: 0,
        };
        let est = confusion_ratio(&g, 1, 20, &[rec]).unwrap();
        assert!((est.ratio - 0.3).abs() < 1e-15);
        let empty = SampleRecord {
            node: 0,
            sampled: vec![0],
            iteration: 1,
        };
        assert!(matches!(
            confusion_ratio(&g, 1, 20, &[empty]),
            Err(Error::UndefinedEstimate(_))
        ));
    }
}
