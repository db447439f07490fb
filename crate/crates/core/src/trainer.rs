//! Mini-batch SGD over labeled nodes with per-iteration resampling of each
//! node's aggregation set, evaluated on the unlabeled remainder.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::grad::{apply_sum, backward_accumulate, Grads};
use crate::graph::{Graph, SpdTable};
use crate::graphgen::relevance;
use crate::model::{forward_slots, hinge_loss, init_params, pe_index, GtParams, ModelConfig, Trainable};
use crate::seed::{self, stream};

/// How the aggregation set `S^{n,t}` is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplePolicy {
    /// `n` plus `k` nodes from its distance-1 and distance-2 neighborhoods.
    Dist12 { k: usize },
    /// `k` nodes from the whole graph.
    WholeGraph { k: usize },
    /// `k` nodes from the distance-`z` neighborhood only.
    CoreOnly { z: usize, k: usize },
    /// The whole distance-`z` neighborhood.
    FullNeighborhood { z: usize },
}

impl fmt::Display for SamplePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SamplePolicy::Dist12 { k } => write!(f, "dist12({k})"),
            SamplePolicy::WholeGraph { k } => write!(f, "whole_graph({k})"),
            SamplePolicy::CoreOnly { z, k } => write!(f, "core_only({z},{k})"),
            SamplePolicy::FullNeighborhood { z } => write!(f, "full_neighborhood({z})"),
        }
    }
}

impl FromStr for SamplePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || Error::Config(format!("cannot parse sampling policy `{s}`"));
        let (name, args) = s.split_once('(').ok_or_else(bad)?;
        let args = args.strip_suffix(')').ok_or_else(bad)?;
        let nums: Vec<usize> = args
            .split(',')
            .map(|a| a.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let policy = match (name, nums.as_slice()) {
            ("dist12", &[k]) => SamplePolicy::Dist12 { k },
            ("whole_graph", &[k]) => SamplePolicy::WholeGraph { k },
            ("core_only", &[z, k]) => SamplePolicy::CoreOnly { z, k },
            ("full_neighborhood", &[z]) => SamplePolicy::FullNeighborhood { z },
            _ => return Err(bad()),
        };
        policy.validate()?;
        Ok(policy)
    }
}

impl SamplePolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SamplePolicy::Dist12 { k } | SamplePolicy::WholeGraph { k } | SamplePolicy::CoreOnly { k, .. }
                if k == 0 =>
            {
                Err(Error::Config(format!("{self}: k must be at least 1")))
            }
            SamplePolicy::CoreOnly { z: 0, .. } | SamplePolicy::FullNeighborhood { z: 0 } => {
                Err(Error::Config(format!("{self}: distance must be at least 1")))
            }
            _ => Ok(()),
        }
    }
}

/// Samples aggregation sets from per-node candidate pools computed once.
#[derive(Debug, Clone)]
pub struct Sampler {
    policy: SamplePolicy,
    pools: Vec<Vec<usize>>,
    n: usize,
}

impl Sampler {
    pub fn new(g: &Graph, spd: &SpdTable, policy: SamplePolicy) -> Result<Self> {
        policy.validate()?;
        let within = |lo: usize, hi: usize| -> Vec<Vec<usize>> {
            (0..g.len())
                .map(|n| {
                    spd.row(n)
                        .iter()
                        .enumerate()
                        .filter(|(_, &d)| (lo..=hi).contains(&(d as usize)))
                        .map(|(i, _)| i)
                        .collect()
                })
                .collect()
        };
        let check_z = |z: usize| {
            if z >= spd.z_cap() {
                Err(Error::Config(format!(
                    "{policy}: distance {z} not below the SPD cap {}",
                    spd.z_cap()
                )))
            } else {
                Ok(())
            }
        };
        let pools = match policy {
            SamplePolicy::Dist12 { .. } => {
                check_z(2)?;
                within(1, 2)
            }
            SamplePolicy::WholeGraph { .. } => Vec::new(),
            SamplePolicy::CoreOnly { z, .. } | SamplePolicy::FullNeighborhood { z } => {
                check_z(z)?;
                within(z, z)
            }
        };
        Ok(Self {
            policy,
            pools,
            n: g.len(),
        })
    }

    pub fn policy(&self) -> SamplePolicy {
        self.policy
    }

    pub fn pool(&self, n: usize) -> &[usize] {
        &self.pools[n]
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        let empty = || Error::Sampling {
            node: n,
            reason: format!("no candidates under {}", self.policy),
        };
        match self.policy {
            SamplePolicy::WholeGraph { k } => {
                if self.n == 0 {
                    return Err(empty());
                }
                Ok(sample(rng, self.n, k.min(self.n)).into_vec())
            }
            SamplePolicy::Dist12 { k } => {
                let pool = &self.pools[n];
                if pool.is_empty() {
                    return Err(empty());
                }
                let mut out = Vec::with_capacity(k.min(pool.len()) + 1);
                out.push(n);
                out.extend(pick(pool, k, rng));
                Ok(out)
            }
            SamplePolicy::CoreOnly { k, .. } => {
                let pool = &self.pools[n];
                if pool.is_empty() {
                    return Err(empty());
                }
                Ok(pick(pool, k, rng))
            }
            SamplePolicy::FullNeighborhood { .. } => {
                let pool = &self.pools[n];
                if pool.is_empty() {
                    return Err(empty());
                }
                Ok(pool.clone())
            }
        }
    }
}

fn pick<R: Rng + ?Sized>(pool: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    if k >= pool.len() {
        return pool.to_vec();
    }
    sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect()
}

/// One-off draw of `S^{n,t}` without a prebuilt sampler.
pub fn sample_nodes<R: Rng + ?Sized>(
    g: &Graph,
    n: usize,
    policy: SamplePolicy,
    z_cap: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let row = g.spd_row(n, z_cap)?;
    let sel = |lo: usize, hi: usize| -> Vec<usize> {
        row.iter()
            .enumerate()
            .filter(|(_, &d)| (lo..=hi).contains(&(d as usize)))
            .map(|(i, _)| i)
            .collect()
    };
    policy.validate()?;
    let pool = match policy {
        SamplePolicy::Dist12 { .. } => sel(1, 2),
        SamplePolicy::WholeGraph { .. } => (0..g.len()).collect(),
        SamplePolicy::CoreOnly { z, .. } | SamplePolicy::FullNeighborhood { z } => sel(z, z),
    };
    if pool.is_empty() {
        return Err(Error::Sampling {
            node: n,
            reason: format!("no candidates under {policy}"),
        });
    }
    Ok(match policy {
        SamplePolicy::Dist12 { k } => std::iter::once(n).chain(pick(&pool, k, rng)).collect(),
        SamplePolicy::WholeGraph { k } | SamplePolicy::CoreOnly { k, .. } => pick(&pool, k, rng),
        SamplePolicy::FullNeighborhood { .. } => pool,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// `epochs × ⌈|L| / B⌉` iterations.
    Epochs(usize),
    Iterations(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub eta: f64,
    pub batch_size: usize,
    pub schedule: Schedule,
    pub label_budget: usize,
    pub policy: SamplePolicy,
    /// Test hinge below which a run counts as successful.
    pub success_threshold: f64,
    pub eval_seed: u64,
    /// Leading iterations that update `W_O` only.
    pub pretrain_t0: usize,
    /// Iterations between recorded evaluations; `0` means once per epoch.
    pub record_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            batch_size: 20,
            schedule: Schedule::Epochs(200),
            label_budget: 400,
            policy: SamplePolicy::Dist12 { k: 60 },
            success_threshold: 1e-3,
            eval_seed: 0,
            pretrain_t0: 0,
            record_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn steps_per_epoch(&self) -> usize {
        self.label_budget.div_ceil(self.batch_size.max(1)).max(1)
    }

    pub fn iterations(&self) -> usize {
        match self.schedule {
            Schedule::Epochs(e) => e * self.steps_per_epoch(),
            Schedule::Iterations(t) => t,
        }
    }

    pub fn record_interval(&self) -> usize {
        if self.record_every == 0 {
            self.steps_per_epoch()
        } else {
            self.record_every
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.label_budget == 0 || self.label_budget > n {
            return Err(Error::Config(format!(
                "label budget {} outside [1, {n}]",
                self.label_budget
            )));
        }
        if self.batch_size == 0 || self.batch_size > self.label_budget {
            return Err(Error::Config(format!(
                "batch size {} outside [1, {}]",
                self.batch_size, self.label_budget
            )));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("step size {} invalid", self.eta)));
        }
        self.policy.validate()
    }
}

/// Attention mass split by relevance to the query node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AttentionMass {
    pub relevant: f64,
    pub confusion: f64,
    pub other: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub iteration: usize,
    pub train_loss: f64,
    pub test_hinge: f64,
    pub test_01: f64,
    pub b: Vec<f64>,
    pub attention: AttentionMass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub records: Vec<Record>,
    /// First recorded iteration with test hinge below the threshold.
    pub iterations_to_threshold: Option<usize>,
    pub params: GtParams,
    pub labeled: Vec<usize>,
    /// Labeled nodes with observed label +1.
    pub labeled_positive: usize,
    pub manifest: Vec<(String, String)>,
}

impl RunResult {
    pub fn last(&self) -> &Record {
        self.records.last().expect("a run always records its initial state")
    }

    pub fn final_test_hinge(&self) -> f64 {
        self.last().test_hinge
    }

    pub fn succeeded(&self, threshold: f64) -> bool {
        self.final_test_hinge() < threshold
    }

    /// One CSV row per recorded iteration.
    pub fn to_csv(&self) -> String {
        let z = self.params.z();
        let mut out = String::from("iteration,train_loss,test_hinge,test_01,mass_relevant,mass_confusion,mass_other");
        for i in 1..=z {
            out.push_str(&format!(",b_{i}"));
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.iteration,
                r.train_loss,
                r.test_hinge,
                r.test_01,
                r.attention.relevant,
                r.attention.confusion,
                r.attention.other
            ));
            for b in &r.b {
                out.push_str(&format!(",{b:e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let curves = dir.join("run.csv");
        fs::write(&curves, self.to_csv()).map_err(|e| Error::io(&curves, e))?;
        let manifest = dir.join("run_manifest.txt");
        let text: String = self.manifest.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        fs::write(&manifest, text).map_err(|e| Error::io(&manifest, e))?;
        self.params.write_snapshot(&dir.join("params"), &self.manifest)
    }
}

/// Fixed evaluation context: one sampled set per node, drawn once.
struct FixedSamples {
    sets: Vec<Vec<usize>>,
    slots: Vec<Vec<usize>>,
}

impl FixedSamples {
    fn draw(nodes: &[usize], sampler: &Sampler, spd: &SpdTable, z: usize, seed: u64) -> Result<Self> {
        let mut sets = Vec::with_capacity(nodes.len());
        let mut slots = Vec::with_capacity(nodes.len());
        for &n in nodes {
            let mut rng = seed::rng_for(seed, &[stream::EVAL, n as u64]);
            let s = sampler.sample(n, &mut rng)?;
            slots.push(slot_indices(spd, n, &s, z));
            sets.push(s);
        }
        Ok(Self { sets, slots })
    }
}

fn slot_indices(spd: &SpdTable, n: usize, sampled: &[usize], z: usize) -> Vec<usize> {
    sampled.iter().map(|&s| pe_index(spd.get(n, s) as usize, z) - 1).collect()
}

fn require_pm1(g: &Graph, nodes: &[usize]) -> Result<()> {
    match nodes.iter().find(|&&n| g.label(n).abs() != 1) {
        Some(&n) => Err(Error::Argument(format!(
            "node {n} has label {}, expected ±1",
            g.label(n)
        ))),
        None => Ok(()),
    }
}

fn ensure_spd(g: &Graph, z: usize) -> Result<std::borrow::Cow<'_, SpdTable>> {
    match g.spd_cache() {
        Some(t) if t.z_cap() == z => Ok(std::borrow::Cow::Borrowed(t)),
        _ => Ok(std::borrow::Cow::Owned(SpdTable::build(g, z)?)),
    }
}

/// Mean hinge and 0-1 error over `nodes`; `sign(0)` counts as an error.
pub fn evaluate(
    p: &GtParams,
    g: &Graph,
    nodes: &[usize],
    policy: SamplePolicy,
    eval_seed: u64,
) -> Result<(f64, f64)> {
    if nodes.is_empty() {
        return Err(Error::Argument("empty evaluation set".into()));
    }
    require_pm1(g, nodes)?;
    let spd = ensure_spd(g, p.z())?;
    let sampler = Sampler::new(g, &spd, policy)?;
    let fixed = FixedSamples::draw(nodes, &sampler, &spd, p.z(), eval_seed)?;
    evaluate_fixed(p, g, nodes, &fixed)
}

fn evaluate_fixed(p: &GtParams, g: &Graph, nodes: &[usize], fixed: &FixedSamples) -> Result<(f64, f64)> {
    let (mut hinge, mut wrong) = (0.0, 0usize);
    for (i, &n) in nodes.iter().enumerate() {
        let c = forward_slots(p, g, n, &fixed.sets[i], fixed.slots[i].clone())?;
        let y = g.label(n) as f64;
        hinge += hinge_loss(c.output, y);
        if y * c.output <= 0.0 {
            wrong += 1;
        }
    }
    let count = nodes.len() as f64;
    Ok((hinge / count, wrong as f64 / count))
}

/// Average attention mass on class-relevant, confusion and other nodes of
/// each labeled node's sampled set.
pub fn attention_concentration<R: Rng + ?Sized>(
    p: &GtParams,
    g: &Graph,
    labeled: &[usize],
    policy: SamplePolicy,
    rng: &mut R,
) -> Result<AttentionMass> {
    let spd = ensure_spd(g, p.z())?;
    let sampler = Sampler::new(g, &spd, policy)?;
    let mut sets = Vec::with_capacity(labeled.len());
    let mut slots = Vec::with_capacity(labeled.len());
    for &n in labeled {
        let s = sampler.sample(n, rng)?;
        slots.push(slot_indices(&spd, n, &s, p.z()));
        sets.push(s);
    }
    attention_fixed(p, g, labeled, &FixedSamples { sets, slots })
}

fn attention_fixed(p: &GtParams, g: &Graph, nodes: &[usize], fixed: &FixedSamples) -> Result<AttentionMass> {
    let patterns = g
        .pattern_of()
        .ok_or_else(|| Error::Argument("attention split needs pattern assignments".into()))?;
    if nodes.is_empty() {
        return Err(Error::Argument("empty node set".into()));
    }
    let mut total = AttentionMass::default();
    for (i, &n) in nodes.iter().enumerate() {
        let c = forward_slots(p, g, n, &fixed.sets[i], fixed.slots[i].clone())?;
        for (&s, &w) in c.sampled.iter().zip(&c.weights) {
            match relevance(g, patterns, n, s) {
                1 => total.relevant += w,
                -1 => total.confusion += w,
                _ => total.other += w,
            }
        }
    }
    let k = nodes.len() as f64;
    Ok(AttentionMass {
        relevant: total.relevant / k,
        confusion: total.confusion / k,
        other: total.other / k,
    })
}

/// Runs SGD training. The labeled set is drawn uniformly from all nodes;
/// the rest form the test set.
pub fn train(g: &Graph, mcfg: &ModelConfig, tcfg: &TrainConfig, seed: u64) -> Result<RunResult> {
    tcfg.validate(g.len())?;
    let params = init_params(mcfg, g.dim(), seed)?;
    let mut label_rng = seed::rng_for(seed, &[stream::LABELS]);
    let mut labeled = sample(&mut label_rng, g.len(), tcfg.label_budget).into_vec();
    labeled.sort_unstable();
    train_from(g, params, &labeled, tcfg, seed)
}

/// Runs SGD from the given parameters on a given labeled set.
pub fn train_from(
    g: &Graph,
    mut params: GtParams,
    labeled: &[usize],
    tcfg: &TrainConfig,
    seed: u64,
) -> Result<RunResult> {
    if labeled.is_empty() {
        return Err(Error::Config("empty labeled set".into()));
    }
    if tcfg.batch_size == 0 || tcfg.batch_size > labeled.len() {
        return Err(Error::Config(format!(
            "batch size {} outside [1, {}]",
            tcfg.batch_size,
            labeled.len()
        )));
    }
    require_pm1(g, labeled)?;
    let z = params.z();
    let spd = ensure_spd(g, z)?;
    let sampler = Sampler::new(g, &spd, tcfg.policy)?;

    let mut is_labeled = vec![false; g.len()];
    labeled.iter().for_each(|&n| is_labeled[n] = true);
    let test: Vec<usize> = (0..g.len()).filter(|&n| !is_labeled[n]).collect();
    require_pm1(g, &test)?;
    let test_fixed = FixedSamples::draw(&test, &sampler, &spd, z, tcfg.eval_seed)?;
    let train_fixed = FixedSamples::draw(labeled, &sampler, &spd, z, tcfg.eval_seed ^ 0x5EED)?;
    let track_attention = g.pattern_of().is_some();

    let record = |p: &GtParams, iteration: usize| -> Result<Record> {
        let (train_loss, _) = evaluate_fixed(p, g, labeled, &train_fixed)?;
        let (test_hinge, test_01) = if test.is_empty() {
            (train_loss, 0.0)
        } else {
            evaluate_fixed(p, g, &test, &test_fixed)?
        };
        let attention = if track_attention {
            attention_fixed(p, g, labeled, &train_fixed)?
        } else {
            AttentionMass::default()
        };
        if !(train_loss.is_finite() && test_hinge.is_finite()) {
            return Err(Error::Divergence {
                iteration,
                what: "non-finite loss".into(),
            });
        }
        Ok(Record {
            iteration,
            train_loss,
            test_hinge,
            test_01,
            b: p.b.clone(),
            attention,
        })
    };

    let total = tcfg.iterations();
    let every = tcfg.record_interval();
    let mut records = vec![record(&params, 0)?];
    let mut rng = seed::rng_for(seed, &[stream::TRAIN]);
    let mut acc = Grads::zeros_like(&params);
    let full = params.trainable;

    for t in 0..total {
        params.trainable = if t < tcfg.pretrain_t0 {
            Trainable::output_only()
        } else {
            full
        };
        acc.clear();
        for idx in sample(&mut rng, labeled.len(), tcfg.batch_size) {
            let n = labeled[idx];
            let s = sampler.sample(n, &mut rng)?;
            let slots = slot_indices(&spd, n, &s, z);
            let c = forward_slots(&params, g, n, &s, slots)?;
            if !c.output.is_finite() {
                return Err(Error::Divergence {
                    iteration: t,
                    what: format!("non-finite output at node {n}"),
                });
            }
            backward_accumulate(&c, &params, g, g.label(n) as f64, 1.0, &mut acc)?;
        }
        apply_sum(&mut params, &acc, tcfg.batch_size, tcfg.eta)?;
        if !params.is_finite() {
            return Err(Error::Divergence {
                iteration: t,
                what: "non-finite parameter".into(),
            });
        }
        if (t + 1) % every == 0 || t + 1 == total {
            records.push(record(&params, t + 1)?);
        }
    }
    params.trainable = full;

    let iterations_to_threshold = records
        .iter()
        .find(|r| r.test_hinge < tcfg.success_threshold)
        .map(|r| r.iteration);
    let labeled_positive = labeled.iter().filter(|&&n| g.label(n) > 0).count();
    let manifest = vec![
        ("seed".to_string(), seed.to_string()),
        ("mode".into(), params.mode.to_string()),
        ("eta".into(), tcfg.eta.to_string()),
        ("batch_size".into(), tcfg.batch_size.to_string()),
        ("iterations".into(), total.to_string()),
        ("label_budget".into(), labeled.len().to_string()),
        ("labeled_positive".into(), labeled_positive.to_string()),
        ("policy".into(), tcfg.policy.to_string()),
        ("success_threshold".into(), tcfg.success_threshold.to_string()),
        ("eval_seed".into(), tcfg.eval_seed.to_string()),
        ("pretrain_t0".into(), tcfg.pretrain_t0.to_string()),
    ];
    Ok(RunResult {
        records,
        iterations_to_threshold,
        params,
        labeled: labeled.to_vec(),
        labeled_positive,
        manifest,
    })
}
