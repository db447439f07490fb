//! Randomized agreement check between backprop and central differences on
//! small random graphs, models and aggregation sets.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grad::{backward, finite_diff_masked, masked, max_relative_error};
use crate::graph::Graph;
use crate::linalg::Matrix;
use crate::model::{forward, init_params, Mode, ModelConfig};
use crate::seed::{self, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub instances: usize,
    pub max_nodes: usize,
    pub max_width: usize,
    /// Finite-difference step.
    pub h: f64,
    /// Gradient norms below this count as zero when forming ratios.
    pub floor: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            instances: 100,
            max_nodes: 60,
            max_width: 32,
            h: 1e-5,
            floor: 1e-6,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub instances: usize,
    pub max_rel_err: f64,
    pub worst_instance: usize,
    /// Coordinates compared and coordinates skipped near a kink.
    pub compared: usize,
    pub skipped: usize,
    pub per_instance: Vec<f64>,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_err <= tolerance
    }
}

/// One random instance: graph, parameters, query node, sampled set, label.
pub struct Instance {
    pub graph: Graph,
    pub params: crate::model::GtParams,
    pub node: usize,
    pub sampled: Vec<usize>,
    pub label: f64,
}

/// Draws instance `index` of the suite seeded by `seed`.
pub fn random_instance(cfg: &GradCheckConfig, index: usize) -> Result<Instance> {
    if cfg.max_nodes < 4 || cfg.max_width < 2 {
        return Err(Error::Config("gradient check needs max_nodes >= 4 and max_width >= 2".into()));
    }
    let mut rng = seed::rng_for(cfg.seed, &[stream::TRIAL, index as u64]);
    let n = rng.random_range(4..=cfg.max_nodes);
    let d = rng.random_range(3..=8);
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");

    // ring plus random chords, so distances vary
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    for _ in 0..rng.random_range(0..=n) {
        edges.push((rng.random_range(0..n), rng.random_range(0..n)));
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| gauss.sample(&mut rng)).collect()).collect();
    let labels = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    let graph = Graph::from_parts(Matrix::from_rows(&rows)?, labels, None, &edges)?;

    let mode = [Mode::Gt, Mode::GtNoPe, Mode::Gcn][rng.random_range(0..3)];
    let mcfg = ModelConfig {
        m_a: rng.random_range(2..=8),
        m_b: rng.random_range(2..=8),
        m: rng.random_range(2..=cfg.max_width),
        z: rng.random_range(3..=8),
        mode,
        freeze_self_pe: rng.random_bool(0.3),
        ..ModelConfig::default()
    };
    let mut params = init_params(&mcfg, d, rng.random())?;
    // move away from the identity-like start so every term is exercised
    params.w_o.scale(rng.random_range(5.0..50.0));
    if mode.trains_attention() {
        params.w_q.add_scaled(1.0, &Matrix::gaussian(mcfg.m_a, d, 0.7, &mut rng));
        params.w_k.add_scaled(1.0, &Matrix::gaussian(mcfg.m_a, d, 0.7, &mut rng));
    }
    if mode.trains_pe() {
        params.b.iter_mut().for_each(|v| *v = gauss.sample(&mut rng));
    }

    let node = rng.random_range(0..n);
    let k = rng.random_range(1..=n.min(20));
    let mut sampled = vec![node];
    sampled.extend(sample(&mut rng, n, k).into_iter().filter(|&s| s != node));
    let label = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    Ok(Instance {
        graph,
        params,
        node,
        sampled,
        label,
    })
}

/// Compares backprop with central differences on `cfg.instances` random
/// instances, ignoring coordinates whose difference straddles a kink.
pub fn gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        instances: cfg.instances,
        max_rel_err: 0.0,
        worst_instance: 0,
        compared: 0,
        skipped: 0,
        per_instance: Vec::with_capacity(cfg.instances),
    };
    for i in 0..cfg.instances {
        let inst = random_instance(cfg, i)?;
        let (_, cache) = forward(&inst.params, &inst.graph, inst.node, &inst.sampled)?;
        let analytic = backward(&cache, &inst.params, &inst.graph, inst.label)?;
        let (numeric, mask) =
            finite_diff_masked(&inst.params, &inst.graph, inst.node, &inst.sampled, inst.label, cfg.h)?;
        let skipped: usize = mask.tensors().iter().map(|(_, t)| t.iter().filter(|&&v| v != 0.0).count()).sum();
        let total: usize = mask.tensors().iter().map(|(_, t)| t.len()).sum();
        report.skipped += skipped;
        report.compared += total - skipped;
        let err = max_relative_error(&masked(&analytic, &mask), &numeric, cfg.floor);
        if !err.is_finite() {
            return Err(Error::UndefinedEstimate(format!("instance {i}: non-finite gradient error")));
        }
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_instance = i;
        }
        report.per_instance.push(err);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_agrees() {
        let cfg = GradCheckConfig {
            instances: 20,
            ..Default::default()
        };
        let r = gradcheck(&cfg).unwrap();
        assert!(r.passed(1e-4), "max relative error {} at {}", r.max_rel_err, r.worst_instance);
        assert!(r.compared > 10 * r.skipped);
    }

    #[test]
    fn instances_are_reproducible() {
        let cfg = GradCheckConfig::default();
        let a = random_instance(&cfg, 3).unwrap();
        let b = random_instance(&cfg, 3).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.sampled, b.sampled);
        assert!(a.graph.len() <= cfg.max_nodes && a.params.w_o.rows() <= cfg.max_width);
    }

    #[test]
    fn broken_gradient_is_caught() {
        let cfg = GradCheckConfig::default();
        let inst = random_instance(&cfg, 0).unwrap();
        let (_, cache) = forward(&inst.params, &inst.graph, inst.node, &inst.sampled).unwrap();
        let mut an = backward(&cache, &inst.params, &inst.graph, 1.0).unwrap();
        let (num, mask) = finite_diff_masked(&inst.params, &inst.graph, inst.node, &inst.sampled, 1.0, 1e-5).unwrap();
        an.w_v.scale(1.01);
        assert!(max_relative_error(&masked(&an, &mask), &num, 1e-6) > 1e-3);
    }
}
