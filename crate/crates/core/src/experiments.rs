//! Batch studies over generated graphs: phase-diagram sweeps, power-law fits
//! of the 50%-success label budget, label-noise convergence curves, iteration
//! counts against γ_d, and paired mode ablations.
//!
//! Every trial seed is derived from the study seed and the trial's
//! coordinates, so results do not depend on the worker count.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::graphgen::{generate, SyntheticConfig};
use crate::model::{Mode, ModelConfig};
use crate::seed::{self, stream};
use crate::trainer::{train, RunResult, SamplePolicy, TrainConfig};

/// Runs `f` on a pool of `jobs` workers (`0` picks the machine default).
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Internal(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Which generator parameter a sweep varies along its first axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    GammaD,
    EpsS,
    Eps0,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::GammaD => "gamma_d",
            Axis::EpsS => "eps_s",
            Axis::Eps0 => "eps_0",
        }
    }

    pub fn apply(self, cfg: &mut SyntheticConfig, value: f64) {
        match self {
            Axis::GammaD => cfg.gamma_d = value,
            Axis::EpsS => cfg.eps_s = value,
            Axis::Eps0 => cfg.eps_0 = value,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gamma_d" => Ok(Axis::GammaD),
            "eps_s" => Ok(Axis::EpsS),
            "eps_0" => Ok(Axis::Eps0),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

/// Base configuration shared by every run of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseConfig {
    pub graph: SyntheticConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl BaseConfig {
    /// Generates the graph for `seed` and trains on it with `label_budget`
    /// labels. The batch size is clipped to the label budget.
    pub fn run(&self, gcfg: &SyntheticConfig, label_budget: usize, seed: u64) -> Result<(Graph, RunResult)> {
        let gcfg = SyntheticConfig { seed, ..gcfg.clone() };
        let g = generate(&gcfg)?.graph.with_spd_cache(self.model.z)?;
        let tcfg = TrainConfig {
            label_budget,
            batch_size: self.train.batch_size.min(label_budget),
            ..self.train.clone()
        };
        let r = train(&g, &self.model, &tcfg, seed)?;
        Ok((g, r))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: Axis,
    pub axis_values: Vec<f64>,
    pub label_grid: Vec<usize>,
    pub trials: usize,
    pub base: BaseConfig,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.axis_values.is_empty() || self.label_grid.is_empty() {
            return Err(Error::Config("sweep axes must be non-empty".into()));
        }
        if self.label_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("label grid must be strictly increasing".into()));
        }
        if let Some(&l) = self.label_grid.iter().find(|&&l| l == 0 || l > self.base.graph.n) {
            return Err(Error::Config(format!(
                "label budget {l} outside [1, {}]",
                self.base.graph.n
            )));
        }
        for &v in &self.axis_values {
            let mut g = self.base.graph.clone();
            self.axis.apply(&mut g, v);
            g.validate()?;
        }
        Ok(())
    }

    /// Seed of one trial, a function of the cell coordinates only.
    pub fn trial_seed(&self, axis_value: f64, label_budget: usize, trial: usize) -> u64 {
        seed::derive(
            self.seed,
            &[stream::TRIAL, axis_value.to_bits(), label_budget as u64, trial as u64],
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    /// NaN when the trial failed before finishing.
    pub final_hinge: f64,
    pub iterations_to_threshold: Option<usize>,
    pub succeeded: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub axis_value: f64,
    pub label_budget: usize,
    pub records: Vec<TrialRecord>,
}

impl SweepCell {
    pub fn success_count(&self) -> usize {
        self.records.iter().filter(|r| r.succeeded).count()
    }

    pub fn success_fraction(&self) -> f64 {
        self.success_count() as f64 / self.records.len() as f64
    }
}

/// Success statistics over `axis_values × label_grid`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepMatrix {
    pub axis: Axis,
    pub axis_values: Vec<f64>,
    pub label_grid: Vec<usize>,
    pub trials: usize,
    pub cells: Vec<SweepCell>,
}

impl SweepMatrix {
    pub fn cell(&self, row: usize, col: usize) -> &SweepCell {
        &self.cells[row * self.label_grid.len() + col]
    }

    pub fn fractions(&self) -> Vec<Vec<f64>> {
        (0..self.axis_values.len())
            .map(|i| (0..self.label_grid.len()).map(|j| self.cell(i, j).success_fraction()).collect())
            .collect()
    }

    /// Long format: one row per trial.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "{},label_budget,trial,seed,final_hinge,iterations_to_threshold,succeeded,error\n",
            self.axis
        );
        for c in &self.cells {
            for r in &c.records {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{:e},{},{},{}",
                    c.axis_value,
                    c.label_budget,
                    r.trial,
                    r.seed,
                    r.final_hinge,
                    r.iterations_to_threshold.map_or(String::new(), |t| t.to_string()),
                    r.succeeded as u8,
                    r.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
                );
            }
        }
        out
    }

    /// Plain-text greyscale image, one `block`-pixel square per cell; white
    /// is all trials succeeding, black all failing. Rows follow the axis
    /// values, columns the label grid.
    pub fn to_pgm(&self, block: usize) -> String {
        let block = block.max(1);
        let (rows, cols) = (self.axis_values.len(), self.label_grid.len());
        let mut out = format!("P2\n# rows: {} {:?}\n# cols: label_budget {:?}\n", self.axis, self.axis_values, self.label_grid);
        let _ = writeln!(out, "{} {}\n255", cols * block, rows * block);
        let frac = self.fractions();
        for row in &frac {
            let line: Vec<String> = row
                .iter()
                .flat_map(|&f| std::iter::repeat_n(((f * 255.0).round() as u8).to_string(), block))
                .collect();
            let line = line.join(" ");
            for _ in 0..block {
                out.push_str(&line);
                out.push('\n');
            }
        }
        out
    }

    /// Adjacent label-grid pairs, per row, where the success fraction drops
    /// by more than `z` binomial standard deviations. Returns `(row, col)` of
    /// the left cell of each offending pair.
    pub fn monotonicity_violations(&self, z: f64) -> Vec<(usize, usize)> {
        let frac = self.fractions();
        let t = self.trials as f64;
        let mut out = Vec::new();
        for (i, row) in frac.iter().enumerate() {
            for j in 1..row.len() {
                let drop = row[j - 1] - row[j];
                let p = 0.5 * (row[j - 1] + row[j]);
                let sigma = (2.0 * p * (1.0 - p) / t).sqrt();
                if drop > z * sigma + 1e-12 {
                    out.push((i, j - 1));
                }
            }
        }
        out
    }
}

/// Runs every cell of the sweep. Trials that fail numerically or while
/// generating their graph are recorded as failures; other errors abort.
pub fn sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepMatrix> {
    spec.validate()?;
    let mut tasks = Vec::new();
    for &v in &spec.axis_values {
        for &l in &spec.label_grid {
            for t in 0..spec.trials {
                tasks.push((v, l, t));
            }
        }
    }
    let threshold = spec.base.train.success_threshold;
    let results: Vec<Result<TrialRecord>> = with_pool(jobs, || {
        tasks
            .par_iter()
            .map(|&(v, l, t)| {
                let seed = spec.trial_seed(v, l, t);
                let mut gcfg = spec.base.graph.clone();
                spec.axis.apply(&mut gcfg, v);
                match spec.base.run(&gcfg, l, seed) {
                    Ok((_, r)) => Ok(TrialRecord {
                        trial: t,
                        seed,
                        final_hinge: r.final_test_hinge(),
                        iterations_to_threshold: r.iterations_to_threshold,
                        succeeded: r.succeeded(threshold),
                        error: None,
                    }),
                    Err(e) if e.is_numerical() || matches!(e, Error::Generation { .. } | Error::Sampling { .. }) => {
                        Ok(TrialRecord {
                            trial: t,
                            seed,
                            final_hinge: f64::NAN,
                            iterations_to_threshold: None,
                            succeeded: false,
                            error: Some(e.to_string()),
                        })
                    }
                    Err(e) => Err(e),
                }
            })
            .collect()
    })?;
    let records = results.into_iter().collect::<Result<Vec<_>>>()?;
    let cells = records
        .chunks(spec.trials)
        .zip(spec.axis_values.iter().flat_map(|&v| spec.label_grid.iter().map(move |&l| (v, l))))
        .map(|(chunk, (axis_value, label_budget))| SweepCell {
            axis_value,
            label_budget,
            records: chunk.to_vec(),
        })
        .collect();
    Ok(SweepMatrix {
        axis: spec.axis,
        axis_values: spec.axis_values.clone(),
        label_grid: spec.label_grid.clone(),
        trials: spec.trials,
        cells,
    })
}

/// Axis transform against which a power law is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// `γ_d⁻²`
    GammaNeg2,
    /// `γ_d⁻⁴`
    GammaNeg4,
    /// `(1 − ε_S)⁻²`
    OneMinusEpsNeg2,
}

impl Transform {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Transform::GammaNeg2 => v.powi(-2),
            Transform::GammaNeg4 => v.powi(-4),
            Transform::OneMinusEpsNeg2 => (1.0 - v).powi(-2),
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            Transform::GammaNeg2 | Transform::GammaNeg4 => Axis::GammaD,
            Transform::OneMinusEpsNeg2 => Axis::EpsS,
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::GammaNeg2 => "gamma_d^-2",
            Transform::GammaNeg4 => "gamma_d^-4",
            Transform::OneMinusEpsNeg2 => "(1-eps_s)^-2",
        })
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gamma_neg2" => Ok(Transform::GammaNeg2),
            "gamma_neg4" => Ok(Transform::GammaNeg4),
            "one_minus_eps_neg2" => Ok(Transform::OneMinusEpsNeg2),
            other => Err(Error::Config(format!("unknown transform `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub transform: Transform,
    /// Raw axis values that entered the fit.
    pub axis_values: Vec<f64>,
    /// Transformed axis values.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    /// Axis values left out for lack of a crossing or a finite measurement.
    pub excluded: Vec<f64>,
}

impl ScalingFit {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis_value,x,y\n");
        for ((a, x), y) in self.axis_values.iter().zip(&self.x).zip(&self.y) {
            let _ = writeln!(out, "{a},{x:e},{y:e}");
        }
        let _ = writeln!(
            out,
            "# transform={} slope={} intercept={} residual={} excluded={:?}",
            self.transform, self.slope, self.intercept, self.residual, self.excluded
        );
        out
    }
}

/// Least squares of `ln y` on `ln x`: `(slope, intercept, rms residual)`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InsufficientData(format!("{} points for a line fit", x.len())));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Argument("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::UndefinedEstimate("all x values coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Ok((slope, intercept, (rss / k).sqrt()))
}

/// Smallest label budget reaching 50% success, linearly interpolated
/// between the bracketing grid points. `None` when the row never reaches
/// 50%, or already does so at the first grid point (no bracket).
pub fn half_success_budget(label_grid: &[usize], fractions: &[f64]) -> Option<f64> {
    let j = fractions.iter().position(|&f| f >= 0.5)?;
    if j == 0 {
        return None;
    }
    let (l0, l1) = (label_grid[j - 1] as f64, label_grid[j] as f64);
    let (f0, f1) = (fractions[j - 1], fractions[j]);
    Some(l0 + (0.5 - f0) / (f1 - f0) * (l1 - l0))
}

/// Fits `min|L|` against the transformed axis from a table of success
/// fractions (`fractions[row][col]`).
pub fn fit_crossings(
    axis_values: &[f64],
    label_grid: &[usize],
    fractions: &[Vec<f64>],
    transform: Transform,
) -> Result<ScalingFit> {
    let (mut used, mut x, mut y, mut excluded) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (&v, row) in axis_values.iter().zip(fractions) {
        match half_success_budget(label_grid, row) {
            Some(l) => {
                used.push(v);
                x.push(transform.apply(v));
                y.push(l);
            }
            None => excluded.push(v),
        }
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} usable 50% crossings, need 3 (excluded axis values {excluded:?})",
            x.len()
        )));
    }
    let (slope, intercept, residual) = loglog_fit(&x, &y)?;
    Ok(ScalingFit {
        transform,
        axis_values: used,
        x,
        y,
        slope,
        intercept,
        residual,
        excluded,
    })
}

pub fn fit_scaling(m: &SweepMatrix, transform: Transform) -> Result<ScalingFit> {
    if transform.axis() != m.axis {
        return Err(Error::Argument(format!(
            "transform {transform} does not apply to a {} sweep",
            m.axis
        )));
    }
    fit_crossings(&m.axis_values, &m.label_grid, &m.fractions(), transform)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCurve {
    pub eps_0: f64,
    pub seed: u64,
    pub iterations: Vec<usize>,
    pub test_hinge: Vec<f64>,
    /// Mean test hinge over the last 10% of iterations.
    pub plateau: f64,
    /// First recorded iteration within 0.05 of the plateau.
    pub iterations_to_plateau: Option<usize>,
    /// False when the tail still moves by more than 0.05.
    pub converged: bool,
    pub error: Option<String>,
}

impl ConvergenceCurve {
    fn from_run(eps_0: f64, seed: u64, r: &RunResult) -> Self {
        let iterations: Vec<usize> = r.records.iter().map(|x| x.iteration).collect();
        let test_hinge: Vec<f64> = r.records.iter().map(|x| x.test_hinge).collect();
        let total = *iterations.last().unwrap_or(&0);
        let cut = total as f64 * 0.9;
        let tail: Vec<f64> = iterations
            .iter()
            .zip(&test_hinge)
            .filter(|(&i, _)| i as f64 >= cut)
            .map(|(_, &h)| h)
            .collect();
        let plateau = tail.iter().sum::<f64>() / tail.len() as f64;
        let spread = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - tail.iter().cloned().fold(f64::INFINITY, f64::min);
        let iterations_to_plateau = iterations
            .iter()
            .zip(&test_hinge)
            .find(|(_, &h)| h <= plateau + 0.05)
            .map(|(&i, _)| i);
        Self {
            eps_0,
            seed,
            iterations,
            test_hinge,
            plateau,
            iterations_to_plateau,
            converged: spread <= 0.05,
            error: None,
        }
    }

    fn failed(eps_0: f64, seed: u64, e: &Error) -> Self {
        Self {
            eps_0,
            seed,
            iterations: Vec::new(),
            test_hinge: Vec::new(),
            plateau: f64::NAN,
            iterations_to_plateau: None,
            converged: false,
            error: Some(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub eps0_list: Vec<f64>,
    pub curves: Vec<ConvergenceCurve>,
}

impl ConvergenceStudy {
    /// Mean plateau per ε_0 over the runs that finished.
    pub fn mean_plateaus(&self) -> Vec<f64> {
        self.eps0_list
            .iter()
            .map(|&e| {
                let p: Vec<f64> = self
                    .curves
                    .iter()
                    .filter(|c| c.eps_0 == e && c.error.is_none())
                    .map(|c| c.plateau)
                    .collect();
                if p.is_empty() {
                    f64::NAN
                } else {
                    p.iter().sum::<f64>() / p.len() as f64
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps_0,seed,iteration,test_hinge\n");
        for c in &self.curves {
            for (i, h) in c.iterations.iter().zip(&c.test_hinge) {
                let _ = writeln!(out, "{},{},{},{:e}", c.eps_0, c.seed, i, h);
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("eps_0,seed,plateau,iterations_to_plateau,converged,error\n");
        for c in &self.curves {
            let _ = writeln!(
                out,
                "{},{},{:e},{},{},{}",
                c.eps_0,
                c.seed,
                c.plateau,
                c.iterations_to_plateau.map_or(String::new(), |t| t.to_string()),
                c.converged as u8,
                c.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
            );
        }
        out
    }
}

/// Test-loss curves for each label-noise level.
pub fn convergence_study(eps0_list: &[f64], base: &BaseConfig, seeds: &[u64], jobs: usize) -> Result<ConvergenceStudy> {
    if let Some(e) = eps0_list.iter().find(|e| !(0.0..=0.4).contains(*e)) {
        return Err(Error::Config(format!("eps_0={e} outside [0, 0.4]")));
    }
    if seeds.is_empty() {
        return Err(Error::Config("need at least one seed".into()));
    }
    let tasks: Vec<(f64, u64)> = eps0_list
        .iter()
        .flat_map(|&e| seeds.iter().map(move |&s| (e, s)))
        .collect();
    let curves = with_pool(jobs, || {
        tasks
            .par_iter()
            .map(|&(e, s)| {
                let gcfg = SyntheticConfig {
                    eps_0: e,
                    ..base.graph.clone()
                };
                match base.run(&gcfg, base.train.label_budget, s) {
                    Ok((_, r)) => Ok(ConvergenceCurve::from_run(e, s, &r)),
                    Err(err) if err.is_numerical() => Ok(ConvergenceCurve::failed(e, s, &err)),
                    Err(err) => Err(err),
                }
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(ConvergenceStudy {
        eps0_list: eps0_list.to_vec(),
        curves,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationScaling {
    pub mode: Mode,
    pub gammas: Vec<f64>,
    /// Iterations to threshold per γ_d and seed; `None` when never reached.
    pub iterations: Vec<Vec<Option<usize>>>,
    /// Median per γ_d; `None` when at least half the seeds never reached it.
    pub medians: Vec<Option<f64>>,
    /// Max/min ratio of the finite medians.
    pub ratio: Option<f64>,
    /// Power-law fit of the medians against `γ_d⁻²`.
    pub fit: Option<ScalingFit>,
    pub excluded: Vec<f64>,
}

impl IterationScaling {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,gamma_d,seed_index,iterations_to_threshold\n");
        for (g, its) in self.gammas.iter().zip(&self.iterations) {
            for (i, t) in its.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{}", self.mode, g, i, t.map_or(String::new(), |t| t.to_string()));
            }
        }
        out
    }
}

/// Iterations to the success threshold across a γ_d grid for one mode.
pub fn iteration_scaling(
    gammas: &[f64],
    label_budget: usize,
    base: &BaseConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<IterationScaling> {
    if gammas.is_empty() || seeds.is_empty() {
        return Err(Error::Config("need at least one γ_d and one seed".into()));
    }
    let tasks: Vec<(f64, u64)> = gammas
        .iter()
        .flat_map(|&g| seeds.iter().map(move |&s| (g, s)))
        .collect();
    let flat = with_pool(jobs, || {
        tasks
            .par_iter()
            .map(|&(g, s)| {
                let gcfg = SyntheticConfig {
                    gamma_d: g,
                    ..base.graph.clone()
                };
                match base.run(&gcfg, label_budget, s) {
                    Ok((_, r)) => Ok(r.iterations_to_threshold),
                    Err(e) if e.is_numerical() => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let iterations: Vec<Vec<Option<usize>>> = flat.chunks(seeds.len()).map(|c| c.to_vec()).collect();
    let medians: Vec<Option<f64>> = iterations
        .iter()
        .map(|its| {
            let mut v: Vec<f64> = its.iter().map(|t| t.map_or(f64::INFINITY, |t| t as f64)).collect();
            Some(median(&mut v)).filter(|m| m.is_finite())
        })
        .collect();
    let excluded: Vec<f64> = gammas
        .iter()
        .zip(&medians)
        .filter(|(_, m)| m.is_none())
        .map(|(&g, _)| g)
        .collect();
    let finite: Vec<(f64, f64)> = gammas
        .iter()
        .zip(&medians)
        .filter_map(|(&g, m)| m.map(|m| (g, m)))
        .collect();
    let ratio = if finite.is_empty() {
        None
    } else {
        let hi = finite.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let lo = finite.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        Some(if finite.len() == 1 { 1.0 } else { hi / lo })
    };
    let fit = if finite.len() >= 3 && finite.iter().all(|p| p.1 > 0.0) {
        let x: Vec<f64> = finite.iter().map(|p| Transform::GammaNeg2.apply(p.0)).collect();
        let y: Vec<f64> = finite.iter().map(|p| p.1).collect();
        let (slope, intercept, residual) = loglog_fit(&x, &y)?;
        Some(ScalingFit {
            transform: Transform::GammaNeg2,
            axis_values: finite.iter().map(|p| p.0).collect(),
            x,
            y,
            slope,
            intercept,
            residual,
            excluded: excluded.clone(),
        })
    } else {
        None
    };
    Ok(IterationScaling {
        mode: base.model.mode,
        gammas: gammas.to_vec(),
        iterations,
        medians,
        ratio,
        fit,
        excluded,
    })
}

/// One arm of an ablation: a model mode with its sampling policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arm {
    pub mode: Mode,
    pub policy: SamplePolicy,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.mode, self.policy)
    }
}

#[derive(Debug, Clone)]
pub struct ArmResult {
    pub arm: Arm,
    /// One entry per seed; `Err` holds the message of a failed run.
    pub runs: Vec<std::result::Result<RunResult, String>>,
}

impl ArmResult {
    pub fn success_count(&self, threshold: f64) -> usize {
        self.runs
            .iter()
            .filter(|r| r.as_ref().is_ok_and(|r| r.succeeded(threshold)))
            .count()
    }
}

#[derive(Debug, Clone)]
pub struct Ablation {
    pub seeds: Vec<u64>,
    pub threshold: f64,
    pub arms: Vec<ArmResult>,
}

impl Ablation {
    pub fn success_fractions(&self) -> Vec<f64> {
        self.arms
            .iter()
            .map(|a| a.success_count(self.threshold) as f64 / self.seeds.len() as f64)
            .collect()
    }

    /// Long-format curves of every arm and seed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("arm,seed,iteration,train_loss,test_hinge,test_01,mass_relevant\n");
        for a in &self.arms {
            for (s, r) in self.seeds.iter().zip(&a.runs) {
                if let Ok(r) = r {
                    for rec in &r.records {
                        let _ = writeln!(
                            out,
                            "{},{},{},{:e},{:e},{:e},{:e}",
                            a.arm, s, rec.iteration, rec.train_loss, rec.test_hinge, rec.test_01, rec.attention.relevant
                        );
                    }
                }
            }
        }
        out
    }
}

/// Trains every arm on the same graph and labeled set per seed.
pub fn mode_ablation(base: &BaseConfig, arms: &[Arm], seeds: &[u64], jobs: usize) -> Result<Ablation> {
    if arms.is_empty() || seeds.is_empty() {
        return Err(Error::Config("need at least one arm and one seed".into()));
    }
    let graphs = with_pool(jobs, || {
        seeds
            .par_iter()
            .map(|&s| {
                let gcfg = SyntheticConfig { seed: s, ..base.graph.clone() };
                generate(&gcfg)?.graph.with_spd_cache(base.model.z)
            })
            .collect::<Result<Vec<Graph>>>()
    })??;
    let tasks: Vec<(usize, usize)> = (0..arms.len())
        .flat_map(|a| (0..seeds.len()).map(move |s| (a, s)))
        .collect();
    let flat = with_pool(jobs, || {
        tasks
            .par_iter()
            .map(|&(a, s)| {
                let model = ModelConfig {
                    mode: arms[a].mode,
                    ..base.model.clone()
                };
                let tcfg = TrainConfig {
                    policy: arms[a].policy,
                    ..base.train.clone()
                };
                match train(&graphs[s], &model, &tcfg, seeds[s]) {
                    Ok(r) => Ok(Ok(r)),
                    Err(e) if e.is_numerical() || matches!(e, Error::Sampling { .. }) => Ok(Err(e.to_string())),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut flat = flat.into_iter();
    let arms = arms
        .iter()
        .map(|&arm| ArmResult {
            arm,
            runs: flat.by_ref().take(seeds.len()).collect(),
        })
        .collect();
    Ok(Ablation {
        seeds: seeds.to_vec(),
        threshold: base.train.success_threshold,
        arms,
    })
}
