//! Line-oriented `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key is optional and
//! defaults to the values in [`DEFAULTS`]; an unknown key, a repeated key or
//! an unparsable value is an error naming its line. Lists are
//! comma-separated.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiments::{Axis, BaseConfig, Transform};
use crate::graphgen::SyntheticConfig;
use crate::gradcheck::GradCheckConfig;
use crate::model::{Mode, ModelConfig};
use crate::trainer::{SamplePolicy, Schedule, TrainConfig};

/// The default configuration, as a config file.
pub const DEFAULTS: &str = include_str!("../configs/defaults.conf");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    /// Success-fraction matrix over an axis × label budgets.
    Phase,
    /// Test-loss curves for each label-noise level.
    Convergence,
    /// Iterations to threshold across γ_d.
    Iterations,
    /// Paired GT / GT without PE on the core neighborhood / GCN runs.
    Ablation,
}

impl FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phase" => Ok(Study::Phase),
            "convergence" => Ok(Study::Convergence),
            "iterations" => Ok(Study::Iterations),
            "ablation" => Ok(Study::Ablation),
            other => Err(Error::Config(format!("unknown study `{other}`"))),
        }
    }
}

impl std::fmt::Display for Study {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Study::Phase => "phase",
            Study::Convergence => "convergence",
            Study::Iterations => "iterations",
            Study::Ablation => "ablation",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub study: Study,
    pub axis: Axis,
    pub axis_values: Vec<f64>,
    pub label_grid: Vec<usize>,
    pub trials: usize,
    pub transforms: Vec<Transform>,
    pub eps0_list: Vec<f64>,
    /// Independent seeds for convergence, iteration and ablation studies.
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeSettings {
    /// Bundle directory to analyze; a generated graph when unset.
    pub bundle: Option<PathBuf>,
    pub class_count: Option<usize>,
    pub z_cap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub base: BaseConfig,
    pub sweep: SweepSettings,
    pub analyze: AnalyzeSettings,
    pub gradcheck: GradCheckConfig,
}

impl Default for Config {
    fn default() -> Self {
        parse(DEFAULTS, Path::new("<defaults>")).expect("built-in defaults parse")
    }
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, ()> {
    v.split(',')
        .map(|x| x.trim())
        .filter(|x| !x.is_empty())
        .map(|x| x.parse().map_err(|_| ()))
        .collect()
}

fn fmt_list<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn bool_value(v: &str) -> std::result::Result<bool, ()> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(()),
    }
}

/// Parses a config file body. All problems are collected and reported
/// together, one per line.
pub fn parse(text: &str, path: &Path) -> Result<Config> {
    let mut c = Config::bare();
    let mut seen: Vec<String> = Vec::new();
    let mut problems: Vec<(usize, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            problems.push((line, format!("expected `key = value`, got `{body}`")));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if seen.iter().any(|k| k == key) {
            problems.push((line, format!("key `{key}` set twice")));
            continue;
        }
        seen.push(key.to_string());
        if let Err(msg) = c.set(key, value) {
            problems.push((line, msg));
        }
    }
    if let Some((line, _)) = problems.first() {
        let msg = problems
            .iter()
            .map(|(l, m)| format!("line {l}: {m}"))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: *line,
            msg,
        });
    }
    c.validate()?;
    Ok(c)
}

pub fn load(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, path)
}

impl Config {
    /// Library defaults before the defaults file is applied.
    fn bare() -> Self {
        Self {
            seed: 0,
            base: BaseConfig {
                graph: SyntheticConfig::default(),
                model: ModelConfig::default(),
                train: TrainConfig::default(),
            },
            sweep: SweepSettings {
                study: Study::Phase,
                axis: Axis::GammaD,
                axis_values: vec![0.2, 0.3, 0.4, 0.5],
                label_grid: vec![10, 20, 40, 80, 160, 320, 640],
                trials: 10,
                transforms: vec![Transform::GammaNeg2],
                eps0_list: vec![0.0, 0.05, 0.1, 0.2],
                seeds: 10,
            },
            analyze: AnalyzeSettings {
                bundle: None,
                class_count: None,
                z_cap: 20,
            },
            gradcheck: GradCheckConfig::default(),
        }
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let bad = || format!("invalid value `{v}` for `{key}`");
        macro_rules! num {
            ($field:expr) => {
                $field = v.parse().map_err(|_| bad())?
            };
        }
        let (g, m, t) = (&mut self.base.graph, &mut self.base.model, &mut self.base.train);
        match key {
            "seed" => num!(self.seed),
            "n" => num!(g.n),
            "patterns" => num!(g.patterns),
            "dim" => num!(g.dim),
            "c0" => {
                num!(g.c0);
                m.init.c0 = g.c0;
            }
            "gamma_d" => num!(g.gamma_d),
            "eps_s" => num!(g.eps_s),
            "eps_0" => num!(g.eps_0),
            "deg_min" => num!(g.deg_min),
            "m_a" => num!(m.m_a),
            "m_b" => num!(m.m_b),
            "m" => num!(m.m),
            "z" => num!(m.z),
            "mode" => m.mode = v.parse::<Mode>().map_err(|e| e.to_string())?,
            "delta" => num!(m.init.delta),
            "sigma" => num!(m.init.sigma),
            "xi" => num!(m.init.xi),
            "attn_init_scale" => num!(m.init.attn_init_scale),
            "literal_scale" => m.init.literal_scale = bool_value(v).map_err(|_| bad())?,
            "freeze_self_pe" => m.freeze_self_pe = bool_value(v).map_err(|_| bad())?,
            "eta" => num!(t.eta),
            "batch_size" => num!(t.batch_size),
            "epochs" => t.schedule = Schedule::Epochs(v.parse().map_err(|_| bad())?),
            "iterations" => t.schedule = Schedule::Iterations(v.parse().map_err(|_| bad())?),
            "label_budget" => num!(t.label_budget),
            "policy" => t.policy = v.parse::<SamplePolicy>().map_err(|e| e.to_string())?,
            "success_threshold" => num!(t.success_threshold),
            "eval_seed" => num!(t.eval_seed),
            "pretrain_t0" => num!(t.pretrain_t0),
            "record_every" => num!(t.record_every),
            "study" => self.sweep.study = v.parse().map_err(|e: Error| e.to_string())?,
            "axis" => self.sweep.axis = v.parse().map_err(|e: Error| e.to_string())?,
            "axis_values" => self.sweep.axis_values = list(v).map_err(|_| bad())?,
            "label_grid" => self.sweep.label_grid = list(v).map_err(|_| bad())?,
            "trials" => num!(self.sweep.trials),
            "transforms" => self.sweep.transforms = list(v).map_err(|_| bad())?,
            "eps0_list" => self.sweep.eps0_list = list(v).map_err(|_| bad())?,
            "seeds" => num!(self.sweep.seeds),
            "bundle" => self.analyze.bundle = Some(PathBuf::from(v)),
            "class_count" => self.analyze.class_count = Some(v.parse().map_err(|_| bad())?),
            "z_cap" => num!(self.analyze.z_cap),
            "gradcheck_instances" => num!(self.gradcheck.instances),
            "gradcheck_max_nodes" => num!(self.gradcheck.max_nodes),
            "gradcheck_max_width" => num!(self.gradcheck.max_width),
            "gradcheck_h" => num!(self.gradcheck.h),
            "gradcheck_tolerance" => num!(self.gradcheck.tolerance),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Structural checks that do not depend on the command.
    pub fn validate(&self) -> Result<()> {
        self.base.graph.validate()?;
        self.base.model.validate(self.base.graph.dim)?;
        self.base.train.policy.validate()?;
        if self.sweep.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.sweep.seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        if self.gradcheck.instances == 0 {
            return Err(Error::Config("gradcheck_instances must be at least 1".into()));
        }
        Ok(())
    }

    /// The fully resolved configuration in the same file format, so that a
    /// manifest can be fed back as a config.
    pub fn to_text(&self) -> String {
        let (g, m, t) = (&self.base.graph, &self.base.model, &self.base.train);
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("n", g.n.to_string());
        kv("patterns", g.patterns.to_string());
        kv("dim", g.dim.to_string());
        kv("c0", g.c0.to_string());
        kv("gamma_d", g.gamma_d.to_string());
        kv("eps_s", g.eps_s.to_string());
        kv("eps_0", g.eps_0.to_string());
        kv("deg_min", g.deg_min.to_string());
        kv("m_a", m.m_a.to_string());
        kv("m_b", m.m_b.to_string());
        kv("m", m.m.to_string());
        kv("z", m.z.to_string());
        kv("mode", m.mode.to_string());
        kv("delta", m.init.delta.to_string());
        kv("sigma", m.init.sigma.to_string());
        kv("xi", m.init.xi.to_string());
        kv("attn_init_scale", m.init.attn_init_scale.to_string());
        kv("literal_scale", m.init.literal_scale.to_string());
        kv("freeze_self_pe", m.freeze_self_pe.to_string());
        kv("eta", t.eta.to_string());
        kv("batch_size", t.batch_size.to_string());
        match t.schedule {
            Schedule::Epochs(e) => kv("epochs", e.to_string()),
            Schedule::Iterations(i) => kv("iterations", i.to_string()),
        }
        kv("label_budget", t.label_budget.to_string());
        kv("policy", t.policy.to_string());
        kv("success_threshold", t.success_threshold.to_string());
        kv("eval_seed", t.eval_seed.to_string());
        kv("pretrain_t0", t.pretrain_t0.to_string());
        kv("record_every", t.record_every.to_string());
        let s = &self.sweep;
        kv("study", s.study.to_string());
        kv("axis", s.axis.to_string());
        kv("axis_values", fmt_list(&s.axis_values));
        kv("label_grid", fmt_list(&s.label_grid));
        kv("trials", s.trials.to_string());
        kv(
            "transforms",
            s.transforms
                .iter()
                .map(|t| match t {
                    Transform::GammaNeg2 => "gamma_neg2",
                    Transform::GammaNeg4 => "gamma_neg4",
                    Transform::OneMinusEpsNeg2 => "one_minus_eps_neg2",
                })
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("eps0_list", fmt_list(&s.eps0_list));
        kv("seeds", s.seeds.to_string());
        if let Some(b) = &self.analyze.bundle {
            kv("bundle", b.display().to_string());
        }
        if let Some(k) = self.analyze.class_count {
            kv("class_count", k.to_string());
        }
        kv("z_cap", self.analyze.z_cap.to_string());
        let gc = &self.gradcheck;
        kv("gradcheck_instances", gc.instances.to_string());
        kv("gradcheck_max_nodes", gc.max_nodes.to_string());
        kv("gradcheck_max_width", gc.max_width.to_string());
        kv("gradcheck_h", gc.h.to_string());
        kv("gradcheck_tolerance", gc.tolerance.to_string());
        out
    }

    /// Seeds for the multi-seed studies, split from the command seed.
    pub fn study_seeds(&self) -> Vec<u64> {
        (0..self.sweep.seeds as u64)
            .map(|i| crate::seed::derive(self.seed, &[crate::seed::stream::TRIAL, i]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_file_holds_the_reference_constants() {
        let c = Config::default();
        let (g, m, t) = (&c.base.graph, &c.base.model, &c.base.train);
        assert_eq!((g.n, g.patterns, g.dim, g.deg_min), (1000, 10, 20, 120));
        assert_eq!((g.c0, g.gamma_d, g.eps_s, g.eps_0), (0.01, 0.4, 0.0, 0.0));
        assert_eq!((m.m_a, m.m_b, m.m, m.z), (20, 20, 400, 20));
        assert_eq!((m.init.delta, m.init.sigma, m.init.xi), (0.2, 0.1, 0.01));
        assert_eq!(t.eta, 0.01);
        assert_eq!(t.label_budget, 400);
        assert_eq!(t.policy, SamplePolicy::Dist12 { k: 60 });
        assert_eq!(t.success_threshold, 1e-3);
    }

    #[test]
    fn resolved_text_round_trips() {
        let mut c = Config::default();
        c.base.model.mode = Mode::Gcn;
        c.base.train.schedule = Schedule::Iterations(77);
        c.sweep.transforms = vec![Transform::GammaNeg4, Transform::GammaNeg2];
        c.analyze.bundle = Some(PathBuf::from("some/dir"));
        let back = parse(&c.to_text(), Path::new("x")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_reported_with_lines() {
        let err = parse("n = 500\nbogus = 1\n\n# fine\neta = x\n", Path::new("run.conf")).unwrap_err();
        let text = err.to_string();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(text.contains("line 2: unknown key `bogus`"), "{text}");
        assert!(text.contains("line 5: invalid value `x` for `eta`"), "{text}");
    }

    #[test]
    fn repeated_and_malformed_lines() {
        let err = parse("n = 5\nn = 6\nnothing here\n", Path::new("c")).unwrap_err().to_string();
        assert!(err.contains("line 2: key `n` set twice"), "{err}");
        assert!(err.contains("line 3: expected"), "{err}");
    }

    #[test]
    fn zero_trials_is_rejected() {
        assert!(matches!(parse("trials = 0\n", Path::new("c")), Err(Error::Config(_))));
    }

    #[test]
    fn comments_after_values() {
        let c = parse("gamma_d = 0.3   # fewer discriminative nodes\ndeg_min = 60\n", Path::new("c")).unwrap();
        assert_eq!(c.base.graph.gamma_d, 0.3);
    }
}
