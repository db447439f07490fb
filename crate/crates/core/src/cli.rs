//! Command-line front end.
//!
//! Every command resolves one [`Config`], runs, and writes its artifacts plus
//! a single `manifest.conf` into the output directory. The manifest is the
//! resolved config followed by `#` metadata lines, so it can be passed back
//! through `--config` to repeat the run.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::analyze::analyze_graph;
use crate::bundle::{export_graph, load_graph, ExternalGraphBundle};
use crate::config::{self, Config, Study};
use crate::error::{Error, Result};
use crate::experiments::{
    convergence_study, fit_scaling, iteration_scaling, mode_ablation, sweep, with_pool, Arm, SweepSpec,
};
use crate::gradcheck::gradcheck;
use crate::graphgen::{generate, margin_profile, SyntheticConfig};
use crate::model::Mode;
use crate::trainer::{train, SamplePolicy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "shallow-gt", version, about = "One-layer graph transformer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic graph bundle and its margin profile.
    Gen(Common),
    /// Train one model and write its curves and parameters.
    Train(Common),
    /// Run the study selected by `study` in the config.
    Sweep(Common),
    /// Cone test and margin profile of a bundle or a generated graph.
    Analyze(Common),
    /// Compare backprop against finite differences.
    Gradcheck(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Config file; built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, value_name = "N", default_value_t = 1)]
    jobs: usize,
    /// Overrides `seed` from the config.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => EXIT_USAGE,
        Error::Divergence { .. } | Error::UndefinedEstimate(_) | Error::Internal(_) | Error::InsufficientData(_) => {
            EXIT_NUMERICAL
        }
        Error::Config(_)
        | Error::Parse { .. }
        | Error::Argument(_)
        | Error::Dimension(_)
        | Error::Generation { .. }
        | Error::Sampling { .. } => EXIT_CONFIG,
    }
}

/// Outcome of a command that ran to completion but missed its own check.
struct Outcome {
    outputs: Vec<PathBuf>,
    failed: Option<String>,
}

impl Outcome {
    fn ok(outputs: Vec<PathBuf>) -> Self {
        Self { outputs, failed: None }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let (name, common) = match &cli.command {
        Command::Gen(c) => ("gen", c),
        Command::Train(c) => ("train", c),
        Command::Sweep(c) => ("sweep", c),
        Command::Analyze(c) => ("analyze", c),
        Command::Gradcheck(c) => ("gradcheck", c),
    };
    if common.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return EXIT_USAGE;
    }
    let cfg = match resolve(common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let started = Instant::now();
    let result = fs::create_dir_all(&common.out)
        .map_err(|e| Error::io(&common.out, e))
        .and_then(|_| match &cli.command {
            Command::Gen(_) => cmd_gen(&cfg, &common.out),
            Command::Train(_) => cmd_train(&cfg, &common.out),
            Command::Sweep(_) => cmd_sweep(&cfg, &common.out, common.jobs),
            Command::Analyze(_) => cmd_analyze(&cfg, &common.out, common.jobs),
            Command::Gradcheck(_) => cmd_gradcheck(&cfg, &common.out),
        });
    match result {
        Ok(outcome) => {
            if let Err(e) = write_manifest(&cfg, name, &common.out, &outcome.outputs, started) {
                eprintln!("error: {e}");
                return exit_code(&e);
            }
            match outcome.failed {
                Some(msg) => {
                    eprintln!("failed: {msg}");
                    EXIT_NUMERICAL
                }
                None => EXIT_OK,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn resolve(common: &Common) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(p) => config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_manifest(cfg: &Config, command: &str, out: &Path, outputs: &[PathBuf], started: Instant) -> Result<()> {
    let mut text = format!(
        "# command={command}\n# version={}\n# seed={}\n",
        env!("CARGO_PKG_VERSION"),
        cfg.seed
    );
    for p in outputs {
        let _ = writeln!(text, "# output={}", p.display());
    }
    let _ = writeln!(text, "# wall_clock_seconds={:.3}", started.elapsed().as_secs_f64());
    text.push_str(&cfg.to_text());
    let path = out.join("manifest.conf");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn write(out: &Path, name: &str, body: &str) -> Result<PathBuf> {
    let path = out.join(name);
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn graph_config(cfg: &Config) -> SyntheticConfig {
    SyntheticConfig {
        seed: cfg.seed,
        ..cfg.base.graph.clone()
    }
}

fn cmd_gen(cfg: &Config, out: &Path) -> Result<Outcome> {
    let syn = generate(&graph_config(cfg))?;
    let dir = out.join("graph");
    let b = export_graph(&syn.graph, &dir, cfg.analyze.z_cap)?;
    let profile = margin_profile(&syn.graph, cfg.analyze.z_cap)?;
    let mut margin = String::from("z,mean_margin\n");
    for (i, d) in profile.delta_bar.iter().enumerate() {
        let _ = writeln!(margin, "{},{d:e}", i + 1);
    }
    let _ = writeln!(margin, "# z_m={} positive_fraction={}", profile.z_m, profile.positive_fraction);
    let r = &syn.report;
    let report = format!(
        "per_pattern={:?}\nrelevant_edges={}\nconfusion_edges={}\npositive_non_discriminative={}\nnegative_non_discriminative={}\ntop_up_edges={:?}\nflipped={}\n",
        r.per_pattern,
        r.relevant_edges,
        r.confusion_edges,
        r.positive_non_discriminative,
        r.negative_non_discriminative,
        r.top_up_edges,
        r.flipped.len()
    );
    println!(
        "generated {} nodes, {} edges; z_m={} positive_fraction={:.3}",
        syn.graph.len(),
        syn.graph.edge_count(),
        profile.z_m,
        profile.positive_fraction
    );
    let mut outputs = vec![b.edges, b.features, b.labels];
    outputs.extend(b.patterns);
    outputs.push(write(out, "margin.csv", &margin)?);
    outputs.push(write(out, "generation.txt", &report)?);
    Ok(Outcome::ok(outputs))
}

fn cmd_train(cfg: &Config, out: &Path) -> Result<Outcome> {
    let g = generate(&graph_config(cfg))?.graph.with_spd_cache(cfg.base.model.z)?;
    let r = train(&g, &cfg.base.model, &cfg.base.train, cfg.seed)?;
    let params = out.join("params");
    r.params.write_snapshot(&params, &r.manifest)?;
    let last = r.last();
    println!(
        "final train_loss={:e} test_hinge={:e} test_01={:e} mass_relevant={:.3} iterations_to_threshold={}",
        last.train_loss,
        last.test_hinge,
        last.test_01,
        last.attention.relevant,
        r.iterations_to_threshold.map_or("none".into(), |t| t.to_string())
    );
    Ok(Outcome::ok(vec![write(out, "run.csv", &r.to_csv())?, params]))
}

fn cmd_sweep(cfg: &Config, out: &Path, jobs: usize) -> Result<Outcome> {
    let s = &cfg.sweep;
    let seeds = cfg.study_seeds();
    let mut outputs = Vec::new();
    match s.study {
        Study::Phase => {
            let spec = SweepSpec {
                axis: s.axis,
                axis_values: s.axis_values.clone(),
                label_grid: s.label_grid.clone(),
                trials: s.trials,
                base: cfg.base.clone(),
                seed: cfg.seed,
            };
            let m = sweep(&spec, jobs)?;
            outputs.push(write(out, "sweep.csv", &m.to_csv())?);
            outputs.push(write(out, "sweep.pgm", &m.to_pgm(8))?);
            for (v, row) in m.axis_values.iter().zip(m.fractions()) {
                println!("{}={v}: {:?}", m.axis, row);
            }
            for &t in &s.transforms {
                if t.axis() != s.axis {
                    return Err(Error::Config(format!("transform {t} does not apply to axis {}", s.axis)));
                }
                match fit_scaling(&m, t) {
                    Ok(fit) => {
                        println!("fit {t}: slope={:.3} residual={:.3}", fit.slope, fit.residual);
                        outputs.push(write(out, &format!("fit_{t}.csv"), &fit.to_csv())?);
                    }
                    Err(Error::InsufficientData(msg)) => {
                        println!("fit {t}: not enough crossings ({msg})");
                        outputs.push(write(out, &format!("fit_{t}.csv"), &format!("axis_value,x,y\n# {msg}\n"))?);
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Study::Convergence => {
            let study = convergence_study(&s.eps0_list, &cfg.base, &seeds, jobs)?;
            for (e, p) in study.eps0_list.iter().zip(study.mean_plateaus()) {
                println!("eps_0={e}: plateau={p:.4} (2*eps_0={:.4})", 2.0 * e);
            }
            outputs.push(write(out, "convergence.csv", &study.to_csv())?);
            outputs.push(write(out, "convergence_summary.csv", &study.summary_csv())?);
        }
        Study::Iterations => {
            let scaling = iteration_scaling(&s.axis_values, cfg.base.train.label_budget, &cfg.base, &seeds, jobs)?;
            println!("{} medians {:?} ratio {:?}", scaling.mode, scaling.medians, scaling.ratio);
            outputs.push(write(out, "iterations.csv", &scaling.to_csv())?);
            if let Some(fit) = &scaling.fit {
                println!("fit gamma_neg2: slope={:.3}", fit.slope);
                outputs.push(write(out, "iterations_fit.csv", &fit.to_csv())?);
            }
        }
        Study::Ablation => {
            let policy = cfg.base.train.policy;
            let k = match policy {
                SamplePolicy::Dist12 { k } | SamplePolicy::WholeGraph { k } | SamplePolicy::CoreOnly { k, .. } => k,
                SamplePolicy::FullNeighborhood { .. } => 60,
            };
            let arms = [
                Arm { mode: Mode::Gt, policy },
                Arm {
                    mode: Mode::GtNoPe,
                    policy: SamplePolicy::CoreOnly { z: 1, k },
                },
                Arm { mode: Mode::Gcn, policy },
            ];
            let ab = mode_ablation(&cfg.base, &arms, &seeds, jobs)?;
            let mut summary = String::from("arm,success_fraction\n");
            for (a, f) in ab.arms.iter().zip(ab.success_fractions()) {
                println!("{}: success {f:.2}", a.arm);
                let _ = writeln!(summary, "{},{f}", a.arm);
            }
            outputs.push(write(out, "ablation.csv", &ab.to_csv())?);
            outputs.push(write(out, "ablation_summary.csv", &summary)?);
        }
    }
    Ok(Outcome::ok(outputs))
}

fn cmd_analyze(cfg: &Config, out: &Path, jobs: usize) -> Result<Outcome> {
    let z_cap = cfg.analyze.z_cap;
    let g = match &cfg.analyze.bundle {
        Some(dir) => {
            let mut b = ExternalGraphBundle::in_dir(dir, z_cap);
            b.class_count = cfg.analyze.class_count;
            load_graph(&b)?
        }
        None => generate(&graph_config(cfg))?.graph,
    };
    let a = with_pool(jobs, || analyze_graph(&g, z_cap))??;
    for c in &a.classes {
        println!("class {}: size {} discriminative fraction {:.3}", c.class, c.size, c.fraction);
    }
    println!("z_m={} positive_fraction={:.3}", a.margin.z_m, a.margin.positive_fraction);
    Ok(Outcome::ok(vec![
        write(out, "classes.csv", &a.classes_csv())?,
        write(out, "margin.csv", &a.margin_csv())?,
    ]))
}

fn cmd_gradcheck(cfg: &Config, out: &Path) -> Result<Outcome> {
    let gc = crate::gradcheck::GradCheckConfig {
        seed: cfg.seed,
        ..cfg.gradcheck.clone()
    };
    let r = gradcheck(&gc)?;
    println!(
        "max relative error {:e} (instance {}) over {} instances; {} coordinates compared, {} skipped",
        r.max_rel_err, r.worst_instance, r.instances, r.compared, r.skipped
    );
    let mut csv = String::from("instance,max_relative_error\n");
    for (i, e) in r.per_instance.iter().enumerate() {
        let _ = writeln!(csv, "{i},{e:e}");
    }
    let mut o = Outcome::ok(vec![write(out, "gradcheck.csv", &csv)?]);
    if !r.passed(gc.tolerance) {
        o.failed = Some(format!("max relative error {:e} above {:e}", r.max_rel_err, gc.tolerance));
    }
    Ok(o)
}
