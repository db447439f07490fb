// Full GT against GT without positional encoding restricted to the core
// neighborhood, and against the GCN-style model, on shared graphs and
// labels.

use shallow_gt::config::Config;
use shallow_gt::experiments::{mode_ablation, Ablation, Arm};
use shallow_gt::model::Mode;
use shallow_gt::trainer::{SamplePolicy, Schedule};

pub fn run_example() -> shallow_gt::Result<Ablation> {
    let mut base = Config::default().base;
    base.graph.n = 500;
    base.graph.deg_min = 60;
    base.train.label_budget = 200;
    base.train.schedule = Schedule::Iterations(2000);
    base.train.record_every = 500;
    let arms = [
        Arm { mode: Mode::Gt, policy: SamplePolicy::Dist12 { k: 60 } },
        Arm { mode: Mode::GtNoPe, policy: SamplePolicy::CoreOnly { z: 1, k: 60 } },
        Arm { mode: Mode::Gcn, policy: SamplePolicy::Dist12 { k: 60 } },
    ];
    let ab = mode_ablation(&base, &arms, &[1, 2], 2)?;
    for a in &ab.arms {
        let finals: Vec<String> = a
            .runs
            .iter()
            .map(|r| r.as_ref().map_or("failed".into(), |r| format!("{:.1e}", r.final_test_hinge())))
            .collect();
        println!("{:<28} final test hinge {}", a.arm.to_string(), finals.join(", "));
    }
    Ok(ab)
}

fn main() -> shallow_gt::Result<()> {
    run_example().map(|_| ())
}
