// Trains the graph transformer on the reference graph with 400 labels and
// prints the test hinge loss as it falls.

use shallow_gt::experiments::BaseConfig;
use shallow_gt::config::Config;
use shallow_gt::trainer::RunResult;

pub fn run_example() -> shallow_gt::Result<RunResult> {
    let cfg = Config::default();
    let base: BaseConfig = cfg.base;
    let (_, run) = base.run(&base.graph, base.train.label_budget, 1)?;
    for r in run.records.iter().step_by(20) {
        println!(
            "iter {:>5}  train {:.2e}  test hinge {:.2e}  test 0-1 {:.3}",
            r.iteration, r.train_loss, r.test_hinge, r.test_01
        );
    }
    println!(
        "final test hinge {:.2e}; below 1e-3 from iteration {:?}",
        run.final_test_hinge(),
        run.iterations_to_threshold
    );
    Ok(run)
}

fn main() -> shallow_gt::Result<()> {
    run_example().map(|_| ())
}
