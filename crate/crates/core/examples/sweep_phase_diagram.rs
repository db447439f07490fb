// A small success-fraction matrix over γ_d and the label budget, printed as
// numbers and as a PGM image.

use shallow_gt::config::Config;
use shallow_gt::experiments::{sweep, Axis, SweepMatrix, SweepSpec};
use shallow_gt::trainer::Schedule;

pub fn run_example() -> shallow_gt::Result<SweepMatrix> {
    let mut base = Config::default().base;
    base.graph.n = 400;
    base.graph.deg_min = 30;
    base.train.schedule = Schedule::Iterations(4000);
    base.train.record_every = 4000;
    let spec = SweepSpec {
        axis: Axis::GammaD,
        axis_values: vec![0.3, 0.5],
        label_grid: vec![5, 40, 200],
        trials: 3,
        base,
        seed: 7,
    };
    let m = sweep(&spec, 2)?;
    for (v, row) in m.axis_values.iter().zip(m.fractions()) {
        println!("gamma_d = {v}: success {row:?} over label budgets {:?}", m.label_grid);
    }
    print!("{}", m.to_pgm(1));
    Ok(m)
}

fn main() -> shallow_gt::Result<()> {
    run_example().map(|_| ())
}
