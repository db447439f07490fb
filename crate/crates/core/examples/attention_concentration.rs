// Follows how attention mass moves onto class-relevant nodes during
// training, and where the positional bias ends up.

use shallow_gt::config::Config;
use shallow_gt::trainer::{AttentionMass, Schedule};

pub fn run_example() -> shallow_gt::Result<(AttentionMass, AttentionMass, Vec<f64>)> {
    let mut base = Config::default().base;
    base.graph.gamma_d = 0.2;
    base.graph.deg_min = 60;
    base.train.schedule = Schedule::Iterations(4000);
    base.train.record_every = 400;
    let (_, run) = base.run(&base.graph, 400, 3)?;
    println!("iteration  relevant  confusion  other");
    for r in &run.records {
        let a = r.attention;
        println!("{:>9}  {:>8.3}  {:>9.3}  {:>5.3}", r.iteration, a.relevant, a.confusion, a.other);
    }
    let b = run.last().b.clone();
    println!("positional bias b[1..5] = {:?}", &b[..5]);
    Ok((run.records[0].attention, run.last().attention, b))
}

fn main() -> shallow_gt::Result<()> {
    run_example().map(|_| ())
}
