// Trains with flipped labels and compares the test-loss plateau with twice
// the flip rate.

use shallow_gt::config::Config;
use shallow_gt::experiments::{convergence_study, ConvergenceStudy};
use shallow_gt::trainer::Schedule;

pub fn run_example() -> shallow_gt::Result<ConvergenceStudy> {
    let mut base = Config::default().base;
    base.train.schedule = Schedule::Iterations(3000);
    base.train.record_every = 100;
    let study = convergence_study(&[0.0, 0.1], &base, &[11, 12], 2)?;
    for (e, p) in study.eps0_list.iter().zip(study.mean_plateaus()) {
        println!("eps_0 = {e:.2}: plateau {p:.3} against 2*eps_0 = {:.2}", 2.0 * e);
    }
    Ok(study)
}

fn main() -> shallow_gt::Result<()> {
    run_example().map(|_| ())
}
