// Checks the hand-written backward pass against central differences on 100
// random small graphs and models.

use shallow_gt::gradcheck::{gradcheck, GradCheckConfig, GradCheckReport};

pub fn run_example() -> shallow_gt::Result<GradCheckReport> {
    let cfg = GradCheckConfig::default();
    let r = gradcheck(&cfg)?;
    println!(
        "{} instances, {} coordinates compared ({} skipped at kinks)",
        r.instances, r.compared, r.skipped
    );
    println!("max relative error {:.3e} at instance {}", r.max_rel_err, r.worst_instance);
    println!("within {:e}: {}", cfg.tolerance, r.passed(cfg.tolerance));
    Ok(r)
}

fn main() -> shallow_gt::Result<()> {
    run_example().map(|_| ())
}
