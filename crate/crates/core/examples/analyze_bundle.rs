// Writes a generated graph as a plain-text bundle, loads it back and runs
// the cone test and margin profile on it.

use shallow_gt::analyze::{analyze_graph, Analysis};
use shallow_gt::bundle::{export_graph, load_graph, ExternalGraphBundle};
use shallow_gt::graphgen::{generate, SyntheticConfig};

pub fn run_example() -> shallow_gt::Result<Analysis> {
    let syn = generate(&SyntheticConfig {
        n: 300,
        deg_min: 30,
        ..Default::default()
    })?;
    let dir = tempfile::tempdir().map_err(|source| shallow_gt::Error::Io { path: std::env::temp_dir(), source })?;
    export_graph(&syn.graph, dir.path(), 8)?;
    let g = load_graph(&ExternalGraphBundle::in_dir(dir.path(), 8))?;
    println!("loaded {} nodes and {} edges from {}", g.len(), g.edge_count(), dir.path().display());
    let a = analyze_graph(&g, 8)?;
    print!("{}", a.classes_csv());
    print!("{}", a.margin_csv());
    Ok(a)
}

fn main() -> shallow_gt::Result<()> {
    run_example().map(|_| ())
}
