//! Runs a whole experiment from a TOML config (by default the small one
//! next to this file) and prints the model summary.
//!
//! cargo run --release --example full_experiment -- [config.toml]

use std::path::PathBuf;

use rental_triage::cli::{run_experiment, ExperimentConfig};

fn main() -> rental_triage::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/experiment.toml"));
    let cfg = ExperimentConfig::load(&path)?;
    let out = run_experiment(&cfg)?;
    println!("{} splits, {} reports in {}", out.plans.len(), out.reports.len(), out.dir.root.display());
    for m in &out.summary {
        let recall = m.recall.map_or("undefined".into(), |r| format!("{:.3}", r.avg));
        println!("{:<36} precision@{} {:.3} [{:.2}, {:.2}]  recall {recall}", m.model_id, cfg.k, m.precision.avg, m.precision.min, m.precision.max);
    }
    Ok(())
}
