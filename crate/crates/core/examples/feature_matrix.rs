//! Builds the feature matrix for one cohort and prints a few columns for the
//! highest-count rows, plus how many columns each source contributes.
//!
//! cargo run --release --example feature_matrix

use std::collections::BTreeMap;

use rental_triage::cohort::{build_cohort, CohortSpec};
use rental_triage::dates::ymd;
use rental_triage::features::{build_matrix, FeatureSpec};
use rental_triage::synthgen::{simulate, PopulationConfig};

fn main() -> rental_triage::Result<()> {
    let (log, _) = simulate(&PopulationConfig { n_persons: 5000, ..PopulationConfig::default() })?;
    let as_of = ymd(2019, 1, 1);
    let rows = build_cohort(&log.as_of(as_of), &CohortSpec::default())?;
    let m = build_matrix(&rows, &log, &FeatureSpec::default())?;
    println!("{} rows x {} columns, schema {}", m.n_rows(), m.n_cols(), &m.schema_hash[..12]);

    let mut per_source: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &m.columns {
        *per_source.entry(c.source.as_str()).or_default() += 1;
    }
    for (source, n) in per_source {
        println!("  {source:<28} {n}");
    }

    let show = ["eviction.count.1y", "eviction.days_since.5y", "homeless.count.5y", "demographics.age.as_of"];
    let idx: Vec<usize> = show.iter().filter_map(|c| m.column_index(c)).collect();
    let key = m.column_index("eviction.count.1y").unwrap_or(0);
    let mut order: Vec<usize> = (0..m.n_rows()).collect();
    order.sort_by(|&a, &b| m.get(b, key).total_cmp(&m.get(a, key)));
    println!("\nperson      {}", show.join("  "));
    for &i in order.iter().take(5) {
        let vals: Vec<String> = idx.iter().map(|&j| format!("{:>8}", m.get(i, j))).collect();
        println!("{:<10}  {}", m.rows[i].person.0, vals.join("  "));
    }
    Ok(())
}
