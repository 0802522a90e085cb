//! Scores one evaluation cohort with every heuristic baseline and prints
//! precision at 100 for each.
//!
//! cargo run --release --example baselines

use rental_triage::baselines::{baseline_score, BaselineKind, BaselineSpec};
use rental_triage::cohort::{baserate, build_cohort, label_cohort, CohortSpec};
use rental_triage::dates::ymd;
use rental_triage::evaluate::{precision_recall_at_k, rank_and_cut};
use rental_triage::synthgen::{simulate, PopulationConfig};

fn main() -> rental_triage::Result<()> {
    let (log, _) = simulate(&PopulationConfig::default())?;
    let spec = CohortSpec::default();
    let rows = build_cohort(&log.as_of(ymd(2019, 1, 1)), &spec)?;
    let rows = label_cohort(&rows, &log.full_view(), &spec)?;
    println!("cohort {}, baserate {:.3}", rows.len(), baserate(&rows).unwrap_or(0.0));
    for kind in BaselineKind::ALL {
        let scores = baseline_score(&BaselineSpec::new(kind).with_seed(3), &rows, &log)?;
        let list = rank_and_cut(&rows, &scores, 100, 3)?;
        let pr = precision_recall_at_k(&list, &rows)?;
        println!("{:<4} {:<32} precision@100 {:.2}", kind.id(), format!("{kind:?}"), pr.precision);
    }
    Ok(())
}
