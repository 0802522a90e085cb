//! Ranks an evaluation cohort with a random forest and reports the full
//! metric suite: precision and recall at k, fairness ratios, the missed
//! group, characteristic ratios of the list, and what happened later to
//! the false positives.
//!
//! cargo run --release --example evaluate_top_k

use rental_triage::cohort::CohortSpec;
use rental_triage::dates::ymd;
use rental_triage::evaluate::{evaluate_list, false_positive_followup, rank_and_cut};
use rental_triage::features::{characteristic_ratios, FeatureSpec};
use rental_triage::learners::{default_spec, fit, score, Family};
use rental_triage::splits::{materialize, plan_for, SplitParams};
use rental_triage::synthgen::{simulate, PopulationConfig};

fn main() -> rental_triage::Result<()> {
    let (log, _) = simulate(&PopulationConfig::default())?;
    let params = SplitParams { max_train_as_ofs: Some(8), ..SplitParams::default() };
    let plan = plan_for(ymd(2019, 1, 1), log.earliest_knowledge_date().unwrap(), &params).expect("history");
    let data = materialize(&plan, &log, &CohortSpec::default(), &FeatureSpec::default())?;
    let model = fit(&default_spec(Family::Rf, 0)?, &data.train)?;
    let rows = &data.eval.rows;
    let list = rank_and_cut(rows, &score(&model, &data.eval)?, 100, 0)?;

    let r = evaluate_list(&list, rows, plan.id, &model.id(), plan.eval_as_of, plan.moratorium_overlap)?;
    println!("cohort {} with {} positives; {} ties at the cut", r.cohort_size, r.positives, r.tie_count);
    println!("precision@100 {:.2}, recall {}", r.precision_at_k, r.recall_at_k);
    println!("missed group: {} positives, recall {}", r.missed_group_size, r.missed_group_recall);
    println!("recall with prior homelessness {}, first time {}", r.recall_prior_homelessness, r.recall_first_time);
    for f in &r.fairness {
        println!("  TPR {} / {} = {}", f.numerator, f.denominator, f.ratio);
    }

    let mut ratios = characteristic_ratios(&data.eval, &list.selected_rows())?;
    ratios.retain(|c| c.ratio.value().is_some());
    ratios.sort_by(|a, b| b.ratio.value().unwrap().total_cmp(&a.ratio.value().unwrap()));
    println!("\nmost over-represented characteristics in the list:");
    for c in ratios.iter().take(5) {
        println!("  {:<40} {:.2} vs {:.2} ({})", c.column, c.selected_mean, c.rest_mean, c.ratio);
    }

    let follow = false_positive_followup(&list, rows, &log, 12, &[18, 24])?;
    println!("\n{} false positives, later outcomes:", follow.false_positives);
    for f in &follow.rows {
        println!(
            "  by {} months: homelessness {}, crisis care {}, new filings {}",
            f.horizon_months, f.homelessness_after_label, f.mental_health_crisis, f.further_filings
        );
    }
    Ok(())
}
