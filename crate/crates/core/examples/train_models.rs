//! Trains logistic regression, a decision tree and a random forest on one
//! split, saves and reloads each model, and prints precision at 100 plus
//! the forest's most important features.
//!
//! cargo run --release --example train_models

use rental_triage::cohort::CohortSpec;
use rental_triage::dates::ymd;
use rental_triage::evaluate::{precision_recall_at_k, rank_and_cut};
use rental_triage::features::FeatureSpec;
use rental_triage::learners::{default_spec, feature_importance, fit, score, Family, FittedModel};
use rental_triage::splits::{materialize, plan_for, SplitParams};
use rental_triage::synthgen::{simulate, PopulationConfig};

fn main() -> rental_triage::Result<()> {
    let (log, _) = simulate(&PopulationConfig { n_persons: 10_000, ..PopulationConfig::default() })?;
    let params = SplitParams { max_train_as_ofs: Some(6), ..SplitParams::default() };
    let plan = plan_for(ymd(2019, 1, 1), log.earliest_knowledge_date().unwrap(), &params).expect("history");
    let data = materialize(&plan, &log, &CohortSpec::default(), &FeatureSpec::default())?;
    println!("train {} rows, eval {} rows, {} features", data.train.n_rows(), data.eval.n_rows(), data.train.n_cols());

    let dir = std::env::temp_dir().join("rental-triage-models");
    std::fs::create_dir_all(&dir)?;
    for family in [Family::Lr, Family::Dt, Family::Rf] {
        let model = fit(&default_spec(family, 1)?, &data.train)?;
        let path = dir.join(format!("{}.json", model.id()));
        model.save(&path)?;
        let model = FittedModel::load(&path)?;
        let list = rank_and_cut(&data.eval.rows, &score(&model, &data.eval)?, 100, 1)?;
        let pr = precision_recall_at_k(&list, &data.eval.rows)?;
        println!("{:<32} precision@100 {:.2}", model.id(), pr.precision);
        if family == Family::Rf {
            for (name, w) in feature_importance(&model).iter().take(5) {
                println!("    {name:<40} {w:.3}");
            }
        }
    }
    Ok(())
}
