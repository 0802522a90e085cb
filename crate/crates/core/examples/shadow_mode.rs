//! Freezes a random forest list and the prior-homelessness heuristic on
//! several dates using only what was known then, and scores both once the
//! outcomes are in.
//!
//! cargo run --release --example shadow_mode

use rental_triage::baselines::{BaselineKind, BaselineSpec};
use rental_triage::dates::ymd;
use rental_triage::learners::{default_spec, Family};
use rental_triage::trial::{freeze_baseline, freeze_list, score_frozen, ShadowConfig};
use rental_triage::synthgen::{simulate, PopulationConfig};

fn main() -> rental_triage::Result<()> {
    let (log, _) = simulate(&PopulationConfig::default())?;
    let mut cfg = ShadowConfig::default();
    cfg.split.max_train_as_ofs = Some(8);
    let rf = default_spec(Family::Rf, 0)?;
    let b1 = BaselineSpec::new(BaselineKind::B1PrevHomelessness);
    for date in [ymd(2018, 7, 1), ymd(2019, 1, 1), ymd(2019, 7, 1)] {
        for frozen in [freeze_list(&log, date, &rf, &cfg)?, freeze_baseline(&log, date, &b1, &cfg)?] {
            let run = score_frozen(&frozen, &log, &cfg)?;
            println!(
                "{date} {:<28} {:>3} of {} homeless within {} months, {} from the missed group, {} already assisted",
                run.model_id, run.true_positives, run.k, run.horizon_months, run.missed_found, run.recipient_overlap
            );
        }
    }
    Ok(())
}
