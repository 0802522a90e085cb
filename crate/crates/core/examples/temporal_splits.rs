//! Plans temporal train/evaluate splits and prints each one, including the
//! moratorium flag and the label window of the latest training date.
//!
//! cargo run --example temporal_splits

use rental_triage::dates::ymd;
use rental_triage::splits::{plan_for, plan_splits, SplitParams};

fn main() -> rental_triage::Result<()> {
    let params = SplitParams {
        split_cadence_months: 3,
        max_train_as_ofs: Some(6),
        moratorium: Some((ymd(2020, 3, 18), ymd(2021, 7, 31))),
        ..SplitParams::default()
    };
    for p in plan_splits(ymd(2012, 1, 1), ymd(2022, 12, 31), &params)?.iter().rev().take(8) {
        let (from, to) = p.latest_training_timespan().expect("plans have training dates");
        let flag = if p.moratorium_overlap { "  moratorium" } else { "" };
        println!(
            "split {:>2}: eval {}  train {}..{}  latest labels [{from}, {to}){flag}",
            p.id,
            p.eval_as_of,
            p.train_as_ofs.last().unwrap(),
            p.train_as_ofs[0],
        );
    }
    let p = plan_for(ymd(2019, 1, 1), ymd(2012, 1, 1), &SplitParams::default()).expect("enough history");
    println!("\neval 2019-01-01 trains on {} dates, newest {}", p.train_as_ofs.len(), p.train_as_ofs[0]);
    Ok(())
}
