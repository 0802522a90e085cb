//! Simulates a randomized trial of rental assistance on two enrollment
//! arms, once with individual randomization and once with randomized
//! funding days, and checks how often the interval covers the true effect.
//!
//! cargo run --release --example rct_simulation

use rental_triage::dates::ymd;
use rental_triage::synthgen::{simulate, PopulationConfig};
use rental_triage::trial::{all_filings_arm, applicant_arm, replicate_rct, Assignment, RctDesign};

fn main() -> rental_triage::Result<()> {
    let (_, truth) = simulate(&PopulationConfig::default())?;
    let (from, to) = (ymd(2016, 1, 1), ymd(2019, 1, 1));
    let arms = [applicant_arm(&truth, from, to), all_filings_arm(&truth, from, to)];
    for assignment in [Assignment::PureRandom, Assignment::QuasiRandomFundingDays] {
        let design = RctDesign { treatment_fraction: 0.5, assignment, seed: 11 };
        let reports = replicate_rct(&truth, &arms, &design, 50)?;
        println!("{assignment:?}");
        for (i, arm) in reports[0].arms.iter().enumerate() {
            let covered = reports.iter().filter(|r| r.arms[i].effect.covers(r.arms[i].true_effect, 2.0)).count();
            let (lo, hi) = arm.effect.ci95();
            println!(
                "  {:<12} n {:>6}  control rate {:.3}  effect {:+.4} [{lo:+.4}, {hi:+.4}]  truth {:+.4}  covered {covered}/50",
                arm.name, arm.n, arm.rate_control, arm.effect.estimate, arm.true_effect
            );
        }
        if let Some(e) = &reports[0].efficiency {
            println!("  control-rate difference between arms {:+.4} (se {:.4})", e.estimate, e.se);
        }
    }
    Ok(())
}
