//! Generates a population, runs the current assistance process over it, and
//! prints the composition of the cohort at one as-of date.
//!
//! cargo run --release --example synthetic_population -- [seed] [n_persons]

use rental_triage::cohort::{baserate, build_cohort, label_cohort, CohortSpec};
use rental_triage::dates::ymd;
use rental_triage::store::{Gender, Race};
use rental_triage::synthgen::{simulate, PopulationConfig};

fn share(n: usize, d: usize) -> f64 {
    if d == 0 { 0.0 } else { n as f64 / d as f64 }
}

fn main() -> rental_triage::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let n_persons = args.next().and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let config = PopulationConfig { seed, n_persons, ..PopulationConfig::default() };
    let (log, truth) = simulate(&config)?;
    println!("{} records, {} persons, {} episodes", log.len(), truth.persons.len(), truth.episodes.len());

    let spec = CohortSpec::default();
    for as_of in [ymd(2017, 1, 1), ymd(2019, 1, 1), ymd(2020, 10, 1)] {
        let rows = build_cohort(&log.as_of(as_of), &spec)?;
        let rows = label_cohort(&rows, &log.full_view(), &spec)?;
        let n = rows.len();
        let pos: Vec<_> = rows.iter().filter(|r| r.label == Some(true)).collect();
        let female = rows.iter().filter(|r| r.group.gender == Gender::Female).count();
        let black = rows.iter().filter(|r| r.group.race == Race::Black).count();
        let prior = rows.iter().filter(|r| r.group.prior_homelessness).count();
        let pos_prior = pos.iter().filter(|r| r.group.prior_homelessness).count();
        let missed = pos.iter().filter(|r| r.missed()).count();
        let applied = rows.iter().filter(|r| r.served.applied).count();
        println!("as of {as_of}: cohort {n}");
        println!("  baserate            {:.4} ({} positives)", baserate(&rows).unwrap_or(0.0), pos.len());
        println!("  female              {:.3}", share(female, n));
        println!("  black               {:.3}", share(black, n));
        println!("  prior homeless      {:.3}", share(prior, n));
        println!("  positives prior     {:.3}", share(pos_prior, pos.len()));
        println!("  positives missed    {:.3}", share(missed, pos.len()));
        println!("  applied             {:.3}", share(applied, n));
    }
    Ok(())
}
