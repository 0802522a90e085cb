use super::*;
use crate::dates::ymd;

fn small(seed: u64) -> PopulationConfig {
    PopulationConfig {
        n_persons: 600,
        start: ymd(2015, 1, 1),
        end: ymd(2019, 12, 31),
        seed,
        ..PopulationConfig::default()
    }
}

#[test]
fn same_seed_same_log() {
    let (a, ta) = simulate(&small(3)).unwrap();
    let (b, tb) = simulate(&small(3)).unwrap();
    assert_eq!(a.records(), b.records());
    assert_eq!(a.demographic_snapshots(), b.demographic_snapshots());
    assert_eq!(ta, tb);
}

#[test]
fn different_seeds_differ() {
    let (a, _) = generate(&small(1)).unwrap();
    let (b, _) = generate(&small(2)).unwrap();
    assert_ne!(a.records(), b.records());
}

#[test]
fn parallel_matches_serial() {
    let cfg = small(11);
    let (log, _) = generate(&cfg).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (serial, _) = pool.install(|| generate(&cfg)).unwrap();
    assert_eq!(log.records(), serial.records());
}

#[test]
fn range_shorter_than_label_span_is_rejected() {
    let cfg = PopulationConfig { start: ymd(2019, 1, 1), end: ymd(2019, 6, 1), ..small(0) };
    assert!(matches!(generate(&cfg), Err(crate::Error::InsufficientRange(_))));
}

#[test]
fn bad_probability_is_rejected() {
    let mut cfg = small(0);
    cfg.assistance.treatment_risk_multiplier = 1.5;
    assert!(matches!(generate(&cfg), Err(crate::Error::Config(_))));
}

#[test]
fn records_are_valid_and_within_horizon() {
    let cfg = small(5);
    let (log, _) = simulate(&cfg).unwrap();
    for r in log.records() {
        assert_eq!(r.validate(), None, "{r:?}");
        assert!(r.knowledge_date <= cfg.end);
    }
    let days: HashSet<_> = log.records().iter().map(|r| (r.person, r.event_start)).collect();
    for s in log.demographic_snapshots() {
        assert!(days.contains(&(s.person, s.collected_on)));
    }
}

use std::collections::HashSet;

#[test]
fn zero_capacity_means_no_payments() {
    let mut cfg = small(8);
    cfg.assistance.waitlist_capacity_per_month = 0;
    let (log, truth) = simulate(&cfg).unwrap();
    assert!(log.records().iter().all(|r| r.source != Source::RentalAssistancePayment));
    assert!(truth.episodes.iter().all(|e| !e.treated));
}

#[test]
fn saturated_waitlist_pays_every_applicant() {
    let mut cfg = small(9);
    cfg.assistance.p_apply_given_filing = 1.0;
    cfg.assistance.p_apply_prior_homeless = 1.0;
    cfg.assistance.waitlist_capacity_per_month = 1_000_000;
    let (log, truth) = simulate(&cfg).unwrap();
    // the last pay cycle that an application can still reach
    let last_cycle = ymd(2019, 12, 15);
    let reachable = |d: NaiveDate| add_days(d, cfg.assistance.payment_delay_days as i64) <= last_cycle;
    let applied: Vec<_> = truth.episodes.iter().filter(|e| e.application.is_some_and(reachable)).collect();
    assert!(!applied.is_empty());
    assert!(applied.iter().all(|e| e.payment.is_some()));
    let applications = log.records().iter().filter(|r| r.source == Source::AssistanceApplication).count();
    // records only appear once known, and two filings can share an application day
    let visible = |d: Option<NaiveDate>, lag: u32| d.filter(|&d| add_days(d, lag as i64) <= log.horizon());
    let expected: HashSet<_> = truth
        .episodes
        .iter()
        .filter_map(|e| visible(e.application, cfg.knowledge_lags.application).map(|d| (e.person, d)))
        .collect();
    assert_eq!(applications, expected.len());
    let payments = log.records().iter().filter(|r| r.source == Source::RentalAssistancePayment).count();
    let expected: HashSet<_> = truth
        .episodes
        .iter()
        .filter_map(|e| visible(e.payment, cfg.knowledge_lags.payment).map(|d| (e.person, d, e.filing.attrs.amount)))
        .collect();
    assert_eq!(payments, expected.len());
}

#[test]
fn observed_outcome_follows_treatment() {
    let cfg = small(13);
    let (log, truth) = simulate(&cfg).unwrap();
    let present: HashSet<EventRecord> = log.records().iter().copied().collect();
    for e in &truth.episodes {
        assert!(e.homeless_if_treated <= e.homeless_if_untreated);
        let Some(spell) = e.spell else { continue };
        if spell.knowledge_date > cfg.end {
            continue;
        }
        assert_eq!(present.contains(&spell), e.observed_homeless(), "episode {}", e.id);
    }
}

#[test]
fn treated_branch_matches_multiplier_in_expectation() {
    let cfg = PopulationConfig { n_persons: 4000, ..small(21) };
    let (_, truth) = generate(&cfg).unwrap();
    let expected: f64 = truth.episodes.iter().map(|e| e.risk * cfg.assistance.treatment_risk_multiplier).sum();
    let realized = truth.episodes.iter().filter(|e| e.homeless_if_treated).count() as f64;
    assert!((realized - expected).abs() < 4.0 * expected.sqrt() + 1.0, "{realized} vs {expected}");
}

#[test]
fn moratorium_suppresses_filings() {
    let cfg = PopulationConfig { n_persons: 3000, start: ymd(2018, 1, 1), end: ymd(2021, 12, 31), ..small(4) };
    let (log, _) = generate(&cfg).unwrap();
    let count = |from, to| {
        log.records()
            .iter()
            .filter(|r| r.source == Source::Eviction && r.event_start >= from && r.event_start <= to)
            .count()
    };
    let before = count(ymd(2019, 1, 1), ymd(2019, 12, 31));
    let during = count(ymd(2020, 5, 1), ymd(2021, 4, 30));
    assert!((during as f64) < 0.3 * before as f64, "{during} vs {before}");
}

#[test]
fn ground_truth_csv_has_a_row_per_episode() {
    let (_, truth) = generate(&small(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("truth.csv");
    write_ground_truth(&truth, &path).unwrap();
    let rows = csv::Reader::from_path(&path).unwrap().records().count();
    let without = truth.persons.iter().filter(|p| truth.episodes_of(p.person).is_empty()).count();
    assert_eq!(rows, truth.episodes.len() + without);
}
