use super::*;
use crate::cohort::{GroupAttrs, ServedAttrs};
use crate::dates::ymd;
use crate::store::EventRecord;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn as_of() -> NaiveDate {
    ymd(2019, 1, 1)
}

fn row(person: u64, label: bool) -> CohortRow {
    CohortRow {
        person: PersonId(person),
        as_of: as_of(),
        label: Some(label),
        group: GroupAttrs { race: Race::Unknown, gender: Gender::Unknown, prior_homelessness: false },
        served: ServedAttrs::default(),
    }
}

fn random_instance(seed: u64, n: usize) -> (Vec<CohortRow>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|i| {
            let mut r = row(i as u64 + 1, rng.random_bool(0.3));
            r.group.race = [Race::Black, Race::White, Race::Other][rng.random_range(0..3)];
            r.group.gender = [Gender::Female, Gender::Male][rng.random_range(0..2)];
            r.group.prior_homelessness = rng.random_bool(0.2);
            r.served.applied = rng.random_bool(0.3);
            r.served.received_assistance = r.served.applied && rng.random_bool(0.5);
            r
        })
        .collect();
    // coarse scores so ties are common
    let scores = (0..n).map(|_| rng.random_range(0..12) as f64 / 11.0).collect();
    (rows, scores)
}

/// Brute force: sort (score desc, tie key asc, person asc) by insertion.
fn oracle_order(rows: &[CohortRow], scores: &[f64], seed: u64) -> Vec<usize> {
    let key = |i: usize| (-scores[i], sub_seed(seed, rows[i].person.0), rows[i].person.0);
    let mut out: Vec<usize> = Vec::new();
    for i in 0..rows.len() {
        let pos = out.iter().position(|&j| key(i) < key(j)).unwrap_or(out.len());
        out.insert(pos, i);
    }
    out
}

#[test]
fn distinct_scores_select_the_k_largest() {
    let rows: Vec<CohortRow> = (1..=5).map(|p| row(p, false)).collect();
    let list = rank_and_cut(&rows, &[0.1, 0.9, 0.5, 0.7, 0.3], 2, 0).unwrap();
    assert_eq!(list.selected_rows(), vec![1, 3]);
    assert_eq!(list.tie_count, 1);
    assert_eq!(list.entries.iter().map(|e| e.rank).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
}

#[test]
fn all_equal_scores_follow_the_seeded_hash() {
    let rows: Vec<CohortRow> = (1..=30).map(|p| row(p, false)).collect();
    let scores = vec![0.5; 30];
    let a = rank_and_cut(&rows, &scores, 10, 7).unwrap();
    assert_eq!(a.tie_count, 30);
    let mut expect: Vec<usize> = (0..30).collect();
    expect.sort_by_key(|&i| sub_seed(7, rows[i].person.0));
    assert_eq!(a.selected_rows(), expect[..10].to_vec());
    let b = rank_and_cut(&rows, &scores, 10, 8).unwrap();
    assert_ne!(a.selected_rows(), b.selected_rows());
}

#[test]
fn bad_inputs_are_rejected() {
    let rows: Vec<CohortRow> = (1..=3).map(|p| row(p, false)).collect();
    assert!(matches!(rank_and_cut(&rows, &[0.1, 0.2, 0.3], 4, 0), Err(Error::KTooLarge { k: 4, n: 3 })));
    assert!(rank_and_cut(&rows, &[0.1, f64::NAN, 0.3], 1, 0).is_err());
    let mut unlabeled = rows.clone();
    unlabeled[0].label = None;
    let list = rank_and_cut(&unlabeled, &[0.1, 0.2, 0.3], 1, 0).unwrap();
    assert!(precision_recall_at_k(&list, &unlabeled).is_err());
}

#[test]
fn twenty_hits_in_a_hundred_is_precision_point_two() {
    let rows: Vec<CohortRow> = (0..300).map(|i| row(i + 1, i % 5 == 0 && i < 100 || i == 250)).collect();
    let scores: Vec<f64> = (0..300).map(|i| 1.0 - i as f64 / 300.0).collect();
    let list = rank_and_cut(&rows, &scores, 100, 0).unwrap();
    let pr = precision_recall_at_k(&list, &rows).unwrap();
    assert_eq!(pr.true_positives, 20);
    assert_eq!(pr.precision, 0.20);
    assert_eq!(pr.recall, Metric::Value(20.0 / 21.0));
}

#[test]
fn all_positive_selection_has_precision_one_and_no_positives_means_no_recall() {
    let rows: Vec<CohortRow> = (0..10).map(|i| row(i + 1, i < 4)).collect();
    let scores: Vec<f64> = (0..10).map(|i| -(i as f64)).collect();
    let list = rank_and_cut(&rows, &scores, 4, 0).unwrap();
    assert_eq!(precision_recall_at_k(&list, &rows).unwrap().precision, 1.0);
    let none: Vec<CohortRow> = (0..10).map(|i| row(i + 1, false)).collect();
    assert!(!precision_recall_at_k(&list, &none).unwrap().recall.is_defined());
}

#[test]
fn fairness_ratio_matches_hand_computation() {
    // positives: black {1,2,3,4}, white {5,6}; selection {1,2,5,9}
    let races = [Race::Black, Race::Black, Race::Black, Race::Black, Race::White, Race::White, Race::Black, Race::White, Race::White, Race::Other];
    let labels = [true, true, true, true, true, true, false, false, false, false];
    let rows: Vec<CohortRow> = (0..10)
        .map(|i| {
            let mut r = row(i as u64 + 1, labels[i]);
            r.group.race = races[i];
            r.group.gender = if i % 2 == 0 { Gender::Female } else { Gender::Male };
            r
        })
        .collect();
    let mut scores = vec![0.0; 10];
    for (i, s) in [(0, 0.9), (1, 0.8), (4, 0.7)] {
        scores[i] = s;
    }
    scores[8] = 0.6;
    let list = rank_and_cut(&rows, &scores, 4, 0).unwrap();
    let f = fairness_ratios(&list, &rows, &default_fairness_pairs()).unwrap();
    assert_eq!(f[0].tpr_numerator, Metric::Value(0.5));
    assert_eq!(f[0].tpr_denominator, Metric::Value(0.5));
    assert_eq!(f[0].ratio, Metric::Value(1.0));
    assert_eq!(f[0].note, "meets desired direction");
    // female positives {1,3,5} (rows 0,2,4): selected 0 and 4; male {2,4,6}: selected 1
    assert_eq!(f[1].ratio, Metric::Value((2.0 / 3.0) / (1.0 / 3.0)));
}

#[test]
fn group_without_positives_leaves_the_ratio_undefined() {
    let mut rows: Vec<CohortRow> = (0..6).map(|i| row(i + 1, i < 3)).collect();
    for r in &mut rows {
        r.group.race = Race::Black;
    }
    let list = rank_and_cut(&rows, &[6.0, 5.0, 4.0, 3.0, 2.0, 1.0], 2, 0).unwrap();
    let f = fairness_ratios(&list, &rows, &default_fairness_pairs()).unwrap();
    assert!(!f[0].ratio.is_defined());
    assert!(!f[0].tpr_denominator.is_defined());
}

#[test]
fn selecting_the_whole_missed_group_gives_recall_one() {
    let mut rows: Vec<CohortRow> = (0..8).map(|i| row(i + 1, i < 4)).collect();
    rows[0].served.applied = true;
    rows[1].served.received_assistance = true;
    let scores = [0.0, 0.0, 0.9, 0.8, 0.1, 0.1, 0.1, 0.1];
    let list = rank_and_cut(&rows, &scores, 2, 0).unwrap();
    assert_eq!(missed_group_recall(&list, &rows).unwrap(), Metric::Value(1.0));
    for r in &mut rows {
        r.served.applied = true;
    }
    assert!(!missed_group_recall(&list, &rows).unwrap().is_defined());
}

#[test]
fn random_selection_reaches_k_over_n_of_the_missed_group() {
    let (rows, _) = random_instance(11, 200);
    let (k, reps) = (40, 2000);
    let mut total = 0.0;
    for seed in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = (0..200).map(|_| rng.random()).collect();
        let list = rank_and_cut(&rows, &scores, k, seed).unwrap();
        total += missed_group_recall(&list, &rows).unwrap().value().unwrap();
    }
    let mean = total / reps as f64;
    let missed = rows.iter().filter(|r| r.missed()).count() as f64;
    // hypergeometric: the found count has variance k (M/N)(1-M/N)(N-k)/(N-1)
    let p = missed / 200.0;
    let sd_found = (k as f64 * p * (1.0 - p) * (200.0 - k as f64) / 199.0).sqrt();
    let se = sd_found / missed / (reps as f64).sqrt();
    assert!((mean - k as f64 / 200.0).abs() < 4.0 * se, "{mean}");
}

#[test]
fn subgroup_recall_matches_enumeration() {
    // positives: prior {1,2}, first-time {3,4,5}; negatives {6}
    let prior = [true, true, false, false, false, true];
    let rows: Vec<CohortRow> = (0..6)
        .map(|i| {
            let mut r = row(i as u64 + 1, i < 5);
            r.group.prior_homelessness = prior[i];
            r
        })
        .collect();
    let list = rank_and_cut(&rows, &[0.9, 0.1, 0.8, 0.2, 0.3, 0.95], 3, 0).unwrap();
    let (p, f) = subgroup_recall(&list, &rows).unwrap();
    assert_eq!(p, Metric::Value(0.5));
    assert_eq!(f, Metric::Value(1.0 / 3.0));
    let first_only: Vec<CohortRow> = rows.iter().map(|r| CohortRow { group: GroupAttrs { prior_homelessness: false, ..r.group }, ..*r }).collect();
    assert!(!subgroup_recall(&list, &first_only).unwrap().0.is_defined());
}

fn followup_log() -> EventLog {
    let recs = [
        // person 1: shelter at month 18, crisis at month 3
        EventRecord::new(PersonId(1), Source::HomelessnessService, ymd(2020, 7, 1)),
        EventRecord::new(PersonId(1), Source::MentalBehavioralHealth, ymd(2019, 4, 1)).with_kind(Kind::Crisis),
        // person 2: new filing at month 6, walk-in only
        EventRecord::new(PersonId(2), Source::Eviction, ymd(2019, 7, 1)),
        EventRecord::new(PersonId(2), Source::MentalBehavioralHealth, ymd(2019, 5, 1)).with_kind(Kind::WalkIn),
        // person 3 is a true positive
        EventRecord::new(PersonId(3), Source::HomelessnessService, ymd(2019, 3, 1)),
    ];
    EventLog::ingest(recs).0.with_horizon(ymd(2021, 6, 30))
}

#[test]
fn false_positive_followup_counts_later_outcomes() {
    let rows = vec![row(1, false), row(2, false), row(3, true), row(4, false)];
    let log = followup_log();
    let list = rank_and_cut(&rows, &[0.9, 0.8, 0.7, 0.1], 3, 0).unwrap();
    let rep = false_positive_followup(&list, &rows, &log, 12, &[12, 24]).unwrap();
    assert_eq!(rep.false_positives, 2);
    assert_eq!(rep.rows[0].homelessness_after_label, Metric::Value(0.0));
    assert_eq!(rep.rows[1].homelessness_after_label, Metric::Value(0.5));
    assert_eq!(rep.rows[1].mental_health_crisis, Metric::Value(0.5));
    assert_eq!(rep.rows[1].further_filings, Metric::Value(0.5));
    assert!(matches!(
        false_positive_followup(&list, &rows, &log, 12, &[36]),
        Err(Error::LabelHorizon { .. })
    ));
}

#[test]
fn no_false_positives_gives_an_empty_report() {
    let rows = vec![row(3, true), row(4, false)];
    let list = rank_and_cut(&rows, &[0.9, 0.1], 1, 0).unwrap();
    let rep = false_positive_followup(&list, &rows, &followup_log(), 12, &[24]).unwrap();
    assert_eq!(rep, FollowupReport { false_positives: 0, rows: vec![] });
}

fn report(split: usize, model: &str, p: f64, r: Option<f64>, moratorium: bool) -> EvalReport {
    EvalReport {
        split_id: split,
        model_id: model.to_string(),
        eval_as_of: as_of(),
        moratorium,
        k: 100,
        tie_count: 1,
        cohort_size: 1000,
        positives: 20,
        baserate: Metric::Value(0.02),
        true_positives: (p * 100.0) as usize,
        precision_at_k: p,
        recall_at_k: r.map_or(Metric::Undefined("none".into()), Metric::Value),
        missed_group_size: 10,
        missed_group_recall: Metric::Value(0.1),
        recall_prior_homelessness: Metric::Value(0.5),
        recall_first_time: Metric::Value(0.1),
        fairness: vec![],
    }
}

#[test]
fn model_selection_averages_and_ranks() {
    let reports = vec![
        report(0, "rf", 0.25, Some(0.375), false),
        report(1, "rf", 0.125, Some(0.125), false),
        report(2, "rf", 0.9, Some(0.9), true),
        report(0, "lr", 0.1875, Some(0.5), false),
        report(1, "lr", 0.1875, None, false),
        report(0, "b1", 0.1875, Some(0.1), false),
        report(1, "b1", 0.1875, Some(0.1), false),
    ];
    let t = select_model(&reports, true).unwrap();
    assert_eq!(t.iter().map(|m| m.model_id.as_str()).collect::<Vec<_>>(), vec!["lr", "rf", "b1"]);
    let rf = &t[1];
    assert_eq!(rf.splits, 2);
    assert_eq!(rf.precision.avg, 0.1875);
    assert_eq!((rf.precision.min, rf.precision.max), (0.125, 0.25));
    assert_eq!(rf.recall.unwrap().avg, 0.25);
    // lr wins the precision tie on recall, averaged over its one defined split
    assert_eq!(t[0].recall.unwrap().avg, 0.5);
    let all = select_model(&reports, false).unwrap();
    assert_eq!(all[0].model_id, "rf");
    let one = select_model(&reports[..1], true).unwrap();
    assert_eq!((one[0].precision.avg, one[0].precision.min, one[0].precision.max), (0.25, 0.25, 0.25));
    assert!(matches!(select_model(&reports[2..3], true), Err(Error::AllSplitsExcluded)));
}

#[test]
fn reports_and_predictions_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (rows, scores) = random_instance(2, 50);
    let list = rank_and_cut(&rows, &scores, 10, 3).unwrap();
    let rep = evaluate_list(&list, &rows, 4, "rf_x", as_of(), false).unwrap();
    let path = dir.path().join("r.toml");
    write_report(&rep, &path).unwrap();
    assert_eq!(read_report(&path).unwrap(), rep);
    let pp = dir.path().join("p.csv");
    write_predictions(&list, &rows, &pp).unwrap();
    let back = read_predictions(&pp).unwrap();
    assert_eq!(scores_from_predictions(&back, &rows).unwrap(), scores);
    assert!(matches!(read_predictions(&dir.path().join("missing.csv")), Err(Error::MissingArtifact { .. })));
    write_reports_csv(&[rep.clone()], &dir.path().join("all.csv")).unwrap();
    write_plot_data(&[rep], &dir.path().join("plot.csv")).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn selection_matches_sort_oracle_and_metrics_match_counting(seed in any::<u64>(), n in 1usize..200, kf in 0.0f64..1.0) {
        let (rows, scores) = random_instance(seed, n);
        let k = 1 + ((n - 1) as f64 * kf) as usize;
        let list = rank_and_cut(&rows, &scores, k, seed).unwrap();
        let order = oracle_order(&rows, &scores, seed);
        prop_assert_eq!(list.entries.iter().map(|e| e.row).collect::<Vec<_>>(), order.clone());
        let top = &order[..k];
        let boundary = scores[order[k - 1]];
        prop_assert_eq!(list.tie_count, scores.iter().filter(|&&s| s == boundary).count());

        let y: Vec<bool> = rows.iter().map(|r| r.label.unwrap()).collect();
        let tp = top.iter().filter(|&&i| y[i]).count();
        let pos = y.iter().filter(|&&l| l).count();
        let pr = precision_recall_at_k(&list, &rows).unwrap();
        prop_assert_eq!(pr.precision, tp as f64 / k as f64);
        prop_assert_eq!(pr.recall, Metric::ratio(tp as f64, pos as f64, "no positives in cohort"));

        let missed_total = (0..n).filter(|&i| y[i] && !rows[i].served.applied && !rows[i].served.received_assistance).count();
        let missed_found = top.iter().filter(|&&i| y[i] && !rows[i].served.applied && !rows[i].served.received_assistance).count();
        prop_assert_eq!(missed_group_recall(&list, &rows).unwrap(), Metric::ratio(missed_found as f64, missed_total as f64, "empty missed group"));

        let f = fairness_ratios(&list, &rows, &default_fairness_pairs()).unwrap();
        for (pair, got) in default_fairness_pairs().into_iter().zip(f) {
            let tpr = |g: Group| {
                let p = (0..n).filter(|&i| y[i] && g.contains(&rows[i])).count();
                let h = top.iter().filter(|&&i| y[i] && g.contains(&rows[i])).count();
                (h, p)
            };
            let ((ha, pa), (hb, pb)) = (tpr(pair.0), tpr(pair.1));
            let expect = if pa == 0 || pb == 0 || hb == 0 { None } else { Some((ha as f64 / pa as f64) / (hb as f64 / pb as f64)) };
            prop_assert_eq!(got.ratio.value(), expect);
        }
    }

    #[test]
    fn precision_ignores_monotone_transforms(seed in any::<u64>(), n in 2usize..200) {
        let (rows, scores) = random_instance(seed, n);
        let k = n / 2 + 1;
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        let a = precision_recall_at_k(&rank_and_cut(&rows, &scores, k, 1).unwrap(), &rows).unwrap();
        let b = precision_recall_at_k(&rank_and_cut(&rows, &warped, k, 1).unwrap(), &rows).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn recall_and_hits_grow_with_k(seed in any::<u64>(), n in 2usize..150) {
        let (rows, scores) = random_instance(seed, n);
        let list = rank_and_cut(&rows, &scores, 1, seed).unwrap();
        let mut last = (0usize, -1.0f64);
        for k in 1..=n {
            let pr = precision_recall_at_k(&list.with_k(k).unwrap(), &rows).unwrap();
            let r = pr.recall.value().unwrap_or(0.0);
            prop_assert!(pr.true_positives >= last.0 && r >= last.1);
            last = (pr.true_positives, r);
        }
    }
}
