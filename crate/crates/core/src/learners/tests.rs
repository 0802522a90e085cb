use super::*;
use crate::cohort::{CohortRow, GroupAttrs, ServedAttrs};
use crate::features::{ColumnInfo, ColumnType};
use crate::store::{Gender, PersonId, Race};
use chrono::NaiveDate;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn row(i: usize, label: bool) -> CohortRow {
    CohortRow {
        person: PersonId(i as u64 + 1),
        as_of: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
        label: Some(label),
        group: GroupAttrs { race: Race::Unknown, gender: Gender::Unknown, prior_homelessness: false },
        served: ServedAttrs::default(),
    }
}

fn matrix(p: usize, data: Vec<f64>, labels: &[bool]) -> FeatureMatrix {
    let cols = (0..p).map(|j| ColumnInfo::custom(&format!("x{j}"), ColumnType::Count)).collect();
    let rows = labels.iter().enumerate().map(|(i, &l)| row(i, l)).collect();
    FeatureMatrix::new(cols, rows, data).unwrap()
}

/// Noisy data where the first feature carries most of the signal.
fn noisy(seed: u64, n: usize, p: usize) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n * p).map(|_| rng.random_range(0..20) as f64).collect();
    let labels: Vec<bool> = (0..n)
        .map(|i| data[i * p] + 0.5 * data[i * p + 1] + rng.random_range(0.0..12.0) > 22.0)
        .collect();
    matrix(p, data, &labels)
}

fn dt(depth: Option<usize>) -> ModelSpec {
    ModelSpec::Dt { tree: TreeParams { max_depth: depth, ..TreeParams::default() }, seed: 0 }
}

#[test]
fn logistic_separates_separable_data_under_strong_l2() {
    let data = vec![0.0, 0.0, 1.0, 0.5, 0.5, 1.0, 3.0, 3.0, 4.0, 3.5, 3.5, 4.0];
    let labels = [false, false, false, true, true, true];
    let m = matrix(2, data, &labels);
    let fitted = fit(&ModelSpec::Lr { c: 0.01, penalty: Penalty::L2 }, &m).unwrap();
    let Learned::Logistic(lm) = &fitted.learned else { panic!() };
    assert!(lm.weights.iter().all(|w| w.is_finite()));
    let s = score(&fitted, &m).unwrap();
    let min_pos = s[3..].iter().cloned().fold(f64::INFINITY, f64::min);
    let max_neg = s[..3].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(min_pos > max_neg);
}

#[test]
fn zero_weight_logistic_scores_one_half() {
    let m = noisy(1, 20, 3);
    let mut fitted = fit(&ModelSpec::Lr { c: 1.0, penalty: Penalty::L2 }, &m).unwrap();
    let Learned::Logistic(lm) = &mut fitted.learned else { panic!() };
    lm.weights.iter_mut().for_each(|w| *w = 0.0);
    lm.intercept = 0.0;
    assert!(score(&fitted, &m).unwrap().iter().all(|&s| s == 0.5));
}

#[test]
fn single_leaf_tree_scores_the_positive_rate() {
    let labels: Vec<bool> = (0..10).map(|i| i < 3).collect();
    let m = matrix(1, vec![1.0; 10], &labels);
    let fitted = fit(&dt(None), &m).unwrap();
    assert!(score(&fitted, &m).unwrap().iter().all(|&s| s == 0.3));
}

/// Exhaustive search over every feature and every midpoint between
/// adjacent distinct values, keeping the first strictly best stump.
fn best_stump(data: &[f64], n: usize, p: usize, y: &[bool]) -> Option<(usize, f64)> {
    let gini = |rows: &[usize]| {
        let w = rows.len() as f64;
        let pos = rows.iter().filter(|&&r| y[r]).count() as f64;
        w - (pos * pos + (w - pos) * (w - pos)) / w
    };
    let all: Vec<usize> = (0..n).collect();
    let parent = gini(&all);
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..p {
        let mut vals: Vec<f64> = (0..n).map(|i| data[i * p + f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| data[i * p + f] <= t);
            let gain = parent - gini(&l) - gini(&r);
            if gain > 1e-12 && best.is_none_or(|b| gain > b.2) {
                best = Some((f, t, gain));
            }
        }
    }
    best.map(|(f, t, _)| (f, t))
}

#[test]
fn depth_one_tree_is_the_exhaustive_best_stump() {
    for seed in 0..20 {
        let m = noisy(seed, 60, 4);
        let y = m.labels().unwrap();
        let fitted = fit(&dt(Some(1)), &m).unwrap();
        let Learned::Tree { tree } = &fitted.learned else { panic!() };
        let got = match &tree.nodes[0] {
            tree::Node::Split { feature, threshold, .. } => Some((*feature, *threshold)),
            tree::Node::Leaf { .. } => None,
        };
        assert_eq!(got, best_stump(&m.data, m.n_rows(), 4, &y), "seed {seed}");
    }
}

#[test]
fn perfectly_separated_data_yields_that_stump() {
    let data = vec![1.0, 9.0, 2.0, 8.0, 3.0, 7.0, 10.0, 1.0, 11.0, 2.0, 12.0, 3.0];
    let labels = [false, false, false, true, true, true];
    let m = matrix(2, data, &labels);
    let fitted = fit(&dt(Some(1)), &m).unwrap();
    let Learned::Tree { tree } = &fitted.learned else { panic!() };
    // both features separate perfectly; the lower index wins
    match &tree.nodes[0] {
        tree::Node::Split { feature, threshold, .. } => assert_eq!((*feature, *threshold), (0, 6.5)),
        n => panic!("{n:?}"),
    }
}

#[test]
fn unbagged_single_tree_forest_equals_the_tree() {
    let m = noisy(3, 200, 5);
    let tree = TreeParams { max_depth: Some(6), min_samples_leaf: 2, ..TreeParams::default() };
    let d = fit(&ModelSpec::Dt { tree: tree.clone(), seed: 9 }, &m).unwrap();
    let f = fit(&ModelSpec::Rf { tree, n_estimators: 1, bootstrap: false, seed: 9 }, &m).unwrap();
    let (Learned::Tree { tree: a }, Learned::Forest { trees, .. }) = (&d.learned, &f.learned) else { panic!() };
    assert_eq!(a, &trees[0]);
    assert_eq!(score(&d, &m).unwrap(), score(&f, &m).unwrap());
}

#[test]
fn forest_score_is_the_mean_of_tree_scores() {
    let m = noisy(5, 150, 6);
    let spec = ModelSpec::Rf {
        tree: TreeParams { max_depth: Some(5), max_features: MaxFeatures::Sqrt, ..TreeParams::default() },
        n_estimators: 7,
        bootstrap: true,
        seed: 2,
    };
    let fitted = fit(&spec, &m).unwrap();
    let Learned::Forest { trees, seeds } = &fitted.learned else { panic!() };
    assert_eq!(seeds.len(), 7);
    let s = score(&fitted, &m).unwrap();
    for i in 0..m.n_rows() {
        let per_tree: Vec<f64> = trees.iter().map(|t| t.predict(m.row(i))).collect();
        let mean = per_tree.iter().sum::<f64>() / 7.0;
        assert!((s[i] - mean).abs() < 1e-15);
    }
}

#[test]
fn forest_is_reproducible_across_thread_counts() {
    let m = noisy(6, 120, 4);
    let spec = default_spec(Family::Rf, 11).unwrap();
    let spec = match spec {
        ModelSpec::Rf { tree, bootstrap, seed, .. } => ModelSpec::Rf { tree, n_estimators: 12, bootstrap, seed },
        _ => unreachable!(),
    };
    let a = fit(&spec, &m).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| fit(&spec, &m).unwrap());
    assert_eq!(a, b);
}

#[test]
fn single_class_training_is_rejected() {
    let m = matrix(1, vec![1.0, 2.0, 3.0], &[true, true, true]);
    for spec in [ModelSpec::Lr { c: 1.0, penalty: Penalty::L2 }, dt(None)] {
        assert!(matches!(fit(&spec, &m), Err(Error::DegenerateLabels)));
    }
}

#[test]
fn scoring_rejects_a_different_schema() {
    let m = noisy(2, 30, 3);
    let fitted = fit(&dt(Some(2)), &m).unwrap();
    let other = noisy(2, 30, 4);
    assert!(matches!(score(&fitted, &other), Err(Error::SchemaMismatch { .. })));
}

#[test]
fn grid_sizes_follow_the_reference_grids() {
    let sizes: Vec<usize> = reference_grids()
        .iter()
        .map(|(f, g)| expand_grid(*f, g, 0).unwrap().len())
        .collect();
    assert_eq!(sizes, vec![8, 10, 48]);
}

#[test]
fn grid_expansion_is_ordered_and_typed() {
    let (f, g) = &reference_grids()[0];
    let specs = expand_grid(*f, g, 0).unwrap();
    assert_eq!(specs[0], ModelSpec::Lr { c: 0.001, penalty: Penalty::L1 });
    assert_eq!(specs[1], ModelSpec::Lr { c: 0.001, penalty: Penalty::L2 });
    assert_eq!(specs[7], ModelSpec::Lr { c: 1.0, penalty: Penalty::L2 });
    let ids: std::collections::BTreeSet<String> = specs.iter().map(|s| s.id()).collect();
    assert_eq!(ids.len(), 8);
}

#[test]
fn single_value_grid_gives_one_spec() {
    let g = BTreeMap::from([("max_depth".to_string(), vec![GridValue::Text("none".into())])]);
    assert_eq!(expand_grid(Family::Dt, &g, 0).unwrap(), vec![dt(None)]);
}

#[test]
fn grid_errors() {
    let g = BTreeMap::from([("learning_rate".to_string(), vec![GridValue::Float(0.1)])]);
    assert!(matches!(expand_grid(Family::Rf, &g, 0), Err(Error::UnknownParam { .. })));
    let g = BTreeMap::from([("C".to_string(), vec![])]);
    assert!(matches!(expand_grid(Family::Lr, &g, 0), Err(Error::Config(_))));
    assert!(matches!(expand_grid(Family::Xgb, &BTreeMap::new(), 0), Err(Error::NotImplemented(_))));
    let g = BTreeMap::from([("C".to_string(), vec![GridValue::Float(-1.0)])]);
    assert!(expand_grid(Family::Lr, &g, 0).is_err());
}

#[test]
fn importance_is_normalized_and_ranked() {
    let m = noisy(8, 300, 4);
    for spec in [ModelSpec::Lr { c: 1.0, penalty: Penalty::L2 }, dt(Some(4)), default_spec(Family::Rf, 1).unwrap()] {
        let fitted = fit(&spec, &m).unwrap();
        let imp = feature_importance(&fitted);
        assert!((imp.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(imp.windows(2).all(|w| w[0].1 >= w[1].1));
        assert_eq!(imp[0].0, "x0", "{}", spec.id());
    }
}

#[test]
fn single_nonzero_weight_ranks_first() {
    let m = noisy(1, 20, 3);
    let mut fitted = fit(&ModelSpec::Lr { c: 1.0, penalty: Penalty::L2 }, &m).unwrap();
    let Learned::Logistic(lm) = &mut fitted.learned else { panic!() };
    lm.weights = vec![0.0, 0.0, -2.0];
    assert_eq!(feature_importance(&fitted)[0], ("x2".to_string(), 1.0));
}

#[test]
fn saved_models_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let m = noisy(4, 100, 3);
    for spec in [ModelSpec::Lr { c: 0.1, penalty: Penalty::L1 }, dt(None), default_spec(Family::Rf, 3).unwrap()] {
        let fitted = fit(&spec, &m).unwrap();
        let path = dir.path().join(format!("{}.json", spec.id()));
        fitted.save(&path).unwrap();
        let back = FittedModel::load(&path).unwrap();
        assert_eq!(back, fitted);
        assert_eq!(score(&back, &m).unwrap(), score(&fitted, &m).unwrap());
    }
    assert!(matches!(FittedModel::load(&dir.path().join("nope.json")), Err(Error::MissingArtifact { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn row_order_does_not_change_predictions(seed in 0u64..1000, perm_seed in 0u64..1000) {
        let m = noisy(seed, 80, 3);
        let mut idx: Vec<usize> = (0..80).collect();
        use rand::seq::SliceRandom;
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let shuffled = m.select_rows(&idx);
        let specs = [
            ModelSpec::Lr { c: 0.1, penalty: Penalty::L2 },
            ModelSpec::Lr { c: 0.1, penalty: Penalty::L1 },
            dt(Some(5)),
            ModelSpec::Rf {
                tree: TreeParams { max_depth: Some(5), max_features: MaxFeatures::Sqrt, ..TreeParams::default() },
                n_estimators: 5,
                bootstrap: true,
                seed: 1,
            },
        ];
        for spec in specs {
            let a = score(&fit(&spec, &m).unwrap(), &m).unwrap();
            let b = score(&fit(&spec, &shuffled).unwrap(), &m).unwrap();
            prop_assert_eq!(a, b, "{}", spec.id());
        }
    }

    #[test]
    fn scores_stay_in_unit_interval(seed in 0u64..1000, c in prop::sample::select(vec![0.001, 0.01, 0.1, 1.0])) {
        let m = noisy(seed, 60, 3);
        for spec in [ModelSpec::Lr { c, penalty: Penalty::L2 }, dt(None), default_spec(Family::Rf, seed).unwrap()] {
            let fitted = fit(&spec, &m).unwrap();
            let probe = matrix(3, vec![-1e6, 1e6, 0.0, 1e6, -1e6, 5.0], &[false, true]);
            for s in score(&fitted, &m).unwrap().into_iter().chain(score(&fitted, &probe).unwrap()) {
                prop_assert!((0.0..=1.0).contains(&s));
            }
        }
    }
}
