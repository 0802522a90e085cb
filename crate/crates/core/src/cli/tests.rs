use super::*;
use crate::evaluate::read_report;
use crate::learners::GridValue;
use std::collections::BTreeMap;
use std::path::Path;

fn small(out: &Path, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { seed, out_dir: out.to_path_buf(), save_matrices: false, ..ExperimentConfig::default() };
    cfg.population.n_persons = 3000;
    cfg.splits.n_splits = Some(1);
    cfg.splits.max_train_as_ofs = Some(3);
    cfg.models = [("lr".to_string(), BTreeMap::from([("C".to_string(), vec![GridValue::Float(0.1)])]))].into();
    cfg
}

fn cli(args: &[&str]) -> Cli {
    Cli::try_parse_from(std::iter::once("rental-triage").chain(args.iter().copied())).unwrap()
}

fn write_config(cfg: &ExperimentConfig, path: &Path) {
    std::fs::write(path, cfg.to_toml().unwrap()).unwrap();
}

#[test]
fn minimal_run_summarizes_one_learner_and_three_baselines() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(&tmp.path().join("run"), 3);
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.plans.len(), 1);
    assert_eq!(out.summary.len(), 4);
    let summary = std::fs::read_to_string(out.dir.summary()).unwrap();
    assert_eq!(summary.lines().count(), 5);
    for id in ["lr_c0.1_l2", "b1", "b2", "b3"] {
        assert!(out.dir.predictions(0, id).exists(), "{id}");
        assert!(out.dir.report(0, id).exists(), "{id}");
    }
    assert!(out.dir.model(0, "lr_c0.1_l2").exists());
    assert!(!out.dir.model(0, "b1").exists());
    let manifest = RunManifest::load(&out.dir.manifest()).unwrap();
    assert_eq!(manifest.config_hash, cfg.hash().unwrap());
    assert_eq!(manifest.seed, 3);
    let stages: Vec<&str> = manifest.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(stages, ["config", "generate", "ingest", "plan-splits", "train", "evaluate", "report"]);
    assert!(manifest.stages.iter().all(|s| s.ok && s.error.is_none()));
    // every declared input lies inside the run directory
    assert!(manifest.stages.iter().flat_map(|s| &s.inputs).all(|p| out.dir.root.join(p).exists()));
}

#[test]
fn same_config_and_seed_give_identical_metric_files() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_experiment(&small(&tmp.path().join("a"), 5)).unwrap();
    let b = run_experiment(&small(&tmp.path().join("b"), 5)).unwrap();
    let files = |d: &RunDir| {
        let mut v = vec![d.summary(), d.reports_csv(), d.plot_data()];
        for id in ["lr_c0.1_l2", "b1", "b2", "b3"] {
            v.push(d.report(0, id));
            v.push(d.predictions(0, id));
        }
        v
    };
    for (x, y) in files(&a.dir).iter().zip(files(&b.dir)) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(&y).unwrap(), "{}", x.display());
    }
}

#[test]
fn generate_then_ingest_rejects_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let config = tmp.path().join("cfg.toml");
    write_config(&small(&out, 0), &config);
    let c = config.to_str().unwrap();
    let o = out.to_str().unwrap();
    execute(&cli(&["--config", c, "--seed", "7", "--out", o, "generate"])).unwrap();
    let lines = execute(&cli(&["--config", c, "--seed", "7", "--out", o, "ingest"])).unwrap();
    assert!(lines.contains(&"rejected: 0".to_string()), "{lines:?}");
    let manifest = RunManifest::load(&RunDir::new(&out).manifest()).unwrap();
    assert_eq!(manifest.seed, 7);
    assert!(manifest.stage("generate").is_some() && manifest.stage("ingest").is_some());
}

#[test]
fn evaluate_without_predictions_names_the_missing_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let config = tmp.path().join("cfg.toml");
    write_config(&small(&out, 1), &config);
    let base = ["--config", config.to_str().unwrap()];
    for stage in ["generate", "plan-splits"] {
        execute(&cli(&[base[0], base[1], stage])).unwrap();
    }
    let err = execute(&cli(&[base[0], base[1], "evaluate"])).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("evaluate") && msg.contains("missing predictions"), "{msg}");
    assert!(msg.contains("predictions/split_00/"), "{msg}");
    let manifest = RunManifest::load(&RunDir::new(&out).manifest()).unwrap();
    let record = manifest.stage("evaluate").unwrap();
    assert!(!record.ok);
    assert!(record.error.as_deref().unwrap().contains("missing predictions"));
    assert!(RunDir::new(&out).plans().exists());
}

#[test]
fn stages_compose_into_the_same_result_as_a_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let full = run_experiment(&small(&tmp.path().join("full"), 2)).unwrap();
    let out = tmp.path().join("staged");
    let config = tmp.path().join("cfg.toml");
    write_config(&small(&out, 2), &config);
    let c = config.to_str().unwrap();
    for stage in ["generate", "ingest", "plan-splits"] {
        execute(&cli(&["--config", c, stage])).unwrap();
    }
    // train piecewise: learners, then baselines
    execute(&cli(&["--config", c, "--model-family", "lr", "train"])).unwrap();
    execute(&cli(&["--config", c, "--model-family", "baseline", "--split-id", "0", "train"])).unwrap();
    execute(&cli(&["--config", c, "evaluate"])).unwrap();
    execute(&cli(&["--config", c, "report"])).unwrap();
    let staged = RunDir::new(&out);
    assert_eq!(std::fs::read(full.dir.summary()).unwrap(), std::fs::read(staged.summary()).unwrap());
}

#[test]
fn report_averages_match_hand_aggregation() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(&tmp.path().join("run"), 4);
    cfg.splits.n_splits = Some(3);
    cfg.splits.max_train_as_ofs = Some(2);
    cfg.models.clear();
    cfg.baselines = vec!["b1".into(), "b6".into()];
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.plans.len(), 3);
    assert!(out.plans.iter().all(|p| !p.moratorium_overlap));
    let mut rdr = csv::Reader::from_path(out.dir.summary()).unwrap();
    let mut checked = 0;
    for row in rdr.records() {
        let row = row.unwrap();
        let id = &row[0];
        let ps: Vec<f64> = (0..3).map(|s| read_report(&out.dir.report(s, id)).unwrap().precision_at_k).collect();
        let avg = ps.iter().sum::<f64>() / 3.0;
        assert_eq!(row[1].parse::<usize>().unwrap(), 3);
        assert_eq!(row[2].parse::<f64>().unwrap(), avg);
        assert_eq!(row[3].parse::<f64>().unwrap(), ps.iter().copied().fold(f64::INFINITY, f64::min));
        assert_eq!(row[4].parse::<f64>().unwrap(), ps.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        checked += 1;
    }
    assert_eq!(checked, 2);
}

#[test]
fn a_failing_stage_is_recorded_and_earlier_outputs_survive() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { k: 1_000_000, ..small(&tmp.path().join("run"), 6) };
    let err = run_experiment(&cfg).unwrap_err();
    assert!(matches!(&err, Error::Stage { stage, .. } if stage == "train"), "{err}");
    let dir = RunDir::new(&cfg.out_dir);
    let manifest = RunManifest::load(&dir.manifest()).unwrap();
    assert!(manifest.stage("plan-splits").unwrap().ok);
    assert!(!manifest.stage("train").unwrap().ok);
    assert!(manifest.stage("evaluate").is_none());
    assert!(dir.plans().exists() && dir.data().join("manifest.toml").exists());
}

#[test]
fn flags_override_config_paths() {
    let c = cli(&["--seed", "9", "--k", "50", "--out", "/tmp/x", "train", "--split-id", "2", "--model-family", "rf"]);
    let cfg = c.resolve_config().unwrap();
    assert_eq!((cfg.seed, cfg.k, cfg.out_dir.as_path()), (9, 50, Path::new("/tmp/x")));
    assert_eq!(c.selection(), Selection { split_id: Some(2), model_family: Some("rf".into()) });
}

#[test]
fn invalid_config_fails_in_the_config_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "seed = 1\nunknown_key = true\n").unwrap();
    let err = execute(&cli(&["--config", path.to_str().unwrap(), "generate"])).unwrap_err();
    assert!(matches!(&err, Error::Stage { stage, .. } if stage == "config"), "{err}");
    let missing = execute(&cli(&["--config", tmp.path().join("nope.toml").to_str().unwrap(), "run"])).unwrap_err();
    assert!(missing.to_string().contains("nope.toml"));
}

#[test]
fn shadow_and_rct_subcommands_write_their_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let mut cfg = small(&out, 8);
    cfg.shadow.model = "b1".into();
    cfg.rct.replications = 4;
    cfg.rct.arms = vec!["current".into(), "b1".into()];
    cfg.rct.list_cadence_months = 6;
    let config = tmp.path().join("cfg.toml");
    write_config(&cfg, &config);
    let c = config.to_str().unwrap();
    execute(&cli(&["--config", c, "generate"])).unwrap();
    let lines = execute(&cli(&["--config", c, "shadow"])).unwrap();
    assert_eq!(lines.len(), 1);
    let dir = RunDir::new(&out);
    let frozen: crate::trial::ShadowRun =
        toml::from_str(&std::fs::read_to_string(dir.shadow(crate::dates::ymd(2019, 1, 1), "b1")).unwrap()).unwrap();
    assert_eq!(frozen.frozen.len(), 100);
    let lines = execute(&cli(&["--config", c, "rct"])).unwrap();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("b1: "), "{lines:?}");
    let reps = std::fs::read_to_string(dir.rct().join("replications.csv")).unwrap();
    assert_eq!(reps.lines().count(), 1 + 4 * 2);
}
