//! Stages of an experiment run and the run directory they share.
//!
//! Each stage reads its inputs from the run directory (or a declared input)
//! and writes its outputs back there, so any stage can be re-run on its own.
//! The manifest records every stage with its inputs, outputs and error.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Ranker};
use crate::baselines::baseline_score;
use crate::dates::add_months;
use crate::error::{Error, Result};
use crate::evaluate::{
    evaluate_list, rank_and_cut, read_predictions, read_report, scores_from_predictions, select_model, write_plot_data,
    write_predictions, write_report, write_reports_csv, write_summary, EvalReport, ModelSummary,
};
use crate::features::write_matrix;
use crate::learners::{fit, score, Family, MODEL_FORMAT_VERSION};
use crate::splits::{eval_rows, materialize, plan_splits, read_plans, write_plans, SplitPlan};
use crate::store::{read_event_log, write_event_log, SCHEMA_VERSION};
use crate::store::{EventLog, IngestReport};
use crate::synthgen::{simulate, write_ground_truth, GroundTruth};
use crate::trial::{
    all_filings_arm, applicant_arm, freeze_baseline, freeze_list, ranked_arm, replicate_rct, score_frozen,
    write_rct_report, write_replications, Arm, FrozenList, RctDesign, RctReport, ShadowRun,
};

pub const RUN_MANIFEST: &str = "run.toml";

/// Paths inside a run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> RunDir {
        RunDir { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(RUN_MANIFEST)
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn ground_truth(&self) -> PathBuf {
        self.root.join("ground_truth.csv")
    }

    pub fn ingest_report(&self) -> PathBuf {
        self.root.join("ingest.toml")
    }

    pub fn plans(&self) -> PathBuf {
        self.root.join("plans.toml")
    }

    fn split(&self, kind: &str, split: usize) -> PathBuf {
        self.root.join(kind).join(format!("split_{split:02}"))
    }

    pub fn matrices(&self, split: usize) -> PathBuf {
        self.split("matrices", split)
    }

    pub fn model(&self, split: usize, model_id: &str) -> PathBuf {
        self.split("models", split).join(format!("{model_id}.json"))
    }

    pub fn predictions(&self, split: usize, model_id: &str) -> PathBuf {
        self.split("predictions", split).join(format!("{model_id}.csv"))
    }

    pub fn report(&self, split: usize, model_id: &str) -> PathBuf {
        self.split("reports", split).join(format!("{model_id}.toml"))
    }

    pub fn reports_csv(&self) -> PathBuf {
        self.root.join("reports.csv")
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.csv")
    }

    pub fn plot_data(&self) -> PathBuf {
        self.root.join("plot_data.csv")
    }

    pub fn shadow(&self, freeze: NaiveDate, model_id: &str) -> PathBuf {
        self.root.join("shadow").join(format!("{freeze}_{model_id}.toml"))
    }

    pub fn rct(&self) -> PathBuf {
        self.root.join("rct")
    }

    fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root).unwrap_or(path).display().to_string()
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub ok: bool,
    pub error: Option<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub crate_version: String,
    pub store_schema_version: u32,
    pub model_format_version: u32,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig) -> Result<RunManifest> {
        Ok(RunManifest {
            config_hash: cfg.hash()?,
            seed: cfg.seed,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            store_schema_version: SCHEMA_VERSION,
            model_format_version: MODEL_FORMAT_VERSION,
            stages: Vec::new(),
        })
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        if !path.exists() {
            return Err(Error::MissingArtifact { what: "run manifest".into(), path: path.display().to_string() });
        }
        Ok(toml::from_str(&fs::read_to_string(path)?)?)
    }

    /// The existing manifest if it was written under the same config,
    /// otherwise a fresh one.
    pub fn open(dir: &RunDir, cfg: &ExperimentConfig) -> Result<RunManifest> {
        let fresh = RunManifest::new(cfg)?;
        match RunManifest::load(&dir.manifest()) {
            Ok(m) if m.config_hash == fresh.config_hash => Ok(m),
            _ => Ok(fresh),
        }
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    fn save(&self, dir: &RunDir) -> Result<()> {
        fs::create_dir_all(&dir.root)?;
        fs::write(dir.manifest(), toml::to_string(self)?)?;
        Ok(())
    }
}

/// Bookkeeping for one stage: its declared inputs and produced outputs.
pub struct StageIo<'a> {
    dir: &'a RunDir,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl StageIo<'_> {
    pub fn input(&mut self, path: &Path) -> PathBuf {
        self.inputs.push(self.dir.relative(path));
        path.to_path_buf()
    }

    pub fn output(&mut self, path: &Path) -> Result<PathBuf> {
        create_parent(path)?;
        self.outputs.push(self.dir.relative(path));
        Ok(path.to_path_buf())
    }
}

/// Runs `body` as stage `name`, recording the outcome in the manifest even
/// when it fails.
pub fn run_stage<T>(
    manifest: &mut RunManifest,
    dir: &RunDir,
    name: &str,
    body: impl FnOnce(&mut StageIo<'_>) -> Result<T>,
) -> Result<T> {
    let mut io = StageIo { dir, inputs: Vec::new(), outputs: Vec::new() };
    let result = body(&mut io);
    let record = StageRecord {
        stage: name.to_string(),
        ok: result.is_ok(),
        error: result.as_ref().err().map(|e| e.to_string()),
        inputs: io.inputs,
        outputs: io.outputs,
    };
    match manifest.stages.iter_mut().find(|s| s.stage == name) {
        Some(slot) => *slot = record,
        None => manifest.stages.push(record),
    }
    manifest.save(dir)?;
    result.map_err(|e| Error::Stage { stage: name.to_string(), source: Box::new(e) })
}

/// Which splits and models a train or evaluate stage covers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Selection {
    pub split_id: Option<usize>,
    /// A learner family, or `baseline` for the baselines only.
    pub model_family: Option<String>,
}

impl Selection {
    fn plans<'a>(&self, plans: &'a [SplitPlan]) -> Result<Vec<&'a SplitPlan>> {
        let picked: Vec<&SplitPlan> = plans.iter().filter(|p| self.split_id.is_none_or(|id| p.id == id)).collect();
        if picked.is_empty() {
            return Err(Error::Config(format!("no split with id {:?}", self.split_id)));
        }
        Ok(picked)
    }

    fn rankers(&self, cfg: &ExperimentConfig) -> Result<Vec<Ranker>> {
        let (learners, baselines) = match self.model_family.as_deref() {
            None => (cfg.learner_specs(None)?, cfg.baseline_specs()?),
            Some(f) if f.eq_ignore_ascii_case("baseline") || f.eq_ignore_ascii_case("baselines") => {
                (Vec::new(), cfg.baseline_specs()?)
            }
            Some(f) => (cfg.learner_specs(Some(Family::parse(f)?))?, Vec::new()),
        };
        let mut out: Vec<Ranker> = learners.into_iter().map(Ranker::Model).collect();
        out.extend(baselines.into_iter().map(Ranker::Baseline));
        Ok(out)
    }
}

/// Simulates the population and writes it as CSV plus the ground truth.
pub fn generate(cfg: &ExperimentConfig, io: &mut StageIo<'_>) -> Result<(EventLog, GroundTruth)> {
    let (log, truth) = simulate(&cfg.population_config())?;
    let data = io.output(&io.dir.data())?;
    write_event_log(&log, &data)?;
    write_ground_truth(&truth, &io.output(&io.dir.ground_truth())?)?;
    Ok((log, truth))
}

/// Loads an event log directory (the run's own data by default), writes the
/// ingest report and, for external input, a normalized copy into the run.
pub fn ingest(source: Option<&Path>, io: &mut StageIo<'_>) -> Result<(EventLog, IngestReport)> {
    let own = io.dir.data();
    let from = io.input(source.unwrap_or(&own));
    let (log, report) = read_event_log(&from)?;
    if from != own {
        write_event_log(&log, &io.output(&own)?)?;
    }
    fs::write(io.output(&io.dir.ingest_report())?, toml::to_string(&report)?)?;
    Ok((log, report))
}

/// The ingested log, for stages after ingest.
pub fn load_log(io: &mut StageIo<'_>) -> Result<EventLog> {
    let data = io.input(&io.dir.data());
    Ok(read_event_log(&data)?.0)
}

pub fn plan(cfg: &ExperimentConfig, log: &EventLog, io: &mut StageIo<'_>) -> Result<Vec<SplitPlan>> {
    let start = log.earliest_knowledge_date().ok_or_else(|| Error::InsufficientRange("event log is empty".into()))?;
    let plans = plan_splits(start, log.horizon(), &cfg.split_params())?;
    write_plans(&plans, &io.output(&io.dir.plans())?)?;
    Ok(plans)
}

pub fn load_plans(io: &mut StageIo<'_>) -> Result<Vec<SplitPlan>> {
    let path = io.input(&io.dir.plans());
    read_plans(&path)
}

/// Fits every selected learner on each selected split and writes models and
/// full ranked predictions; baselines only write predictions.
pub fn train(
    cfg: &ExperimentConfig,
    log: &EventLog,
    plans: &[SplitPlan],
    sel: &Selection,
    io: &mut StageIo<'_>,
) -> Result<usize> {
    let rankers = sel.rankers(cfg)?;
    let mut written = 0;
    for plan in sel.plans(plans)? {
        let learners: Vec<_> = rankers.iter().filter_map(|r| if let Ranker::Model(m) = r { Some(m) } else { None }).collect();
        let (rows, train) = if learners.is_empty() {
            (eval_rows(plan, log, &cfg.cohort)?, None)
        } else {
            let data = materialize(plan, log, &cfg.cohort, &cfg.features)?;
            if cfg.save_matrices {
                let dir = io.dir.matrices(plan.id);
                write_matrix(&data.train, &io.output(&dir.join("train.csv"))?)?;
                write_matrix(&data.eval, &io.output(&dir.join("eval.csv"))?)?;
            }
            (data.eval.rows.clone(), Some(data))
        };
        let scored: Vec<Result<(String, Vec<f64>, Option<crate::learners::FittedModel>)>> = rankers
            .par_iter()
            .map(|r| match r {
                Ranker::Model(spec) => {
                    let data = train.as_ref().expect("matrices exist when learners are selected");
                    let model = fit(spec, &data.train)?;
                    let scores = score(&model, &data.eval)?;
                    Ok((spec.id(), scores, Some(model)))
                }
                Ranker::Baseline(spec) => Ok((spec.kind.id().to_string(), baseline_score(spec, &rows, log)?, None)),
            })
            .collect();
        for item in scored {
            let (id, scores, model) = item?;
            if let Some(model) = model {
                model.save(&io.output(&io.dir.model(plan.id, &id))?)?;
            }
            let list = rank_and_cut(&rows, &scores, cfg.k, cfg.seed)?;
            write_predictions(&list, &rows, &io.output(&io.dir.predictions(plan.id, &id))?)?;
            written += 1;
        }
    }
    Ok(written)
}

/// Re-ranks saved predictions against the labeled evaluation cohort and
/// writes one report per split and model.
pub fn evaluate(
    cfg: &ExperimentConfig,
    log: &EventLog,
    plans: &[SplitPlan],
    sel: &Selection,
    io: &mut StageIo<'_>,
) -> Result<Vec<EvalReport>> {
    let ids: Vec<String> = sel.rankers(cfg)?.iter().map(Ranker::id).collect();
    let mut reports = Vec::new();
    for plan in sel.plans(plans)? {
        let rows = eval_rows(plan, log, &cfg.cohort)?;
        for id in &ids {
            let preds = read_predictions(&io.input(&io.dir.predictions(plan.id, id)))?;
            let scores = scores_from_predictions(&preds, &rows)?;
            let list = rank_and_cut(&rows, &scores, cfg.k, cfg.seed)?;
            let report = evaluate_list(&list, &rows, plan.id, id, plan.eval_as_of, plan.moratorium_overlap)?;
            write_report(&report, &io.output(&io.dir.report(plan.id, id))?)?;
            reports.push(report);
        }
    }
    Ok(reports)
}

/// Collects every expected report into the per-split table, the
/// model-selection summary and the plot data.
pub fn report(cfg: &ExperimentConfig, plans: &[SplitPlan], io: &mut StageIo<'_>) -> Result<Vec<ModelSummary>> {
    let ids: Vec<String> = Selection::default().rankers(cfg)?.iter().map(Ranker::id).collect();
    let mut reports = Vec::new();
    for plan in plans {
        for id in &ids {
            reports.push(read_report(&io.input(&io.dir.report(plan.id, id)))?);
        }
    }
    write_reports_csv(&reports, &io.output(&io.dir.reports_csv())?)?;
    write_plot_data(&reports, &io.output(&io.dir.plot_data())?)?;
    let summary = select_model(&reports, cfg.exclude_moratorium)?;
    write_summary(&summary, &io.output(&io.dir.summary())?)?;
    Ok(summary)
}

fn freeze(log: &EventLog, date: NaiveDate, ranker: &Ranker, cfg: &ExperimentConfig) -> Result<FrozenList> {
    match ranker {
        Ranker::Model(spec) => freeze_list(log, date, spec, &cfg.shadow_config()),
        Ranker::Baseline(spec) => freeze_baseline(log, date, spec, &cfg.shadow_config()),
    }
}

/// Freezes a list at each configured date and scores it once outcomes are in.
pub fn shadow(cfg: &ExperimentConfig, log: &EventLog, io: &mut StageIo<'_>) -> Result<Vec<ShadowRun>> {
    let ranker = cfg.ranker(&cfg.shadow.model)?;
    let mut runs = Vec::new();
    for &date in &cfg.shadow.freeze_dates {
        let needed = add_months(date, cfg.shadow.horizon_months);
        if needed > log.horizon() {
            return Err(Error::LabelHorizon { needed, horizon: log.horizon() });
        }
        let run = score_frozen(&freeze(log, date, &ranker, cfg)?, log, &cfg.shadow_config())?;
        fs::write(io.output(&io.dir.shadow(date, &run.model_id))?, toml::to_string(&run)?)?;
        runs.push(run);
    }
    Ok(runs)
}

/// Builds the configured trial arms. Ranked arms enroll from lists frozen
/// every `list_cadence_months` inside the enrollment window.
pub fn rct_arms(cfg: &ExperimentConfig, log: &EventLog, truth: &GroundTruth) -> Result<Vec<Arm>> {
    let (from, to) = (cfg.rct.from, cfg.rct.to);
    cfg.rct
        .arms
        .iter()
        .map(|name| match name.as_str() {
            "current" => Ok(applicant_arm(truth, from, to)),
            "all_filings" => Ok(all_filings_arm(truth, from, to)),
            other => {
                let ranker = cfg.ranker(other)?;
                let mut dates = Vec::new();
                let mut d = from;
                while d < to {
                    dates.push(d);
                    d = add_months(d, cfg.rct.list_cadence_months);
                }
                let lists = dates
                    .par_iter()
                    .map(|&d| {
                        let f = freeze(log, d, &ranker, cfg)?;
                        Ok((d, f.list.selected().iter().map(|e| (e.person, e.score)).collect()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(ranked_arm(other, truth, &lists, cfg.cohort.filing_lookback_months, cfg.seed))
            }
        })
        .collect()
}

/// Re-simulates the population (the ground truth never leaves the
/// generator), builds the arms and replicates the trial.
pub fn rct(cfg: &ExperimentConfig, io: &mut StageIo<'_>) -> Result<Vec<RctReport>> {
    let (log, truth) = simulate(&cfg.population_config())?;
    let arms = rct_arms(cfg, &log, &truth)?;
    let design = RctDesign { treatment_fraction: cfg.rct.treatment_fraction, assignment: cfg.rct.assignment, seed: cfg.seed };
    let reports = replicate_rct(&truth, &arms, &design, cfg.rct.replications.max(1))?;
    let dir = io.dir.rct();
    write_rct_report(&reports[0], &io.output(&dir.join("report.toml"))?)?;
    write_replications(&reports, &io.output(&dir.join("replications.csv"))?)?;
    Ok(reports)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: RunDir,
    pub plans: Vec<SplitPlan>,
    pub reports: Vec<EvalReport>,
    pub summary: Vec<ModelSummary>,
}

/// generate → ingest → plan-splits → train → evaluate → report into
/// `cfg.out_dir`, replacing any earlier manifest. Stops at the first failing
/// stage; everything written before it stays in place.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let dir = RunDir::new(&cfg.out_dir);
    let mut manifest = RunManifest::new(cfg)?;
    run_stage(&mut manifest, &dir, "config", |io| {
        cfg.validate()?;
        Ok(fs::write(io.output(&dir.config())?, cfg.to_toml()?)?)
    })?;
    run_stage(&mut manifest, &dir, "generate", |io| generate(cfg, io))?;
    let (log, _) = run_stage(&mut manifest, &dir, "ingest", |io| ingest(None, io))?;
    let plans = run_stage(&mut manifest, &dir, "plan-splits", |io| plan(cfg, &log, io))?;
    let sel = Selection::default();
    run_stage(&mut manifest, &dir, "train", |io| train(cfg, &log, &plans, &sel, io))?;
    let reports = run_stage(&mut manifest, &dir, "evaluate", |io| evaluate(cfg, &log, &plans, &sel, io))?;
    let summary = run_stage(&mut manifest, &dir, "report", |io| report(cfg, &plans, io))?;
    Ok(RunOutcome { dir, plans, reports, summary })
}
