//! Field validation on simulated data: shadow-mode replay of a frozen list,
//! and randomized trials whose outcomes come from the generator's
//! counterfactual branches.

use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{hash_unit, BaselineSpec};
use crate::cohort::{build_cohort, label_cohort, CohortRow, CohortSpec};
use crate::dates::{add_days, add_months, sub_months};
use crate::error::{Error, Result};
use crate::evaluate::{rank_and_cut, RankedList};
use crate::features::{build_matrix, FeatureSpec};
use crate::learners::{fit, score, ModelSpec};
use crate::metric::Metric;
use crate::splits::{plan_for, training_rows, SplitParams};
use crate::store::{EventLog, Gender, PersonId, Race};
use crate::synthgen::{sub_seed, Episode, GroundTruth};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowConfig {
    pub k: usize,
    pub horizon_months: u32,
    pub tie_seed: u64,
    pub cohort: CohortSpec,
    pub features: FeatureSpec,
    /// Training cadence and limits; the evaluation date is the freeze date.
    pub split: SplitParams,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        ShadowConfig {
            k: 100,
            horizon_months: 12,
            tie_seed: 0,
            cohort: CohortSpec::default(),
            features: FeatureSpec::default(),
            split: SplitParams::default(),
        }
    }
}

/// A list produced on the freeze date and never changed afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenList {
    pub freeze_date: NaiveDate,
    pub model_id: String,
    /// The whole cohort at the freeze date, unlabeled.
    pub rows: Vec<CohortRow>,
    pub list: RankedList,
}

impl FrozenList {
    pub fn from_scores(freeze_date: NaiveDate, model_id: &str, rows: Vec<CohortRow>, scores: &[f64], k: usize, tie_seed: u64) -> Result<FrozenList> {
        let list = rank_and_cut(&rows, scores, k, tie_seed)?;
        Ok(FrozenList { freeze_date, model_id: model_id.to_string(), rows, list })
    }

    pub fn selected_persons(&self) -> Vec<PersonId> {
        self.list.selected().iter().map(|e| e.person).collect()
    }
}

/// Trains on every training as-of date that fits before `freeze_date`,
/// then ranks the cohort at `freeze_date`. Reads nothing known after it.
pub fn freeze_list(log: &EventLog, freeze_date: NaiveDate, spec: &ModelSpec, cfg: &ShadowConfig) -> Result<FrozenList> {
    let known = log.truncated(freeze_date);
    let start = known.earliest_knowledge_date().unwrap_or(freeze_date);
    let train_start = cfg.split.train_start.unwrap_or(start).max(start);
    let plan = plan_for(freeze_date, train_start, &cfg.split)
        .ok_or_else(|| Error::InsufficientRange(format!("no training data fits before {freeze_date}")))?;
    let view = known.as_of(freeze_date);
    let train_rows = training_rows(&plan, &known, &cfg.cohort)?;
    let train = build_matrix(&train_rows, &view, &cfg.features)?;
    let model = fit(spec, &train)?;
    let rows = build_cohort(&view, &cfg.cohort)?;
    let scores = score(&model, &build_matrix(&rows, &view, &cfg.features)?)?;
    FrozenList::from_scores(freeze_date, &spec.id(), rows, &scores, cfg.k, cfg.tie_seed)
}

/// Like [`freeze_list`] for a heuristic baseline.
pub fn freeze_baseline(log: &EventLog, freeze_date: NaiveDate, spec: &BaselineSpec, cfg: &ShadowConfig) -> Result<FrozenList> {
    let known = log.truncated(freeze_date);
    let view = known.as_of(freeze_date);
    let rows = build_cohort(&view, &cfg.cohort)?;
    let scores = crate::baselines::baseline_score(spec, &rows, &view)?;
    FrozenList::from_scores(freeze_date, spec.kind.id(), rows, &scores, cfg.k, cfg.tie_seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowEntry {
    pub person: PersonId,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowRun {
    pub freeze_date: NaiveDate,
    pub model_id: String,
    pub k: usize,
    pub horizon_months: u32,
    pub cohort_size: usize,
    pub frozen: Vec<ShadowEntry>,
    pub true_positives: usize,
    pub precision_at_k: f64,
    pub baserate: Metric,
    /// Listed persons who received rental assistance anyway.
    pub recipient_overlap: usize,
    pub missed_group_size: usize,
    /// Listed persons from the missed group.
    pub missed_found: usize,
}

/// Scores a frozen list once its outcomes have matured in `log`.
pub fn score_frozen(frozen: &FrozenList, log: &EventLog, cfg: &ShadowConfig) -> Result<ShadowRun> {
    let cohort = CohortSpec { label_span_months: cfg.horizon_months, ..cfg.cohort.clone() };
    let labeled = label_cohort(&frozen.rows, &log.full_view(), &cohort)?;
    let selected = frozen.list.selected();
    let tp = selected.iter().filter(|e| labeled[e.row].label == Some(true)).count();
    let positives = labeled.iter().filter(|r| r.label == Some(true)).count();
    Ok(ShadowRun {
        freeze_date: frozen.freeze_date,
        model_id: frozen.model_id.clone(),
        k: frozen.list.k,
        horizon_months: cfg.horizon_months,
        cohort_size: labeled.len(),
        frozen: selected.iter().map(|e| ShadowEntry { person: e.person, score: e.score, rank: e.rank }).collect(),
        true_positives: tp,
        precision_at_k: tp as f64 / frozen.list.k as f64,
        baserate: Metric::ratio(positives as f64, labeled.len() as f64, "empty cohort"),
        recipient_overlap: selected.iter().filter(|e| labeled[e.row].served.received_assistance).count(),
        missed_group_size: labeled.iter().filter(|r| r.missed()).count(),
        missed_found: selected.iter().filter(|e| labeled[e.row].missed()).count(),
    })
}

/// Freezes a model's list at `freeze_date` and scores it after the horizon.
pub fn run_shadow(log: &EventLog, freeze_date: NaiveDate, spec: &ModelSpec, cfg: &ShadowConfig) -> Result<ShadowRun> {
    let needed = add_months(freeze_date, cfg.horizon_months);
    if needed > log.horizon() {
        return Err(Error::LabelHorizon { needed, horizon: log.horizon() });
    }
    score_frozen(&freeze_list(log, freeze_date, spec, cfg)?, log, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    /// Exactly `round(fraction * n)` candidates per arm, chosen at random.
    PureRandom,
    /// Each calendar day funding is available with probability `fraction`;
    /// candidates contacted on other days form the control group.
    QuasiRandomFundingDays,
}

/// One enrolled person: the eviction episode they were enrolled for, the
/// day they were contacted, and the ranking score if one was used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub episode: usize,
    pub person: PersonId,
    pub contact: NaiveDate,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RctDesign {
    pub treatment_fraction: f64,
    pub assignment: Assignment,
    pub seed: u64,
}

/// Episodes whose filing falls in `[from, to)`.
fn episodes_between(truth: &GroundTruth, from: NaiveDate, to: NaiveDate) -> impl Iterator<Item = &Episode> {
    truth.episodes.iter().filter(move |e| e.filing.event_start >= from && e.filing.event_start < to)
}

/// The current process: tenants who applied for assistance, contacted on
/// their application day.
pub fn applicant_arm(truth: &GroundTruth, from: NaiveDate, to: NaiveDate) -> Arm {
    let candidates = episodes_between(truth, from, to)
        .filter_map(|e| e.application.map(|d| Candidate { episode: e.id, person: e.person, contact: d, score: None }))
        .collect();
    Arm { name: "current".into(), candidates }
}

/// Every filing in the window, contacted on the filing day.
pub fn all_filings_arm(truth: &GroundTruth, from: NaiveDate, to: NaiveDate) -> Arm {
    let candidates = episodes_between(truth, from, to)
        .map(|e| Candidate { episode: e.id, person: e.person, contact: e.filing.event_start, score: None })
        .collect();
    Arm { name: "all_filings".into(), candidates }
}

/// Candidates from ranked lists: each selected person is enrolled for
/// their latest filing on or before the list date and contacted within 30
/// days of it. Persons already enrolled by an earlier list are skipped.
pub fn ranked_arm(name: &str, truth: &GroundTruth, lists: &[(NaiveDate, Vec<(PersonId, f64)>)], lookback_months: u32, seed: u64) -> Arm {
    let mut seen = std::collections::HashSet::new();
    let mut candidates = Vec::new();
    for (as_of, selected) in lists {
        let from = sub_months(*as_of, lookback_months);
        for &(person, score) in selected {
            let Some(e) = truth
                .episodes_of(person)
                .iter()
                .rev()
                .find(|e| e.filing.event_start > from && e.filing.event_start <= *as_of)
            else {
                continue;
            };
            if seen.insert(e.id) {
                let offset = (hash_unit(seed, person, *as_of) * 30.0) as i64;
                candidates.push(Candidate { episode: e.id, person, contact: add_days(*as_of, offset), score: Some(score) });
            }
        }
    }
    Arm { name: name.to_string(), candidates }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub se: f64,
}

impl Estimate {
    /// Difference of two proportions with the unpooled (Neyman) standard error.
    pub fn difference(y1: &[bool], y0: &[bool]) -> Estimate {
        let rate = |y: &[bool]| y.iter().filter(|&&v| v).count() as f64 / y.len() as f64;
        let (p1, p0) = (rate(y1), rate(y0));
        Estimate {
            estimate: p1 - p0,
            se: (p1 * (1.0 - p1) / y1.len() as f64 + p0 * (1.0 - p0) / y0.len() as f64).sqrt(),
        }
    }

    pub fn ci95(&self) -> (f64, f64) {
        (self.estimate - 1.96 * self.se, self.estimate + 1.96 * self.se)
    }

    pub fn covers(&self, truth: f64, n_se: f64) -> bool {
        (self.estimate - truth).abs() <= n_se * self.se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    pub quintile: usize,
    pub n_treated: usize,
    pub n_control: usize,
    /// Undefined when either group is empty.
    pub effect: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub name: String,
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub rate_treated: f64,
    pub rate_control: f64,
    /// Treated minus control homelessness rate.
    pub effect: Estimate,
    /// Mean of (treated branch - untreated branch) over the arm's candidates.
    pub true_effect: f64,
    /// `score` when every candidate has one, else `true_risk`.
    pub stratified_by: String,
    pub strata: Vec<StratumReport>,
    /// Mean attributes of the treated and control groups, for balance checks.
    pub balance: Vec<BalanceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub attribute: String,
    pub treated_mean: f64,
    pub control_mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RctReport {
    pub assignment: Assignment,
    pub treatment_fraction: f64,
    pub seed: u64,
    pub arms: Vec<ArmReport>,
    /// Control-group homelessness rate of the second arm minus the first.
    pub efficiency: Option<Estimate>,
}

/// Treatment indicator per candidate.
fn assign(arm: &Arm, design: &RctDesign, arm_index: usize) -> Vec<bool> {
    let n = arm.candidates.len();
    match design.assignment {
        Assignment::PureRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(design.seed, arm_index as u64));
            let n_treated = (design.treatment_fraction * n as f64).round() as usize;
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut treated = vec![false; n];
            for &i in &idx[..n_treated] {
                treated[i] = true;
            }
            treated
        }
        Assignment::QuasiRandomFundingDays => {
            // one draw per calendar day, shared by every arm
            arm.candidates
                .iter()
                .map(|c| {
                    let day = c.contact.signed_duration_since(NaiveDate::default()).num_days() as u64;
                    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(design.seed, day));
                    rng.random::<f64>() < design.treatment_fraction
                })
                .collect()
        }
    }
}

fn balance(arm: &Arm, treated: &[bool], truth: &GroundTruth, episodes: &[&Episode]) -> Vec<BalanceRow> {
    let attrs: [(&str, Box<dyn Fn(&Candidate, &Episode) -> f64>); 4] = [
        ("female", Box::new(|c, _| f64::from(u8::from(truth.person(c.person).is_some_and(|p| p.gender == Gender::Female))))),
        ("black", Box::new(|c, _| f64::from(u8::from(truth.person(c.person).is_some_and(|p| p.race == Race::Black))))),
        ("vulnerability", Box::new(|c, _| truth.person(c.person).map_or(0.0, |p| p.vulnerability))),
        ("true_risk", Box::new(|_, e| e.risk)),
    ];
    attrs
        .iter()
        .map(|(name, f)| {
            let (mut t, mut c): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
            for (i, cand) in arm.candidates.iter().enumerate() {
                let v = f(cand, episodes[i]);
                if treated[i] { t.push(v) } else { c.push(v) }
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let var = |v: &[f64]| {
                let m = mean(v);
                v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0).max(1.0)
            };
            BalanceRow {
                attribute: name.to_string(),
                treated_mean: mean(&t),
                control_mean: mean(&c),
                se: (var(&t) / t.len() as f64 + var(&c) / c.len() as f64).sqrt(),
            }
        })
        .collect()
}

/// One row of the realized outcome table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Realized {
    pub candidate: Candidate,
    pub treated: bool,
    pub homeless: bool,
}

fn episode_by_id(truth: &GroundTruth, id: usize) -> Result<&Episode> {
    truth
        .episodes
        .get(id)
        .filter(|e| e.id == id)
        .or_else(|| truth.episodes.iter().find(|e| e.id == id))
        .ok_or_else(|| Error::Config(format!("episode {id} is not in the ground truth")))
}

/// Assignment and outcome for every candidate of arm number `arm_index`.
pub fn realize(arm: &Arm, arm_index: usize, truth: &GroundTruth, design: &RctDesign) -> Result<Vec<Realized>> {
    let treated = assign(arm, design, arm_index);
    arm.candidates
        .iter()
        .zip(treated)
        .map(|(c, t)| {
            let e = episode_by_id(truth, c.episode)?;
            let homeless = if t { e.homeless_if_treated } else { e.homeless_if_untreated };
            Ok(Realized { candidate: *c, treated: t, homeless })
        })
        .collect()
}

fn arm_report(arm: &Arm, arm_index: usize, truth: &GroundTruth, design: &RctDesign) -> Result<(ArmReport, Vec<bool>)> {
    let episodes: Vec<&Episode> = arm.candidates.iter().map(|c| episode_by_id(truth, c.episode)).collect::<Result<_>>()?;
    let table = realize(arm, arm_index, truth, design)?;
    let treated: Vec<bool> = table.iter().map(|r| r.treated).collect();
    let outcome: Vec<bool> = table.iter().map(|r| r.homeless).collect();
    let split = |keep: &dyn Fn(usize) -> bool| -> (Vec<bool>, Vec<bool>) {
        let (mut y1, mut y0) = (Vec::new(), Vec::new());
        for i in (0..outcome.len()).filter(|&i| keep(i)) {
            if treated[i] { y1.push(outcome[i]) } else { y0.push(outcome[i]) }
        }
        (y1, y0)
    };
    let (y1, y0) = split(&|_| true);
    if y1.is_empty() || y0.is_empty() {
        return Err(Error::EmptyArm(format!(
            "arm {} has {} treated and {} control candidates",
            arm.name,
            y1.len(),
            y0.len()
        )));
    }
    let rate = |y: &[bool]| y.iter().filter(|&&v| v).count() as f64 / y.len() as f64;
    let true_effect = episodes
        .iter()
        .map(|e| f64::from(u8::from(e.homeless_if_treated)) - f64::from(u8::from(e.homeless_if_untreated)))
        .sum::<f64>()
        / episodes.len() as f64;

    let use_score = arm.candidates.iter().all(|c| c.score.is_some());
    let key: Vec<f64> = arm
        .candidates
        .iter()
        .zip(&episodes)
        .map(|(c, e)| if use_score { c.score.unwrap_or_default() } else { e.risk })
        .collect();
    let mut order: Vec<usize> = (0..key.len()).collect();
    order.sort_by(|&a, &b| key[a].total_cmp(&key[b]).then(a.cmp(&b)));
    let mut quintile = vec![0usize; key.len()];
    for (pos, &i) in order.iter().enumerate() {
        quintile[i] = pos * 5 / key.len();
    }
    let strata = (0..5)
        .map(|q| {
            let (s1, s0) = split(&|i| quintile[i] == q);
            StratumReport {
                quintile: q + 1,
                n_treated: s1.len(),
                n_control: s0.len(),
                effect: (!s1.is_empty() && !s0.is_empty()).then(|| Estimate::difference(&s1, &s0)),
            }
        })
        .collect();

    let report = ArmReport {
        name: arm.name.clone(),
        n: outcome.len(),
        n_treated: y1.len(),
        n_control: y0.len(),
        rate_treated: rate(&y1),
        rate_control: rate(&y0),
        effect: Estimate::difference(&y1, &y0),
        true_effect,
        stratified_by: if use_score { "score" } else { "true_risk" }.to_string(),
        strata,
        balance: balance(arm, &treated, truth, &episodes),
    };
    let control_outcomes = (0..outcome.len()).filter(|&i| !treated[i]).map(|i| outcome[i]).collect();
    Ok((report, control_outcomes))
}

/// Assigns treatment within each arm and realizes outcomes from the
/// matching counterfactual branch. With two arms, the efficiency contrast
/// compares their control groups (second minus first).
pub fn simulate_rct(truth: &GroundTruth, arms: &[Arm], design: &RctDesign) -> Result<RctReport> {
    if !(design.treatment_fraction > 0.0 && design.treatment_fraction < 1.0) {
        return Err(Error::Config(format!("treatment fraction {} is not in (0, 1)", design.treatment_fraction)));
    }
    if let Some(a) = arms.iter().find(|a| a.candidates.is_empty()) {
        return Err(Error::EmptyArm(format!("arm {} has no candidates", a.name)));
    }
    let mut reports = Vec::new();
    let mut controls: Vec<Vec<bool>> = Vec::new();
    for (i, arm) in arms.iter().enumerate() {
        let (r, c) = arm_report(arm, i, truth, design)?;
        reports.push(r);
        controls.push(c);
    }
    let efficiency = (arms.len() == 2).then(|| Estimate::difference(&controls[1], &controls[0]));
    Ok(RctReport {
        assignment: design.assignment,
        treatment_fraction: design.treatment_fraction,
        seed: design.seed,
        arms: reports,
        efficiency,
    })
}

/// Independent re-randomizations of the same candidates, seeded from
/// `design.seed` and the replication index.
pub fn replicate_rct(truth: &GroundTruth, arms: &[Arm], design: &RctDesign, replications: usize) -> Result<Vec<RctReport>> {
    (0..replications as u64)
        .into_par_iter()
        .map(|r| simulate_rct(truth, arms, &RctDesign { seed: sub_seed(design.seed, r), ..design.clone() }))
        .collect()
}

pub fn write_rct_report(report: &RctReport, path: &Path) -> Result<()> {
    std::fs::write(path, toml::to_string(report)?)?;
    Ok(())
}

/// One row per replication and arm.
pub fn write_replications(reports: &[RctReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "replication",
        "seed",
        "arm",
        "n_treated",
        "n_control",
        "rate_treated",
        "rate_control",
        "effect",
        "effect_se",
        "true_effect",
        "efficiency",
        "efficiency_se",
    ])?;
    for (i, rep) in reports.iter().enumerate() {
        for a in &rep.arms {
            let eff = |f: fn(&Estimate) -> f64| rep.efficiency.as_ref().map_or(String::new(), |e| f(e).to_string());
            w.write_record([
                i.to_string(),
                rep.seed.to_string(),
                a.name.clone(),
                a.n_treated.to_string(),
                a.n_control.to_string(),
                a.rate_treated.to_string(),
                a.rate_control.to_string(),
                a.effect.estimate.to_string(),
                a.effect.se.to_string(),
                a.true_effect.to_string(),
                eff(|e| e.estimate),
                eff(|e| e.se),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
