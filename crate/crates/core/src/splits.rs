//! Temporal validation: evaluation dates stepping back from the end of the
//! data, each with a stack of earlier training as-of dates whose label
//! windows all close by the evaluation date.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::cohort::{build_cohort, label_cohort, CohortRow, CohortSpec};
use crate::dates::{add_months, sub_months};
use crate::error::{Error, Result};
use crate::features::{build_matrix, FeatureMatrix, FeatureSpec};
use crate::store::EventLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitParams {
    /// Number of evaluation dates; all that fit when absent.
    pub n_splits: Option<usize>,
    /// Months between consecutive evaluation dates.
    pub split_cadence_months: u32,
    pub label_span_months: u32,
    /// Months between stacked training as-of dates.
    pub cadence_months: u32,
    /// Earliest training as-of date; the data start when absent.
    pub train_start: Option<NaiveDate>,
    /// Keep only the most recent training as-of dates.
    pub max_train_as_ofs: Option<usize>,
    /// Months before an evaluation date that count toward its cohort, used
    /// for the moratorium flag.
    pub cohort_lookback_months: u32,
    pub moratorium: Option<(NaiveDate, NaiveDate)>,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams {
            n_splits: None,
            split_cadence_months: 3,
            label_span_months: 12,
            cadence_months: 3,
            train_start: None,
            max_train_as_ofs: None,
            cohort_lookback_months: 4,
            moratorium: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub id: usize,
    pub eval_as_of: NaiveDate,
    /// Descending.
    pub train_as_ofs: Vec<NaiveDate>,
    pub label_span_months: u32,
    pub cadence_months: u32,
    /// The evaluation cohort or its label window overlaps the moratorium.
    pub moratorium_overlap: bool,
}

impl SplitPlan {
    /// Label window `[as_of, as_of + span)` of the latest training date.
    pub fn latest_training_timespan(&self) -> Option<(NaiveDate, NaiveDate)> {
        self.train_as_ofs.first().map(|&t| (t, add_months(t, self.label_span_months)))
    }
}

/// Lays out evaluation dates ending one label span before `data_end`,
/// oldest first.
pub fn plan_splits(data_start: NaiveDate, data_end: NaiveDate, params: &SplitParams) -> Result<Vec<SplitPlan>> {
    let span = params.label_span_months;
    if span == 0 || params.cadence_months == 0 || params.split_cadence_months == 0 {
        return Err(Error::Config("split durations must be > 0".into()));
    }
    if add_months(data_start, 2 * span) > data_end {
        return Err(Error::InsufficientRange(format!(
            "{data_start}..{data_end} is shorter than two {span}-month label spans"
        )));
    }
    let train_start = params.train_start.unwrap_or(data_start).max(data_start);
    let last_eval = sub_months(data_end, span);
    let mut plans = Vec::new();
    for j in 0u32.. {
        if params.n_splits.is_some_and(|n| j as usize >= n) {
            break;
        }
        let eval_as_of = sub_months(last_eval, j * params.split_cadence_months);
        match plan_for(eval_as_of, train_start, params) {
            Some(plan) => plans.push(plan),
            None => break,
        }
    }
    if plans.is_empty() {
        return Err(Error::InsufficientRange("no evaluation date leaves room for training".into()));
    }
    plans.reverse();
    for (i, p) in plans.iter_mut().enumerate() {
        p.id = i;
    }
    Ok(plans)
}

/// The plan for a single evaluation date, or `None` if no training as-of
/// date fits between `train_start` and `eval_as_of`.
pub fn plan_for(eval_as_of: NaiveDate, train_start: NaiveDate, params: &SplitParams) -> Option<SplitPlan> {
    let span = params.label_span_months;
    let mut train_as_ofs = Vec::new();
    for i in 0.. {
        let t = sub_months(eval_as_of, span + i * params.cadence_months);
        if t < train_start || params.max_train_as_ofs.is_some_and(|m| train_as_ofs.len() >= m) {
            break;
        }
        train_as_ofs.push(t);
    }
    if train_as_ofs.is_empty() {
        return None;
    }
    let moratorium_overlap = params.moratorium.is_some_and(|(ms, me)| {
        let from = sub_months(eval_as_of, params.cohort_lookback_months);
        let to = add_months(eval_as_of, span);
        from < me && ms <= to
    });
    Some(SplitPlan {
        id: 0,
        eval_as_of,
        train_as_ofs,
        label_span_months: span,
        cadence_months: params.cadence_months,
        moratorium_overlap,
    })
}

#[derive(Debug, Clone)]
pub struct SplitData {
    pub plan: SplitPlan,
    pub train: FeatureMatrix,
    pub eval: FeatureMatrix,
}

/// Labeled training rows for one plan. Rows, labels and features all come
/// through the view at the evaluation date, so nothing recorded later can
/// reach training.
pub fn training_rows(plan: &SplitPlan, log: &EventLog, cohort: &CohortSpec) -> Result<Vec<CohortRow>> {
    let known = log.as_of(plan.eval_as_of);
    let mut rows = Vec::new();
    for &t in &plan.train_as_ofs {
        let cohort_rows = build_cohort(&known.narrow(t)?, cohort)?;
        rows.extend(label_cohort(&cohort_rows, &known, cohort)?);
    }
    Ok(rows)
}

/// Evaluation rows, labeled from the full log.
pub fn eval_rows(plan: &SplitPlan, log: &EventLog, cohort: &CohortSpec) -> Result<Vec<CohortRow>> {
    let rows = build_cohort(&log.as_of(plan.eval_as_of), cohort)?;
    label_cohort(&rows, &log.full_view(), cohort)
}

pub fn materialize(plan: &SplitPlan, log: &EventLog, cohort: &CohortSpec, features: &FeatureSpec) -> Result<SplitData> {
    let train_rows = training_rows(plan, log, cohort)?;
    let train = build_matrix(&train_rows, &log.as_of(plan.eval_as_of), features)?;
    let eval = build_matrix(&eval_rows(plan, log, cohort)?, log, features)?;
    Ok(SplitData { plan: plan.clone(), train, eval })
}

#[derive(Serialize)]
struct PlanFile<'a> {
    split: &'a [SplitPlan],
}

/// Writes every plan with all of its dates as TOML, for audit.
pub fn write_plans(plans: &[SplitPlan], path: &Path) -> Result<()> {
    std::fs::write(path, toml::to_string(&PlanFile { split: plans })?)?;
    Ok(())
}

#[derive(Deserialize)]
struct PlanFileOwned {
    split: Vec<SplitPlan>,
}

pub fn read_plans(path: &Path) -> Result<Vec<SplitPlan>> {
    if !path.exists() {
        return Err(Error::MissingArtifact { what: "split plans".into(), path: path.display().to_string() });
    }
    Ok(toml::from_str::<PlanFileOwned>(&std::fs::read_to_string(path)?)?.split)
}
