//! Top-k selection and the metrics computed on it: precision and recall at
//! k, group true-positive-rate ratios, recall within the missed group and
//! within prior/first-time subgroups, follow-up of false positives, and
//! cross-split model selection.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::cohort::CohortRow;
use crate::dates::add_months;
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::store::{EventLog, Gender, Kind, PersonId, Race, Source};
use crate::synthgen::sub_seed;

pub const DEFAULT_K: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    /// Index into the cohort rows the list was built from.
    pub row: usize,
    pub person: PersonId,
    pub score: f64,
    /// 1-based, unique.
    pub rank: usize,
}

/// Every cohort row in rank order; the first `k` are the selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub k: usize,
    pub tie_seed: u64,
    /// Rows sharing the score of the k-th entry, on either side of the cut.
    pub tie_count: usize,
    pub entries: Vec<Ranked>,
}

impl RankedList {
    pub fn selected(&self) -> &[Ranked] {
        &self.entries[..self.k]
    }

    /// Row indices of the selection.
    pub fn selected_rows(&self) -> Vec<usize> {
        self.selected().iter().map(|e| e.row).collect()
    }

    /// The same ranking cut at a different `k`.
    pub fn with_k(&self, k: usize) -> Result<RankedList> {
        let n = self.entries.len();
        if k == 0 || k > n {
            return Err(Error::KTooLarge { k, n });
        }
        let boundary = self.entries[k - 1].score;
        let tie_count = self.entries.iter().filter(|e| e.score == boundary).count();
        Ok(RankedList { k, tie_count, ..self.clone() })
    }
}

fn tie_key(seed: u64, person: PersonId) -> u64 {
    sub_seed(seed, person.0)
}

/// Sorts by descending score; equal scores are ordered by a seeded hash of
/// the person id, then by the id itself.
pub fn rank_and_cut(rows: &[CohortRow], scores: &[f64], k: usize, tie_seed: u64) -> Result<RankedList> {
    let n = scores.len();
    if rows.len() != n {
        return Err(Error::Config(format!("{} scores for {} cohort rows", n, rows.len())));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Config(format!("score {bad} is not finite")));
    }
    if k == 0 || k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| tie_key(tie_seed, rows[a].person).cmp(&tie_key(tie_seed, rows[b].person)))
            .then_with(|| rows[a].person.cmp(&rows[b].person))
            .then_with(|| a.cmp(&b))
    });
    let entries = order
        .into_iter()
        .enumerate()
        .map(|(i, row)| Ranked { row, person: rows[row].person, score: scores[row], rank: i + 1 })
        .collect();
    RankedList { k, tie_seed, tie_count: 0, entries }.with_k(k)
}

fn labels(rows: &[CohortRow]) -> Result<Vec<bool>> {
    rows.iter()
        .map(|r| r.label.ok_or_else(|| Error::Config(format!("person {} at {} has no label", r.person, r.as_of))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub true_positives: usize,
    pub positives: usize,
    pub precision: f64,
    /// Undefined when the cohort has no positives.
    pub recall: Metric,
}

pub fn precision_recall_at_k(list: &RankedList, rows: &[CohortRow]) -> Result<PrecisionRecall> {
    let y = labels(rows)?;
    let tp = list.selected().iter().filter(|e| y[e.row]).count();
    let positives = y.iter().filter(|&&l| l).count();
    Ok(PrecisionRecall {
        true_positives: tp,
        positives,
        precision: tp as f64 / list.k as f64,
        recall: Metric::ratio(tp as f64, positives as f64, "no positives in cohort"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Race(Race),
    Gender(Gender),
}

impl Group {
    pub fn contains(self, row: &CohortRow) -> bool {
        match self {
            Group::Race(r) => row.group.race == r,
            Group::Gender(g) => row.group.gender == g,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Race(r) => r.slug(),
            Group::Gender(g) => g.slug(),
        }
    }
}

/// Vulnerable group over reference group.
pub fn default_fairness_pairs() -> Vec<(Group, Group)> {
    vec![
        (Group::Race(Race::Black), Group::Race(Race::White)),
        (Group::Gender(Gender::Female), Group::Gender(Gender::Male)),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessRatio {
    pub numerator: String,
    pub denominator: String,
    pub tpr_numerator: Metric,
    pub tpr_denominator: Metric,
    pub ratio: Metric,
    /// For race, a ratio of at least one is the desired direction.
    pub note: String,
}

/// Selection rate among the positives of each group (true positive rate),
/// and the ratio of the two rates for each pair.
pub fn fairness_ratios(list: &RankedList, rows: &[CohortRow], pairs: &[(Group, Group)]) -> Result<Vec<FairnessRatio>> {
    let y = labels(rows)?;
    let mut selected = vec![false; rows.len()];
    for e in list.selected() {
        selected[e.row] = true;
    }
    let tpr = |g: Group| {
        let (mut pos, mut hit) = (0usize, 0usize);
        for (i, r) in rows.iter().enumerate() {
            if y[i] && g.contains(r) {
                pos += 1;
                hit += usize::from(selected[i]);
            }
        }
        Metric::ratio(hit as f64, pos as f64, &format!("no positives in group {}", g.name()))
    };
    Ok(pairs
        .iter()
        .map(|&(a, b)| {
            let (ta, tb) = (tpr(a), tpr(b));
            let ratio = match (&ta, &tb) {
                (Metric::Value(x), Metric::Value(y)) => {
                    Metric::ratio(*x, *y, &format!("no selected positives in group {}", b.name()))
                }
                (Metric::Undefined(why), _) | (_, Metric::Undefined(why)) => Metric::Undefined(why.clone()),
            };
            let note = match (a, ratio.value()) {
                (Group::Race(_), Some(r)) if r >= 1.0 => "meets desired direction",
                (Group::Race(_), Some(_)) => "below desired direction",
                _ => "",
            };
            FairnessRatio {
                numerator: a.name().to_string(),
                denominator: b.name().to_string(),
                tpr_numerator: ta,
                tpr_denominator: tb,
                ratio,
                note: note.to_string(),
            }
        })
        .collect())
}

/// Share of the missed group (positives who neither applied nor received
/// assistance) that the selection reaches.
pub fn missed_group_recall(list: &RankedList, rows: &[CohortRow]) -> Result<Metric> {
    let y = labels(rows)?;
    let missed = |i: usize| y[i] && !rows[i].served.applied && !rows[i].served.received_assistance;
    let total = (0..rows.len()).filter(|&i| missed(i)).count();
    let found = list.selected().iter().filter(|e| missed(e.row)).count();
    Ok(Metric::ratio(found as f64, total as f64, "empty missed group"))
}

/// Recall among positives with and without homelessness history before the
/// as-of date.
pub fn subgroup_recall(list: &RankedList, rows: &[CohortRow]) -> Result<(Metric, Metric)> {
    let y = labels(rows)?;
    let recall = |prior: bool| {
        let in_group = |i: usize| y[i] && rows[i].group.prior_homelessness == prior;
        let total = (0..rows.len()).filter(|&i| in_group(i)).count();
        let found = list.selected().iter().filter(|e| in_group(e.row)).count();
        let why = if prior { "no positives with prior homelessness" } else { "no first-time positives" };
        Metric::ratio(found as f64, total as f64, why)
    };
    Ok((recall(true), recall(false)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowupRow {
    pub horizon_months: u32,
    /// Homelessness services used after the label window and by the horizon.
    pub homelessness_after_label: Metric,
    /// Mental-health crisis contacts after the as-of date and by the horizon.
    pub mental_health_crisis: Metric,
    /// New eviction filings after the as-of date and by the horizon.
    pub further_filings: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowupReport {
    pub false_positives: usize,
    pub rows: Vec<FollowupRow>,
}

/// Later outcomes of the selected persons whose label was negative.
pub fn false_positive_followup(
    list: &RankedList,
    rows: &[CohortRow],
    log: &EventLog,
    label_span_months: u32,
    horizons_months: &[u32],
) -> Result<FollowupReport> {
    let y = labels(rows)?;
    let fps: Vec<&CohortRow> = list.selected().iter().filter(|e| !y[e.row]).map(|e| &rows[e.row]).collect();
    for &h in horizons_months {
        if h < label_span_months {
            return Err(Error::Config(format!("horizon {h} months is inside the {label_span_months}-month label window")));
        }
        for r in &fps {
            let needed = add_months(r.as_of, h);
            if needed > log.horizon() {
                return Err(Error::LabelHorizon { needed, horizon: log.horizon() });
            }
        }
    }
    if fps.is_empty() {
        return Ok(FollowupReport { false_positives: 0, rows: Vec::new() });
    }
    let view = log.full_view();
    let any = |r: &CohortRow, src: Source, from: NaiveDate, to: NaiveDate, pred: &dyn Fn(Option<Kind>) -> bool| -> Result<bool> {
        Ok(view.query_events(r.person, src, from, to)?.iter().any(|e| pred(e.attrs.kind)))
    };
    let n = fps.len() as f64;
    let mut out = Vec::new();
    for &h in horizons_months {
        let (mut hl, mut mh, mut ev) = (0usize, 0usize, 0usize);
        for r in &fps {
            let after = r.as_of.succ_opt().expect("date in range");
            let end = add_months(r.as_of, h);
            let label_end = add_months(r.as_of, label_span_months).succ_opt().expect("date in range");
            hl += usize::from(label_end <= end && any(r, Source::HomelessnessService, label_end, end, &|_| true)?);
            mh += usize::from(any(r, Source::MentalBehavioralHealth, after, end, &|k| k == Some(Kind::Crisis))?);
            ev += usize::from(any(r, Source::Eviction, after, end, &|_| true)?);
        }
        out.push(FollowupRow {
            horizon_months: h,
            homelessness_after_label: Metric::Value(hl as f64 / n),
            mental_health_crisis: Metric::Value(mh as f64 / n),
            further_filings: Metric::Value(ev as f64 / n),
        });
    }
    Ok(FollowupReport { false_positives: fps.len(), rows: out })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split_id: usize,
    pub model_id: String,
    pub eval_as_of: NaiveDate,
    pub moratorium: bool,
    pub k: usize,
    pub tie_count: usize,
    pub cohort_size: usize,
    pub positives: usize,
    pub baserate: Metric,
    pub true_positives: usize,
    pub precision_at_k: f64,
    pub recall_at_k: Metric,
    pub missed_group_size: usize,
    pub missed_group_recall: Metric,
    pub recall_prior_homelessness: Metric,
    pub recall_first_time: Metric,
    pub fairness: Vec<FairnessRatio>,
}

/// Full metric suite for one ranked list over a labeled cohort.
pub fn evaluate_list(
    list: &RankedList,
    rows: &[CohortRow],
    split_id: usize,
    model_id: &str,
    eval_as_of: NaiveDate,
    moratorium: bool,
) -> Result<EvalReport> {
    let pr = precision_recall_at_k(list, rows)?;
    let (prior, first) = subgroup_recall(list, rows)?;
    let missed_group_size = rows.iter().filter(|r| r.missed()).count();
    Ok(EvalReport {
        split_id,
        model_id: model_id.to_string(),
        eval_as_of,
        moratorium,
        k: list.k,
        tie_count: list.tie_count,
        cohort_size: rows.len(),
        positives: pr.positives,
        baserate: Metric::ratio(pr.positives as f64, rows.len() as f64, "empty cohort"),
        true_positives: pr.true_positives,
        precision_at_k: pr.precision,
        recall_at_k: pr.recall,
        missed_group_size,
        missed_group_recall: missed_group_recall(list, rows)?,
        recall_prior_homelessness: prior,
        recall_first_time: first,
        fairness: fairness_ratios(list, rows, &default_fairness_pairs())?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub avg: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    fn of(values: &[f64]) -> Option<Spread> {
        if values.is_empty() {
            return None;
        }
        Some(Spread {
            avg: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model_id: String,
    pub splits: usize,
    pub precision: Spread,
    /// Over the splits where recall is defined; absent if there are none.
    pub recall: Option<Spread>,
}

/// Per-model precision and recall spread over the splits that are not
/// excluded, best model first (average precision, then average recall,
/// then model id).
pub fn select_model(reports: &[EvalReport], exclude_moratorium: bool) -> Result<Vec<ModelSummary>> {
    let kept: Vec<&EvalReport> = reports.iter().filter(|r| !(exclude_moratorium && r.moratorium)).collect();
    if kept.is_empty() {
        return Err(Error::AllSplitsExcluded);
    }
    let mut by_model: BTreeMap<&str, Vec<&EvalReport>> = BTreeMap::new();
    for r in kept {
        by_model.entry(r.model_id.as_str()).or_default().push(r);
    }
    let mut table: Vec<ModelSummary> = by_model
        .into_iter()
        .map(|(id, rs)| {
            let p: Vec<f64> = rs.iter().map(|r| r.precision_at_k).collect();
            let rec: Vec<f64> = rs.iter().filter_map(|r| r.recall_at_k.value()).collect();
            ModelSummary {
                model_id: id.to_string(),
                splits: rs.len(),
                precision: Spread::of(&p).expect("at least one split"),
                recall: Spread::of(&rec),
            }
        })
        .collect();
    let avg_recall = |m: &ModelSummary| m.recall.map_or(f64::NEG_INFINITY, |s| s.avg);
    table.sort_by(|a, b| {
        b.precision
            .avg
            .total_cmp(&a.precision.avg)
            .then_with(|| avg_recall(b).total_cmp(&avg_recall(a)))
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
    Ok(table)
}

fn metric_cell(m: &Metric) -> String {
    m.value().map_or(String::new(), |v| v.to_string())
}

pub fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    std::fs::write(path, toml::to_string(report)?)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    if !path.exists() {
        return Err(Error::MissingArtifact { what: "evaluation report".into(), path: path.display().to_string() });
    }
    Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
}

/// One line per (split, model) with the headline metrics.
pub fn write_reports_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "split_id",
        "eval_as_of",
        "model_id",
        "moratorium",
        "k",
        "cohort_size",
        "baserate",
        "precision_at_k",
        "recall_at_k",
        "missed_group_recall",
        "recall_prior_homelessness",
        "recall_first_time",
        "tpr_ratio_black_white",
        "tpr_ratio_female_male",
    ])?;
    for r in reports {
        let ratio = |num: &str| {
            r.fairness.iter().find(|f| f.numerator == num).map_or(String::new(), |f| metric_cell(&f.ratio))
        };
        w.write_record([
            r.split_id.to_string(),
            r.eval_as_of.to_string(),
            r.model_id.clone(),
            r.moratorium.to_string(),
            r.k.to_string(),
            r.cohort_size.to_string(),
            metric_cell(&r.baserate),
            r.precision_at_k.to_string(),
            metric_cell(&r.recall_at_k),
            metric_cell(&r.missed_group_recall),
            metric_cell(&r.recall_prior_homelessness),
            metric_cell(&r.recall_first_time),
            ratio("black"),
            ratio("female"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Model-selection table: average, minimum and maximum of precision and
/// recall at k per model.
pub fn write_summary(table: &[ModelSummary], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "model_id",
        "splits",
        "precision_avg",
        "precision_min",
        "precision_max",
        "recall_avg",
        "recall_min",
        "recall_max",
    ])?;
    for m in table {
        let rec = |f: fn(&Spread) -> f64| m.recall.as_ref().map_or(String::new(), |s| f(s).to_string());
        w.write_record([
            m.model_id.clone(),
            m.splits.to_string(),
            m.precision.avg.to_string(),
            m.precision.min.to_string(),
            m.precision.max.to_string(),
            rec(|s| s.avg),
            rec(|s| s.min),
            rec(|s| s.max),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Precision at k over time, one series per model, for external plotting.
pub fn write_plot_data(reports: &[EvalReport], path: &Path) -> Result<()> {
    let mut sorted: Vec<&EvalReport> = reports.iter().collect();
    sorted.sort_by(|a, b| (a.eval_as_of, &a.model_id).cmp(&(b.eval_as_of, &b.model_id)));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["split_date", "model_id", "precision_at_k", "moratorium"])?;
    for r in sorted {
        w.write_record([r.eval_as_of.to_string(), r.model_id.clone(), r.precision_at_k.to_string(), r.moratorium.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub person_id: u64,
    pub as_of: NaiveDate,
    pub score: f64,
    pub rank: usize,
}

/// Scores of a ranked list in rank order.
pub fn write_predictions(list: &RankedList, rows: &[CohortRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in &list.entries {
        w.serialize(PredictionRow { person_id: e.person.0, as_of: rows[e.row].as_of, score: e.score, rank: e.rank })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    if !path.exists() {
        return Err(Error::MissingArtifact { what: "predictions".into(), path: path.display().to_string() });
    }
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<PredictionRow>, _>>()?)
}

/// Saved scores aligned to `rows` by person and as-of date, so predictions
/// can be re-evaluated against a separately labeled cohort.
pub fn scores_from_predictions(preds: &[PredictionRow], rows: &[CohortRow]) -> Result<Vec<f64>> {
    let by_key: BTreeMap<(u64, NaiveDate), f64> = preds.iter().map(|p| ((p.person_id, p.as_of), p.score)).collect();
    rows.iter()
        .map(|r| {
            by_key.get(&(r.person.0, r.as_of)).copied().ok_or_else(|| {
                Error::Config(format!("no prediction for person {} at {}", r.person, r.as_of))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
