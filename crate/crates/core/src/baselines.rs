//! Single-attribute heuristic rankers. Each baseline reduces a person's
//! visible history to one key where larger means riskier; keys are turned
//! into scores by rank so they plug into the same top-k machinery as the
//! learned models.

use std::fmt;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::CohortRow;
use crate::dates::{add_months, days_between, sub_months};
use crate::error::{Error, Result};
use crate::store::{AsOfView, EventRecord, Kind, PersonId, Source, ViewFactory};
use crate::synthgen::sub_seed;

/// Sources counted as county program involvement by the program-based
/// baselines. Homelessness services are deliberately left out.
pub const PROGRAM_SOURCES: [Source; 4] =
    [Source::ProgramSpell, Source::Cyf, Source::MentalBehavioralHealth, Source::PublicHousing];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BaselineKind {
    /// More recent homelessness-service use ranks higher.
    B1PrevHomelessness,
    /// Uniform random scores.
    B2Baserate,
    /// Longest wait since an order for possession on a current filing ranks higher.
    B3EarliestOfp,
    /// Younger at first program involvement ranks higher.
    B4AgeFirstInteraction,
    /// As B4, counting only involvement from the 18th birthday on.
    B5AgeFirstAdultInteraction,
    /// Older current filing ranks higher.
    B6DaysSinceFiling,
    /// More recent program involvement ranks higher.
    B7DaysSinceProgram,
    B8NumDistinctPrograms,
    B9NumProgramSpells,
    B10TotalProgramDays,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 10] = [
        BaselineKind::B1PrevHomelessness,
        BaselineKind::B2Baserate,
        BaselineKind::B3EarliestOfp,
        BaselineKind::B4AgeFirstInteraction,
        BaselineKind::B5AgeFirstAdultInteraction,
        BaselineKind::B6DaysSinceFiling,
        BaselineKind::B7DaysSinceProgram,
        BaselineKind::B8NumDistinctPrograms,
        BaselineKind::B9NumProgramSpells,
        BaselineKind::B10TotalProgramDays,
    ];

    /// Short id such as `b1`, also used as the model id in reports.
    pub fn id(self) -> &'static str {
        match self {
            BaselineKind::B1PrevHomelessness => "b1",
            BaselineKind::B2Baserate => "b2",
            BaselineKind::B3EarliestOfp => "b3",
            BaselineKind::B4AgeFirstInteraction => "b4",
            BaselineKind::B5AgeFirstAdultInteraction => "b5",
            BaselineKind::B6DaysSinceFiling => "b6",
            BaselineKind::B7DaysSinceProgram => "b7",
            BaselineKind::B8NumDistinctPrograms => "b8",
            BaselineKind::B9NumProgramSpells => "b9",
            BaselineKind::B10TotalProgramDays => "b10",
        }
    }

    pub fn parse(s: &str) -> Result<BaselineKind> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown baseline `{s}`")))
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    /// Only B2 uses it.
    pub seed: u64,
    /// Filings in `(as_of - lookback, as_of]` count as current (B3, B6).
    pub filing_lookback_months: u32,
}

impl BaselineSpec {
    pub fn new(kind: BaselineKind) -> BaselineSpec {
        BaselineSpec { kind, seed: 0, filing_lookback_months: 4 }
    }

    pub fn with_seed(mut self, seed: u64) -> BaselineSpec {
        self.seed = seed;
        self
    }
}

/// Uniform in `(0, 1)` from a hash of `(seed, person, as_of)`.
pub fn hash_unit(seed: u64, person: PersonId, as_of: NaiveDate) -> f64 {
    let day = days_between(NaiveDate::default(), as_of) as u64;
    let h = sub_seed(sub_seed(seed, person.0), day);
    ((h >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

fn current_filings(view: &AsOfView<'_>, row: &CohortRow, lookback: u32) -> Vec<EventRecord> {
    let from = sub_months(row.as_of, lookback);
    view.history(row.person, Source::Eviction)
        .filter(|r| r.event_start > from && r.event_start <= row.as_of)
        .collect()
}

fn program_history(view: &AsOfView<'_>, row: &CohortRow) -> Vec<EventRecord> {
    let mut out: Vec<EventRecord> = PROGRAM_SOURCES
        .iter()
        .flat_map(|&s| view.history(row.person, s))
        .filter(|r| r.event_start <= row.as_of)
        .collect();
    out.sort_by_key(|r| r.event_start);
    out
}

/// Last day of involvement known on `as_of`. Spells without a visible end
/// are still running; mental-health contacts without one are single days.
fn involvement_end(r: &EventRecord, as_of: NaiveDate) -> NaiveDate {
    let open = if r.source == Source::MentalBehavioralHealth { r.event_start } else { as_of };
    r.event_end.unwrap_or(open).clamp(r.event_start, as_of.max(r.event_start))
}

fn age_days_at_first(view: &AsOfView<'_>, row: &CohortRow, adult_only: bool) -> Option<f64> {
    let birth = view.demographics(row.person)?.birthdate;
    let adult_from = add_months(birth, 18 * 12);
    let first = program_history(view, row)
        .into_iter()
        .map(|r| r.event_start)
        .find(|&d| !adult_only || d >= adult_from)?;
    Some(days_between(birth, first) as f64)
}

/// The raw key for one row, oriented so that larger means riskier, or
/// `None` when the person has nothing to rank on.
pub fn baseline_key(spec: &BaselineSpec, view: &AsOfView<'_>, row: &CohortRow) -> Option<f64> {
    let as_of = row.as_of;
    let since = |d: NaiveDate| days_between(d, as_of) as f64;
    match spec.kind {
        BaselineKind::B1PrevHomelessness => view
            .history(row.person, Source::HomelessnessService)
            .filter(|r| r.event_start <= as_of)
            .map(|r| r.event_end.unwrap_or(r.event_start).min(as_of))
            .max()
            .map(|last| -since(last)),
        BaselineKind::B2Baserate => Some(hash_unit(spec.seed, row.person, as_of)),
        BaselineKind::B3EarliestOfp => current_filings(view, row, spec.filing_lookback_months)
            .iter()
            .filter_map(|r| r.attrs.ofp_date)
            .min()
            .map(since),
        BaselineKind::B4AgeFirstInteraction => age_days_at_first(view, row, false).map(|d| -d),
        BaselineKind::B5AgeFirstAdultInteraction => age_days_at_first(view, row, true).map(|d| -d),
        BaselineKind::B6DaysSinceFiling => current_filings(view, row, spec.filing_lookback_months)
            .iter()
            .map(|r| r.event_start)
            .max()
            .map(since),
        BaselineKind::B7DaysSinceProgram => program_history(view, row)
            .iter()
            .map(|r| involvement_end(r, as_of))
            .max()
            .map(|last| -since(last)),
        BaselineKind::B8NumDistinctPrograms => {
            let mut kinds: Vec<(Source, Option<Kind>)> =
                program_history(view, row).iter().map(|r| (r.source, r.attrs.kind)).collect();
            kinds.sort_unstable();
            kinds.dedup();
            Some(kinds.len() as f64)
        }
        BaselineKind::B9NumProgramSpells => Some(program_history(view, row).len() as f64),
        BaselineKind::B10TotalProgramDays => Some(
            program_history(view, row)
                .iter()
                .map(|r| (days_between(r.event_start, involvement_end(r, as_of)) + 1) as f64)
                .sum(),
        ),
    }
}

/// `(1 + number of rows with a strictly smaller key) / (n + 1)`, with
/// missing keys smaller than every present key. Equal keys share a score.
pub fn rank_scores(keys: &[Option<f64>]) -> Vec<f64> {
    let mut present: Vec<f64> = keys.iter().flatten().copied().collect();
    present.sort_by(f64::total_cmp);
    let missing = keys.len() - present.len();
    let denom = (keys.len() + 1) as f64;
    keys.iter()
        .map(|k| match k {
            None => 1.0 / denom,
            Some(v) => (1 + missing + present.partition_point(|p| p < v)) as f64 / denom,
        })
        .collect()
}

/// One score per row in `[0, 1]`, each computed from the view at the row's
/// own as-of date. B2 returns its uniform draws directly.
pub fn baseline_score<F: ViewFactory + Sync>(spec: &BaselineSpec, rows: &[CohortRow], views: &F) -> Result<Vec<f64>> {
    let keys = rows
        .par_iter()
        .map(|row| Ok(baseline_key(spec, &views.view_at(row.as_of)?, row)))
        .collect::<Result<Vec<_>>>()?;
    if spec.kind == BaselineKind::B2Baserate {
        return Ok(keys.into_iter().map(|k| k.expect("B2 always has a key")).collect());
    }
    Ok(rank_scores(&keys))
}
