//! Point-in-time cohort of tenants facing eviction, and the 12-month
//! homelessness label.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dates::{add_days, add_months, sub_months};
use crate::error::{Error, Result};
use crate::store::{AsOfView, Gender, Kind, PersonId, Race, Source};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub filing_lookback_months: u32,
    pub label_span_months: u32,
    /// Drop persons with a homelessness-service spell covering the as-of date.
    pub exclude_active_homelessness: bool,
    /// Drop persons enrolled in rapid rehousing who have not moved in yet.
    pub exclude_rehousing_not_moved_in: bool,
    /// Homelessness-service kinds that count, both for exclusion and labels.
    pub homelessness_kinds: Vec<Kind>,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            filing_lookback_months: 4,
            label_span_months: 12,
            exclude_active_homelessness: true,
            exclude_rehousing_not_moved_in: true,
            homelessness_kinds: Source::HomelessnessService.kinds().to_vec(),
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.filing_lookback_months == 0 || self.label_span_months == 0 {
            return Err(Error::Config("cohort durations must be > 0".into()));
        }
        if let Some(k) = self.homelessness_kinds.iter().find(|k| !Source::HomelessnessService.kinds().contains(k)) {
            return Err(Error::Config(format!("{} is not a homelessness-service kind", k.slug())));
        }
        Ok(())
    }

    fn counts(&self, kind: Option<Kind>) -> bool {
        kind.is_none_or(|k| self.homelessness_kinds.contains(&k))
    }

    pub fn label_end(&self, as_of: NaiveDate) -> NaiveDate {
        add_months(as_of, self.label_span_months)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupAttrs {
    pub race: Race,
    pub gender: Gender,
    pub prior_homelessness: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ServedAttrs {
    pub applied: bool,
    pub received_assistance: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CohortRow {
    pub person: PersonId,
    pub as_of: NaiveDate,
    pub label: Option<bool>,
    pub group: GroupAttrs,
    pub served: ServedAttrs,
}

impl CohortRow {
    /// Positive, and never applied for nor received assistance.
    pub fn missed(&self) -> bool {
        self.label == Some(true) && !self.served.applied && !self.served.received_assistance
    }
}

fn homeless_active(view: &AsOfView<'_>, person: PersonId, spec: &CohortSpec) -> bool {
    let as_of = view.as_of();
    view.history(person, Source::HomelessnessService)
        .filter(|r| spec.counts(r.attrs.kind))
        .any(|r| r.event_start <= as_of && r.event_end.is_none_or(|e| e >= as_of))
}

fn awaiting_move_in(view: &AsOfView<'_>, person: PersonId) -> bool {
    let as_of = view.as_of();
    view.history(person, Source::PublicHousing).any(|r| {
        r.attrs.kind == Some(Kind::RapidRehousing)
            && r.event_start <= as_of
            && r.attrs.move_in_date.is_none()
            && r.event_end.is_none_or(|e| e >= as_of)
    })
}

/// Persons with an eviction filing in `(as_of - lookback, as_of]` who are not
/// homeless at `as_of`, one row per person, ordered by person.
pub fn build_cohort(view: &AsOfView<'_>, spec: &CohortSpec) -> Result<Vec<CohortRow>> {
    let as_of = view.as_of();
    let from = add_days(sub_months(as_of, spec.filing_lookback_months), 1);
    let mut persons: Vec<PersonId> = view
        .events_between(Source::Eviction, from, as_of)?
        .into_iter()
        .map(|r| r.person)
        .collect();
    persons.sort_unstable();
    persons.dedup();
    Ok(persons
        .into_iter()
        .filter(|&p| !(spec.exclude_active_homelessness && homeless_active(view, p, spec)))
        .filter(|&p| !(spec.exclude_rehousing_not_moved_in && awaiting_move_in(view, p)))
        .map(|person| {
            let demo = view.demographics(person);
            let prior_homelessness = view
                .history(person, Source::HomelessnessService)
                .any(|r| spec.counts(r.attrs.kind) && r.event_start <= as_of);
            CohortRow {
                person,
                as_of,
                label: None,
                group: GroupAttrs {
                    race: demo.map_or(Race::Unknown, |d| d.race),
                    gender: demo.map_or(Gender::Unknown, |d| d.gender),
                    prior_homelessness,
                },
                served: ServedAttrs::default(),
            }
        })
        .collect())
}

/// Attaches labels and assistance status.
///
/// `outcomes` must reach at least `as_of + label_span` for every row. Pass
/// the log's full view to label evaluation cohorts; pass a view at an
/// earlier date to label training cohorts without touching later knowledge.
pub fn label_cohort(rows: &[CohortRow], outcomes: &AsOfView<'_>, spec: &CohortSpec) -> Result<Vec<CohortRow>> {
    let horizon = outcomes.as_of();
    rows.iter()
        .map(|row| {
            let end = spec.label_end(row.as_of);
            if end > horizon {
                return Err(Error::LabelHorizon { needed: end, horizon });
            }
            let label = outcomes
                .history(row.person, Source::HomelessnessService)
                .any(|r| spec.counts(r.attrs.kind) && r.event_start > row.as_of && r.event_start <= end);
            let served_from = sub_months(row.as_of, spec.filing_lookback_months);
            let within = |d: NaiveDate| d > served_from && d <= end;
            let applied = outcomes
                .history(row.person, Source::AssistanceApplication)
                .any(|r| within(r.event_start));
            let received_assistance = outcomes
                .history(row.person, Source::RentalAssistancePayment)
                .any(|r| within(r.event_start));
            Ok(CohortRow {
                label: Some(label),
                served: ServedAttrs { applied, received_assistance },
                ..*row
            })
        })
        .collect()
}

/// Positive share among labeled rows.
pub fn baserate(rows: &[CohortRow]) -> Option<f64> {
    let labeled: Vec<bool> = rows.iter().filter_map(|r| r.label).collect();
    if labeled.is_empty() {
        return None;
    }
    Some(labeled.iter().filter(|&&l| l).count() as f64 / labeled.len() as f64)
}

pub fn write_cohort(rows: &[CohortRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "person_id",
        "as_of",
        "label",
        "race",
        "gender",
        "prior_homelessness",
        "applied",
        "received_assistance",
    ])?;
    let b = |x: bool| if x { "1" } else { "0" };
    for r in rows {
        w.write_record([
            r.person.0.to_string().as_str(),
            r.as_of.to_string().as_str(),
            r.label.map_or("", b),
            r.group.race.slug(),
            r.group.gender.slug(),
            b(r.group.prior_homelessness),
            b(r.served.applied),
            b(r.served.received_assistance),
        ])?;
    }
    w.flush()?;
    Ok(())
}
