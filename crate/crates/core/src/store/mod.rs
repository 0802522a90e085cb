//! Typed event log with knowledge-date-aware point-in-time access.
//!
//! An [`EventLog`] is immutable once ingested. Every read that feeds a
//! prediction goes through an [`AsOfView`], which only exposes records whose
//! `knowledge_date` is on or before the view's date and withholds any end date
//! or dated attribute that lies after it. Demographics are kept as one
//! snapshot per interaction, so the latest snapshot before the as-of date is
//! always recoverable.

mod io;
mod record;

use std::collections::HashMap;
use std::ops::Range;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use io::{read_event_log, write_event_log, LogManifest, ManifestFile, SCHEMA_VERSION};
pub use record::{
    Attrs, Cents, DemographicSnapshot, Diagnosis, EventRecord, Gender, Kind, PersonId, Race,
    Source,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub location: String,
    pub reason: String,
}

/// Outcome of an ingest: accepted and duplicate counts plus per-item rejections.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub duplicates: usize,
    pub rejected: Vec<Rejection>,
}

impl IngestReport {
    pub fn merge(&mut self, other: IngestReport) {
        self.accepted += other.accepted;
        self.duplicates += other.duplicates;
        self.rejected.extend(other.rejected);
    }
}

#[derive(Debug, Clone)]
pub struct EventLog {
    records: Vec<EventRecord>,
    slices: HashMap<(PersonId, Source), Range<usize>>,
    by_source: Vec<Vec<u32>>,
    persons: Vec<PersonId>,
    demographics: Vec<DemographicSnapshot>,
    demo_slices: HashMap<PersonId, Range<usize>>,
    explicit_horizon: Option<NaiveDate>,
}

impl Default for EventLog {
    fn default() -> Self {
        EventLog::build(Vec::new(), Vec::new(), None)
    }
}

impl EventLog {
    /// Ingests event records. Invalid records are rejected one by one with a
    /// reason; exact duplicates collapse to a single record.
    pub fn ingest(records: impl IntoIterator<Item = EventRecord>) -> (EventLog, IngestReport) {
        EventLog::ingest_with_demographics(records, std::iter::empty())
    }

    pub fn ingest_with_demographics(
        records: impl IntoIterator<Item = EventRecord>,
        snapshots: impl IntoIterator<Item = DemographicSnapshot>,
    ) -> (EventLog, IngestReport) {
        EventLog::default().append(records, snapshots)
    }

    /// Returns a new log holding this log's content plus `records` and
    /// `snapshots`. The receiver is left untouched.
    pub fn append(
        &self,
        records: impl IntoIterator<Item = EventRecord>,
        snapshots: impl IntoIterator<Item = DemographicSnapshot>,
    ) -> (EventLog, IngestReport) {
        let mut report = IngestReport::default();
        let mut all = self.records.clone();
        let before = all.len();
        for (i, r) in records.into_iter().enumerate() {
            match r.validate() {
                Some(reason) => report.rejected.push(Rejection {
                    location: format!("record {i}"),
                    reason: reason.to_string(),
                }),
                None => all.push(r),
            }
        }
        let offered = all.len() - before;
        all.sort_unstable();
        all.dedup();
        let added = all.len() - before;
        report.accepted = added;
        report.duplicates = offered - added;

        // A snapshot must coincide with an interaction of the same person.
        let interaction_days: std::collections::HashSet<(PersonId, NaiveDate)> =
            all.iter().map(|r| (r.person, r.event_start)).collect();
        let mut demos = self.demographics.clone();
        let demo_before = demos.len();
        let mut demo_offered = 0;
        for (i, s) in snapshots.into_iter().enumerate() {
            if interaction_days.contains(&(s.person, s.collected_on)) {
                demos.push(s);
                demo_offered += 1;
            } else {
                report.rejected.push(Rejection {
                    location: format!("demographic snapshot {i}"),
                    reason: "snapshot not tied to an interaction".to_string(),
                });
            }
        }
        demos.sort_unstable();
        demos.dedup();
        let demo_added = demos.len() - demo_before;
        report.accepted += demo_added;
        report.duplicates += demo_offered - demo_added;

        (EventLog::build(all, demos, self.explicit_horizon), report)
    }

    /// Fixes the data horizon, i.e. the last date the log is complete through.
    pub fn with_horizon(mut self, horizon: NaiveDate) -> Self {
        self.explicit_horizon = Some(horizon);
        self
    }

    fn build(
        records: Vec<EventRecord>,
        demographics: Vec<DemographicSnapshot>,
        explicit_horizon: Option<NaiveDate>,
    ) -> EventLog {
        let mut slices = HashMap::new();
        let mut persons = Vec::new();
        let mut i = 0;
        while i < records.len() {
            let key = (records[i].person, records[i].source);
            let mut j = i + 1;
            while j < records.len() && (records[j].person, records[j].source) == key {
                j += 1;
            }
            if persons.last() != Some(&key.0) {
                persons.push(key.0);
            }
            slices.insert(key, i..j);
            i = j;
        }
        let mut by_source: Vec<Vec<u32>> = vec![Vec::new(); Source::ALL.len()];
        for (idx, r) in records.iter().enumerate() {
            by_source[r.source.index()].push(idx as u32);
        }
        for list in &mut by_source {
            list.sort_by_key(|&idx| (records[idx as usize].event_start, idx));
        }
        let mut demo_slices = HashMap::new();
        let mut i = 0;
        while i < demographics.len() {
            let p = demographics[i].person;
            let mut j = i + 1;
            while j < demographics.len() && demographics[j].person == p {
                j += 1;
            }
            demo_slices.insert(p, i..j);
            i = j;
        }
        EventLog {
            records,
            slices,
            by_source,
            persons,
            demographics,
            demo_slices,
            explicit_horizon,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// All records, sorted by person, source, then event start.
    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn demographic_snapshots(&self) -> &[DemographicSnapshot] {
        &self.demographics
    }

    /// Distinct persons with at least one record, ascending.
    pub fn persons(&self) -> &[PersonId] {
        &self.persons
    }

    pub fn earliest_knowledge_date(&self) -> Option<NaiveDate> {
        self.records.iter().map(|r| r.knowledge_date).min()
    }

    /// Last date the log is complete through: the explicit horizon when one was
    /// set, otherwise the latest knowledge date.
    pub fn horizon(&self) -> NaiveDate {
        self.explicit_horizon.unwrap_or_else(|| {
            self.records
                .iter()
                .map(|r| r.knowledge_date)
                .max()
                .unwrap_or(NaiveDate::MIN)
        })
    }

    pub fn as_of(&self, date: NaiveDate) -> AsOfView<'_> {
        AsOfView { log: self, as_of: date }
    }

    /// View through the data horizon: everything the log will ever know.
    pub fn full_view(&self) -> AsOfView<'_> {
        self.as_of(self.horizon())
    }

    /// Records with knowledge dates on or before `date`, with no redaction.
    /// Used to cut a log back to what existed at a freeze date.
    pub fn truncated(&self, date: NaiveDate) -> EventLog {
        let records = self
            .records
            .iter()
            .filter(|r| r.knowledge_date <= date)
            .copied()
            .collect();
        let demos = self
            .demographics
            .iter()
            .filter(|s| s.collected_on <= date)
            .copied()
            .collect();
        EventLog::build(records, demos, self.explicit_horizon)
    }

    fn slice(&self, person: PersonId, source: Source) -> &[EventRecord] {
        match self.slices.get(&(person, source)) {
            Some(r) => &self.records[r.clone()],
            None => &[],
        }
    }
}

/// Something that can hand out leakage-guarded views at a given date.
pub trait ViewFactory {
    fn view_at(&self, as_of: NaiveDate) -> Result<AsOfView<'_>>;
}

impl ViewFactory for EventLog {
    fn view_at(&self, as_of: NaiveDate) -> Result<AsOfView<'_>> {
        Ok(self.as_of(as_of))
    }
}

impl ViewFactory for AsOfView<'_> {
    fn view_at(&self, as_of: NaiveDate) -> Result<AsOfView<'_>> {
        self.narrow(as_of)
    }
}

/// Read-only window onto an [`EventLog`] as known on a given date.
#[derive(Debug, Clone, Copy)]
pub struct AsOfView<'a> {
    log: &'a EventLog,
    as_of: NaiveDate,
}

impl<'a> AsOfView<'a> {
    pub fn as_of(&self) -> NaiveDate {
        self.as_of
    }

    fn visible(&self, r: &EventRecord) -> bool {
        r.knowledge_date <= self.as_of
    }

    /// A view at an earlier (or equal) date. Moving forward is refused.
    pub fn narrow(&self, as_of: NaiveDate) -> Result<AsOfView<'a>> {
        if as_of > self.as_of {
            return Err(Error::FutureWindow { end: as_of, as_of: self.as_of });
        }
        Ok(AsOfView { log: self.log, as_of })
    }

    /// Every visible record, redacted to this date, in log order.
    pub fn records(&self) -> impl Iterator<Item = EventRecord> + 'a {
        let as_of = self.as_of;
        self.log
            .records
            .iter()
            .filter(move |r| r.knowledge_date <= as_of)
            .map(move |r| r.redacted(as_of))
    }

    pub fn len(&self) -> usize {
        self.log.records.iter().filter(|r| self.visible(r)).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All visible records of one person and source, sorted by event start.
    pub fn history(&self, person: PersonId, source: Source) -> impl Iterator<Item = EventRecord> + 'a {
        let as_of = self.as_of;
        self.log
            .slice(person, source)
            .iter()
            .filter(move |r| r.knowledge_date <= as_of)
            .map(move |r| r.redacted(as_of))
    }

    /// Records of `person` from `source` whose event start lies in
    /// `[start, end]`, ascending by start. A window reaching past the view's
    /// date is an error.
    pub fn query_events(
        &self,
        person: PersonId,
        source: Source,
        start: NaiveDate,
        end: NaiveDate,
    ) -> Result<Vec<EventRecord>> {
        self.check_window(start, end)?;
        let slice = self.log.slice(person, source);
        let lo = slice.partition_point(|r| r.event_start < start);
        let hi = slice.partition_point(|r| r.event_start <= end);
        let mut out: Vec<EventRecord> = slice[lo..hi]
            .iter()
            .filter(|r| self.visible(r))
            .map(|r| r.redacted(self.as_of))
            .collect();
        // redaction can reorder records that share a start date
        out.sort_unstable();
        Ok(out)
    }

    /// Records of every person from `source` with event start in
    /// `[start, end]`, ordered by start then log position.
    pub fn events_between(
        &self,
        source: Source,
        start: NaiveDate,
        end: NaiveDate,
    ) -> Result<Vec<EventRecord>> {
        self.check_window(start, end)?;
        let idx = &self.log.by_source[source.index()];
        let recs = &self.log.records;
        let lo = idx.partition_point(|&i| recs[i as usize].event_start < start);
        let hi = idx.partition_point(|&i| recs[i as usize].event_start <= end);
        Ok(idx[lo..hi]
            .iter()
            .map(|&i| &recs[i as usize])
            .filter(|r| self.visible(r))
            .map(|r| r.redacted(self.as_of))
            .collect())
    }

    fn check_window(&self, start: NaiveDate, end: NaiveDate) -> Result<()> {
        if end > self.as_of {
            return Err(Error::FutureWindow { end, as_of: self.as_of });
        }
        if start > end {
            return Err(Error::InvalidWindow { start, end });
        }
        Ok(())
    }

    /// Latest demographic snapshot collected on or before the view's date.
    pub fn demographics(&self, person: PersonId) -> Option<DemographicSnapshot> {
        let range = self.log.demo_slices.get(&person)?;
        self.log.demographics[range.clone()]
            .iter()
            .filter(|s| s.collected_on <= self.as_of)
            .max_by_key(|s| s.collected_on)
            .copied()
    }

    #[cfg(test)]
    fn positions(&self) -> Vec<usize> {
        (0..self.log.records.len())
            .filter(|&i| self.visible(&self.log.records[i]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dates::{add_days, ymd};
    use proptest::prelude::*;

    fn rec(person: u64, source: Source, start: NaiveDate) -> EventRecord {
        EventRecord::new(PersonId(person), source, start)
    }

    #[test]
    fn ingest_counts_valid_records() {
        let d = ymd(2018, 3, 1);
        let (log, report) = EventLog::ingest(vec![
            rec(1, Source::Eviction, d),
            rec(2, Source::Eviction, d),
            rec(1, Source::PhysicalHealthER, d),
        ]);
        assert_eq!(log.len(), 3);
        assert_eq!(report.accepted, 3);
        assert!(report.rejected.is_empty());
    }

    #[test]
    fn ingest_rejects_negative_duration_without_aborting() {
        let d = ymd(2018, 3, 1);
        let bad = rec(1, Source::ProgramSpell, d).ending(ymd(2018, 2, 1));
        let (log, report) = EventLog::ingest(vec![bad, rec(2, Source::Eviction, d)]);
        assert_eq!(log.len(), 1);
        assert_eq!(report.rejected.len(), 1);
        assert_eq!(report.rejected[0].reason, "negative duration");
    }

    #[test]
    fn ingest_deduplicates_identical_records() {
        let r = rec(7, Source::Eviction, ymd(2018, 3, 1));
        let (log, report) = EventLog::ingest(vec![r, r]);
        assert_eq!(log.len(), 1);
        assert_eq!(report.duplicates, 1);
    }

    #[test]
    fn as_of_is_a_strict_knowledge_filter() {
        let (log, _) = EventLog::ingest(vec![
            rec(1, Source::Eviction, ymd(2018, 1, 5)),
            rec(1, Source::Eviction, ymd(2019, 3, 2)),
        ]);
        assert_eq!(log.as_of(ymd(2018, 12, 31)).len(), 1);
        assert_eq!(log.as_of(ymd(2017, 1, 1)).len(), 0);
    }

    #[test]
    fn query_returns_window_sorted() {
        let (log, _) = EventLog::ingest(vec![
            rec(1, Source::Eviction, ymd(2018, 9, 1)),
            rec(1, Source::Eviction, ymd(2018, 2, 1)),
            rec(1, Source::Eviction, ymd(2017, 6, 1)),
        ]);
        let view = log.as_of(ymd(2019, 6, 1));
        let got = view
            .query_events(PersonId(1), Source::Eviction, ymd(2018, 1, 1), ymd(2018, 12, 31))
            .unwrap();
        assert_eq!(got.len(), 2);
        assert!(got[0].event_start < got[1].event_start);
    }

    #[test]
    fn query_past_as_of_is_refused() {
        let (log, _) = EventLog::ingest(vec![rec(1, Source::Eviction, ymd(2018, 9, 1))]);
        let view = log.as_of(ymd(2019, 1, 1));
        let err = view
            .query_events(PersonId(1), Source::Eviction, ymd(2019, 1, 2), ymd(2019, 3, 1))
            .unwrap_err();
        assert!(err.to_string().starts_with("future window"));
    }

    fn snap(person: u64, on: NaiveDate, race: Race) -> DemographicSnapshot {
        DemographicSnapshot {
            person: PersonId(person),
            collected_on: on,
            gender: Gender::Female,
            race,
            birthdate: ymd(1980, 1, 1),
        }
    }

    #[test]
    fn demographics_use_latest_snapshot_before_as_of() {
        let d17 = ymd(2017, 5, 1);
        let d20 = ymd(2020, 5, 1);
        let (log, report) = EventLog::ingest_with_demographics(
            vec![rec(1, Source::ProgramSpell, d17), rec(1, Source::ProgramSpell, d20)],
            vec![snap(1, d17, Race::Unknown), snap(1, d20, Race::Black)],
        );
        assert!(report.rejected.is_empty());
        let view = log.as_of(ymd(2019, 1, 1));
        assert_eq!(view.demographics(PersonId(1)).unwrap().collected_on, d17);
        assert_eq!(view.demographics(PersonId(2)), None);
        assert_eq!(log.as_of(ymd(2016, 1, 1)).demographics(PersonId(1)), None);
    }

    #[test]
    fn later_snapshot_does_not_change_earlier_answer() {
        let d17 = ymd(2017, 5, 1);
        let (log, _) = EventLog::ingest_with_demographics(
            vec![rec(1, Source::ProgramSpell, d17)],
            vec![snap(1, d17, Race::Unknown)],
        );
        let before = log.as_of(ymd(2019, 1, 1)).demographics(PersonId(1));
        let d21 = ymd(2021, 1, 1);
        let (log2, _) = log.append(
            vec![rec(1, Source::ProgramSpell, d21)],
            vec![snap(1, d21, Race::Black)],
        );
        assert_eq!(log2.as_of(ymd(2019, 1, 1)).demographics(PersonId(1)), before);
    }

    #[test]
    fn snapshot_without_interaction_is_rejected() {
        let (_, report) = EventLog::ingest_with_demographics(
            vec![rec(1, Source::ProgramSpell, ymd(2017, 5, 1))],
            vec![snap(1, ymd(2017, 5, 2), Race::White)],
        );
        assert_eq!(report.rejected.len(), 1);
    }

    fn arb_log() -> impl Strategy<Value = Vec<EventRecord>> {
        prop::collection::vec(
            (0u64..6, 0usize..9, 0i64..2000, 0i64..400, prop::option::of(0i64..300)),
            0..80,
        )
        .prop_map(|items| {
            let base = ymd(2012, 1, 1);
            items
                .into_iter()
                .map(|(p, s, start, lag, dur)| {
                    let start = add_days(base, start);
                    let mut r = rec(p, Source::ALL[s], start).known_on(add_days(start, lag));
                    if let Some(dur) = dur {
                        r = r.ending(add_days(start, dur));
                    }
                    r
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn views_are_monotone(records in arb_log(), a in 0i64..2500, b in 0i64..2500) {
            let (log, _) = EventLog::ingest(records);
            let (lo, hi) = (a.min(b), a.max(b));
            let base = ymd(2012, 1, 1);
            let small = log.as_of(add_days(base, lo)).positions();
            let large = log.as_of(add_days(base, hi)).positions();
            prop_assert!(small.iter().all(|i| large.contains(i)));
        }

        #[test]
        fn sentinel_future_records_never_surface(records in arb_log(), cut in 0i64..2500) {
            let base = ymd(2012, 1, 1);
            let as_of = add_days(base, cut);
            let sentinels: Vec<EventRecord> = (0..6)
                .map(|p| rec(p, Source::HomelessnessService, as_of - chrono::Duration::days(3))
                    .known_on(add_days(as_of, 1))
                    .with_kind(Kind::EmergencyShelter))
                .collect();
            let (log, _) = EventLog::ingest(records.iter().copied().chain(sentinels.iter().copied()));
            let view = log.as_of(as_of);
            prop_assert!(view.records().all(|r| r.knowledge_date <= as_of));
            for p in 0..6 {
                for s in Source::ALL {
                    let start = base.min(as_of);
                    let got = view.query_events(PersonId(p), s, start, as_of).unwrap();
                    prop_assert!(got.iter().all(|r| r.knowledge_date <= as_of));
                    prop_assert!(got.iter().all(|r| r.event_end.map_or(true, |e| e <= as_of)));
                }
            }
        }

        #[test]
        fn query_matches_naive_scan(records in arb_log(), cut in 200i64..2500, p in 0u64..6, s in 0usize..9, w0 in 0i64..2500, len in 0i64..800) {
            let base = ymd(2012, 1, 1);
            let as_of = add_days(base, cut);
            let (log, _) = EventLog::ingest(records.clone());
            let start = add_days(base, w0.min(cut));
            let end = add_days(start, len).min(as_of);
            let view = log.as_of(as_of);
            let got = view.query_events(PersonId(p), Source::ALL[s], start, end).unwrap();
            let mut want: Vec<EventRecord> = log.records().iter()
                .filter(|r| r.person == PersonId(p) && r.source == Source::ALL[s])
                .filter(|r| r.knowledge_date <= as_of && r.event_start >= start && r.event_start <= end)
                .map(|r| r.redacted(as_of))
                .collect();
            want.sort_by(|a, b| a.event_start.cmp(&b.event_start).then(a.cmp(b)));
            prop_assert_eq!(got, want);
        }
    }
}
