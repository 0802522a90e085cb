//! CSV interchange: one file per source plus a demographics file, tied
//! together by a `manifest.toml`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::record::{
    Attrs, Cents, DemographicSnapshot, Diagnosis, EventRecord, Gender, Kind, PersonId, Race,
    Source,
};
use super::{EventLog, IngestReport, Rejection};
use crate::dates::parse_date;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.toml";
const DEMOGRAPHICS_FILE: &str = "demographics.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub source: String,
    pub path: String,
    pub schema_version: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogManifest {
    pub schema_version: u32,
    pub horizon: NaiveDate,
    pub files: Vec<ManifestFile>,
}

fn attr_columns(source: Source) -> &'static [&'static str] {
    match source {
        Source::Eviction => &["amount_owed", "outcome", "hearing_date", "ofp_date"],
        Source::ProgramSpell => &["program_type"],
        Source::PublicHousing => &["housing_type", "move_in_date"],
        Source::MentalBehavioralHealth => &["interaction_type", "diagnosis"],
        Source::PhysicalHealthER => &[],
        Source::Cyf => &["placement_type"],
        Source::HomelessnessService => &["service_type"],
        Source::AssistanceApplication => &[],
        Source::RentalAssistancePayment => &["amount_paid"],
    }
}

fn fmt_date(d: Option<NaiveDate>) -> String {
    d.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default()
}

fn attr_cell(r: &EventRecord, column: &str) -> String {
    let a = &r.attrs;
    match column {
        "amount_owed" | "amount_paid" => a.amount.map(|c| c.to_string()).unwrap_or_default(),
        "outcome" | "program_type" | "housing_type" | "interaction_type" | "placement_type"
        | "service_type" => a.kind.map(|k| k.slug().to_string()).unwrap_or_default(),
        "hearing_date" => fmt_date(a.hearing_date),
        "ofp_date" => fmt_date(a.ofp_date),
        "move_in_date" => fmt_date(a.move_in_date),
        "diagnosis" => a.diagnosis.map(|d| d.slug().to_string()).unwrap_or_default(),
        _ => unreachable!("unknown attribute column {column}"),
    }
}

/// Parses a non-negative decimal dollar amount into cents.
fn parse_amount(s: &str) -> std::result::Result<Cents, String> {
    let s = s.trim();
    if s.starts_with('-') {
        return Err("negative amount".into());
    }
    let (whole, frac) = match s.split_once('.') {
        Some((w, f)) => (w, f),
        None => (s, ""),
    };
    if frac.len() > 2 {
        return Err(format!("amount `{s}` has sub-cent precision"));
    }
    let whole: u64 = whole.parse().map_err(|_| format!("bad amount `{s}`"))?;
    let frac: u64 = if frac.is_empty() {
        0
    } else {
        let v: u64 = frac.parse().map_err(|_| format!("bad amount `{s}`"))?;
        if frac.len() == 1 {
            v * 10
        } else {
            v
        }
    };
    Ok(Cents(whole * 100 + frac))
}

/// Writes the log as per-source CSV files plus demographics and manifest.
pub fn write_event_log(log: &EventLog, dir: &Path) -> Result<LogManifest> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for source in Source::ALL {
        let name = format!("{}.csv", source.slug());
        let mut w = csv::Writer::from_path(dir.join(&name))?;
        let mut header = vec!["person_id", "event_start", "event_end", "knowledge_date"];
        header.extend_from_slice(attr_columns(source));
        w.write_record(&header)?;
        for r in log.records().iter().filter(|r| r.source == source) {
            let mut row = vec![
                r.person.0.to_string(),
                fmt_date(Some(r.event_start)),
                fmt_date(r.event_end),
                fmt_date(Some(r.knowledge_date)),
            ];
            row.extend(attr_columns(source).iter().map(|c| attr_cell(r, c)));
            w.write_record(&row)?;
        }
        w.flush()?;
        files.push(ManifestFile {
            source: source.slug().to_string(),
            path: name,
            schema_version: SCHEMA_VERSION,
        });
    }

    let mut w = csv::Writer::from_path(dir.join(DEMOGRAPHICS_FILE))?;
    w.write_record(["person_id", "collected_on", "gender", "race", "birthdate"])?;
    for s in log.demographic_snapshots() {
        w.write_record([
            s.person.0.to_string(),
            fmt_date(Some(s.collected_on)),
            s.gender.slug().to_string(),
            s.race.slug().to_string(),
            fmt_date(Some(s.birthdate)),
        ])?;
    }
    w.flush()?;
    files.push(ManifestFile {
        source: "demographics".to_string(),
        path: DEMOGRAPHICS_FILE.to_string(),
        schema_version: SCHEMA_VERSION,
    });

    let manifest = LogManifest {
        schema_version: SCHEMA_VERSION,
        horizon: log.horizon(),
        files,
    };
    fs::write(dir.join(MANIFEST_NAME), toml::to_string(&manifest)?)?;
    Ok(manifest)
}

struct Row<'a> {
    cols: &'a HashMap<String, usize>,
    rec: &'a csv::StringRecord,
}

impl Row<'_> {
    fn get(&self, name: &str) -> Option<&str> {
        let i = *self.cols.get(name)?;
        self.rec.get(i).map(str::trim).filter(|s| !s.is_empty())
    }

    fn date(&self, name: &str) -> std::result::Result<Option<NaiveDate>, String> {
        self.get(name)
            .map(|s| parse_date(s).map_err(|e| e.to_string()))
            .transpose()
    }
}

fn parse_event(source: Source, row: &Row<'_>) -> std::result::Result<EventRecord, String> {
    let person = row
        .get("person_id")
        .ok_or("missing person")?
        .parse::<u64>()
        .map_err(|_| "bad person id".to_string())?;
    let start = row.date("event_start")?.ok_or("missing start date")?;
    let knowledge = row.date("knowledge_date")?.ok_or("missing knowledge date")?;
    let mut attrs = Attrs::default();
    for &col in attr_columns(source) {
        let Some(raw) = row.get(col) else { continue };
        match col {
            "amount_owed" | "amount_paid" => attrs.amount = Some(parse_amount(raw)?),
            "hearing_date" => attrs.hearing_date = row.date(col)?,
            "ofp_date" => attrs.ofp_date = row.date(col)?,
            "move_in_date" => attrs.move_in_date = row.date(col)?,
            "diagnosis" => {
                attrs.diagnosis =
                    Some(Diagnosis::from_slug(raw).ok_or(format!("unknown diagnosis `{raw}`"))?)
            }
            _ => attrs.kind = Some(Kind::from_slug(raw).ok_or(format!("unknown type `{raw}`"))?),
        }
    }
    Ok(EventRecord {
        person: PersonId(person),
        source,
        event_start: start,
        event_end: row.date("event_end")?,
        knowledge_date: knowledge,
        attrs,
    })
}

fn parse_snapshot(row: &Row<'_>) -> std::result::Result<DemographicSnapshot, String> {
    let person = row
        .get("person_id")
        .ok_or("missing person")?
        .parse::<u64>()
        .map_err(|_| "bad person id".to_string())?;
    let gender = row.get("gender").unwrap_or("unknown");
    let race = row.get("race").unwrap_or("unknown");
    Ok(DemographicSnapshot {
        person: PersonId(person),
        collected_on: row.date("collected_on")?.ok_or("missing collection date")?,
        gender: Gender::from_slug(gender).ok_or(format!("unknown gender `{gender}`"))?,
        race: Race::from_slug(race).ok_or(format!("unknown race `{race}`"))?,
        birthdate: row.date("birthdate")?.ok_or("missing birthdate")?,
    })
}

fn header_map(r: &mut csv::Reader<fs::File>) -> Result<HashMap<String, usize>> {
    Ok(r.headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect())
}

/// Reads a directory written by [`write_event_log`]. Malformed rows are
/// rejected individually and reported with file and line.
pub fn read_event_log(dir: &Path) -> Result<(EventLog, IngestReport)> {
    let manifest_path = dir.join(MANIFEST_NAME);
    if !manifest_path.exists() {
        return Err(Error::MissingArtifact {
            what: "event log manifest".into(),
            path: manifest_path.display().to_string(),
        });
    }
    let manifest: LogManifest = toml::from_str(&fs::read_to_string(&manifest_path)?)?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::Parse(format!(
            "unsupported event log schema version {}",
            manifest.schema_version
        )));
    }

    let mut report = IngestReport::default();
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    for file in &manifest.files {
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "{}: unsupported schema version {}",
                file.path, file.schema_version
            )));
        }
        let path = dir.join(&file.path);
        if !path.exists() {
            return Err(Error::MissingArtifact {
                what: format!("{} file", file.source),
                path: path.display().to_string(),
            });
        }
        let mut reader = csv::Reader::from_path(&path)?;
        let cols = header_map(&mut reader)?;
        let source = if file.source == "demographics" {
            None
        } else {
            Some(
                Source::from_slug(&file.source)
                    .ok_or_else(|| Error::Parse(format!("unknown source `{}`", file.source)))?,
            )
        };
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let row = Row { cols: &cols, rec: &rec };
            let location = format!("{}:{}", file.path, line + 2);
            let parsed = match source {
                Some(s) => parse_event(s, &row).map(|r| records.push(r)),
                None => parse_snapshot(&row).map(|s| snapshots.push(s)),
            };
            if let Err(reason) = parsed {
                report.rejected.push(Rejection { location, reason });
            }
        }
    }
    let (log, ingest) = EventLog::ingest_with_demographics(records, snapshots);
    report.merge(ingest);
    Ok((log.with_horizon(manifest.horizon), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dates::ymd;

    #[test]
    fn amounts_parse_to_cents() {
        assert_eq!(parse_amount("12.5"), Ok(Cents(1250)));
        assert_eq!(parse_amount("7"), Ok(Cents(700)));
        assert_eq!(parse_amount("0.07"), Ok(Cents(7)));
        assert!(parse_amount("-3.00").is_err());
    }

    #[test]
    fn csv_round_trip_preserves_log() {
        let p = PersonId(42);
        let filed = ymd(2018, 11, 3);
        let records = vec![
            EventRecord::new(p, Source::Eviction, filed).with_attrs(Attrs {
                amount: Some(Cents(154_321)),
                kind: Some(Kind::LandlordWon),
                hearing_date: Some(ymd(2018, 12, 1)),
                ofp_date: Some(ymd(2018, 12, 20)),
                ..Attrs::default()
            }),
            EventRecord::new(p, Source::PublicHousing, ymd(2017, 1, 9))
                .with_kind(Kind::RapidRehousing)
                .ending(ymd(2017, 9, 1))
                .known_on(ymd(2017, 1, 10)),
        ];
        let snaps = vec![DemographicSnapshot {
            person: p,
            collected_on: filed,
            gender: Gender::Male,
            race: Race::Other,
            birthdate: ymd(1979, 6, 2),
        }];
        let (log, _) = EventLog::ingest_with_demographics(records, snaps);
        let log = log.with_horizon(ymd(2020, 1, 1));
        let dir = tempfile::tempdir().unwrap();
        write_event_log(&log, dir.path()).unwrap();
        let (back, report) = read_event_log(dir.path()).unwrap();
        assert!(report.rejected.is_empty());
        assert_eq!(back.records(), log.records());
        assert_eq!(back.demographic_snapshots(), log.demographic_snapshots());
        assert_eq!(back.horizon(), ymd(2020, 1, 1));
    }

    #[test]
    fn malformed_rows_are_rejected_individually() {
        let dir = tempfile::tempdir().unwrap();
        let (log, _) = EventLog::ingest(vec![EventRecord::new(
            PersonId(1),
            Source::PhysicalHealthER,
            ymd(2018, 1, 1),
        )]);
        write_event_log(&log, dir.path()).unwrap();
        let er = dir.path().join("er.csv");
        let mut text = fs::read_to_string(&er).unwrap();
        text.push_str(",2018-02-01,,2018-02-01\n2,,,2018-02-01\n3,2018-03-01,2018-01-01,2018-03-01\n");
        fs::write(&er, text).unwrap();
        let (back, report) = read_event_log(dir.path()).unwrap();
        assert_eq!(back.len(), 1);
        let reasons: Vec<&str> = report.rejected.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(reasons, ["missing person", "missing start date", "negative duration"]);
    }
}
