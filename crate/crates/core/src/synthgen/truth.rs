use std::path::Path;

use chrono::NaiveDate;

use crate::error::Result;
use crate::store::{EventRecord, Gender, PersonId, Race};

#[derive(Debug, Clone, PartialEq)]
pub struct PersonTruth {
    pub person: PersonId,
    pub vulnerability: f64,
    /// Member of the subpopulation whose vulnerability barely shows outside
    /// the homelessness stream.
    pub hard_to_detect: bool,
    pub gender: Gender,
    pub race: Race,
    pub birthdate: NaiveDate,
}

/// One eviction filing and the two outcomes it could lead to.
///
/// A single uniform `draw` decides both branches: homeless if untreated when
/// `draw < risk`, homeless if treated when `draw < risk * multiplier`. The
/// treated branch is therefore never worse than the untreated one.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: usize,
    pub person: PersonId,
    pub filing: EventRecord,
    pub risk: f64,
    pub draw: f64,
    pub homeless_if_untreated: bool,
    pub homeless_if_treated: bool,
    /// The spell that follows if the person is not treated in time. May lie
    /// beyond the data horizon, in which case it is absent from the log.
    pub spell: Option<EventRecord>,
    pub follow_up: Option<EventRecord>,
    pub application: Option<NaiveDate>,
    pub payment: Option<NaiveDate>,
    /// Paid before the spell would have started.
    pub treated: bool,
}

impl Episode {
    /// The outcome that actually happened given treatment status.
    pub fn observed_homeless(&self) -> bool {
        if self.treated {
            self.homeless_if_treated
        } else {
            self.homeless_if_untreated
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    /// Indexed by `PersonId.0 - 1`.
    pub persons: Vec<PersonTruth>,
    /// Ordered by person, then filing date.
    pub episodes: Vec<Episode>,
}

impl GroundTruth {
    pub fn person(&self, id: PersonId) -> Option<&PersonTruth> {
        let idx = (id.0 as usize).checked_sub(1)?;
        self.persons.get(idx).filter(|p| p.person == id)
    }

    pub fn episodes_of(&self, id: PersonId) -> &[Episode] {
        let lo = self.episodes.partition_point(|e| e.person < id);
        let hi = self.episodes.partition_point(|e| e.person <= id);
        &self.episodes[lo..hi]
    }
}

fn flag(b: bool) -> u8 {
    b as u8
}

/// Writes one row per episode, plus one row per person without any episode.
pub fn write_ground_truth(truth: &GroundTruth, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "person_id",
        "vulnerability",
        "hard_to_detect",
        "episode_id",
        "filing_date",
        "risk",
        "homeless_if_untreated",
        "homeless_if_treated",
        "applied_on",
        "paid_on",
        "treated",
    ])?;
    for p in &truth.persons {
        let eps = truth.episodes_of(p.person);
        let base = [p.person.0.to_string(), format!("{}", p.vulnerability), flag(p.hard_to_detect).to_string()];
        if eps.is_empty() {
            let mut row = base.to_vec();
            row.extend(std::iter::repeat_n(String::new(), 8));
            w.write_record(&row)?;
        }
        for e in eps {
            let mut row = base.to_vec();
            row.extend([
                e.id.to_string(),
                e.filing.event_start.to_string(),
                format!("{}", e.risk),
                flag(e.homeless_if_untreated).to_string(),
                flag(e.homeless_if_treated).to_string(),
                e.application.map(|d| d.to_string()).unwrap_or_default(),
                e.payment.map(|d| d.to_string()).unwrap_or_default(),
                flag(e.treated).to_string(),
            ]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
