use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Linked person identifier, stable across every source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PersonId(pub u64);

impl fmt::Display for PersonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Administrative data source an event was recorded in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Eviction,
    ProgramSpell,
    PublicHousing,
    MentalBehavioralHealth,
    PhysicalHealthER,
    Cyf,
    HomelessnessService,
    AssistanceApplication,
    RentalAssistancePayment,
}

impl Source {
    pub const ALL: [Source; 9] = [
        Source::Eviction,
        Source::ProgramSpell,
        Source::PublicHousing,
        Source::MentalBehavioralHealth,
        Source::PhysicalHealthER,
        Source::Cyf,
        Source::HomelessnessService,
        Source::AssistanceApplication,
        Source::RentalAssistancePayment,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short name used in file names and feature column names.
    pub fn slug(self) -> &'static str {
        match self {
            Source::Eviction => "eviction",
            Source::ProgramSpell => "program",
            Source::PublicHousing => "public_housing",
            Source::MentalBehavioralHealth => "mental_health",
            Source::PhysicalHealthER => "er",
            Source::Cyf => "cyf",
            Source::HomelessnessService => "homeless",
            Source::AssistanceApplication => "application",
            Source::RentalAssistancePayment => "payment",
        }
    }

    pub fn from_slug(slug: &str) -> Option<Source> {
        Source::ALL.into_iter().find(|s| s.slug() == slug)
    }

    /// Categorical levels recorded for this source, if any.
    pub fn kinds(self) -> &'static [Kind] {
        use Kind::*;
        match self {
            Source::Eviction => &[LandlordWon, TenantWon],
            Source::ProgramSpell => &[
                Medicaid,
                FoodAssistance,
                MedicalTransport,
                CashAssistance,
                OtherProgram,
            ],
            Source::PublicHousing => &[Section8, RapidRehousing],
            Source::MentalBehavioralHealth => &[WalkIn, Crisis, HospitalStay],
            Source::Cyf => &[FosterCare, GroupHome],
            Source::HomelessnessService => &[EmergencyShelter, StreetOutreach, TransitionalHousing],
            Source::PhysicalHealthER
            | Source::AssistanceApplication
            | Source::RentalAssistancePayment => &[],
        }
    }

    /// Whether records of this source carry a currency amount.
    pub fn has_amount(self) -> bool {
        matches!(self, Source::Eviction | Source::RentalAssistancePayment)
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

/// Per-source categorical type (program type, interaction type, case outcome, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    // eviction case outcome, known from the hearing date on
    LandlordWon,
    TenantWon,
    // county and state programs
    Medicaid,
    FoodAssistance,
    MedicalTransport,
    CashAssistance,
    OtherProgram,
    // public housing
    Section8,
    RapidRehousing,
    // mental and behavioral health
    WalkIn,
    Crisis,
    HospitalStay,
    // children, youth and families
    FosterCare,
    GroupHome,
    // homelessness services
    EmergencyShelter,
    StreetOutreach,
    TransitionalHousing,
}

impl Kind {
    pub const ALL: [Kind; 17] = [
        Kind::LandlordWon,
        Kind::TenantWon,
        Kind::Medicaid,
        Kind::FoodAssistance,
        Kind::MedicalTransport,
        Kind::CashAssistance,
        Kind::OtherProgram,
        Kind::Section8,
        Kind::RapidRehousing,
        Kind::WalkIn,
        Kind::Crisis,
        Kind::HospitalStay,
        Kind::FosterCare,
        Kind::GroupHome,
        Kind::EmergencyShelter,
        Kind::StreetOutreach,
        Kind::TransitionalHousing,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            Kind::LandlordWon => "landlord_won",
            Kind::TenantWon => "tenant_won",
            Kind::Medicaid => "medicaid",
            Kind::FoodAssistance => "food_assistance",
            Kind::MedicalTransport => "medical_transport",
            Kind::CashAssistance => "cash_assistance",
            Kind::OtherProgram => "other_program",
            Kind::Section8 => "section8",
            Kind::RapidRehousing => "rapid_rehousing",
            Kind::WalkIn => "walk_in",
            Kind::Crisis => "crisis",
            Kind::HospitalStay => "hospital_stay",
            Kind::FosterCare => "foster_care",
            Kind::GroupHome => "group_home",
            Kind::EmergencyShelter => "emergency_shelter",
            Kind::StreetOutreach => "street_outreach",
            Kind::TransitionalHousing => "transitional_housing",
        }
    }

    pub fn from_slug(slug: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.slug() == slug)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnosis {
    MajorDepression,
    BipolarDisorder,
    AnxietyDisorder,
    SubstanceUse,
    Other,
}

impl Diagnosis {
    pub const ALL: [Diagnosis; 5] = [
        Diagnosis::MajorDepression,
        Diagnosis::BipolarDisorder,
        Diagnosis::AnxietyDisorder,
        Diagnosis::SubstanceUse,
        Diagnosis::Other,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            Diagnosis::MajorDepression => "major_depression",
            Diagnosis::BipolarDisorder => "bipolar_disorder",
            Diagnosis::AnxietyDisorder => "anxiety_disorder",
            Diagnosis::SubstanceUse => "substance_use",
            Diagnosis::Other => "other",
        }
    }

    pub fn from_slug(slug: &str) -> Option<Diagnosis> {
        Diagnosis::ALL.into_iter().find(|d| d.slug() == slug)
    }
}

/// Currency in whole cents; non-negative by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cents(pub u64);

impl Cents {
    pub fn dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Cents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

/// Typed source-specific attributes. Date-valued attributes are entry dates in
/// their own right and stay hidden from a view until that date has passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Attrs {
    pub amount: Option<Cents>,
    pub kind: Option<Kind>,
    pub hearing_date: Option<NaiveDate>,
    pub ofp_date: Option<NaiveDate>,
    pub move_in_date: Option<NaiveDate>,
    pub diagnosis: Option<Diagnosis>,
}

/// One dated interaction with a data source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventRecord {
    pub person: PersonId,
    pub source: Source,
    pub event_start: NaiveDate,
    pub event_end: Option<NaiveDate>,
    pub knowledge_date: NaiveDate,
    pub attrs: Attrs,
}

impl EventRecord {
    pub fn new(person: PersonId, source: Source, event_start: NaiveDate) -> Self {
        EventRecord {
            person,
            source,
            event_start,
            event_end: None,
            knowledge_date: event_start,
            attrs: Attrs::default(),
        }
    }

    pub fn ending(mut self, end: NaiveDate) -> Self {
        self.event_end = Some(end);
        self
    }

    pub fn known_on(mut self, knowledge_date: NaiveDate) -> Self {
        self.knowledge_date = knowledge_date;
        self
    }

    pub fn with_attrs(mut self, attrs: Attrs) -> Self {
        self.attrs = attrs;
        self
    }

    pub fn with_kind(mut self, kind: Kind) -> Self {
        self.attrs.kind = Some(kind);
        self
    }

    pub fn with_amount(mut self, amount: Cents) -> Self {
        self.attrs.amount = Some(amount);
        self
    }

    /// Reasons this record violates the record-level invariants, if any.
    pub fn validate(&self) -> Option<&'static str> {
        if matches!(self.event_end, Some(end) if end < self.event_start) {
            return Some("negative duration");
        }
        if self.knowledge_date < self.event_start {
            return Some("knowledge date precedes entry date");
        }
        if matches!(self.attrs.move_in_date, Some(d) if d < self.event_start) {
            return Some("move-in precedes enrollment");
        }
        if matches!(self.attrs.ofp_date, Some(d) if d < self.event_start) {
            return Some("order for possession precedes filing");
        }
        if matches!(self.attrs.hearing_date, Some(d) if d < self.event_start) {
            return Some("hearing precedes filing");
        }
        if let Some(kind) = self.attrs.kind {
            if !self.source.kinds().contains(&kind) {
                return Some("kind not valid for source");
            }
        }
        None
    }

    /// The record as it was known on `as_of`: end dates and dated attributes
    /// that lie in the future are withheld. An eviction outcome is only known
    /// once the hearing has happened.
    pub fn redacted(&self, as_of: NaiveDate) -> EventRecord {
        let mut r = *self;
        let hide = |d: Option<NaiveDate>| d.filter(|d| *d <= as_of);
        r.event_end = hide(r.event_end);
        r.attrs.hearing_date = hide(r.attrs.hearing_date);
        r.attrs.ofp_date = hide(r.attrs.ofp_date);
        r.attrs.move_in_date = hide(r.attrs.move_in_date);
        if r.source == Source::Eviction && r.attrs.hearing_date.is_none() {
            r.attrs.kind = None;
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    Unknown,
}

impl Gender {
    pub const ALL: [Gender; 3] = [Gender::Female, Gender::Male, Gender::Unknown];

    pub fn slug(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Unknown => "unknown",
        }
    }

    pub fn from_slug(s: &str) -> Option<Gender> {
        Gender::ALL.into_iter().find(|g| g.slug() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Race {
    Black,
    White,
    Other,
    Unknown,
}

impl Race {
    pub const ALL: [Race; 4] = [Race::Black, Race::White, Race::Other, Race::Unknown];

    pub fn slug(self) -> &'static str {
        match self {
            Race::Black => "black",
            Race::White => "white",
            Race::Other => "other",
            Race::Unknown => "unknown",
        }
    }

    pub fn from_slug(s: &str) -> Option<Race> {
        Race::ALL.into_iter().find(|r| r.slug() == s)
    }
}

/// Demographics as recorded during one interaction. Older snapshots are never
/// rewritten, so an as-of lookup cannot see information from later contacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DemographicSnapshot {
    pub person: PersonId,
    pub collected_on: NaiveDate,
    pub gender: Gender,
    pub race: Race,
    pub birthdate: NaiveDate,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dates::ymd;

    #[test]
    fn redaction_hides_future_dated_attributes() {
        let r = EventRecord::new(PersonId(1), Source::Eviction, ymd(2018, 12, 1)).with_attrs(Attrs {
            amount: Some(Cents(120_000)),
            kind: Some(Kind::LandlordWon),
            hearing_date: Some(ymd(2018, 12, 20)),
            ofp_date: Some(ymd(2019, 2, 1)),
            ..Attrs::default()
        });
        let early = r.redacted(ymd(2018, 12, 10));
        assert_eq!(early.attrs.hearing_date, None);
        assert_eq!(early.attrs.kind, None);
        assert_eq!(early.attrs.ofp_date, None);
        let mid = r.redacted(ymd(2019, 1, 1));
        assert_eq!(mid.attrs.kind, Some(Kind::LandlordWon));
        assert_eq!(mid.attrs.ofp_date, None);
        assert_eq!(r.redacted(ymd(2019, 2, 1)), r);
    }

    #[test]
    fn validation_reasons() {
        let start = ymd(2018, 5, 1);
        let base = EventRecord::new(PersonId(1), Source::HomelessnessService, start);
        assert_eq!(base.validate(), None);
        assert_eq!(base.ending(ymd(2018, 4, 1)).validate(), Some("negative duration"));
        assert_eq!(
            base.known_on(ymd(2018, 4, 30)).validate(),
            Some("knowledge date precedes entry date")
        );
        assert_eq!(
            base.with_kind(Kind::Medicaid).validate(),
            Some("kind not valid for source")
        );
    }

    #[test]
    fn slugs_round_trip() {
        for s in Source::ALL {
            assert_eq!(Source::from_slug(s.slug()), Some(s));
        }
        for k in Kind::ALL {
            assert_eq!(Kind::from_slug(k.slug()), Some(k));
        }
    }
}
