use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dates::{add_months, ymd};
use crate::error::{Error, Result};

/// Share of female and Black persons, with an optional tilt of each toward
/// higher latent vulnerability (log-odds per unit of vulnerability).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemographicMix {
    pub p_female: f64,
    pub p_black: f64,
    /// Among non-Black persons, share recorded as white (rest are "other").
    pub p_white_given_not_black: f64,
    pub female_tilt: f64,
    pub black_tilt: f64,
}

impl Default for DemographicMix {
    fn default() -> Self {
        DemographicMix {
            p_female: 0.555,
            p_black: 0.54,
            p_white_given_not_black: 0.85,
            female_tilt: 0.12,
            black_tilt: 0.08,
        }
    }
}

/// Baseline event intensities in events per person-year, for a person of
/// average vulnerability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseIntensities {
    pub eviction: f64,
    pub program: f64,
    pub public_housing: f64,
    pub mental_health: f64,
    pub er: f64,
    /// Only applies while a person is a minor.
    pub cyf: f64,
}

impl Default for BaseIntensities {
    fn default() -> Self {
        BaseIntensities {
            eviction: 0.55,
            program: 0.5,
            public_housing: 0.03,
            mental_health: 0.35,
            er: 0.45,
            cyf: 0.4,
        }
    }
}

/// Coefficients tying the latent vulnerability score to event intensities and
/// to the homelessness hazard.
///
/// Loadings multiply the log-intensity of each stream. Homelessness risk is a
/// logistic function of vulnerability, of how recently the person was last
/// homeless (decaying with `recency_decay_months`), of ever having been
/// homeless, and of a mental-health crisis in the last six months.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VulnerabilityModel {
    pub eviction_loading: f64,
    pub program_loading: f64,
    pub mental_health_loading: f64,
    pub er_loading: f64,
    pub cyf_loading: f64,
    pub amount_loading: f64,
    /// Probability that a mental-health contact is a crisis, on the logit scale.
    pub crisis_intercept: f64,
    pub crisis_loading: f64,
    pub episode_intercept: f64,
    pub episode_vulnerability: f64,
    pub background_intercept: f64,
    pub background_vulnerability: f64,
    pub recent_homelessness: f64,
    pub ever_homeless: f64,
    pub recent_crisis: f64,
    pub recency_decay_months: f64,
    /// Chance that a homelessness spell is followed by a rapid-rehousing enrollment.
    pub p_rehousing_after_spell: f64,
}

impl Default for VulnerabilityModel {
    fn default() -> Self {
        VulnerabilityModel {
            eviction_loading: 0.45,
            program_loading: 0.7,
            mental_health_loading: 0.9,
            er_loading: 0.6,
            cyf_loading: 0.6,
            amount_loading: 0.15,
            crisis_intercept: -1.4,
            crisis_loading: 0.5,
            episode_intercept: -5.95,
            episode_vulnerability: 1.15,
            background_intercept: -8.8,
            background_vulnerability: 1.1,
            recent_homelessness: 1.1,
            ever_homeless: 0.3,
            recent_crisis: 1.2,
            recency_decay_months: 14.0,
            p_rehousing_after_spell: 0.25,
        }
    }
}

/// Period during which eviction filings are suppressed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Moratorium {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub filing_multiplier: f64,
}

impl Default for Moratorium {
    fn default() -> Self {
        Moratorium {
            start: ymd(2020, 3, 18),
            end: ymd(2021, 7, 31),
            filing_multiplier: 0.12,
        }
    }
}

/// First-come-first-served rental assistance as it operates today.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssistanceModel {
    pub p_apply_given_filing: f64,
    /// Application probability for tenants who have been homeless before.
    pub p_apply_prior_homeless: f64,
    pub waitlist_capacity_per_month: u32,
    /// Minimum days between application and payment.
    pub payment_delay_days: u32,
    /// Applications still unpaid after this many days drop off the waitlist.
    pub max_wait_days: u32,
    /// Relative homelessness risk for a tenant who is paid in time.
    pub treatment_risk_multiplier: f64,
}

impl Default for AssistanceModel {
    fn default() -> Self {
        AssistanceModel {
            p_apply_given_filing: 0.22,
            p_apply_prior_homeless: 0.16,
            waitlist_capacity_per_month: 100,
            payment_delay_days: 45,
            max_wait_days: 180,
            treatment_risk_multiplier: 0.24,
        }
    }
}

/// A subpopulation whose vulnerability shows only weakly outside the
/// homelessness stream, which makes their first spell hard to anticipate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirstTimeHardness {
    pub share: f64,
    /// Multiplier on vulnerability in non-homelessness streams (0 = invisible).
    pub expression: f64,
}

impl Default for FirstTimeHardness {
    fn default() -> Self {
        FirstTimeHardness { share: 0.5, expression: 0.25 }
    }
}

/// Knowledge-date lag per source, in days after the entry date.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnowledgeLags {
    pub eviction: u32,
    pub program: u32,
    pub public_housing: u32,
    pub mental_health: u32,
    pub er: u32,
    pub cyf: u32,
    pub homeless: u32,
    pub application: u32,
    pub payment: u32,
}

impl KnowledgeLags {
    pub fn for_source(&self, source: crate::store::Source) -> u32 {
        use crate::store::Source::*;
        match source {
            Eviction => self.eviction,
            ProgramSpell => self.program,
            PublicHousing => self.public_housing,
            MentalBehavioralHealth => self.mental_health,
            PhysicalHealthER => self.er,
            Cyf => self.cyf,
            HomelessnessService => self.homeless,
            AssistanceApplication => self.application,
            RentalAssistancePayment => self.payment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub n_persons: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub seed: u64,
    pub demographics: DemographicMix,
    pub intensities: BaseIntensities,
    pub vulnerability: VulnerabilityModel,
    pub moratorium: Option<Moratorium>,
    pub assistance: AssistanceModel,
    pub first_time_hardness: Option<FirstTimeHardness>,
    pub knowledge_lags: KnowledgeLags,
    /// Shortest usable range; one outcome label span.
    pub label_span_months: u32,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            n_persons: 20_000,
            start: ymd(2012, 1, 1),
            end: ymd(2023, 8, 31),
            seed: 0,
            demographics: DemographicMix::default(),
            intensities: BaseIntensities::default(),
            vulnerability: VulnerabilityModel::default(),
            moratorium: Some(Moratorium::default()),
            assistance: AssistanceModel::default(),
            first_time_hardness: Some(FirstTimeHardness::default()),
            knowledge_lags: KnowledgeLags::default(),
            label_span_months: 12,
        }
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be in [0, 1], got {p}")))
    }
}

fn check_rate(name: &str, r: f64) -> Result<()> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be a finite rate >= 0, got {r}")))
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.end < add_months(self.start, self.label_span_months) {
            return Err(Error::InsufficientRange(format!(
                "date range {}..{} is shorter than one {}-month label span",
                self.start, self.end, self.label_span_months
            )));
        }
        let d = &self.demographics;
        check_probability("p_female", d.p_female)?;
        check_probability("p_black", d.p_black)?;
        check_probability("p_white_given_not_black", d.p_white_given_not_black)?;
        let i = &self.intensities;
        for (name, r) in [
            ("eviction", i.eviction),
            ("program", i.program),
            ("public_housing", i.public_housing),
            ("mental_health", i.mental_health),
            ("er", i.er),
            ("cyf", i.cyf),
        ] {
            check_rate(name, r)?;
        }
        check_probability("p_rehousing_after_spell", self.vulnerability.p_rehousing_after_spell)?;
        if self.vulnerability.recency_decay_months <= 0.0 {
            return Err(Error::Config("recency_decay_months must be > 0".into()));
        }
        let a = &self.assistance;
        check_probability("p_apply_given_filing", a.p_apply_given_filing)?;
        check_probability("p_apply_prior_homeless", a.p_apply_prior_homeless)?;
        check_probability("treatment_risk_multiplier", a.treatment_risk_multiplier)?;
        if let Some(m) = &self.moratorium {
            check_rate("filing_multiplier", m.filing_multiplier)?;
            if m.end < m.start {
                return Err(Error::Config("moratorium ends before it starts".into()));
            }
        }
        if let Some(h) = &self.first_time_hardness {
            check_probability("hardness share", h.share)?;
            check_rate("hardness expression", h.expression)?;
        }
        Ok(())
    }

    /// Length of the generated date range plus one day; the natural sentinel
    /// for "no such event" day counts.
    pub fn range_days(&self) -> u32 {
        ((self.end - self.start).num_days() + 1) as u32
    }
}
