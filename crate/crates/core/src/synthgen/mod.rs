//! Seeded generator of linked administrative histories.
//!
//! Each synthetic person carries one latent vulnerability score. That score
//! scales the intensity of every event stream and the homelessness hazard, so
//! cross-source signal arises without being planted feature by feature. Every
//! eviction filing opens an at-risk episode with a pair of potential outcomes
//! (homeless if untreated, homeless if paid in time); [`generate`] realizes the
//! untreated branch and [`replay_current_process`] applies today's
//! first-come-first-served waitlist on top.

mod config;
mod replay;
mod truth;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use rayon::prelude::*;

pub use config::{
    AssistanceModel, BaseIntensities, DemographicMix, FirstTimeHardness, KnowledgeLags,
    Moratorium, PopulationConfig, VulnerabilityModel,
};
pub use replay::replay_current_process;
pub use truth::{write_ground_truth, Episode, GroundTruth, PersonTruth};

use crate::dates::{add_days, add_months, age_in_years, days_between};
use crate::error::Result;
use crate::store::{
    Attrs, Cents, DemographicSnapshot, Diagnosis, EventLog, EventRecord, Gender, Kind, PersonId,
    Race, Source,
};

/// Mixes a seed with a stream index into an independent 64-bit seed.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

struct PersonSim {
    truth: PersonTruth,
    records: Vec<EventRecord>,
    snapshots: Vec<DemographicSnapshot>,
    episodes: Vec<Episode>,
}

/// Homelessness history state that feeds back into the hazard.
#[derive(Default)]
struct HazardState {
    last_spell: Option<NaiveDate>,
    last_crisis: Option<NaiveDate>,
}

impl HazardState {
    fn log_odds_shift(&self, on: NaiveDate, m: &VulnerabilityModel) -> f64 {
        let mut shift = 0.0;
        if let Some(last) = self.last_spell {
            let months = days_between(last, on).max(0) as f64 / 30.44;
            shift += m.ever_homeless + m.recent_homelessness * (-months / m.recency_decay_months).exp();
        }
        if let Some(c) = self.last_crisis {
            if days_between(c, on) <= 183 {
                shift += m.recent_crisis;
            }
        }
        shift
    }
}

struct PersonGen<'a> {
    cfg: &'a PopulationConfig,
    rng: ChaCha8Rng,
    person: PersonId,
    records: Vec<EventRecord>,
}

impl PersonGen<'_> {
    fn uniform_days(&mut self, lo: i64, hi: i64) -> i64 {
        self.rng.random_range(lo..=hi)
    }

    fn push(&mut self, mut r: EventRecord) {
        let lag = self.cfg.knowledge_lags.for_source(r.source) as i64;
        r.knowledge_date = add_days(r.event_start, lag);
        self.records.push(r);
    }

    fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        Poisson::new(mean).map(|d| d.sample(&mut self.rng) as u64).unwrap_or(0)
    }

    fn day_in(&mut self, from: NaiveDate, to: NaiveDate) -> NaiveDate {
        let span = days_between(from, to);
        add_days(from, self.uniform_days(0, span))
    }

    /// A homelessness spell starting on `start`, plus an optional follow-up
    /// rapid-rehousing enrollment.
    fn spell(&mut self, start: NaiveDate) -> (EventRecord, Option<EventRecord>) {
        let u: f64 = self.rng.random();
        let (kind, days) = if u < 0.75 {
            (Kind::EmergencyShelter, self.uniform_days(3, 150))
        } else if u < 0.9 {
            (Kind::StreetOutreach, 0)
        } else {
            (Kind::TransitionalHousing, self.uniform_days(30, 365))
        };
        let spell = EventRecord::new(self.person, Source::HomelessnessService, start)
            .with_kind(kind)
            .ending(add_days(start, days));
        let follow_up = if self.rng.random::<f64>() < self.cfg.vulnerability.p_rehousing_after_spell {
            let enroll = add_days(start, self.uniform_days(0, 30));
            let mut r = EventRecord::new(self.person, Source::PublicHousing, enroll)
                .with_kind(Kind::RapidRehousing);
            if self.rng.random::<f64>() < 0.7 {
                let move_in = add_days(enroll, self.uniform_days(30, 240));
                r.attrs.move_in_date = Some(move_in);
                r.event_end = Some(add_days(move_in, self.uniform_days(180, 720)));
            } else {
                r.event_end = Some(add_days(enroll, self.uniform_days(60, 365)));
            }
            Some(r)
        } else {
            None
        };
        (spell, follow_up)
    }
}

fn simulate_person(cfg: &PopulationConfig, index: usize) -> PersonSim {
    let mut g = PersonGen {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, index as u64)),
        person: PersonId(index as u64 + 1),
        records: Vec::new(),
    };
    let vm = &cfg.vulnerability;
    let v: f64 = Normal::new(0.0, 1.0).unwrap().sample(&mut g.rng);
    let hard = match &cfg.first_time_hardness {
        Some(h) => g.rng.random::<f64>() < h.share,
        None => false,
    };
    let expressed = match (&cfg.first_time_hardness, hard) {
        (Some(h), true) => v * h.expression,
        _ => v,
    };
    let d = &cfg.demographics;
    let female = g.rng.random::<f64>() < sigmoid(logit(d.p_female) + d.female_tilt * v);
    let black = g.rng.random::<f64>() < sigmoid(logit(d.p_black) + d.black_tilt * v);
    let race = if black {
        Race::Black
    } else if g.rng.random::<f64>() < d.p_white_given_not_black {
        Race::White
    } else {
        Race::Other
    };
    let gender = if female { Gender::Female } else { Gender::Male };
    let age_days = g.uniform_days(16 * 365, 70 * 365);
    let birthdate = add_days(cfg.start, -age_days);

    let intensity = |base: f64, loading: f64| base * (loading * expressed - loading * loading / 2.0).exp();
    let i = &cfg.intensities;
    let rate_eviction = intensity(i.eviction, vm.eviction_loading);
    let rate_program = intensity(i.program, vm.program_loading);
    let rate_housing = i.public_housing;
    let rate_mh = intensity(i.mental_health, vm.mental_health_loading);
    let rate_er = intensity(i.er, vm.er_loading);
    let rate_cyf = intensity(i.cyf, vm.cyf_loading);
    let p_crisis = sigmoid(vm.crisis_intercept + vm.crisis_loading * expressed);
    let amount_dist = LogNormal::new((1800.0f64).ln() + vm.amount_loading * expressed, 0.6).unwrap();

    let mut state = HazardState::default();
    let mut pending: Vec<(NaiveDate, Option<usize>)> = Vec::new();
    let mut episodes: Vec<Episode> = Vec::new();
    let mut month = cfg.start;
    while month <= cfg.end {
        let next = add_months(month, 1);
        let month_end = add_days(next, -1).min(cfg.end);
        let frac = (days_between(month, month_end) + 1) as f64 / 365.25;
        let adult = age_in_years(birthdate, month) >= 18;
        let shift = state.log_odds_shift(month, vm);

        // mental and behavioral health
        for _ in 0..g.poisson(rate_mh * frac) {
            let day = g.day_in(month, month_end);
            let r = EventRecord::new(g.person, Source::MentalBehavioralHealth, day);
            let r = if g.rng.random::<f64>() < p_crisis {
                state.last_crisis = Some(state.last_crisis.map_or(day, |c| c.max(day)));
                r.with_kind(Kind::Crisis)
            } else if g.rng.random::<f64>() < 0.8 {
                r.with_kind(Kind::WalkIn)
            } else {
                let stay = g.uniform_days(2, 21);
                r.with_kind(Kind::HospitalStay).ending(add_days(day, stay))
            };
            let mut r = r;
            if g.rng.random::<f64>() < 0.3 {
                r.attrs.diagnosis = Some(Diagnosis::ALL[g.rng.random_range(0..Diagnosis::ALL.len())]);
            }
            g.push(r);
        }

        for _ in 0..g.poisson(rate_er * frac) {
            let day = g.day_in(month, month_end);
            let stay = if g.rng.random::<f64>() < 0.2 { g.uniform_days(1, 6) } else { 0 };
            g.push(EventRecord::new(g.person, Source::PhysicalHealthER, day).ending(add_days(day, stay)));
        }

        for _ in 0..g.poisson(rate_program * frac) {
            let day = g.day_in(month, month_end);
            let u: f64 = g.rng.random();
            let kind = match u {
                u if u < 0.35 => Kind::Medicaid,
                u if u < 0.65 => Kind::FoodAssistance,
                u if u < 0.75 => Kind::MedicalTransport,
                u if u < 0.9 => Kind::CashAssistance,
                _ => Kind::OtherProgram,
            };
            let len = g.uniform_days(30, 720);
            g.push(EventRecord::new(g.person, Source::ProgramSpell, day).with_kind(kind).ending(add_days(day, len)));
        }

        if adult {
            for _ in 0..g.poisson(rate_housing * frac) {
                let day = g.day_in(month, month_end);
                let mut r = EventRecord::new(g.person, Source::PublicHousing, day).with_kind(Kind::Section8);
                if g.rng.random::<f64>() < 0.8 {
                    let wait = g.uniform_days(30, 365);
                    r.attrs.move_in_date = Some(add_days(day, wait));
                }
                g.push(r);
            }
        } else {
            for _ in 0..g.poisson(rate_cyf * frac) {
                let day = g.day_in(month, month_end);
                let kind = if g.rng.random::<f64>() < 0.6 { Kind::FosterCare } else { Kind::GroupHome };
                let len = g.uniform_days(30, 700);
                g.push(EventRecord::new(g.person, Source::Cyf, day).with_kind(kind).ending(add_days(day, len)));
            }
        }

        if adult {
            let mult = moratorium_multiplier(cfg.moratorium.as_ref(), month, month_end);
            for _ in 0..g.poisson(rate_eviction * frac * mult) {
                let filed = g.day_in(month, month_end);
                let amount = Cents((amount_dist.sample(&mut g.rng) * 100.0).round() as u64);
                let hearing = add_days(filed, g.uniform_days(14, 45));
                let landlord_won = g.rng.random::<f64>() < 0.75;
                let ofp = if landlord_won && g.rng.random::<f64>() < 0.85 {
                    Some(add_days(hearing, g.uniform_days(10, 30)))
                } else {
                    None
                };
                let filing = EventRecord::new(g.person, Source::Eviction, filed).with_attrs(Attrs {
                    amount: Some(amount),
                    kind: Some(if landlord_won { Kind::LandlordWon } else { Kind::TenantWon }),
                    hearing_date: Some(hearing),
                    ofp_date: ofp,
                    ..Attrs::default()
                });
                g.push(filing);

                let risk = sigmoid(vm.episode_intercept + vm.episode_vulnerability * v + shift);
                let draw: f64 = g.rng.random();
                let untreated = draw < risk;
                let treated = draw < risk * cfg.assistance.treatment_risk_multiplier;
                let spell_start = add_days(filed, g.uniform_days(20, 300));
                let local = episodes.len();
                episodes.push(Episode {
                    id: 0,
                    person: g.person,
                    filing,
                    risk,
                    draw,
                    homeless_if_untreated: untreated,
                    homeless_if_treated: treated,
                    spell: None,
                    follow_up: None,
                    application: None,
                    payment: None,
                    treated: false,
                });
                if untreated {
                    pending.push((spell_start, Some(local)));
                }
            }
        }

        // background homelessness, independent of any filing
        let hazard = sigmoid(vm.background_intercept + vm.background_vulnerability * v + shift);
        if g.rng.random::<f64>() < hazard {
            let start = g.day_in(month, month_end);
            pending.push((start, None));
        }

        // realize spells that begin this month, in date order
        pending.sort_by_key(|(d, e)| (*d, *e));
        let due = pending.partition_point(|(d, _)| *d <= month_end);
        let starting: Vec<(NaiveDate, Option<usize>)> = pending.drain(..due).collect();
        for (start, episode) in starting {
            let (spell, follow_up) = g.spell(start);
            g.push(spell);
            let spell = *g.records.last().unwrap();
            let follow_up = follow_up.map(|f| {
                g.push(f);
                *g.records.last().unwrap()
            });
            if let Some(e) = episode {
                episodes[e].spell = Some(spell);
                episodes[e].follow_up = follow_up;
            }
            state.last_spell = Some(state.last_spell.map_or(start, |d| d.max(start)));
        }
        month = next;
    }
    // spells scheduled past the range never make it into the log
    for (start, episode) in pending {
        if let Some(e) = episode {
            let (spell, _) = g.spell(start);
            episodes[e].spell = Some(spell);
        }
    }

    let horizon = cfg.end;
    let mut records: Vec<EventRecord> = g
        .records
        .into_iter()
        .filter(|r| r.knowledge_date <= horizon)
        .map(|r| r.redacted(horizon))
        .collect();
    records.sort_unstable();
    for e in &mut episodes {
        e.filing = e.filing.redacted(horizon);
        e.spell = e.spell.map(|s| if s.knowledge_date <= horizon { s.redacted(horizon) } else { s });
        e.follow_up = e.follow_up.map(|f| if f.knowledge_date <= horizon { f.redacted(horizon) } else { f });
    }
    let snapshots = snapshots_for(&records, gender, race, birthdate);
    PersonSim {
        truth: PersonTruth {
            person: g.person,
            vulnerability: v,
            hard_to_detect: hard,
            gender,
            race,
            birthdate,
        },
        records,
        snapshots,
        episodes,
    }
}

/// One demographic snapshot per interaction day.
fn snapshots_for(records: &[EventRecord], gender: Gender, race: Race, birthdate: NaiveDate) -> Vec<DemographicSnapshot> {
    let mut days: Vec<(PersonId, NaiveDate)> = records.iter().map(|r| (r.person, r.event_start)).collect();
    days.sort_unstable();
    days.dedup();
    days.into_iter()
        .map(|(person, collected_on)| DemographicSnapshot { person, collected_on, gender, race, birthdate })
        .collect()
}

fn moratorium_multiplier(m: Option<&Moratorium>, from: NaiveDate, to: NaiveDate) -> f64 {
    let Some(m) = m else { return 1.0 };
    let lo = from.max(m.start);
    let hi = to.min(m.end);
    if hi < lo {
        return 1.0;
    }
    let covered = (days_between(lo, hi) + 1) as f64 / (days_between(from, to) + 1) as f64;
    1.0 - covered * (1.0 - m.filing_multiplier)
}

/// Generates the untreated world: event histories plus ground truth.
/// Deterministic for a given config; persons are simulated independently
/// from per-person sub-seeds, so the result does not depend on thread count.
pub fn generate(config: &PopulationConfig) -> Result<(EventLog, GroundTruth)> {
    config.validate()?;
    let sims: Vec<PersonSim> = (0..config.n_persons)
        .into_par_iter()
        .map(|i| simulate_person(config, i))
        .collect();
    let mut persons = Vec::with_capacity(sims.len());
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let mut episodes = Vec::new();
    for sim in sims {
        persons.push(sim.truth);
        records.extend(sim.records);
        snapshots.extend(sim.snapshots);
        for mut e in sim.episodes {
            e.id = episodes.len();
            episodes.push(e);
        }
    }
    let (log, report) = EventLog::ingest_with_demographics(records, snapshots);
    debug_assert!(report.rejected.is_empty(), "generator produced invalid records: {:?}", report.rejected);
    Ok((log.with_horizon(config.end), GroundTruth { persons, episodes }))
}

/// Generates a population and runs the current assistance process over it.
pub fn simulate(config: &PopulationConfig) -> Result<(EventLog, GroundTruth)> {
    let (log, truth) = generate(config)?;
    Ok(replay_current_process(&log, &truth, config))
}

#[cfg(test)]
mod tests;
