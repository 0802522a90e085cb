use std::collections::{HashSet, VecDeque};

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sub_seed, GroundTruth, PopulationConfig};
use crate::dates::{add_days, add_months, ymd};
use crate::store::{DemographicSnapshot, EventLog, EventRecord, PersonId, Source};

const REPLAY_STREAM: u64 = 0x5245_504c_4159;

/// Runs today's first-come-first-served assistance process over a generated
/// population.
///
/// Tenants apply after a filing with probability `p_apply_given_filing`
/// (or `p_apply_prior_homeless` if they were homeless before). Applications
/// join a FIFO waitlist; on the 15th of each month up to
/// `waitlist_capacity_per_month` applicants who have waited at least
/// `payment_delay_days` are paid, and applications older than `max_wait_days`
/// lapse. A payment that lands before the episode's spell would have started
/// flips the episode onto its treated branch: the spell and its follow-up are
/// removed from the log when the treated outcome is not homeless.
pub fn replay_current_process(log: &EventLog, truth: &GroundTruth, config: &PopulationConfig) -> (EventLog, GroundTruth) {
    let a = &config.assistance;
    let horizon = log.horizon();
    let mut truth = truth.clone();

    let mut applications: Vec<(NaiveDate, PersonId, usize)> = Vec::new();
    for e in &mut truth.episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed ^ REPLAY_STREAM, e.id as u64));
        let filed = e.filing.event_start;
        let prior = log
            .as_of(filed)
            .history(e.person, Source::HomelessnessService)
            .any(|r| r.event_start < filed);
        let p = if prior { a.p_apply_prior_homeless } else { a.p_apply_given_filing };
        let u: f64 = rng.random();
        let lag = rng.random_range(0..=21);
        if u < p {
            let applied = add_days(filed, lag);
            if applied <= horizon {
                e.application = Some(applied);
                applications.push((applied, e.person, e.id));
            }
        }
    }
    applications.sort_unstable();

    let delay = a.payment_delay_days as i64;
    let max_wait = a.max_wait_days as i64;
    let mut next = 0;
    let mut queue: VecDeque<(NaiveDate, usize)> = VecDeque::new();
    let mut cycle = ymd(config.start.year(), config.start.month(), 15);
    while cycle <= horizon {
        while next < applications.len() && add_days(applications[next].0, delay) <= cycle {
            queue.push_back((applications[next].0, applications[next].2));
            next += 1;
        }
        queue.retain(|(applied, _)| add_days(*applied, max_wait) >= cycle);
        for _ in 0..a.waitlist_capacity_per_month {
            let Some((_, id)) = queue.pop_front() else { break };
            truth.episodes[id].payment = Some(cycle);
        }
        cycle = add_months(cycle, 1);
    }

    let mut removed: HashSet<EventRecord> = HashSet::new();
    let mut added: Vec<EventRecord> = Vec::new();
    for e in &mut truth.episodes {
        if let Some(applied) = e.application {
            let known = add_days(applied, config.knowledge_lags.application as i64);
            if known <= horizon {
                added.push(EventRecord::new(e.person, Source::AssistanceApplication, applied).known_on(known));
            }
        }
        let Some(paid) = e.payment else { continue };
        let known = add_days(paid, config.knowledge_lags.payment as i64);
        if known <= horizon {
            let mut payment = EventRecord::new(e.person, Source::RentalAssistancePayment, paid).known_on(known);
            payment.attrs.amount = e.filing.attrs.amount;
            added.push(payment);
        }
        e.treated = e.spell.is_none_or(|s| paid < s.event_start);
        if e.treated && e.homeless_if_untreated && !e.homeless_if_treated {
            removed.extend(e.spell);
            removed.extend(e.follow_up);
        }
    }

    let mut records: Vec<EventRecord> = log.records().iter().filter(|r| !removed.contains(r)).copied().collect();
    records.extend(added.iter().copied());
    let days: HashSet<(PersonId, NaiveDate)> = records.iter().map(|r| (r.person, r.event_start)).collect();
    let mut snapshots: Vec<DemographicSnapshot> = log
        .demographic_snapshots()
        .iter()
        .filter(|s| days.contains(&(s.person, s.collected_on)))
        .copied()
        .collect();
    for r in &added {
        if let Some(p) = truth.person(r.person) {
            snapshots.push(DemographicSnapshot {
                person: r.person,
                collected_on: r.event_start,
                gender: p.gender,
                race: p.race,
                birthdate: p.birthdate,
            });
        }
    }
    snapshots.sort_unstable();
    snapshots.dedup();
    let (out, _) = EventLog::ingest_with_demographics(records, snapshots);
    (out.with_horizon(horizon), truth)
}
