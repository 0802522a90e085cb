//! Builds a tiny event log by hand and shows what a scoring date can see:
//! late-arriving records stay hidden, and dates recorded after the as-of
//! date are stripped from records that are visible.
//!
//! cargo run --example leakage_guarded_store

use rental_triage::dates::ymd;
use rental_triage::store::{Cents, EventLog, EventRecord, Kind, PersonId, Source};

fn main() {
    let p = PersonId(1);
    let mut filing = EventRecord::new(p, Source::Eviction, ymd(2019, 3, 1))
        .known_on(ymd(2019, 3, 4))
        .with_amount(Cents(420_000))
        .with_kind(Kind::LandlordWon);
    filing.attrs.hearing_date = Some(ymd(2019, 4, 10));
    let shelter = EventRecord::new(p, Source::HomelessnessService, ymd(2019, 2, 20))
        .ending(ymd(2019, 3, 30))
        .known_on(ymd(2019, 2, 20))
        .with_kind(Kind::EmergencyShelter);
    // entered into the system two months after it happened
    let late_er = EventRecord::new(p, Source::PhysicalHealthER, ymd(2019, 1, 15)).known_on(ymd(2019, 5, 1));

    let (log, report) = EventLog::ingest([filing, shelter, late_er]);
    println!("accepted {}, rejected {}", report.accepted, report.rejected.len());

    for as_of in [ymd(2019, 3, 15), ymd(2019, 6, 1)] {
        let view = log.as_of(as_of);
        println!("\nas of {as_of}: {} visible records", view.len());
        for r in view.records() {
            println!(
                "  {:<22} start {} end {:<10} kind {:<18} hearing {}",
                r.source.slug(),
                r.event_start,
                r.event_end.map_or("-".into(), |d| d.to_string()),
                r.attrs.kind.map_or("-", |k| k.slug()),
                r.attrs.hearing_date.map_or("-".into(), |d| d.to_string()),
            );
        }
    }
}
