//! Builds the windowed per-pin revisitation tables and prints one pin's
//! point-in-time feature vector.

use revisit_lab::attribution::{derive_revisit_events, derive_saves, join_revisits};
use revisit_lab::event::day_span;
use revisit_lab::features::{FeatureFamily, PerfTables, WINDOWS};
use revisit_lab::loggen::{generate_log, GenConfig};
use revisit_lab::{DayIndex, Surface};

fn main() -> revisit_lab::Result<()> {
    let config = GenConfig {
        n_users: 300,
        n_pins: 400,
        n_days: 21,
        ..GenConfig::default()
    };
    let log = generate_log(&config)?;
    let (first, last) = day_span(&log).expect("non-empty log");
    let saves = derive_saves(&log, Some(Surface::RelatedPins));
    let join = join_revisits(&saves, &derive_revisit_events(&log))?;
    let tables = PerfTables::compute(&log, &join, first, last)?;
    println!("{} non-empty table rows", tables.rows().count());

    let pin = tables.rows().map(|r| r.pin_id).next().expect("some pin has revisits");
    let day = DayIndex(last.0);
    println!("counts visible to a request for {pin} on day {day}:");
    for family in FeatureFamily::ALL {
        let cells: Vec<String> = WINDOWS
            .iter()
            .map(|&w| {
                let c = tables.lookup(&pin, family, w, day);
                format!("{w}d {}/{}", c.action_count, c.unique_user_count)
            })
            .collect();
        println!("  {family:<18} {}", cells.join("  "));
    }
    Ok(())
}
