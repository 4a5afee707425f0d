//! Revisit curves, the per-topic long/short ratio and the activity split on
//! a generated log.

use revisit_lab::analyzer::{activity_by_revisit_status, daily_revisit_volume_fraction, topic_report};
use revisit_lab::attribution::{build_labels, derive_revisit_events, derive_saves, join_revisits};
use revisit_lab::loggen::{generate_log, GenConfig};
use revisit_lab::{Surface, Topic};

fn main() -> revisit_lab::Result<()> {
    let mut config = GenConfig {
        n_users: 500,
        n_pins: 5_000,
        n_days: 45,
        other_saves_per_user_day: 0.5,
        activity_coupling: 0.5,
        ..GenConfig::default()
    };
    config.topic_multipliers.insert(Topic::EventPlanning, 1.5);
    let log = generate_log(&config)?;
    let revisits = derive_revisit_events(&log);

    let all_saves = derive_saves(&log, None);
    println!("grid-click revisit volume per save by day offset:");
    for d in daily_revisit_volume_fraction(&all_saves, &revisits, 9)? {
        println!("  day {}: {:.4}", d.day, d.fraction());
    }

    let saves = derive_saves(&log, Some(Surface::RelatedPins));
    let labels = build_labels(&join_revisits(&saves, &revisits)?, &saves)?;
    println!("long/short ratio by topic:");
    for row in topic_report(&log, &labels, None)? {
        if let Some(r) = row.long_short_ratio {
            println!("  {:<16} {r:.3} over {} saves", row.topic.to_string(), row.saves);
        }
    }

    let h = activity_by_revisit_status(&log, 3, 28)?;
    println!(
        "active days after a revisit by day 3: {:.2} (revisited) vs {:.2} (not)",
        h.mean_revisited().unwrap_or(f64::NAN),
        h.mean_not_revisited().unwrap_or(f64::NAN)
    );
    Ok(())
}
