//! Attributes revisits to saves on a hand-written log and prints the labels.

use revisit_lab::attribution::{build_labels, derive_revisit_events, derive_saves, join_revisits};
use revisit_lab::{Action, EventRecord, Surface, Topic};

const DAY: i64 = 86_400;

fn event(ts: i64, surface: Surface, action: Action, request: &str) -> EventRecord {
    EventRecord {
        timestamp: ts,
        user_id: "alice".into(),
        pin_id: "shoes".into(),
        surface,
        action,
        request_id: request.into(),
        topic: Topic::Beauty,
        slot: (surface == Surface::RelatedPins).then_some(2),
    }
}

fn main() -> revisit_lab::Result<()> {
    // Saved from a Related Pins feed, revisited the same evening and three days later.
    let log = vec![
        event(10 * 3_600, Surface::RelatedPins, Action::Impression, "req-1"),
        event(10 * 3_600 + 30, Surface::RelatedPins, Action::Repin, "req-1"),
        event(20 * 3_600, Surface::OwnProfile, Action::Impression, ""),
        event(3 * DAY + 9 * 3_600, Surface::OwnProfile, Action::GridClick, ""),
    ];
    let saves = derive_saves(&log, Some(Surface::RelatedPins));
    let pairs = join_revisits(&saves, &derive_revisit_events(&log))?;
    for p in &pairs {
        println!("{:?} revisit at day offset {}", p.revisit.kind, p.day_offset());
    }
    for l in build_labels(&pairs, &saves)? {
        println!(
            "save {} / {}: 1dRevImpre={} 1dRevGrid={} 7dRevGrid={} merged={}",
            l.request_id, l.pin_id, l.flag_1d_rev_impre, l.flag_1d_rev_grid, l.flag_7d_rev_grid, l.merged
        );
    }
    Ok(())
}
