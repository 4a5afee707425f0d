mod common;

use common::{oracle_join, pair_keys, random_log, LogShape, DAY};
use proptest::prelude::*;
use revisit_lab::attribution::{
    build_labels, derive_revisit_events, derive_saves, join_revisits, join_revisits_sharded, join_revisits_within,
    label_log, parse_attributions, parse_labels, write_attributions, write_labels, RevisitKind,
};
use revisit_lab::{Action, Error, EventRecord, Surface, Topic};

fn ev(ts: i64, user: &str, pin: &str, surface: Surface, action: Action) -> EventRecord {
    let related = surface == Surface::RelatedPins;
    EventRecord {
        timestamp: ts,
        user_id: user.into(),
        pin_id: pin.into(),
        surface,
        action,
        request_id: if related { format!("r{ts}") } else { String::new() },
        topic: Topic::Travel,
        slot: related.then_some(0),
    }
}

fn join_all(events: &[EventRecord]) -> Vec<common::PairKey> {
    let saves = derive_saves(events, None);
    let revisits = derive_revisit_events(events);
    pair_keys(&join_revisits(&saves, &revisits).unwrap())
}

#[test]
fn shoe_example_day_one_to_six() {
    let events = vec![
        ev(DAY + 100, "u", "shoe", Surface::Other, Action::Repin),
        ev(6 * DAY + 5, "u", "shoe", Surface::OwnProfile, Action::GridClick),
    ];
    let saves = derive_saves(&events, None);
    let pairs = join_revisits(&saves, &derive_revisit_events(&events)).unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].day_offset(), 5);
}

#[test]
fn seven_days_later_is_outside() {
    let t = 3 * DAY + 10;
    let events = vec![
        ev(t, "u", "p", Surface::Other, Action::Repin),
        ev(t + 7 * DAY, "u", "p", Surface::OwnProfile, Action::GridClick),
    ];
    assert!(join_all(&events).is_empty());
}

#[test]
fn same_timestamp_is_not_a_revisit() {
    let events = vec![
        ev(500, "u", "p", Surface::Other, Action::Repin),
        ev(500, "u", "p", Surface::OwnProfile, Action::Impression),
    ];
    assert!(join_all(&events).is_empty());
}

#[test]
fn latest_save_takes_the_revisit() {
    let events = vec![
        ev(100, "u", "p", Surface::Other, Action::Repin),
        ev(DAY + 100, "u", "p", Surface::Other, Action::Repin),
        ev(2 * DAY, "u", "p", Surface::OwnProfile, Action::GridClick),
    ];
    let keys = join_all(&events);
    assert_eq!(keys.len(), 1);
    assert_eq!(keys[0].2, DAY + 100);
}

#[test]
fn surface_filter_and_revisit_selection() {
    let events = vec![
        ev(10, "u", "p", Surface::RelatedPins, Action::Repin),
        ev(20, "u", "q", Surface::Other, Action::Repin),
        ev(30, "u", "p", Surface::OwnProfile, Action::Click),
        ev(40, "u", "p", Surface::OwnProfile, Action::LongClick),
        ev(50, "u", "p", Surface::OwnProfile, Action::GridClick),
    ];
    assert_eq!(derive_saves(&events, Some(Surface::RelatedPins)).len(), 1);
    assert_eq!(derive_saves(&events, None).len(), 2);
    let revisits = derive_revisit_events(&events);
    assert_eq!(revisits.len(), 1);
    assert_eq!(revisits[0].kind, RevisitKind::GridClickRevisit);
    assert!(derive_saves(&[], None).is_empty());
}

#[test]
fn unsorted_input_is_rejected() {
    let events = vec![
        ev(10, "a", "p", Surface::Other, Action::Repin),
        ev(20, "b", "p", Surface::Other, Action::Repin),
    ];
    let mut saves = derive_saves(&events, None);
    saves.reverse();
    assert!(matches!(join_revisits(&saves, &[]), Err(Error::Unsorted(_))));
}

#[test]
fn label_flags() {
    let events = vec![
        ev(100, "u", "a", Surface::RelatedPins, Action::Repin),
        ev(200, "u", "a", Surface::OwnProfile, Action::Impression),
        ev(100, "u", "b", Surface::RelatedPins, Action::Repin),
        ev(300, "u", "b", Surface::OwnProfile, Action::GridClick),
        ev(100, "u", "c", Surface::RelatedPins, Action::Repin),
        ev(3 * DAY, "u", "c", Surface::OwnProfile, Action::GridClick),
        ev(100, "u", "d", Surface::RelatedPins, Action::Repin),
    ];
    let (_, labels) = label_log(&events).unwrap();
    let flags: Vec<(bool, bool, bool, bool)> = labels
        .iter()
        .map(|l| (l.flag_1d_rev_impre, l.flag_1d_rev_grid, l.flag_7d_rev_grid, l.merged))
        .collect();
    assert_eq!(
        flags,
        [
            (true, false, false, true),
            (false, true, true, true),
            (false, false, true, true),
            (false, false, false, false)
        ]
    );
}

#[test]
fn label_for_unknown_save_is_an_integrity_error() {
    let events = vec![
        ev(100, "u", "a", Surface::Other, Action::Repin),
        ev(200, "u", "a", Surface::OwnProfile, Action::Impression),
    ];
    let all = derive_saves(&events, None);
    let pairs = join_revisits(&all, &derive_revisit_events(&events)).unwrap();
    assert!(matches!(build_labels(&pairs, &[]), Err(Error::Integrity(_))));
}

#[test]
fn file_round_trips() {
    let events = random_log(
        3,
        LogShape {
            users: 4,
            pins: 5,
            days: 10,
            events: 2_000,
        },
    );
    let (pairs, labels) = label_log(&events).unwrap();
    let mut buf = Vec::new();
    write_attributions(&pairs, &mut buf).unwrap();
    assert_eq!(parse_attributions(buf.as_slice()).unwrap(), pairs);
    let mut buf = Vec::new();
    write_labels(&labels, &mut buf).unwrap();
    assert_eq!(parse_labels(buf.as_slice()).unwrap(), labels);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn join_equals_nested_loop(seed in any::<u64>(), users in 1usize..6, pins in 1usize..6, events in 1usize..600) {
        let log = random_log(seed, LogShape { users, pins, days: 12, events });
        for surface in [None, Some(Surface::RelatedPins)] {
            let saves = derive_saves(&log, surface);
            let revisits = derive_revisit_events(&log);
            let got = pair_keys(&join_revisits(&saves, &revisits).unwrap());
            prop_assert_eq!(got, oracle_join(&log, surface, 6));
        }
    }

    #[test]
    fn join_is_shard_invariant(seed in any::<u64>(), shards in 1usize..9) {
        let log = random_log(seed, LogShape { users: 7, pins: 4, days: 10, events: 500 });
        let saves = derive_saves(&log, None);
        let revisits = derive_revisit_events(&log);
        let single = join_revisits_within(&saves, &revisits, 6).unwrap();
        prop_assert_eq!(join_revisits_sharded(&saves, &revisits, 6, shards).unwrap(), single);
    }

    #[test]
    fn labels_are_coherent(seed in any::<u64>()) {
        let log = random_log(seed, LogShape { users: 5, pins: 5, days: 9, events: 400 });
        let (pairs, labels) = label_log(&log).unwrap();
        prop_assert_eq!(labels.len(), derive_saves(&log, Some(Surface::RelatedPins)).len());
        for l in &labels {
            prop_assert!(!l.flag_1d_rev_grid || l.flag_7d_rev_grid);
            prop_assert_eq!(l.merged, l.flag_1d_rev_impre || l.flag_1d_rev_grid || l.flag_7d_rev_grid);
        }
        for p in &pairs {
            prop_assert!(p.save.save_timestamp < p.revisit.revisit_timestamp);
            prop_assert!((0..=6).contains(&p.day_offset()));
        }
    }
}
