//! Event records, enumerations, day arithmetic and the event-log codec.
//!
//! The event log is UTF-8, one record per line, comma separated, with the
//! header `ts,user_id,pin_id,surface,action,request_id,topic,slot`. Absent
//! `request_id`/`slot` values are empty fields. Nothing is quoted, so ids
//! must not contain commas or newlines.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::csvio;
use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;

pub const EVENT_LOG_HEADER: &str = "ts,user_id,pin_id,surface,action,request_id,topic,slot";

macro_rules! token_enum {
    (
        $(#[$meta:meta])*
        $name:ident, $kind:literal { $($variant:ident => $token:literal),+ $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn token(self) -> &'static str {
                match self {
                    $($name::$variant => $token),+
                }
            }

            pub(crate) const KIND: &'static str = $kind;
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($token => Ok($name::$variant),)+
                    other => Err(other.to_string()),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.token())
            }
        }
    };
}

token_enum! {
    /// Where an action was logged.
    Surface, "surface" {
        RelatedPins => "related_pins",
        OwnProfile => "own_profile",
        Other => "other",
    }
}

token_enum! {
    Action, "action" {
        Impression => "impression",
        GridClick => "grid_click",
        Repin => "repin",
        Click => "click",
        LongClick => "long_click",
    }
}

token_enum! {
    /// The sixteen content topics analyzed per topic, plus `Unknown`.
    Topic, "topic" {
        EventPlanning => "event_planning",
        Health => "health",
        HomeDecor => "home_decor",
        DiyAndCrafts => "diy_and_crafts",
        Quotes => "quotes",
        Beauty => "beauty",
        Parenting => "parenting",
        Travel => "travel",
        Entertainment => "entertainment",
        Animals => "animals",
        Education => "education",
        Art => "art",
        Architecture => "architecture",
        Vehicles => "vehicles",
        Electronics => "electronics",
        Finance => "finance",
        Unknown => "unknown",
    }
}

impl Topic {
    /// The sixteen named topics, excluding `Unknown`.
    pub const NAMED: &'static [Topic] = &[
        Topic::EventPlanning,
        Topic::Health,
        Topic::HomeDecor,
        Topic::DiyAndCrafts,
        Topic::Quotes,
        Topic::Beauty,
        Topic::Parenting,
        Topic::Travel,
        Topic::Entertainment,
        Topic::Animals,
        Topic::Education,
        Topic::Art,
        Topic::Architecture,
        Topic::Vehicles,
        Topic::Electronics,
        Topic::Finance,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl serde::Serialize for Topic {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.token())
    }
}

impl<'de> serde::Deserialize<'de> for Topic {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse()
            .map_err(|t| serde::de::Error::custom(format!("unknown topic `{t}`")))
    }
}

/// Calendar day in UTC, counted from the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DayIndex(pub i64);

impl DayIndex {
    pub fn offset_from(self, earlier: DayIndex) -> i64 {
        self.0 - earlier.0
    }

    pub fn start_ts(self) -> i64 {
        self.0 * SECONDS_PER_DAY
    }
}

impl fmt::Display for DayIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub fn day_index(timestamp: i64) -> DayIndex {
    DayIndex(timestamp.div_euclid(SECONDS_PER_DAY))
}

/// The five ranking tasks. The first four are the engagement tasks; the
/// fifth predicts a save that is later revisited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskId {
    GridClick,
    Repin,
    Click,
    LongClick,
    RepinAndRevisit,
}

impl TaskId {
    pub const COUNT: usize = 5;

    pub const ALL: [TaskId; 5] = [
        TaskId::GridClick,
        TaskId::Repin,
        TaskId::Click,
        TaskId::LongClick,
        TaskId::RepinAndRevisit,
    ];

    /// Engagement tasks only (no revisitation head).
    pub const ENGAGEMENT: [TaskId; 4] = [TaskId::GridClick, TaskId::Repin, TaskId::Click, TaskId::LongClick];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskId::GridClick => "grid_click",
            TaskId::Repin => "repin",
            TaskId::Click => "click",
            TaskId::LongClick => "long_click",
            TaskId::RepinAndRevisit => "repin_revisit",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One logged user action.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EventRecord {
    pub timestamp: i64,
    pub user_id: String,
    pub pin_id: String,
    pub surface: Surface,
    pub action: Action,
    pub request_id: String,
    pub topic: Topic,
    pub slot: Option<u32>,
}

impl EventRecord {
    pub fn day(&self) -> DayIndex {
        day_index(self.timestamp)
    }

    /// Checks the record invariants, returning a description of the first
    /// violated one.
    pub fn check(&self) -> std::result::Result<(), (&'static str, &'static str)> {
        if self.timestamp < 0 {
            return Err(("ts", "timestamp must be non-negative"));
        }
        if self.user_id.is_empty() {
            return Err(("user_id", "must be non-empty"));
        }
        if self.pin_id.is_empty() {
            return Err(("pin_id", "must be non-empty"));
        }
        if self.surface == Surface::RelatedPins && self.request_id.is_empty() {
            return Err(("request_id", "required on related_pins events"));
        }
        if self.slot.is_some() && self.surface != Surface::RelatedPins {
            return Err(("slot", "only related_pins events carry a slot"));
        }
        Ok(())
    }
}

fn token<T: FromStr<Err = String>>(line: usize, kind: &'static str, raw: &str) -> Result<T> {
    raw.parse::<T>()
        .map_err(|token| Error::UnknownToken { line, kind, token })
}

/// Parses an event log. Output order equals input order.
pub fn parse_event_log<R: BufRead>(mut reader: R) -> Result<Vec<EventRecord>> {
    csvio::expect_header(&mut reader, EVENT_LOG_HEADER)?;
    let mut records = Vec::new();
    csvio::for_each_row(reader, Some(8), |line, f| {
        let record = EventRecord {
            timestamp: csvio::parse_num(line, "ts", f[0])?,
            user_id: f[1].to_string(),
            pin_id: f[2].to_string(),
            surface: token(line, Surface::KIND, f[3])?,
            action: token(line, Action::KIND, f[4])?,
            request_id: f[5].to_string(),
            topic: token(line, Topic::KIND, f[6])?,
            slot: if f[7].is_empty() {
                None
            } else {
                Some(csvio::parse_num(line, "slot", f[7])?)
            },
        };
        record
            .check()
            .map_err(|(field, reason)| Error::parse(line, field, reason))?;
        records.push(record);
        Ok(())
    })?;
    Ok(records)
}

pub fn write_event_log<W: Write>(records: &[EventRecord], mut out: W) -> Result<()> {
    writeln!(out, "{EVENT_LOG_HEADER}")?;
    for r in records {
        csvio::check_id("user_id", &r.user_id)?;
        csvio::check_id("pin_id", &r.pin_id)?;
        csvio::check_id("request_id", &r.request_id)?;
        write!(
            out,
            "{},{},{},{},{},{},{},",
            r.timestamp, r.user_id, r.pin_id, r.surface, r.action, r.request_id, r.topic
        )?;
        if let Some(slot) = r.slot {
            write!(out, "{slot}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_event_log_file(path: &std::path::Path) -> Result<Vec<EventRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    parse_event_log(std::io::BufReader::new(file))
}

pub fn write_event_log_file(records: &[EventRecord], path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    write_event_log(records, std::io::BufWriter::new(file))
}

/// First and last calendar day present in a log.
pub fn day_span(events: &[EventRecord]) -> Option<(DayIndex, DayIndex)> {
    let first = events.iter().map(EventRecord::day).min()?;
    let last = events.iter().map(EventRecord::day).max()?;
    Some((first, last))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EventRecord {
        EventRecord {
            timestamp: 90_000,
            user_id: "u1".into(),
            pin_id: "p9".into(),
            surface: Surface::RelatedPins,
            action: Action::Impression,
            request_id: "r1".into(),
            topic: Topic::HomeDecor,
            slot: Some(3),
        }
    }

    #[test]
    fn day_boundaries() {
        assert_eq!(day_index(0), DayIndex(0));
        assert_eq!(day_index(86_399), DayIndex(0));
        assert_eq!(day_index(86_400), DayIndex(1));
    }

    #[test]
    fn header_only_is_empty() {
        let log = format!("{EVENT_LOG_HEADER}\n");
        assert!(parse_event_log(log.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn single_line() {
        let log = format!("{EVENT_LOG_HEADER}\n90000,u1,p9,related_pins,impression,r1,home_decor,3\n");
        assert_eq!(parse_event_log(log.as_bytes()).unwrap(), vec![sample()]);
    }

    #[test]
    fn unknown_surface_is_named() {
        let log = format!("{EVENT_LOG_HEADER}\n90000,u1,p9,HomeFeed,impression,r1,home_decor,3\n");
        match parse_event_log(log.as_bytes()) {
            Err(Error::UnknownToken { line, kind, token }) => {
                assert_eq!((line, kind, token.as_str()), (2, "surface", "HomeFeed"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn enum_universes_are_closed() {
        for s in ["related_pins", "own_profile", "other"] {
            assert!(s.parse::<Surface>().is_ok());
        }
        for bad in ["", "RelatedPins", "related-pins", "home_feed", "search"] {
            assert!(bad.parse::<Surface>().is_err(), "{bad}");
        }
        assert_eq!(Topic::ALL.len(), 17);
        assert_eq!(Topic::NAMED.len(), 16);
        for t in Topic::ALL {
            assert_eq!(t.token().parse::<Topic>().unwrap(), *t);
        }
        for a in Action::ALL {
            assert_eq!(a.token().parse::<Action>().unwrap(), *a);
        }
        assert!("save".parse::<Action>().is_err());
    }

    #[test]
    fn malformed_lines() {
        let bad_ts = format!("{EVENT_LOG_HEADER}\nabc,u1,p9,related_pins,impression,r1,home_decor,3\n");
        assert!(matches!(
            parse_event_log(bad_ts.as_bytes()),
            Err(Error::Parse { line: 2, ref field, .. }) if field == "ts"
        ));
        let short = format!("{EVENT_LOG_HEADER}\n1,u1,p9\n");
        assert!(matches!(
            parse_event_log(short.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let no_request = format!("{EVENT_LOG_HEADER}\n1,u1,p9,related_pins,repin,,art,\n");
        assert!(matches!(
            parse_event_log(no_request.as_bytes()),
            Err(Error::Parse { ref field, .. }) if field == "request_id"
        ));
        let slot_off_surface = format!("{EVENT_LOG_HEADER}\n1,u1,p9,own_profile,impression,,art,2\n");
        assert!(parse_event_log(slot_off_surface.as_bytes()).is_err());
        assert!(parse_event_log("ts,user\n".as_bytes()).is_err());
    }

    #[test]
    fn own_profile_empty_request_round_trips() {
        let rec = EventRecord {
            surface: Surface::OwnProfile,
            request_id: String::new(),
            slot: None,
            ..sample()
        };
        let mut buf = Vec::new();
        write_event_log(std::slice::from_ref(&rec), &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains(",own_profile,impression,,home_decor,\n"));
        assert_eq!(parse_event_log(buf.as_slice()).unwrap(), vec![rec]);
    }

    #[test]
    fn rejects_commas_in_ids() {
        let rec = EventRecord {
            user_id: "a,b".into(),
            ..sample()
        };
        assert!(write_event_log(&[rec], Vec::new()).is_err());
    }

    #[test]
    fn task_sets() {
        assert_eq!(TaskId::ALL.len(), 5);
        assert!(!TaskId::ENGAGEMENT.contains(&TaskId::RepinAndRevisit));
        for (i, t) in TaskId::ALL.iter().enumerate() {
            assert_eq!(t.index(), i);
        }
    }
}
