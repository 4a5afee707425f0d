//! Windowed per-pin revisitation popularity ("pin perf") features.
//!
//! Five families are counted over trailing 7, 30 and 90-day windows, each as
//! an action count and an exact distinct-user count:
//!
//! * `rp_*` families count revisits attributed by the save/revisit join to a
//!   Related Pins save by the same user (same day, or within days 0..=6);
//! * `overall_*` families count own-profile impressions or grid-clicks on any
//!   pin the user saved earlier on any surface, with no day limit.
//!
//! Tables are refreshed on a fixed cadence (7-day daily, 30-day every third
//! day, 90-day weekly) anchored at the first day of the processed range. A
//! training row on day `D` reads the latest table refreshed on or before
//! `D - 1`, so it never sees events from its own day or later.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::attribution::{Attribution, RevisitKind, LABEL_MAX_OFFSET};
use crate::csvio;
use crate::error::{Error, Result};
use crate::event::{Action, DayIndex, EventRecord, Surface};

pub const FEATURE_TABLE_HEADER: &str = "pin_id,family,window,as_of_day,action_count,unique_users";

pub const WINDOWS: [u32; 3] = [7, 30, 90];

/// Number of appended perf coordinates per training row.
pub const PERF_FEATURE_COUNT: usize = 5 * 3 * 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureFamily {
    Rp1dRevImpre,
    Rp1dRevGrid,
    Rp7dRevGrid,
    OverallRevImpre,
    OverallRevGrid,
}

impl FeatureFamily {
    pub const ALL: [FeatureFamily; 5] = [
        FeatureFamily::Rp1dRevImpre,
        FeatureFamily::Rp1dRevGrid,
        FeatureFamily::Rp7dRevGrid,
        FeatureFamily::OverallRevImpre,
        FeatureFamily::OverallRevGrid,
    ];

    pub fn token(self) -> &'static str {
        match self {
            FeatureFamily::Rp1dRevImpre => "rp_1d_rev_impre",
            FeatureFamily::Rp1dRevGrid => "rp_1d_rev_grid",
            FeatureFamily::Rp7dRevGrid => "rp_7d_rev_grid",
            FeatureFamily::OverallRevImpre => "overall_rev_impre",
            FeatureFamily::OverallRevGrid => "overall_rev_grid",
        }
    }

    pub fn needs_join(self) -> bool {
        matches!(
            self,
            FeatureFamily::Rp1dRevImpre | FeatureFamily::Rp1dRevGrid | FeatureFamily::Rp7dRevGrid
        )
    }
}

impl FromStr for FeatureFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        FeatureFamily::ALL
            .into_iter()
            .find(|f| f.token() == s)
            .ok_or_else(|| s.to_string())
    }
}

impl fmt::Display for FeatureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// One counted revisit: which pin, by whom, on which day.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QualifyingEvent {
    pub pin_id: String,
    pub user_id: String,
    pub day: DayIndex,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PinCounts {
    pub action_count: u64,
    pub unique_user_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PinPerfFeature {
    pub pin_id: String,
    pub family: FeatureFamily,
    pub window_days: u32,
    pub as_of_day: DayIndex,
    pub counts: PinCounts,
}

/// Events counted by `family`, sorted by `(pin_id, user_id, day)`.
///
/// `rp_*` families read the join output; `overall_*` families read the raw
/// log. Each attributed revisit contributes at most once.
pub fn qualifying_events(
    events: &[EventRecord],
    join: Option<&[Attribution]>,
    family: FeatureFamily,
) -> Result<Vec<QualifyingEvent>> {
    let mut out = if family.needs_join() {
        let join =
            join.ok_or_else(|| Error::InvalidInput(format!("family {family} requires the save/revisit join output")))?;
        join.iter()
            .filter(|p| p.save.surface == Surface::RelatedPins)
            .filter(|p| {
                let d = p.day_offset();
                match family {
                    FeatureFamily::Rp1dRevImpre => p.revisit.kind == RevisitKind::ImpressionRevisit && d == 0,
                    FeatureFamily::Rp1dRevGrid => p.revisit.kind == RevisitKind::GridClickRevisit && d == 0,
                    _ => p.revisit.kind == RevisitKind::GridClickRevisit && (0..=LABEL_MAX_OFFSET).contains(&d),
                }
            })
            .map(|p| QualifyingEvent {
                pin_id: p.revisit.pin_id.clone(),
                user_id: p.revisit.user_id.clone(),
                day: p.revisit.revisit_day,
            })
            .collect::<Vec<_>>()
    } else {
        let wanted = match family {
            FeatureFamily::OverallRevImpre => Action::Impression,
            _ => Action::GridClick,
        };
        let first_save = first_save_index(events);
        events
            .iter()
            .filter(|e| e.surface == Surface::OwnProfile && e.action == wanted)
            .filter(|e| {
                first_save
                    .get(&(e.user_id.as_str(), e.pin_id.as_str()))
                    .is_some_and(|&ts| ts < e.timestamp)
            })
            .map(|e| QualifyingEvent {
                pin_id: e.pin_id.clone(),
                user_id: e.user_id.clone(),
                day: e.day(),
            })
            .collect()
    };
    out.sort();
    Ok(out)
}

/// Earliest save timestamp of every `(user, pin)`, over all surfaces.
pub fn first_save_index(events: &[EventRecord]) -> HashMap<(&str, &str), i64> {
    let mut index: HashMap<(&str, &str), i64> = HashMap::new();
    for e in events.iter().filter(|e| e.action == Action::Repin) {
        index
            .entry((e.user_id.as_str(), e.pin_id.as_str()))
            .and_modify(|ts| *ts = (*ts).min(e.timestamp))
            .or_insert(e.timestamp);
    }
    index
}

/// Exact per-pin accumulator. Merging two accumulators built from disjoint
/// event sets equals accumulating their union.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WindowAccumulator {
    pins: BTreeMap<String, (u64, BTreeSet<String>)>,
}

impl WindowAccumulator {
    pub fn add(&mut self, event: &QualifyingEvent) {
        let entry = self.pins.entry(event.pin_id.clone()).or_default();
        entry.0 += 1;
        if !entry.1.contains(&event.user_id) {
            entry.1.insert(event.user_id.clone());
        }
    }

    pub fn merge(&mut self, other: WindowAccumulator) {
        for (pin, (count, users)) in other.pins {
            let entry = self.pins.entry(pin).or_default();
            entry.0 += count;
            entry.1.extend(users);
        }
    }

    pub fn finish(self) -> BTreeMap<String, PinCounts> {
        self.pins
            .into_iter()
            .map(|(pin, (count, users))| {
                let counts = PinCounts {
                    action_count: count,
                    unique_user_count: users.len() as u64,
                };
                (pin, counts)
            })
            .collect()
    }
}

fn window_bounds(window_days: i64, as_of: DayIndex) -> Result<(DayIndex, DayIndex)> {
    if window_days <= 0 {
        return Err(Error::InvalidInput(format!("window of {window_days} days")));
    }
    Ok((DayIndex(as_of.0 - window_days + 1), as_of))
}

/// Counts events with day in `[as_of - window_days + 1, as_of]` per pin.
/// Pins without events are absent; look them up with `unwrap_or_default`.
pub fn aggregate_window(
    events: &[QualifyingEvent],
    window_days: i64,
    as_of: DayIndex,
) -> Result<BTreeMap<String, PinCounts>> {
    let (lo, hi) = window_bounds(window_days, as_of)?;
    let mut acc = WindowAccumulator::default();
    for e in events.iter().filter(|e| e.day >= lo && e.day <= hi) {
        acc.add(e);
    }
    Ok(acc.finish())
}

/// [`aggregate_window`] over `shards` disjoint day partitions, merged.
pub fn aggregate_window_sharded(
    events: &[QualifyingEvent],
    window_days: i64,
    as_of: DayIndex,
    shards: usize,
) -> Result<BTreeMap<String, PinCounts>> {
    let (lo, hi) = window_bounds(window_days, as_of)?;
    let shards = shards.max(1) as i64;
    let merged = (0..shards)
        .into_par_iter()
        .map(|k| {
            let mut acc = WindowAccumulator::default();
            for e in events.iter().filter(|e| e.day >= lo && e.day <= hi) {
                if e.day.0.rem_euclid(shards) == k {
                    acc.add(e);
                }
            }
            acc
        })
        .reduce(WindowAccumulator::default, |mut a, b| {
            a.merge(b);
            a
        });
    Ok(merged.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RefreshTask {
    pub as_of_day: DayIndex,
    pub window_days: u32,
}

/// Days between refreshes of a window's table.
pub fn refresh_cadence(window_days: u32) -> u32 {
    match window_days {
        7 => 1,
        30 => 3,
        90 => 7,
        other => other.clamp(1, 7),
    }
}

/// Refresh tasks over `first..=last`, anchored at `first`. Empty if the
/// range is empty.
pub fn refresh_plan(first: DayIndex, last: DayIndex) -> Vec<RefreshTask> {
    let mut plan = Vec::new();
    for day in first.0..=last.0 {
        for window in WINDOWS {
            if (day - first.0) % refresh_cadence(window) as i64 == 0 {
                plan.push(RefreshTask {
                    as_of_day: DayIndex(day),
                    window_days: window,
                });
            }
        }
    }
    plan
}

/// Latest scheduled refresh of `window` on or before `day`, if any.
pub fn table_in_effect(first: DayIndex, window_days: u32, day: DayIndex) -> Option<DayIndex> {
    if day < first {
        return None;
    }
    let cadence = refresh_cadence(window_days) as i64;
    let steps = (day.0 - first.0) / cadence;
    Some(DayIndex(first.0 + steps * cadence))
}

/// All refreshed tables of all families over a day range.
#[derive(Debug, Clone, PartialEq)]
pub struct PerfTables {
    pub first_day: DayIndex,
    pub last_day: DayIndex,
    tables: BTreeMap<(FeatureFamily, u32, DayIndex), BTreeMap<String, PinCounts>>,
}

impl PerfTables {
    /// Builds every table of the refresh plan over `first..=last`.
    pub fn compute(events: &[EventRecord], join: &[Attribution], first: DayIndex, last: DayIndex) -> Result<Self> {
        let plan = refresh_plan(first, last);
        let mut tables = BTreeMap::new();
        for family in FeatureFamily::ALL {
            let qualifying = qualifying_events(events, Some(join), family)?;
            let mut by_day = qualifying;
            by_day.sort_by_key(|a| a.day);
            let built: Vec<_> = plan
                .par_iter()
                .map(|task| {
                    let lo = DayIndex(task.as_of_day.0 - task.window_days as i64 + 1);
                    let start = by_day.partition_point(|e| e.day < lo);
                    let end = by_day.partition_point(|e| e.day <= task.as_of_day);
                    let table = aggregate_window(&by_day[start..end], task.window_days as i64, task.as_of_day)?;
                    Ok(((family, task.window_days, task.as_of_day), table))
                })
                .collect::<Result<_>>()?;
            tables.extend(built);
        }
        Ok(PerfTables {
            first_day: first,
            last_day: last,
            tables,
        })
    }

    pub fn table(
        &self,
        family: FeatureFamily,
        window_days: u32,
        as_of: DayIndex,
    ) -> Option<&BTreeMap<String, PinCounts>> {
        self.tables.get(&(family, window_days, as_of))
    }

    /// Counts visible to a row on `request_day`: the latest refresh on or
    /// before the previous day, or zeros if none exists yet.
    pub fn lookup(&self, pin_id: &str, family: FeatureFamily, window_days: u32, request_day: DayIndex) -> PinCounts {
        let visible = DayIndex(request_day.0 - 1).min(self.last_day);
        table_in_effect(self.first_day, window_days, visible)
            .and_then(|as_of| self.table(family, window_days, as_of))
            .and_then(|t| t.get(pin_id).copied())
            .unwrap_or_default()
    }

    /// The thirty appended coordinates, `log1p`-transformed, ordered by
    /// family, then window, then (actions, unique users).
    pub fn feature_vector(&self, pin_id: &str, request_day: DayIndex) -> [f64; PERF_FEATURE_COUNT] {
        let mut out = [0.0; PERF_FEATURE_COUNT];
        let mut i = 0;
        for family in FeatureFamily::ALL {
            for window in WINDOWS {
                let c = self.lookup(pin_id, family, window, request_day);
                out[i] = (c.action_count as f64).ln_1p();
                out[i + 1] = (c.unique_user_count as f64).ln_1p();
                i += 2;
            }
        }
        out
    }

    /// Every non-empty row, sorted by family, window, as-of day, pin.
    pub fn rows(&self) -> impl Iterator<Item = PinPerfFeature> + '_ {
        self.tables
            .iter()
            .flat_map(|(&(family, window_days, as_of_day), table)| {
                table
                    .iter()
                    .filter(|(_, c)| c.action_count > 0)
                    .map(move |(pin, &counts)| PinPerfFeature {
                        pin_id: pin.clone(),
                        family,
                        window_days,
                        as_of_day,
                        counts,
                    })
            })
    }

    /// Rebuilds tables from file rows; the refresh plan over `first..=last`
    /// defines which tables exist (absent rows are zero counts).
    pub fn from_rows(rows: Vec<PinPerfFeature>, first: DayIndex, last: DayIndex) -> Result<Self> {
        let mut tables: BTreeMap<_, BTreeMap<String, PinCounts>> = BTreeMap::new();
        for family in FeatureFamily::ALL {
            for task in refresh_plan(first, last) {
                tables.insert((family, task.window_days, task.as_of_day), BTreeMap::new());
            }
        }
        for row in rows {
            let table = tables
                .get_mut(&(row.family, row.window_days, row.as_of_day))
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "feature row for {} window {} as of {} is outside the refresh plan",
                        row.family, row.window_days, row.as_of_day
                    ))
                })?;
            table.insert(row.pin_id, row.counts);
        }
        Ok(PerfTables {
            first_day: first,
            last_day: last,
            tables,
        })
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{FEATURE_TABLE_HEADER}")?;
        for row in self.rows() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                row.pin_id,
                row.family,
                row.window_days,
                row.as_of_day,
                row.counts.action_count,
                row.counts.unique_user_count
            )?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        self.write(std::io::BufWriter::new(file))
    }
}

pub fn parse_feature_rows<R: BufRead>(mut reader: R) -> Result<Vec<PinPerfFeature>> {
    csvio::expect_header(&mut reader, FEATURE_TABLE_HEADER)?;
    let mut rows = Vec::new();
    csvio::for_each_row(reader, Some(6), |line, f| {
        let family = f[1].parse::<FeatureFamily>().map_err(|token| Error::UnknownToken {
            line,
            kind: "family",
            token,
        })?;
        let window_days: u32 = csvio::parse_num(line, "window", f[2])?;
        if !WINDOWS.contains(&window_days) {
            return Err(Error::parse(
                line,
                "window",
                format!("unsupported window {window_days}"),
            ));
        }
        let counts = PinCounts {
            action_count: csvio::parse_num(line, "action_count", f[4])?,
            unique_user_count: csvio::parse_num(line, "unique_users", f[5])?,
        };
        if counts.unique_user_count > counts.action_count {
            return Err(Error::parse(line, "unique_users", "exceeds action_count"));
        }
        rows.push(PinPerfFeature {
            pin_id: f[0].to_string(),
            family,
            window_days,
            as_of_day: DayIndex(csvio::parse_num(line, "as_of_day", f[3])?),
            counts,
        });
        Ok(())
    })?;
    Ok(rows)
}

pub fn read_feature_rows_file(path: &Path) -> Result<Vec<PinPerfFeature>> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    parse_feature_rows(std::io::BufReader::new(file))
}

/// Fraction of `candidates` with a positive action count in `table`.
pub fn coverage(table: &BTreeMap<String, PinCounts>, candidates: &[String]) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("coverage of an empty candidate set".into()));
    }
    let covered = candidates
        .iter()
        .filter(|p| table.get(p.as_str()).is_some_and(|c| c.action_count > 0))
        .count();
    Ok(covered as f64 / candidates.len() as f64)
}
