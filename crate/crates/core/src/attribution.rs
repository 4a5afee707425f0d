//! Save-to-revisit attribution and revisitation labels.
//!
//! Saves (repins) and own-profile revisits are joined on `(user_id, pin_id)`
//! under `save_ts < revisit_ts` with a calendar-day offset in `[0, 6]`. A
//! revisit is credited only to the latest earlier save of the same pin by
//! the same user. Each save then gets three labels:
//!
//! * same-day impression revisit,
//! * same-day grid-click revisit,
//! * grid-click revisit within days 0..=6,
//!
//! and a merged label which is their disjunction.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::csvio;
use crate::error::{Error, Result};
use crate::event::{day_index, Action, DayIndex, EventRecord, Surface};

/// Largest day offset at which a revisit still counts toward the labels.
pub const LABEL_MAX_OFFSET: i64 = 6;

pub const LABELS_HEADER: &str = "user_id,pin_id,save_ts,request_id,f_1d_imp,f_1d_grid,f_7d_grid,merged";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SaveRecord {
    pub user_id: String,
    pub pin_id: String,
    pub save_timestamp: i64,
    pub save_day: DayIndex,
    pub request_id: String,
    pub surface: Surface,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RevisitKind {
    ImpressionRevisit,
    GridClickRevisit,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RevisitEvent {
    pub user_id: String,
    pub pin_id: String,
    pub revisit_timestamp: i64,
    pub revisit_day: DayIndex,
    pub kind: RevisitKind,
}

/// One attributed (save, revisit) pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Attribution {
    pub save: SaveRecord,
    pub revisit: RevisitEvent,
}

impl Attribution {
    pub fn day_offset(&self) -> i64 {
        self.revisit.revisit_day.offset_from(self.save.save_day)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RevisitLabelRecord {
    pub user_id: String,
    pub pin_id: String,
    pub save_timestamp: i64,
    pub request_id: String,
    pub flag_1d_rev_impre: bool,
    pub flag_1d_rev_grid: bool,
    pub flag_7d_rev_grid: bool,
    pub merged: bool,
}

fn save_key(s: &SaveRecord) -> (&str, &str, i64, &str) {
    (&s.user_id, &s.pin_id, s.save_timestamp, &s.request_id)
}

fn revisit_key(r: &RevisitEvent) -> (&str, &str, i64, RevisitKind) {
    (&r.user_id, &r.pin_id, r.revisit_timestamp, r.kind)
}

/// Repin events as saves, optionally restricted to one surface, sorted by
/// `(user_id, pin_id, timestamp, request_id)`.
pub fn derive_saves(events: &[EventRecord], surface_filter: Option<Surface>) -> Vec<SaveRecord> {
    let mut saves: Vec<SaveRecord> = events
        .iter()
        .filter(|e| e.action == Action::Repin && surface_filter.is_none_or(|s| s == e.surface))
        .map(|e| SaveRecord {
            user_id: e.user_id.clone(),
            pin_id: e.pin_id.clone(),
            save_timestamp: e.timestamp,
            save_day: day_index(e.timestamp),
            request_id: e.request_id.clone(),
            surface: e.surface,
        })
        .collect();
    saves.sort_by(|a, b| save_key(a).cmp(&save_key(b)).then(a.surface.cmp(&b.surface)));
    saves
}

/// Own-profile impressions and grid-clicks, sorted by
/// `(user_id, pin_id, timestamp, kind)`.
pub fn derive_revisit_events(events: &[EventRecord]) -> Vec<RevisitEvent> {
    let mut revisits: Vec<RevisitEvent> = events
        .iter()
        .filter(|e| e.surface == Surface::OwnProfile)
        .filter_map(|e| {
            let kind = match e.action {
                Action::Impression => RevisitKind::ImpressionRevisit,
                Action::GridClick => RevisitKind::GridClickRevisit,
                _ => return None,
            };
            Some(RevisitEvent {
                user_id: e.user_id.clone(),
                pin_id: e.pin_id.clone(),
                revisit_timestamp: e.timestamp,
                revisit_day: day_index(e.timestamp),
                kind,
            })
        })
        .collect();
    revisits.sort_by(|a, b| revisit_key(a).cmp(&revisit_key(b)));
    revisits
}

fn check_sorted<T>(items: &[T], what: &str, out_of_order: impl Fn(&T, &T) -> bool) -> Result<()> {
    if let Some(i) = (1..items.len()).find(|&i| out_of_order(&items[i - 1], &items[i])) {
        return Err(Error::Unsorted(format!("{what} out of order at position {i}")));
    }
    Ok(())
}

/// Joins saves and revisits with the label window `[0, 6]` days.
pub fn join_revisits(saves: &[SaveRecord], revisits: &[RevisitEvent]) -> Result<Vec<Attribution>> {
    join_revisits_within(saves, revisits, LABEL_MAX_OFFSET)
}

/// Joins saves and revisits, keeping pairs with `save_ts < revisit_ts` and a
/// calendar-day offset in `[0, max_offset]`. Each revisit is attributed to
/// the latest earlier save of the same `(user, pin)`; if that save is too
/// old, so is every earlier one, and the revisit is dropped.
///
/// Inputs must be sorted as produced by [`derive_saves`] and
/// [`derive_revisit_events`]. Output is sorted by save then revisit.
pub fn join_revisits_within(
    saves: &[SaveRecord],
    revisits: &[RevisitEvent],
    max_offset: i64,
) -> Result<Vec<Attribution>> {
    check_sorted(saves, "saves", |a, b| save_key(a) > save_key(b))?;
    check_sorted(revisits, "revisits", |a, b| revisit_key(a) > revisit_key(b))?;

    let mut pairs = Vec::new();
    let mut s = 0;
    let mut r = 0;
    while s < saves.len() && r < revisits.len() {
        let sk = (saves[s].user_id.as_str(), saves[s].pin_id.as_str());
        let rk = (revisits[r].user_id.as_str(), revisits[r].pin_id.as_str());
        match sk.cmp(&rk) {
            Ordering::Less => s += 1,
            Ordering::Greater => r += 1,
            Ordering::Equal => {
                let s_end = s + saves[s..]
                    .iter()
                    .take_while(|x| (x.user_id.as_str(), x.pin_id.as_str()) == sk)
                    .count();
                let r_end = r + revisits[r..]
                    .iter()
                    .take_while(|x| (x.user_id.as_str(), x.pin_id.as_str()) == rk)
                    .count();
                join_group(&saves[s..s_end], &revisits[r..r_end], max_offset, &mut pairs);
                s = s_end;
                r = r_end;
            }
        }
    }
    pairs.sort_by(|a, b| {
        save_key(&a.save)
            .cmp(&save_key(&b.save))
            .then_with(|| revisit_key(&a.revisit).cmp(&revisit_key(&b.revisit)))
    });
    Ok(pairs)
}

/// One `(user, pin)` group; both slices are time-ordered.
fn join_group(saves: &[SaveRecord], revisits: &[RevisitEvent], max_offset: i64, out: &mut Vec<Attribution>) {
    let mut latest: Option<usize> = None;
    let mut next = 0;
    for revisit in revisits {
        while next < saves.len() && saves[next].save_timestamp < revisit.revisit_timestamp {
            latest = Some(next);
            next += 1;
        }
        let Some(i) = latest else { continue };
        // equal timestamps: the last one in key order wins
        let save = &saves[i];
        let offset = revisit.revisit_day.offset_from(save.save_day);
        if (0..=max_offset).contains(&offset) {
            out.push(Attribution {
                save: save.clone(),
                revisit: revisit.clone(),
            });
        }
    }
}

/// Same result as [`join_revisits_within`], computed on `shards` user
/// partitions in parallel and merged.
pub fn join_revisits_sharded(
    saves: &[SaveRecord],
    revisits: &[RevisitEvent],
    max_offset: i64,
    shards: usize,
) -> Result<Vec<Attribution>> {
    let shards = shards.max(1);
    let shard_of = |user: &str| (crate::loggen::derive_seed(0, &[user]) % shards as u64) as usize;
    let mut save_parts = vec![Vec::new(); shards];
    for s in saves {
        save_parts[shard_of(&s.user_id)].push(s.clone());
    }
    let mut revisit_parts = vec![Vec::new(); shards];
    for r in revisits {
        revisit_parts[shard_of(&r.user_id)].push(r.clone());
    }
    let parts: Vec<Vec<Attribution>> = save_parts
        .par_iter()
        .zip(revisit_parts.par_iter())
        .map(|(s, r)| join_revisits_within(s, r, max_offset))
        .collect::<Result<_>>()?;
    let mut pairs: Vec<Attribution> = parts.into_iter().flatten().collect();
    pairs.sort_by(|a, b| {
        save_key(&a.save)
            .cmp(&save_key(&b.save))
            .then_with(|| revisit_key(&a.revisit).cmp(&revisit_key(&b.revisit)))
    });
    Ok(pairs)
}

/// One label record per save, in save order. Pairs beyond the label window
/// are ignored.
pub fn build_labels(pairs: &[Attribution], saves: &[SaveRecord]) -> Result<Vec<RevisitLabelRecord>> {
    let index: HashMap<(&str, &str, i64, &str), usize> =
        saves.iter().enumerate().map(|(i, s)| (save_key(s), i)).collect();
    let mut labels: Vec<RevisitLabelRecord> = saves
        .iter()
        .map(|s| RevisitLabelRecord {
            user_id: s.user_id.clone(),
            pin_id: s.pin_id.clone(),
            save_timestamp: s.save_timestamp,
            request_id: s.request_id.clone(),
            flag_1d_rev_impre: false,
            flag_1d_rev_grid: false,
            flag_7d_rev_grid: false,
            merged: false,
        })
        .collect();
    for pair in pairs {
        let &i = index.get(&save_key(&pair.save)).ok_or_else(|| {
            Error::Integrity(format!(
                "attributed save ({}, {}, {}) is not in the save set",
                pair.save.user_id, pair.save.pin_id, pair.save.save_timestamp
            ))
        })?;
        let d = pair.day_offset();
        let label = &mut labels[i];
        match pair.revisit.kind {
            RevisitKind::ImpressionRevisit => label.flag_1d_rev_impre |= d == 0,
            RevisitKind::GridClickRevisit => {
                label.flag_1d_rev_grid |= d == 0;
                label.flag_7d_rev_grid |= (0..=LABEL_MAX_OFFSET).contains(&d);
            }
        }
    }
    for label in &mut labels {
        label.merged = label.flag_1d_rev_impre || label.flag_1d_rev_grid || label.flag_7d_rev_grid;
    }
    Ok(labels)
}

/// Derives Related Pins saves and revisits, joins them and builds labels.
pub fn label_log(events: &[EventRecord]) -> Result<(Vec<Attribution>, Vec<RevisitLabelRecord>)> {
    let saves = derive_saves(events, Some(Surface::RelatedPins));
    let revisits = derive_revisit_events(events);
    let pairs = join_revisits(&saves, &revisits)?;
    let labels = build_labels(&pairs, &saves)?;
    Ok((pairs, labels))
}

/// Label volume relative to saves, counted over saves whose full label
/// window lies within the log (save day + 6 <= `last_day`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelVolume {
    pub saves: usize,
    pub rev_impre_1d: usize,
    pub rev_grid_1d: usize,
    pub rev_grid_7d: usize,
    pub merged: usize,
}

impl LabelVolume {
    pub fn rate(&self, count: usize) -> f64 {
        count as f64 / self.saves as f64
    }
}

pub fn matured_label_volume(labels: &[RevisitLabelRecord], last_day: DayIndex) -> LabelVolume {
    let mut v = LabelVolume {
        saves: 0,
        rev_impre_1d: 0,
        rev_grid_1d: 0,
        rev_grid_7d: 0,
        merged: 0,
    };
    for l in labels {
        if day_index(l.save_timestamp).0 + LABEL_MAX_OFFSET > last_day.0 {
            continue;
        }
        v.saves += 1;
        v.rev_impre_1d += l.flag_1d_rev_impre as usize;
        v.rev_grid_1d += l.flag_1d_rev_grid as usize;
        v.rev_grid_7d += l.flag_7d_rev_grid as usize;
        v.merged += l.merged as usize;
    }
    v
}

pub fn write_labels<W: Write>(labels: &[RevisitLabelRecord], mut out: W) -> Result<()> {
    writeln!(out, "{LABELS_HEADER}")?;
    for l in labels {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            l.user_id,
            l.pin_id,
            l.save_timestamp,
            l.request_id,
            csvio::flag(l.flag_1d_rev_impre),
            csvio::flag(l.flag_1d_rev_grid),
            csvio::flag(l.flag_7d_rev_grid),
            csvio::flag(l.merged)
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn parse_labels<R: BufRead>(mut reader: R) -> Result<Vec<RevisitLabelRecord>> {
    csvio::expect_header(&mut reader, LABELS_HEADER)?;
    let mut labels = Vec::new();
    csvio::for_each_row(reader, Some(8), |line, f| {
        let label = RevisitLabelRecord {
            user_id: f[0].to_string(),
            pin_id: f[1].to_string(),
            save_timestamp: csvio::parse_num(line, "save_ts", f[2])?,
            request_id: f[3].to_string(),
            flag_1d_rev_impre: csvio::parse_flag(line, "f_1d_imp", f[4])?,
            flag_1d_rev_grid: csvio::parse_flag(line, "f_1d_grid", f[5])?,
            flag_7d_rev_grid: csvio::parse_flag(line, "f_7d_grid", f[6])?,
            merged: csvio::parse_flag(line, "merged", f[7])?,
        };
        let coherent = label.merged == (label.flag_1d_rev_impre || label.flag_1d_rev_grid || label.flag_7d_rev_grid)
            && (!label.flag_1d_rev_grid || label.flag_7d_rev_grid);
        if !coherent {
            return Err(Error::parse(line, "merged", "label flags are inconsistent"));
        }
        labels.push(label);
        Ok(())
    })?;
    Ok(labels)
}

pub fn write_labels_file(labels: &[RevisitLabelRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    write_labels(labels, std::io::BufWriter::new(file))
}

pub fn read_labels_file(path: &Path) -> Result<Vec<RevisitLabelRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    parse_labels(std::io::BufReader::new(file))
}

pub const ATTRIBUTIONS_HEADER: &str = "user_id,pin_id,save_ts,request_id,surface,revisit_ts,kind";

fn kind_token(kind: RevisitKind) -> &'static str {
    match kind {
        RevisitKind::ImpressionRevisit => "impression",
        RevisitKind::GridClickRevisit => "grid_click",
    }
}

pub fn write_attributions<W: Write>(pairs: &[Attribution], mut out: W) -> Result<()> {
    writeln!(out, "{ATTRIBUTIONS_HEADER}")?;
    for p in pairs {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.save.user_id,
            p.save.pin_id,
            p.save.save_timestamp,
            p.save.request_id,
            p.save.surface,
            p.revisit.revisit_timestamp,
            kind_token(p.revisit.kind)
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn parse_attributions<R: BufRead>(mut reader: R) -> Result<Vec<Attribution>> {
    csvio::expect_header(&mut reader, ATTRIBUTIONS_HEADER)?;
    let mut pairs = Vec::new();
    csvio::for_each_row(reader, Some(7), |line, f| {
        let save_timestamp: i64 = csvio::parse_num(line, "save_ts", f[2])?;
        let revisit_timestamp: i64 = csvio::parse_num(line, "revisit_ts", f[5])?;
        let surface: Surface = f[4].parse().map_err(|_| Error::UnknownToken {
            line,
            kind: "surface",
            token: f[4].to_string(),
        })?;
        let kind = match f[6] {
            "impression" => RevisitKind::ImpressionRevisit,
            "grid_click" => RevisitKind::GridClickRevisit,
            other => {
                return Err(Error::UnknownToken {
                    line,
                    kind: "revisit kind",
                    token: other.to_string(),
                })
            }
        };
        if revisit_timestamp <= save_timestamp {
            return Err(Error::parse(line, "revisit_ts", "revisit does not follow the save"));
        }
        pairs.push(Attribution {
            save: SaveRecord {
                user_id: f[0].to_string(),
                pin_id: f[1].to_string(),
                save_timestamp,
                save_day: day_index(save_timestamp),
                request_id: f[3].to_string(),
                surface,
            },
            revisit: RevisitEvent {
                user_id: f[0].to_string(),
                pin_id: f[1].to_string(),
                revisit_timestamp,
                revisit_day: day_index(revisit_timestamp),
                kind,
            },
        });
        Ok(())
    })?;
    Ok(pairs)
}

pub fn write_attributions_file(pairs: &[Attribution], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    write_attributions(pairs, std::io::BufWriter::new(file))
}

pub fn read_attributions_file(path: &Path) -> Result<Vec<Attribution>> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    parse_attributions(std::io::BufReader::new(file))
}
