//! Behavioral reports over event logs: per-day revisit curves, activity by
//! revisit status, revisit/engagement correlation and per-topic summaries,
//! plus their CSV plot data.
//!
//! An active day is a calendar day with any logged event of the user.
//! Engagement change is measured in active days over a window after the
//! cohort day minus the same-length window before it.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::attribution::{
    derive_revisit_events, derive_saves, join_revisits_within, Attribution, RevisitEvent, RevisitKind,
    RevisitLabelRecord, SaveRecord, LABEL_MAX_OFFSET,
};
use crate::error::{Error, Result};
use crate::evaluator::RankedFeed;
use crate::event::{day_index, day_span, Action, DayIndex, EventRecord, Surface, TaskId, Topic};
use crate::loggen::LONG_TERM_START;

/// Last revisit offset covered by the per-day curves.
pub const CURVE_MAX_DAY: i64 = 9;

/// Length of the activity windows, in days.
pub const ACTIVITY_HORIZON: i64 = 28;

const Z_95: f64 = 1.959_963_984_540_054;

/// `count / denominator` for one day offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DailyFraction {
    pub day: i64,
    pub count: usize,
    pub denominator: usize,
}

impl DailyFraction {
    pub fn fraction(&self) -> f64 {
        self.count as f64 / self.denominator as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRevisitCurves {
    pub impression: Vec<DailyFraction>,
    pub grid: Vec<DailyFraction>,
}

fn check_saves(saves: &[SaveRecord], max_day: i64) -> Result<()> {
    if saves.is_empty() {
        return Err(Error::InvalidInput("no saves to analyze".into()));
    }
    if max_day < 0 {
        return Err(Error::InvalidInput(format!("max_day = {max_day} is negative")));
    }
    Ok(())
}

/// Per offset `d` and kind, the share of saving users with a revisit of that
/// kind attributed at offset `d` to one of their saves.
pub fn daily_revisit_user_fraction(
    saves: &[SaveRecord],
    revisits: &[RevisitEvent],
    max_day: i64,
) -> Result<UserRevisitCurves> {
    check_saves(saves, max_day)?;
    let pairs = join_revisits_within(saves, revisits, max_day)?;
    let n_users = {
        let mut users: Vec<&str> = saves.iter().map(|s| s.user_id.as_str()).collect();
        users.sort_unstable();
        users.dedup();
        users.len()
    };
    let curve = |kind: RevisitKind| {
        let mut hits: Vec<(i64, &str)> = pairs
            .iter()
            .filter(|p| p.revisit.kind == kind)
            .map(|p| (p.day_offset(), p.save.user_id.as_str()))
            .collect();
        hits.sort_unstable();
        hits.dedup();
        (0..=max_day)
            .map(|day| DailyFraction {
                day,
                count: hits.iter().filter(|h| h.0 == day).count(),
                denominator: n_users,
            })
            .collect()
    };
    Ok(UserRevisitCurves {
        impression: curve(RevisitKind::ImpressionRevisit),
        grid: curve(RevisitKind::GridClickRevisit),
    })
}

fn grid_save_offsets(pairs: &[Attribution]) -> Vec<(&SaveRecord, i64)> {
    let mut hits: Vec<(&SaveRecord, i64)> = pairs
        .iter()
        .filter(|p| p.revisit.kind == RevisitKind::GridClickRevisit)
        .map(|p| (&p.save, p.day_offset()))
        .collect();
    hits.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    hits
}

/// Per offset `d`, the share of saves with a grid-click revisit attributed
/// at offset `d`.
pub fn daily_revisit_volume_fraction(
    saves: &[SaveRecord],
    revisits: &[RevisitEvent],
    max_day: i64,
) -> Result<Vec<DailyFraction>> {
    check_saves(saves, max_day)?;
    let pairs = join_revisits_within(saves, revisits, max_day)?;
    let hits = grid_save_offsets(&pairs);
    Ok((0..=max_day)
        .map(|day| DailyFraction {
            day,
            count: hits.iter().filter(|h| h.1 == day).count(),
            denominator: saves.len(),
        })
        .collect())
}

/// Saves whose revisit offsets up to `max_day` all fall inside the log.
pub fn matured_saves(saves: &[SaveRecord], last_day: DayIndex, max_day: i64) -> Vec<SaveRecord> {
    saves
        .iter()
        .filter(|s| s.save_day.0 + max_day <= last_day.0)
        .cloned()
        .collect()
}

/// Share of the days 0..=6 volume falling on the long-term days 3..=6.
/// `None` when the 0..=6 total is zero.
pub fn long_short_ratio(day_volumes: &[f64]) -> Option<f64> {
    let end = (LABEL_MAX_OFFSET as usize + 1).min(day_volumes.len());
    let total: f64 = day_volumes[..end].iter().sum();
    if total <= 0.0 {
        return None;
    }
    let long: f64 = day_volumes[LONG_TERM_START.min(end)..end].iter().sum();
    Some(long / total)
}

struct UserTimeline {
    active_days: Vec<i64>,
    first_save_day: Option<i64>,
    save_days: Vec<i64>,
    /// (save day, offset, kind) of every attributed revisit.
    revisits: Vec<(i64, i64, RevisitKind)>,
}

impl UserTimeline {
    fn active_in(&self, lo: i64, hi: i64) -> usize {
        let a = self.active_days.partition_point(|&d| d < lo);
        let b = self.active_days.partition_point(|&d| d <= hi);
        b - a
    }

    fn revisited_by(&self, cohort_day: i64, t: i64, kind: Option<RevisitKind>) -> bool {
        self.revisits
            .iter()
            .any(|&(s, off, k)| s == cohort_day && off <= t && kind.is_none_or(|want| want == k))
    }
}

struct Timelines {
    first_day: i64,
    last_day: i64,
    users: BTreeMap<String, UserTimeline>,
}

fn timelines(events: &[EventRecord], max_offset: i64) -> Result<Timelines> {
    let (first, last) = day_span(events).ok_or_else(|| Error::InvalidInput("empty event log".into()))?;
    let mut users: BTreeMap<String, UserTimeline> = BTreeMap::new();
    for e in events {
        let u = users.entry(e.user_id.clone()).or_insert_with(|| UserTimeline {
            active_days: Vec::new(),
            first_save_day: None,
            save_days: Vec::new(),
            revisits: Vec::new(),
        });
        u.active_days.push(e.day().0);
        if e.action == Action::Repin && e.surface != Surface::OwnProfile {
            u.save_days.push(e.day().0);
        }
    }
    let saves = derive_saves(events, None);
    let revisits = derive_revisit_events(events);
    for p in join_revisits_within(&saves, &revisits, max_offset)? {
        if let Some(u) = users.get_mut(&p.save.user_id) {
            u.revisits.push((p.save.save_day.0, p.day_offset(), p.revisit.kind));
        }
    }
    for u in users.values_mut() {
        u.active_days.sort_unstable();
        u.active_days.dedup();
        u.save_days.sort_unstable();
        u.save_days.dedup();
        u.first_save_day = u.save_days.first().copied();
    }
    Ok(Timelines {
        first_day: first.0,
        last_day: last.0,
        users,
    })
}

/// Histograms of active days in the `horizon` days after `t`, split by
/// whether the user revisited a pin saved on their first save day by
/// offset `t`. Index `i` counts users with `i` active days.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityHistograms {
    pub t: i64,
    pub horizon: i64,
    pub revisited: Vec<usize>,
    pub not_revisited: Vec<usize>,
}

fn histogram_mean(h: &[usize]) -> Option<f64> {
    let n: usize = h.iter().sum();
    (n > 0).then(|| h.iter().enumerate().map(|(i, &c)| (i * c) as f64).sum::<f64>() / n as f64)
}

impl ActivityHistograms {
    pub fn group_sizes(&self) -> (usize, usize) {
        (self.revisited.iter().sum(), self.not_revisited.iter().sum())
    }

    pub fn mean_revisited(&self) -> Option<f64> {
        histogram_mean(&self.revisited)
    }

    pub fn mean_not_revisited(&self) -> Option<f64> {
        histogram_mean(&self.not_revisited)
    }
}

/// Cohort day of each user is the first day they saved a pin. Users whose
/// window `S + t + 1 ..= S + t + horizon` extends past the log are left out.
pub fn activity_by_revisit_status(events: &[EventRecord], t: i64, horizon: i64) -> Result<ActivityHistograms> {
    if t < 0 || horizon < 1 {
        return Err(Error::InvalidInput(format!("t = {t}, horizon = {horizon}")));
    }
    let tl = timelines(events, t)?;
    activity_from_timelines(&tl, t, horizon)
}

fn activity_from_timelines(tl: &Timelines, t: i64, horizon: i64) -> Result<ActivityHistograms> {
    let rows: Vec<(bool, usize)> = tl
        .users
        .par_iter()
        .filter_map(|(_, u)| {
            let s = u.first_save_day?;
            (s + t + horizon <= tl.last_day)
                .then(|| (u.revisited_by(s, t, None), u.active_in(s + t + 1, s + t + horizon)))
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::InsufficientHorizon(format!(
            "no user has a save day S with S + {t} + {horizon} <= day {}",
            tl.last_day
        )));
    }
    let mut h = ActivityHistograms {
        t,
        horizon,
        revisited: vec![0; horizon as usize + 1],
        not_revisited: vec![0; horizon as usize + 1],
    };
    for (revisited, days) in rows {
        if revisited {
            h.revisited[days] += 1;
        } else {
            h.not_revisited[days] += 1;
        }
    }
    Ok(h)
}

/// Pearson correlation with a Fisher-z 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

/// Point-biserial correlation of a binary indicator with a numeric value.
/// `None` if either group has fewer than two members, the values are
/// constant, or `n <= 3`.
pub fn point_biserial(indicator: &[bool], values: &[f64]) -> Option<Correlation> {
    assert_eq!(indicator.len(), values.len(), "indicator and values differ in length");
    let n = values.len();
    let n1 = indicator.iter().filter(|&&b| b).count();
    let n0 = n - n1;
    if n1 < 2 || n0 < 2 || n <= 3 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return None;
    }
    let mean1 = values.iter().zip(indicator).filter(|p| *p.1).map(|p| p.0).sum::<f64>() / n1 as f64;
    let mean0 = values.iter().zip(indicator).filter(|p| !*p.1).map(|p| p.0).sum::<f64>() / n0 as f64;
    let p = n1 as f64 / n as f64;
    let r = ((mean1 - mean0) / var.sqrt() * (p * (1.0 - p)).sqrt()).clamp(-1.0, 1.0);
    let z = r.atanh();
    let se = 1.0 / ((n - 3) as f64).sqrt();
    Some(Correlation {
        r,
        ci_low: (z - Z_95 * se).tanh(),
        ci_high: (z + Z_95 * se).tanh(),
        n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngagementCorrelation {
    pub day: i64,
    pub kind: RevisitKind,
    pub n_users: usize,
    pub n_revisited: usize,
    pub correlation: Option<Correlation>,
}

/// For each day `X` in `days` and each revisit kind, correlates "revisited
/// by offset `X` via that kind" with the change in active days between
/// `S + X + 1 ..= S + X + 28` and `S - 28 ..= S - 1`. The cohort day `S`
/// is the user's first save day that leaves a full prior window.
pub fn revisit_engagement_correlation(
    events: &[EventRecord],
    days: std::ops::RangeInclusive<i64>,
) -> Result<Vec<EngagementCorrelation>> {
    if days.is_empty() || *days.start() < 0 {
        return Err(Error::InvalidInput(format!("day range {days:?}")));
    }
    let tl = timelines(events, *days.end())?;
    correlation_from_timelines(&tl, days)
}

fn correlation_from_timelines(
    tl: &Timelines,
    days: std::ops::RangeInclusive<i64>,
) -> Result<Vec<EngagementCorrelation>> {
    let h = ACTIVITY_HORIZON;
    let mut out = Vec::new();
    for x in days {
        let cohort: Vec<(&UserTimeline, i64)> = tl
            .users
            .values()
            .filter_map(|u| {
                let s = *u.save_days.iter().find(|&&d| d - h >= tl.first_day)?;
                (s + x + h <= tl.last_day).then_some((u, s))
            })
            .collect();
        if cohort.is_empty() {
            return Err(Error::InsufficientHorizon(format!(
                "no user has {h} days before and {x} + {h} days after a save"
            )));
        }
        let delta: Vec<f64> = cohort
            .iter()
            .map(|&(u, s)| u.active_in(s + x + 1, s + x + h) as f64 - u.active_in(s - h, s - 1) as f64)
            .collect();
        for kind in [RevisitKind::ImpressionRevisit, RevisitKind::GridClickRevisit] {
            let indicator: Vec<bool> = cohort.iter().map(|&(u, s)| u.revisited_by(s, x, Some(kind))).collect();
            out.push(EngagementCorrelation {
                day: x,
                kind,
                n_users: cohort.len(),
                n_revisited: indicator.iter().filter(|&&b| b).count(),
                correlation: point_biserial(&indicator, &delta),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicReportRow {
    pub topic: Topic,
    pub impressions: usize,
    pub repins: usize,
    /// Matured Related Pins saves behind the revisit rates.
    pub labeled_saves: usize,
    /// Matured saves on any surface behind the day volumes.
    pub saves: usize,
    pub repin_rate: Option<f64>,
    pub revisit_rate: Option<f64>,
    pub revisit_grid_rate: Option<f64>,
    /// Grid-click revisit volume at offsets 0..=6.
    pub grid_day_volume: [usize; LABEL_MAX_OFFSET as usize + 1],
    pub long_short_ratio: Option<f64>,
    pub mean_p_rp_rv: Option<f64>,
    pub repin_volume_lift_pct: Option<f64>,
}

/// Two sets of ranked feeds over the same requests, compared at cutoff `k`.
#[derive(Debug, Clone, Copy)]
pub struct FeedComparison<'a> {
    pub model_a: &'a [RankedFeed],
    pub model_b: &'a [RankedFeed],
    pub k: usize,
}

fn pin_topics(events: &[EventRecord]) -> Result<HashMap<&str, Topic>> {
    let mut topics: HashMap<&str, Topic> = HashMap::new();
    for e in events {
        if let Some(&t) = topics.get(e.pin_id.as_str()) {
            if t != e.topic {
                return Err(Error::Integrity(format!(
                    "pin {} logged with topics {t} and {}",
                    e.pin_id, e.topic
                )));
            }
        } else {
            topics.insert(&e.pin_id, e.topic);
        }
    }
    Ok(topics)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// One row per topic present in the log, in topic order. Rates count only
/// saves whose label window lies inside the log. With `feeds`, repin volume
/// is the number of repinned candidates ranked in the top `k`.
pub fn topic_report(
    events: &[EventRecord],
    labels: &[RevisitLabelRecord],
    feeds: Option<FeedComparison<'_>>,
) -> Result<Vec<TopicReportRow>> {
    let (_, last) = day_span(events).ok_or_else(|| Error::InvalidInput("empty event log".into()))?;
    let topics = pin_topics(events)?;
    let mut rows: BTreeMap<Topic, TopicReportRow> = BTreeMap::new();
    for &t in topics.values() {
        rows.entry(t).or_insert_with(|| empty_row(t));
    }

    for e in events.iter().filter(|e| e.surface == Surface::RelatedPins) {
        let r = rows.get_mut(&e.topic).expect("topic registered");
        match e.action {
            Action::Impression => r.impressions += 1,
            Action::Repin => r.repins += 1,
            _ => {}
        }
    }

    let mut revisited: BTreeMap<Topic, (usize, usize)> = BTreeMap::new();
    for l in labels {
        if day_index(l.save_timestamp).0 + LABEL_MAX_OFFSET > last.0 {
            continue;
        }
        let topic = *topics
            .get(l.pin_id.as_str())
            .ok_or_else(|| Error::Integrity(format!("label for pin {} absent from the log", l.pin_id)))?;
        let r = rows.get_mut(&topic).expect("topic registered");
        r.labeled_saves += 1;
        let c = revisited.entry(topic).or_default();
        c.0 += l.merged as usize;
        c.1 += l.flag_7d_rev_grid as usize;
    }

    let saves = matured_saves(&derive_saves(events, None), last, LABEL_MAX_OFFSET);
    let revisits = derive_revisit_events(events);
    let pairs = join_revisits_within(&saves, &revisits, LABEL_MAX_OFFSET)?;
    for s in &saves {
        rows.get_mut(&topics[s.pin_id.as_str()])
            .expect("topic registered")
            .saves += 1;
    }
    for p in pairs.iter().filter(|p| p.revisit.kind == RevisitKind::GridClickRevisit) {
        let r = rows.get_mut(&topics[p.save.pin_id.as_str()]).expect("topic registered");
        r.grid_day_volume[p.day_offset() as usize] += 1;
    }

    let mut model_stats: BTreeMap<Topic, (f64, usize, usize, usize)> = BTreeMap::new();
    if let Some(cmp) = feeds {
        if cmp.k < 1 {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        let topic_of = |pin: &str| {
            topics
                .get(pin)
                .copied()
                .ok_or_else(|| Error::Integrity(format!("ranked pin {pin} absent from the log")))
        };
        for feed in cmp.model_a {
            for (i, item) in feed.items.iter().enumerate() {
                let s = model_stats.entry(topic_of(&item.pin_id)?).or_default();
                s.0 += item.probabilities[TaskId::RepinAndRevisit.index()];
                s.1 += 1;
                if i < cmp.k && item.labels[TaskId::Repin.index()] {
                    s.2 += 1;
                }
            }
        }
        for feed in cmp.model_b {
            for item in feed.items.iter().take(cmp.k) {
                if item.labels[TaskId::Repin.index()] {
                    model_stats.entry(topic_of(&item.pin_id)?).or_default().3 += 1;
                }
            }
        }
    }

    for (topic, r) in rows.iter_mut() {
        r.repin_rate = ratio(r.repins, r.impressions);
        if let Some(&(merged, grid)) = revisited.get(topic) {
            r.revisit_rate = ratio(merged, r.labeled_saves);
            r.revisit_grid_rate = ratio(grid, r.labeled_saves);
        }
        let volumes: Vec<f64> = r.grid_day_volume.iter().map(|&v| v as f64).collect();
        r.long_short_ratio = long_short_ratio(&volumes);
        if let Some(&(p_sum, n, a, b)) = model_stats.get(topic) {
            r.mean_p_rp_rv = (n > 0).then(|| p_sum / n as f64);
            r.repin_volume_lift_pct = (b > 0).then(|| 100.0 * (a as f64 - b as f64) / b as f64);
        }
    }
    Ok(rows.into_values().collect())
}

fn empty_row(topic: Topic) -> TopicReportRow {
    TopicReportRow {
        topic,
        impressions: 0,
        repins: 0,
        labeled_saves: 0,
        saves: 0,
        repin_rate: None,
        revisit_rate: None,
        revisit_grid_rate: None,
        grid_day_volume: [0; LABEL_MAX_OFFSET as usize + 1],
        long_short_ratio: None,
        mean_p_rp_rv: None,
        repin_volume_lift_pct: None,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), |v| format!("{v:.9}"))
}

fn kind_token(kind: RevisitKind) -> &'static str {
    match kind {
        RevisitKind::ImpressionRevisit => "impression",
        RevisitKind::GridClickRevisit => "grid",
    }
}

fn create(dir: &Path, name: &str) -> Result<std::io::BufWriter<std::fs::File>> {
    let path = dir.join(name);
    let file = std::fs::File::create(&path).map_err(|e| Error::file(&path, e))?;
    Ok(std::io::BufWriter::new(file))
}

pub const PLOT_FILES: [&str; 7] = [
    "fig3a.csv",
    "fig3b.csv",
    "fig4.csv",
    "fig5.csv",
    "fig8.csv",
    "fig9.csv",
    "table3.csv",
];

/// Computes every report and writes one CSV per figure into `dir`.
/// Offsets or days the log horizon cannot cover are omitted from the
/// activity and correlation files.
pub fn write_plot_data(
    events: &[EventRecord],
    labels: &[RevisitLabelRecord],
    feeds: Option<FeedComparison<'_>>,
    dir: &Path,
) -> Result<()> {
    let (_, last) = day_span(events).ok_or_else(|| Error::InvalidInput("empty event log".into()))?;
    let saves = matured_saves(&derive_saves(events, None), last, CURVE_MAX_DAY);
    let revisits = derive_revisit_events(events);

    let mut out = create(dir, "fig3a.csv")?;
    writeln!(
        out,
        "day,impression_users,grid_users,n_users,impression_fraction,grid_fraction"
    )?;
    if !saves.is_empty() {
        let curves = daily_revisit_user_fraction(&saves, &revisits, CURVE_MAX_DAY)?;
        for (i, g) in curves.impression.iter().zip(&curves.grid) {
            writeln!(
                out,
                "{},{},{},{},{:.9},{:.9}",
                i.day,
                i.count,
                g.count,
                i.denominator,
                i.fraction(),
                g.fraction()
            )?;
        }
    }
    out.flush()?;

    let mut out = create(dir, "fig3b.csv")?;
    writeln!(out, "day,grid_saves,n_saves,fraction")?;
    if !saves.is_empty() {
        for d in daily_revisit_volume_fraction(&saves, &revisits, CURVE_MAX_DAY)? {
            writeln!(out, "{},{},{},{:.9}", d.day, d.count, d.denominator, d.fraction())?;
        }
    }
    out.flush()?;

    let tl = timelines(events, LABEL_MAX_OFFSET)?;
    let mut out = create(dir, "fig4.csv")?;
    writeln!(out, "t,group,active_days,users")?;
    for t in 0..=LABEL_MAX_OFFSET {
        let h = match activity_from_timelines(&tl, t, ACTIVITY_HORIZON) {
            Ok(h) => h,
            Err(Error::InsufficientHorizon(_)) => break,
            Err(e) => return Err(e),
        };
        for (group, hist) in [("revisited", &h.revisited), ("not_revisited", &h.not_revisited)] {
            for (days, users) in hist.iter().enumerate() {
                writeln!(out, "{t},{group},{days},{users}")?;
            }
        }
    }
    out.flush()?;

    let mut out = create(dir, "fig5.csv")?;
    writeln!(out, "day,kind,r,ci_low,ci_high,n_users,n_revisited")?;
    for x in 0..=LABEL_MAX_OFFSET {
        let rows = match correlation_from_timelines(&tl, x..=x) {
            Ok(rows) => rows,
            Err(Error::InsufficientHorizon(_)) => break,
            Err(e) => return Err(e),
        };
        for c in rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.day,
                kind_token(c.kind),
                opt(c.correlation.map(|c| c.r)),
                opt(c.correlation.map(|c| c.ci_low)),
                opt(c.correlation.map(|c| c.ci_high)),
                c.n_users,
                c.n_revisited
            )?;
        }
    }
    out.flush()?;

    let report = topic_report(events, labels, feeds)?;
    let mut out = create(dir, "fig8.csv")?;
    writeln!(out, "topic,mean_p_rp_rv,repin_volume_lift_pct")?;
    for r in &report {
        writeln!(
            out,
            "{},{},{}",
            r.topic,
            opt(r.mean_p_rp_rv),
            opt(r.repin_volume_lift_pct)
        )?;
    }
    out.flush()?;

    let mut out = create(dir, "fig9.csv")?;
    writeln!(
        out,
        "topic,impressions,repins,repin_rate,labeled_saves,revisit_rate,revisit_grid_rate"
    )?;
    for r in &report {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.topic,
            r.impressions,
            r.repins,
            opt(r.repin_rate),
            r.labeled_saves,
            opt(r.revisit_rate),
            opt(r.revisit_grid_rate)
        )?;
    }
    out.flush()?;

    let mut out = create(dir, "table3.csv")?;
    write!(out, "topic,saves")?;
    for d in 0..=LABEL_MAX_OFFSET {
        write!(out, ",grid_d{d}")?;
    }
    writeln!(out, ",long_short_ratio")?;
    for r in &report {
        write!(out, "{},{}", r.topic, r.saves)?;
        for v in r.grid_day_volume {
            write!(out, ",{v}")?;
        }
        writeln!(out, ",{}", opt(r.long_short_ratio))?;
    }
    out.flush()?;
    Ok(())
}
