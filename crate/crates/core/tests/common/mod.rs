//! Reference implementations written from the definitions, used as oracles
//! by the integration and acceptance tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use revisit_lab::attribution::Attribution;
use revisit_lab::features::FeatureFamily;
use revisit_lab::ranker::ModelParams;
use revisit_lab::{Action, EventRecord, Surface, Topic};

pub const DAY: i64 = 86_400;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shape of a random test log.
#[derive(Debug, Clone, Copy)]
pub struct LogShape {
    pub users: usize,
    pub pins: usize,
    pub days: i64,
    pub events: usize,
}

fn pick_ts<R: Rng>(rng: &mut R, days: i64) -> i64 {
    let day = rng.random_range(0..days);
    let sec = match rng.random_range(0..6) {
        0 => 0,
        1 => DAY - 1,
        2 => 1,
        _ => rng.random_range(0..DAY),
    };
    day * DAY + sec
}

fn topic_of(pin: usize) -> Topic {
    Topic::NAMED[pin % Topic::NAMED.len()]
}

/// Random log mixing Related Pins requests with actions, off-surface saves,
/// own-profile revisits (including orphans and boundary timestamps) and
/// unrelated own-profile clicks. Every action has an impression in its
/// request.
pub fn random_log(seed: u64, shape: LogShape) -> Vec<EventRecord> {
    let mut rng = rng(seed);
    let mut out: Vec<EventRecord> = Vec::new();
    let mut request = 0usize;
    while out.len() < shape.events {
        let user = format!("u{}", rng.random_range(0..shape.users));
        match rng.random_range(0..10) {
            0..=3 => {
                let ts = pick_ts(&mut rng, shape.days);
                let request_id = format!("{user}-r{request}");
                request += 1;
                let n = rng.random_range(1..=4.min(shape.pins));
                let pins = rand::seq::index::sample(&mut rng, shape.pins, n);
                for (slot, pin) in pins.into_iter().enumerate() {
                    let base = EventRecord {
                        timestamp: ts + slot as i64,
                        user_id: user.clone(),
                        pin_id: format!("p{pin}"),
                        surface: Surface::RelatedPins,
                        action: Action::Impression,
                        request_id: request_id.clone(),
                        topic: topic_of(pin),
                        slot: Some(slot as u32),
                    };
                    for (action, p, dt) in [
                        (Action::GridClick, 0.3, 60),
                        (Action::Repin, 0.35, 120),
                        (Action::Click, 0.2, 180),
                        (Action::LongClick, 0.1, 240),
                    ] {
                        if rng.random::<f64>() < p {
                            out.push(EventRecord {
                                action,
                                timestamp: base.timestamp + dt,
                                ..base.clone()
                            });
                        }
                    }
                    out.push(base);
                }
            }
            4 => {
                let pin = rng.random_range(0..shape.pins);
                out.push(EventRecord {
                    timestamp: pick_ts(&mut rng, shape.days),
                    user_id: user,
                    pin_id: format!("p{pin}"),
                    surface: Surface::Other,
                    action: Action::Repin,
                    request_id: String::new(),
                    topic: topic_of(pin),
                    slot: None,
                });
            }
            _ => {
                let pin = rng.random_range(0..shape.pins);
                let action = *[Action::Impression, Action::GridClick, Action::GridClick, Action::Click]
                    .choose(&mut rng)
                    .expect("non-empty");
                out.push(EventRecord {
                    timestamp: pick_ts(&mut rng, shape.days),
                    user_id: user,
                    pin_id: format!("p{pin}"),
                    surface: Surface::OwnProfile,
                    action,
                    request_id: String::new(),
                    topic: topic_of(pin),
                    slot: None,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Kind {
    Impression,
    Grid,
}

/// (user, pin, save_ts, save_request, revisit_ts, kind)
pub type PairKey = (String, String, i64, String, i64, Kind);

fn revisit_kind(e: &EventRecord) -> Option<Kind> {
    if e.surface != Surface::OwnProfile {
        return None;
    }
    match e.action {
        Action::Impression => Some(Kind::Impression),
        Action::GridClick => Some(Kind::Grid),
        _ => None,
    }
}

fn day(ts: i64) -> i64 {
    ts.div_euclid(DAY)
}

/// For every revisit, scans all saves of the same user and pin that happened
/// strictly earlier, takes the latest one and keeps the pair if the
/// calendar-day offset is within `0..=max_offset`.
pub fn oracle_join(events: &[EventRecord], save_surface: Option<Surface>, max_offset: i64) -> Vec<PairKey> {
    let mut saves: BTreeMap<(&str, &str), Vec<&EventRecord>> = BTreeMap::new();
    for e in events
        .iter()
        .filter(|e| e.action == Action::Repin && save_surface.is_none_or(|s| e.surface == s))
    {
        saves.entry((&e.user_id, &e.pin_id)).or_default().push(e);
    }
    let mut out = Vec::new();
    for r in events {
        let Some(kind) = revisit_kind(r) else { continue };
        let Some(candidates) = saves.get(&(r.user_id.as_str(), r.pin_id.as_str())) else {
            continue;
        };
        let mut latest: Option<&EventRecord> = None;
        for s in candidates {
            if s.timestamp < r.timestamp {
                let better = match latest {
                    None => true,
                    Some(l) => (s.timestamp, &s.request_id) > (l.timestamp, &l.request_id),
                };
                if better {
                    latest = Some(s);
                }
            }
        }
        if let Some(s) = latest {
            let d = day(r.timestamp) - day(s.timestamp);
            if (0..=max_offset).contains(&d) {
                out.push((
                    r.user_id.clone(),
                    r.pin_id.clone(),
                    s.timestamp,
                    s.request_id.clone(),
                    r.timestamp,
                    kind,
                ));
            }
        }
    }
    out.sort();
    out
}

pub fn pair_keys(pairs: &[Attribution]) -> Vec<PairKey> {
    let mut keys: Vec<PairKey> = pairs
        .iter()
        .map(|p| {
            let kind = match p.revisit.kind {
                revisit_lab::attribution::RevisitKind::ImpressionRevisit => Kind::Impression,
                revisit_lab::attribution::RevisitKind::GridClickRevisit => Kind::Grid,
            };
            (
                p.save.user_id.clone(),
                p.save.pin_id.clone(),
                p.save.save_timestamp,
                p.save.request_id.clone(),
                p.revisit.revisit_timestamp,
                kind,
            )
        })
        .collect();
    keys.sort();
    keys
}

/// Literal family definition evaluated by rescanning the raw log:
/// `(pin, user, day)` of every qualifying revisit.
pub fn oracle_family_events(events: &[EventRecord], family: FeatureFamily) -> Vec<(String, String, i64)> {
    let mut out = Vec::new();
    match family {
        FeatureFamily::OverallRevImpre | FeatureFamily::OverallRevGrid => {
            let want = if family == FeatureFamily::OverallRevImpre {
                Kind::Impression
            } else {
                Kind::Grid
            };
            for r in events {
                if revisit_kind(r) != Some(want) {
                    continue;
                }
                let saved_before = events.iter().any(|s| {
                    s.action == Action::Repin
                        && s.user_id == r.user_id
                        && s.pin_id == r.pin_id
                        && s.timestamp < r.timestamp
                });
                if saved_before {
                    out.push((r.pin_id.clone(), r.user_id.clone(), day(r.timestamp)));
                }
            }
        }
        _ => {
            let (want, max_d) = match family {
                FeatureFamily::Rp1dRevImpre => (Kind::Impression, 0),
                FeatureFamily::Rp1dRevGrid => (Kind::Grid, 0),
                _ => (Kind::Grid, 6),
            };
            for (user, pin, save_ts, _, revisit_ts, kind) in oracle_join(events, Some(Surface::RelatedPins), 6) {
                if kind == want && day(revisit_ts) - day(save_ts) <= max_d {
                    out.push((pin, user, day(revisit_ts)));
                }
            }
        }
    }
    out.sort();
    out
}

/// Brute-force `(actions, unique users)` per pin over one window.
pub fn oracle_window(triples: &[(String, String, i64)], window: i64, as_of: i64) -> BTreeMap<String, (u64, u64)> {
    let mut pins: BTreeMap<String, (u64, BTreeSet<String>)> = BTreeMap::new();
    for (pin, user, d) in triples {
        if *d > as_of - window && *d <= as_of {
            let e = pins.entry(pin.clone()).or_default();
            e.0 += 1;
            e.1.insert(user.clone());
        }
    }
    pins.into_iter().map(|(p, (n, u))| (p, (n, u.len() as u64))).collect()
}

/// Ranking metrics straight from their textbook definitions, in the order
/// ndcg, map, reciprocal rank, recall, pairwise accuracy, hits.
pub fn reference_metrics(labels: &[bool], k: usize) -> [Option<f64>; 6] {
    let n = labels.len();
    let rel = |i: usize| if labels[i] { 1.0 } else { 0.0 };
    let positives = labels.iter().filter(|&&y| y).count();
    let cut = k.min(n);
    let hits = (0..cut).any(|i| labels[i]);
    let hits = Some(if hits { 1.0 } else { 0.0 });
    if positives == 0 {
        return [None, None, None, None, None, hits];
    }
    let dcg: f64 = (0..cut).map(|i| rel(i) / ((i as f64) + 2.0).log2()).sum();
    let mut ideal = labels.to_vec();
    ideal.sort_by(|a, b| b.cmp(a));
    let idcg: f64 = (0..cut)
        .map(|i| if ideal[i] { 1.0 / ((i as f64) + 2.0).log2() } else { 0.0 })
        .sum();
    let mut ap = 0.0;
    for i in 0..cut {
        if labels[i] {
            let precision = (0..=i).filter(|&j| labels[j]).count() as f64 / (i + 1) as f64;
            ap += precision;
        }
    }
    ap /= positives.min(k) as f64;
    let rr = (0..cut).find(|&i| labels[i]).map_or(0.0, |i| 1.0 / (i + 1) as f64);
    let recall = (0..cut).filter(|&i| labels[i]).count() as f64 / positives as f64;
    let negatives = n - positives;
    let pairwise = if negatives == 0 {
        None
    } else {
        let mut good = 0usize;
        for i in 0..n {
            for j in 0..n {
                if labels[i] && !labels[j] && i < j {
                    good += 1;
                }
            }
        }
        Some(good as f64 / (positives * negatives) as f64)
    };
    [Some(dcg / idcg), Some(ap), Some(rr), Some(recall), pairwise, hits]
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Forward pass written directly over the weight arrays; returns the head
/// probabilities of the first `heads` tasks.
pub fn naive_forward(params: &ModelParams, x: &[f64], heads: usize) -> Vec<f64> {
    let mut a = x.to_vec();
    for layer in &params.trunk {
        let mut next = vec![0.0; layer.outputs];
        for (o, slot) in next.iter_mut().enumerate() {
            let mut z = layer.bias[o];
            for i in 0..layer.inputs {
                z += layer.weights[o * layer.inputs + i] * a[i];
            }
            *slot = if z > 0.0 { z } else { 0.0 };
        }
        a = next;
    }
    let h = &params.heads;
    (0..heads)
        .map(|t| {
            let mut z = h.bias[t];
            for i in 0..h.inputs {
                z += h.weights[t * h.inputs + i] * a[i];
            }
            logistic(z)
        })
        .collect()
}

fn cross_entropy(p: f64, y: bool) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean weighted cross-entropy of a model with only the first `heads` tasks.
pub fn naive_loss(params: &ModelParams, rows: &[(Vec<f64>, Vec<bool>)], w: &[f64], heads: usize) -> f64 {
    let mut total = 0.0;
    for (x, y) in rows {
        let p = naive_forward(params, x, heads);
        let mut l = 0.0;
        for t in 0..heads {
            l += w[t] * cross_entropy(p[t], y[t]);
        }
        total += l;
    }
    total * (1.0 / rows.len() as f64)
}

/// Ranking of a model with only the first `heads` tasks: descending
/// utility-weighted score, ascending pin id on ties.
pub fn naive_rank(
    params: &ModelParams,
    u: &[f64],
    candidates: &[(String, Vec<f64>)],
    heads: usize,
) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> = candidates
        .iter()
        .map(|(pin, x)| {
            let p = naive_forward(params, x, heads);
            let mut s = 0.0;
            for t in 0..heads {
                s += u[t] * p[t];
            }
            (pin.clone(), s)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored
}

pub fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("temp dir")
}
