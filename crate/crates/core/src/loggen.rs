//! Synthetic event-log generator.
//!
//! Users browse Related Pins feeds, save some candidates, and later revisit
//! saved pins on their own profile following configurable per-day curves.
//! Every save independently draws impression revisits for each day offset
//! `d` in `0..10` with probability `p_impression_revisit[d]`, and draws at
//! most one grid-click revisit day from the categorical distribution
//! `p_grid_revisit`, so `p_grid_revisit[d]` is exactly the per-save marginal
//! probability of a grid-click revisit on day `d`.
//!
//! Revisit probabilities are scaled by a per-pin factor driven by the
//! planted feature coordinate `f0` and by a per-user factor tied to activity.
//! Both factors have the form `2 * sigmoid(a * z)` with `z ~ N(0, 1)`, which
//! has mean exactly one, so the configured curves stay the population
//! marginals for any signal strength.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::csvio;
use crate::error::{Error, Result};
use crate::event::{Action, DayIndex, EventRecord, Surface, Topic, SECONDS_PER_DAY};

/// Number of day offsets for which revisits are generated.
pub const REVISIT_DAYS: usize = 10;

/// Offsets at or beyond this day form the long-term band that per-topic
/// multipliers scale.
pub const LONG_TERM_START: usize = 3;

/// Logistic slope applied to `strength * z` for the propensity factors.
pub const PROPENSITY_STEEPNESS: f64 = 4.0;

/// Index of the feature coordinate carrying the pin's revisit propensity.
pub const PLANTED_COORDINATE: usize = 0;

/// Index of the feature coordinate carrying the engagement quality that
/// drives grid-click, save and click propensities.
pub const QUALITY_COORDINATE: usize = 1;

const DAY_ACTIVE_SECONDS: i64 = SECONDS_PER_DAY - 3_600;

/// Per-save grid-click revisit anchors: day 0 = 4.7%, halving on day 1 and
/// again on day 3, 0.5% on day 5, 0.3% on day 9.
pub const GRID_REVISIT_ANCHORS: &[(usize, f64)] = &[(0, 0.047), (1, 0.0235), (3, 0.01175), (5, 0.005), (9, 0.003)];

/// Impression revisit anchors: 14.6% on day 0, 19.5% on day 1, 8.7% on day 9.
/// These are per-user fractions reused as per-save probabilities.
pub const IMPRESSION_REVISIT_ANCHORS: &[(usize, f64)] = &[(0, 0.146), (1, 0.195), (9, 0.087)];

/// Linearly interpolates a sparse set of `(day, value)` anchors over
/// `0..REVISIT_DAYS`. Anchors must be sorted and cover day 0 and the last day.
pub fn interpolate_anchors(anchors: &[(usize, f64)]) -> [f64; REVISIT_DAYS] {
    let mut out = [0.0; REVISIT_DAYS];
    for (d, slot) in out.iter_mut().enumerate() {
        let right = anchors
            .iter()
            .position(|&(day, _)| day >= d)
            .expect("anchors must cover the last day");
        let (d1, v1) = anchors[right];
        *slot = if d1 == d || right == 0 {
            v1
        } else {
            let (d0, v0) = anchors[right - 1];
            v0 + (v1 - v0) * (d - d0) as f64 / (d1 - d0) as f64
        };
    }
    out
}

pub fn default_grid_revisit() -> Vec<f64> {
    interpolate_anchors(GRID_REVISIT_ANCHORS).to_vec()
}

pub fn default_impression_revisit() -> Vec<f64> {
    interpolate_anchors(IMPRESSION_REVISIT_ANCHORS).to_vec()
}

/// Long-term multiplier `m` for which the expected share of day 3..=6 grid
/// revisit volume within days 0..=6 equals `target_ratio`:
/// `m L / (S + m L) = r`, with `S` the day 0..=2 mass and `L` the day 3..=6 mass.
pub fn fit_long_term_multiplier(p_grid_revisit: &[f64], target_ratio: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&target_ratio) || p_grid_revisit.len() < 7 {
        return Err(Error::InvalidInput(format!(
            "cannot fit ratio {target_ratio} over {} days",
            p_grid_revisit.len()
        )));
    }
    let short: f64 = p_grid_revisit[..LONG_TERM_START].iter().sum();
    let long: f64 = p_grid_revisit[LONG_TERM_START..7].iter().sum();
    if long <= 0.0 {
        return Err(Error::InvalidInput("no long-term revisit mass".into()));
    }
    Ok(target_ratio * short / ((1.0 - target_ratio) * long))
}

/// Generator configuration. Field names are the config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_users: usize,
    pub n_pins: usize,
    pub n_days: u32,
    pub requests_per_user_day: f64,
    pub candidates_per_request: usize,
    pub p_repin: f64,
    pub p_grid_click: f64,
    pub p_click: f64,
    /// Probability that a click becomes a long click.
    pub p_long_click: f64,
    /// Mean saves per user-day made outside Related Pins.
    pub other_saves_per_user_day: f64,
    pub p_impression_revisit: Vec<f64>,
    pub p_grid_revisit: Vec<f64>,
    /// Scales `p_grid_revisit` on days `LONG_TERM_START..` for pins of a topic.
    pub topic_multipliers: BTreeMap<Topic, f64>,
    /// Probabilities over `Topic::NAMED`, in that order.
    pub topic_mixture: Vec<f64>,
    pub feature_dim: usize,
    pub planted_signal_strength: f64,
    /// Spread of per-user activity levels.
    pub activity_spread: f64,
    /// Coupling between a user's activity level and revisit propensity.
    pub activity_coupling: f64,
    pub rng_seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_users: 1_000,
            n_pins: 5_000,
            n_days: 30,
            requests_per_user_day: 1.0,
            candidates_per_request: 10,
            p_repin: 0.05,
            p_grid_click: 0.15,
            p_click: 0.04,
            p_long_click: 0.4,
            other_saves_per_user_day: 0.1,
            p_impression_revisit: default_impression_revisit(),
            p_grid_revisit: default_grid_revisit(),
            topic_multipliers: BTreeMap::new(),
            topic_mixture: vec![1.0 / 16.0; 16],
            feature_dim: 16,
            planted_signal_strength: 1.0,
            activity_spread: 0.5,
            activity_coupling: 0.0,
            rng_seed: 42,
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {p} is not a probability")))
    }
}

impl GenConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: GenConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("GenConfig is always serializable")
    }

    pub fn topic_multiplier(&self, topic: Topic) -> f64 {
        self.topic_multipliers.get(&topic).copied().unwrap_or(1.0)
    }

    /// Largest value the combined pin and user propensity factor can take.
    fn max_propensity(&self) -> f64 {
        let pin = if self.planted_signal_strength > 0.0 { 2.0 } else { 1.0 };
        let user = if self.activity_coupling > 0.0 { 2.0 } else { 1.0 };
        pin * user
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::Config("n_users must be positive".into()));
        }
        if self.n_days < REVISIT_DAYS as u32 {
            return Err(Error::Config(format!(
                "n_days = {} is shorter than the {REVISIT_DAYS}-day revisit horizon",
                self.n_days
            )));
        }
        if self.candidates_per_request == 0 {
            return Err(Error::Config("candidates_per_request must be positive".into()));
        }
        if self.n_pins < self.candidates_per_request {
            return Err(Error::Config(format!(
                "n_pins = {} is smaller than candidates_per_request = {}",
                self.n_pins, self.candidates_per_request
            )));
        }
        if !(self.requests_per_user_day > 0.0 && self.requests_per_user_day.is_finite()) {
            return Err(Error::Config("requests_per_user_day must be positive".into()));
        }
        if !(self.other_saves_per_user_day >= 0.0 && self.other_saves_per_user_day.is_finite()) {
            return Err(Error::Config("other_saves_per_user_day must be non-negative".into()));
        }
        check_prob("p_repin", self.p_repin)?;
        check_prob("p_grid_click", self.p_grid_click)?;
        check_prob("p_click", self.p_click)?;
        check_prob("p_long_click", self.p_long_click)?;
        for (name, curve) in [
            ("p_impression_revisit", &self.p_impression_revisit),
            ("p_grid_revisit", &self.p_grid_revisit),
        ] {
            if curve.len() != REVISIT_DAYS {
                return Err(Error::Config(format!(
                    "{name} needs {REVISIT_DAYS} entries, found {}",
                    curve.len()
                )));
            }
            for (d, &p) in curve.iter().enumerate() {
                check_prob(&format!("{name}[{d}]"), p)?;
            }
        }
        if self.topic_mixture.len() != Topic::NAMED.len() {
            return Err(Error::Config(format!(
                "topic_mixture needs {} entries, found {}",
                Topic::NAMED.len(),
                self.topic_mixture.len()
            )));
        }
        if self.topic_mixture.iter().any(|&p| p.is_nan() || p < 0.0) {
            return Err(Error::Config("topic_mixture entries must be non-negative".into()));
        }
        let total: f64 = self.topic_mixture.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("topic_mixture sums to {total}, not 1")));
        }
        for (topic, &m) in &self.topic_multipliers {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::Config(format!("topic multiplier for {topic} must be positive")));
            }
        }
        for (name, x) in [
            ("planted_signal_strength", self.planted_signal_strength),
            ("activity_spread", self.activity_spread),
            ("activity_coupling", self.activity_coupling),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::Config(format!("{name} must be a non-negative real")));
            }
        }
        let scale = self.max_propensity();
        let max_impression = self.p_impression_revisit.iter().fold(0.0_f64, |a, &b| a.max(b));
        if max_impression * scale > 1.0 {
            return Err(Error::Config(format!(
                "impression revisit probability {max_impression} times propensity {scale} exceeds 1"
            )));
        }
        for topic in Topic::NAMED {
            let mass: f64 = self.grid_curve(*topic).iter().sum::<f64>() * scale;
            if mass > 1.0 {
                return Err(Error::Config(format!("grid revisit mass {mass} for {topic} exceeds 1")));
            }
        }
        Ok(())
    }

    /// Grid revisit curve for pins of `topic`, before propensity scaling.
    pub fn grid_curve(&self, topic: Topic) -> Vec<f64> {
        let m = self.topic_multiplier(topic);
        self.p_grid_revisit
            .iter()
            .enumerate()
            .map(|(d, &p)| if d >= LONG_TERM_START { p * m } else { p })
            .collect()
    }
}

/// Derives an independent 64-bit seed from the base seed and a list of
/// labels. Stable across platforms and releases.
pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn rng_for(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Mean-one propensity factor `2 sigmoid(k * strength * z)`.
fn propensity(strength: f64, z: f64) -> f64 {
    2.0 * sigmoid(PROPENSITY_STEEPNESS * strength * z)
}

pub fn user_id(index: usize) -> String {
    format!("u{index:06}")
}

pub fn pin_id(index: usize) -> String {
    format!("p{index:06}")
}

fn parse_index(id: &str, prefix: char) -> Option<usize> {
    id.strip_prefix(prefix)?.parse().ok()
}

#[derive(Debug, Clone, Copy)]
struct PinInfo {
    topic: Topic,
    propensity_latent: f64,
}

fn pin_table(config: &GenConfig) -> Vec<PinInfo> {
    (0..config.n_pins)
        .map(|i| {
            let mut rng = rng_for(config.rng_seed, &["pin", &pin_id(i)]);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut topic = *Topic::NAMED.last().expect("sixteen topics");
            for (t, &p) in Topic::NAMED.iter().zip(&config.topic_mixture) {
                acc += p;
                if u < acc {
                    topic = *t;
                    break;
                }
            }
            PinInfo {
                topic,
                propensity_latent: rng.sample(StandardNormal),
            }
        })
        .collect()
}

/// Engagement quality of one (request, candidate) impression.
fn impression_quality(seed: u64, request_id: &str, pin_id: &str) -> f64 {
    rng_for(seed, &["quality", request_id, pin_id]).sample(StandardNormal)
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean).expect("positive mean").sample(rng);
    draw as u64
}

struct UserStream<'a> {
    config: &'a GenConfig,
    pins: &'a [PinInfo],
    user: String,
    user_propensity: f64,
    rng: ChaCha8Rng,
    events: Vec<EventRecord>,
}

impl UserStream<'_> {
    fn push(
        &mut self,
        timestamp: i64,
        pin: usize,
        surface: Surface,
        action: Action,
        request_id: &str,
        slot: Option<u32>,
    ) {
        self.events.push(EventRecord {
            timestamp,
            user_id: self.user.clone(),
            pin_id: pin_id(pin),
            surface,
            action,
            request_id: request_id.to_string(),
            topic: self.pins[pin].topic,
            slot,
        });
    }

    fn request(&mut self, day: u32, k: u64) {
        let config = self.config;
        let request_id = format!("{}-{day}-{k}", self.user);
        let start = DayIndex(day as i64).start_ts() + self.rng.random_range(0..DAY_ACTIVE_SECONDS);
        let picks = sample(&mut self.rng, config.n_pins, config.candidates_per_request);
        for (slot, pin) in picks.into_iter().enumerate() {
            let slot32 = Some(slot as u32);
            let t = start + slot as i64;
            self.push(t, pin, Surface::RelatedPins, Action::Impression, &request_id, slot32);
            let quality = impression_quality(config.rng_seed, &request_id, &pin_id(pin));
            if self.rng.random::<f64>() < sigmoid(logit(config.p_grid_click) + quality) {
                self.push(
                    t + 60,
                    pin,
                    Surface::RelatedPins,
                    Action::GridClick,
                    &request_id,
                    slot32,
                );
            }
            let saved = self.rng.random::<f64>() < sigmoid(logit(config.p_repin) + quality);
            if saved {
                let save_ts = t + 120;
                self.push(save_ts, pin, Surface::RelatedPins, Action::Repin, &request_id, slot32);
                self.revisits(save_ts, pin);
            }
            if self.rng.random::<f64>() < sigmoid(logit(config.p_click) + 0.8 * quality) {
                self.push(t + 180, pin, Surface::RelatedPins, Action::Click, &request_id, slot32);
                if self.rng.random::<f64>() < config.p_long_click {
                    self.push(
                        t + 240,
                        pin,
                        Surface::RelatedPins,
                        Action::LongClick,
                        &request_id,
                        slot32,
                    );
                }
            }
        }
    }

    fn other_save(&mut self, day: u32) {
        let pin = self.rng.random_range(0..self.config.n_pins);
        let ts = DayIndex(day as i64).start_ts() + self.rng.random_range(0..DAY_ACTIVE_SECONDS);
        self.push(ts, pin, Surface::Other, Action::Repin, "", None);
        self.revisits(ts, pin);
    }

    fn revisit_ts(&mut self, save_ts: i64, offset: usize) -> i64 {
        let save_day = save_ts.div_euclid(SECONDS_PER_DAY);
        let day_start = (save_day + offset as i64) * SECONDS_PER_DAY;
        let day_end = day_start + SECONDS_PER_DAY - 1;
        if offset == 0 {
            // uniform over the rest of the save day, strictly after the save
            self.rng.random_range(save_ts + 1..=day_end)
        } else {
            self.rng.random_range(day_start..=day_end)
        }
    }

    fn revisits(&mut self, save_ts: i64, pin: usize) {
        let config = self.config;
        let info = self.pins[pin];
        let scale = propensity(config.planted_signal_strength, info.propensity_latent) * self.user_propensity;
        let horizon = config.n_days as i64;
        let save_day = save_ts.div_euclid(SECONDS_PER_DAY);
        for d in 0..REVISIT_DAYS {
            let hit = self.rng.random::<f64>() < config.p_impression_revisit[d] * scale;
            let ts = self.revisit_ts(save_ts, d);
            if hit && save_day + (d as i64) < horizon {
                self.push(ts, pin, Surface::OwnProfile, Action::Impression, "", None);
            }
        }
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        for (d, p) in config.grid_curve(info.topic).into_iter().enumerate() {
            acc += p * scale;
            if u < acc {
                let ts = self.revisit_ts(save_ts, d);
                if save_day + (d as i64) < horizon {
                    self.push(ts, pin, Surface::OwnProfile, Action::GridClick, "", None);
                }
                break;
            }
        }
    }
}

fn generate_user(config: &GenConfig, pins: &[PinInfo], index: usize) -> Vec<EventRecord> {
    let user = user_id(index);
    let mut rng = rng_for(config.rng_seed, &["user", &user]);
    let latent: f64 = rng.sample(StandardNormal);
    let activity = 2.0 * sigmoid(config.activity_spread * latent);
    let mut stream = UserStream {
        config,
        pins,
        user,
        user_propensity: propensity(config.activity_coupling, latent),
        rng,
        events: Vec::new(),
    };
    for day in 0..config.n_days {
        let n_requests = poisson(&mut stream.rng, config.requests_per_user_day * activity);
        for k in 0..n_requests {
            stream.request(day, k);
        }
        let n_other = poisson(&mut stream.rng, config.other_saves_per_user_day * activity);
        for _ in 0..n_other {
            stream.other_save(day);
        }
    }
    stream.events
}

fn canonical_order(a: &EventRecord, b: &EventRecord) -> std::cmp::Ordering {
    (a.timestamp, &a.user_id, &a.pin_id, a.surface, a.action, &a.request_id).cmp(&(
        b.timestamp,
        &b.user_id,
        &b.pin_id,
        b.surface,
        b.action,
        &b.request_id,
    ))
}

/// Generates a complete event log, sorted by `(timestamp, user_id, pin_id)`.
/// Users are generated in parallel from per-user seeds, so the output does
/// not depend on the number of worker threads.
pub fn generate_log(config: &GenConfig) -> Result<Vec<EventRecord>> {
    config.validate()?;
    let pins = pin_table(config);
    let mut events: Vec<EventRecord> = (0..config.n_users)
        .into_par_iter()
        .flat_map_iter(|u| generate_user(config, &pins, u))
        .collect();
    events.par_sort_unstable_by(canonical_order);
    Ok(events)
}

/// Dense features for every (request, candidate) impression.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSidecar {
    pub dim: usize,
    rows: BTreeMap<(String, String), Vec<f64>>,
}

impl FeatureSidecar {
    pub fn new(dim: usize) -> Self {
        FeatureSidecar {
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, request_id: &str, pin_id: &str, features: Vec<f64>) -> Result<()> {
        if features.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "feature row for ({request_id}, {pin_id}) has {} values, expected {}",
                features.len(),
                self.dim
            )));
        }
        self.rows.insert((request_id.to_string(), pin_id.to_string()), features);
        Ok(())
    }

    pub fn get(&self, request_id: &str, pin_id: &str) -> Option<&[f64]> {
        self.rows
            .get(&(request_id.to_string(), pin_id.to_string()))
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &[f64])> {
        self.rows
            .iter()
            .map(|((r, p), v)| (r.as_str(), p.as_str(), v.as_slice()))
    }

    pub fn header(dim: usize) -> String {
        let mut h = String::from("request_id,pin_id");
        for i in 0..dim {
            h.push_str(&format!(",f{i}"));
        }
        h
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::header(self.dim))?;
        for (request_id, pin_id, values) in self.iter() {
            write!(out, "{request_id},{pin_id}")?;
            for &v in values {
                out.write_all(b",")?;
                csvio::write_real9(&mut out, v)?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a sidecar; the dimension is taken from the header.
    pub fn read<R: BufRead>(mut reader: R) -> Result<Self> {
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let header = header.trim_end_matches(['\n', '\r']);
        let dim = header.split(',').count().saturating_sub(2);
        if header != Self::header(dim) {
            return Err(Error::parse(
                1,
                "header",
                format!("unexpected sidecar header `{header}`"),
            ));
        }
        let mut sidecar = FeatureSidecar::new(dim);
        csvio::for_each_row(reader, Some(dim + 2), |line, f| {
            let values = f[2..]
                .iter()
                .enumerate()
                .map(|(i, raw)| csvio::parse_num::<f64>(line, &format!("f{i}"), raw))
                .collect::<Result<Vec<_>>>()?;
            sidecar.insert(f[0], f[1], values)
        })?;
        Ok(sidecar)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        self.write(std::io::BufWriter::new(file))
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read(std::io::BufReader::new(file))
    }
}

/// Builds the feature row of every Related Pins impression in `log`.
///
/// `f0` is the pin's revisit-propensity latent, `f1` the impression's
/// engagement quality, and the remaining coordinates are noise. All values
/// are recomputed from the seed, so this is a pure function of config and log.
pub fn emit_feature_sidecar(config: &GenConfig, log: &[EventRecord]) -> Result<FeatureSidecar> {
    config.validate()?;
    let pins = pin_table(config);
    let mut keys: Vec<(&str, &str, usize)> = Vec::new();
    for e in log {
        if e.surface != Surface::RelatedPins || e.action != Action::Impression {
            continue;
        }
        let pin = parse_index(&e.pin_id, 'p')
            .filter(|&i| i < config.n_pins)
            .ok_or_else(|| mismatch(format!("pin `{}` is not in the configured pool", e.pin_id)))?;
        let user_ok = parse_index(&e.user_id, 'u').is_some_and(|i| i < config.n_users);
        if !user_ok {
            return Err(mismatch(format!(
                "user `{}` is not in the configured population",
                e.user_id
            )));
        }
        if e.day().0 >= config.n_days as i64 {
            return Err(mismatch(format!("event day {} beyond n_days", e.day())));
        }
        if pins[pin].topic != e.topic {
            return Err(mismatch(format!(
                "topic of `{}` differs from the seeded pin table",
                e.pin_id
            )));
        }
        keys.push((&e.request_id, &e.pin_id, pin));
    }
    let rows: Vec<Vec<f64>> = keys
        .par_iter()
        .map(|&(request_id, pin_name, pin)| {
            let mut row = Vec::with_capacity(config.feature_dim);
            if config.feature_dim > PLANTED_COORDINATE {
                row.push(pins[pin].propensity_latent);
            }
            if config.feature_dim > QUALITY_COORDINATE {
                row.push(impression_quality(config.rng_seed, request_id, pin_name));
            }
            if config.feature_dim > row.len() {
                let mut rng = rng_for(config.rng_seed, &["noise", request_id, pin_name]);
                while row.len() < config.feature_dim {
                    row.push(rng.sample(StandardNormal));
                }
            }
            row
        })
        .collect();
    let mut sidecar = FeatureSidecar::new(config.feature_dim);
    for ((request_id, pin_name, _), row) in keys.into_iter().zip(rows) {
        sidecar.insert(request_id, pin_name, row)?;
    }
    Ok(sidecar)
}

fn mismatch(msg: String) -> Error {
    Error::InvalidInput(format!("log does not match generator config: {msg}"))
}
