//! Training-example assembly: Related Pins action labels, the revisitation
//! label, sidecar features and point-in-time perf features joined on
//! `(request_id, candidate pin_id)`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::attribution::RevisitLabelRecord;
use crate::csvio;
use crate::error::{Error, Result};
use crate::event::{Action, DayIndex, EventRecord, Surface, TaskId};
use crate::features::{PerfTables, PERF_FEATURE_COUNT};
use crate::loggen::FeatureSidecar;

pub const LABEL_COLUMNS: [&str; 5] = ["y_grid", "y_repin", "y_click", "y_longclick", "y_rp_rv"];

/// Key of one impressed candidate.
pub type CandidateKey = (String, String);

/// Engagement labels of one impressed candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImpressionLabels {
    pub user_id: String,
    pub request_day: DayIndex,
    /// Indexed by [`TaskId`]; the revisit slot is filled by
    /// [`attach_revisit_label`].
    pub labels: [bool; TaskId::COUNT],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub request_id: String,
    pub candidate_pin_id: String,
    pub user_id: String,
    pub features: Vec<f64>,
    pub labels: [bool; TaskId::COUNT],
}

impl TrainingExample {
    pub fn label(&self, task: TaskId) -> bool {
        self.labels[task.index()]
    }
}

/// Engagement labels per impressed `(request_id, pin_id)`. Impressions
/// without any action are all-false negatives.
pub fn extract_action_labels(events: &[EventRecord]) -> Result<BTreeMap<CandidateKey, ImpressionLabels>> {
    let mut rows: BTreeMap<CandidateKey, ImpressionLabels> = BTreeMap::new();
    let related = || events.iter().filter(|e| e.surface == Surface::RelatedPins);
    for e in related().filter(|e| e.action == Action::Impression) {
        let key = (e.request_id.clone(), e.pin_id.clone());
        let row = rows.entry(key).or_insert_with(|| ImpressionLabels {
            user_id: e.user_id.clone(),
            request_day: e.day(),
            labels: [false; TaskId::COUNT],
        });
        row.request_day = row.request_day.min(e.day());
    }
    for e in related().filter(|e| e.action != Action::Impression) {
        let task = match e.action {
            Action::GridClick => TaskId::GridClick,
            Action::Repin => TaskId::Repin,
            Action::Click => TaskId::Click,
            Action::LongClick => TaskId::LongClick,
            Action::Impression => unreachable!(),
        };
        let row = rows.get_mut(&(e.request_id.clone(), e.pin_id.clone())).ok_or_else(|| {
            Error::Integrity(format!(
                "{} on ({}, {}) has no impression in that request",
                e.action, e.request_id, e.pin_id
            ))
        })?;
        row.labels[task.index()] = true;
    }
    Ok(rows)
}

pub const ACTION_LABELS_HEADER: &str = "request_id,pin_id,user_id,request_day,y_grid,y_repin,y_click,y_longclick";

/// Writes engagement labels; the revisit column is not part of this file.
pub fn write_action_labels<W: Write>(rows: &BTreeMap<CandidateKey, ImpressionLabels>, mut out: W) -> Result<()> {
    writeln!(out, "{ACTION_LABELS_HEADER}")?;
    for ((request_id, pin_id), row) in rows {
        write!(out, "{request_id},{pin_id},{},{}", row.user_id, row.request_day)?;
        for task in TaskId::ENGAGEMENT {
            write!(out, ",{}", csvio::flag(row.labels[task.index()]))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn parse_action_labels<R: BufRead>(mut reader: R) -> Result<BTreeMap<CandidateKey, ImpressionLabels>> {
    csvio::expect_header(&mut reader, ACTION_LABELS_HEADER)?;
    let mut rows = BTreeMap::new();
    csvio::for_each_row(reader, Some(8), |line, f| {
        let mut labels = [false; TaskId::COUNT];
        for (i, task) in TaskId::ENGAGEMENT.iter().enumerate() {
            labels[task.index()] = csvio::parse_flag(line, LABEL_COLUMNS[task.index()], f[4 + i])?;
        }
        let row = ImpressionLabels {
            user_id: f[2].to_string(),
            request_day: DayIndex(csvio::parse_num(line, "request_day", f[3])?),
            labels,
        };
        if rows.insert((f[0].to_string(), f[1].to_string()), row).is_some() {
            return Err(Error::parse(line, "pin_id", "duplicate (request_id, pin_id)"));
        }
        Ok(())
    })?;
    Ok(rows)
}

pub fn write_action_labels_file(rows: &BTreeMap<CandidateKey, ImpressionLabels>, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    write_action_labels(rows, std::io::BufWriter::new(file))
}

pub fn read_action_labels_file(path: &Path) -> Result<BTreeMap<CandidateKey, ImpressionLabels>> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    parse_action_labels(std::io::BufReader::new(file))
}

/// Sets the revisit label: true exactly when the candidate was saved from
/// this request and that save carries a merged revisitation label.
pub fn attach_revisit_label(
    mut rows: BTreeMap<CandidateKey, ImpressionLabels>,
    revisit_labels: &[RevisitLabelRecord],
) -> Result<BTreeMap<CandidateKey, ImpressionLabels>> {
    for row in rows.values_mut() {
        row.labels[TaskId::RepinAndRevisit.index()] = false;
    }
    for label in revisit_labels {
        let row = rows
            .get_mut(&(label.request_id.clone(), label.pin_id.clone()))
            .filter(|r| r.labels[TaskId::Repin.index()])
            .ok_or_else(|| {
                Error::Integrity(format!(
                    "revisit label for ({}, {}) has no saved candidate row",
                    label.request_id, label.pin_id
                ))
            })?;
        row.labels[TaskId::RepinAndRevisit.index()] |= label.merged;
    }
    Ok(rows)
}

/// A set of training rows sharing one feature layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub feature_dim: usize,
    pub examples: Vec<TrainingExample>,
}

/// Builds one row per labeled candidate whose request day lies in
/// `first_day..=last_day`, sorted by `(request_id, pin_id)`. Perf features
/// come from the table in effect on the request day; missing pins read as
/// zero counts.
pub fn assemble(
    sidecar: &FeatureSidecar,
    perf: &PerfTables,
    labeled: &BTreeMap<CandidateKey, ImpressionLabels>,
    first_day: DayIndex,
    last_day: DayIndex,
) -> Result<Dataset> {
    let feature_dim = sidecar.dim + PERF_FEATURE_COUNT;
    let mut examples = Vec::new();
    for ((request_id, pin_id), row) in labeled {
        if row.request_day < first_day || row.request_day > last_day {
            continue;
        }
        let base = sidecar
            .get(request_id, pin_id)
            .ok_or_else(|| Error::Integrity(format!("no sidecar features for ({request_id}, {pin_id})")))?;
        let mut features = Vec::with_capacity(feature_dim);
        features.extend_from_slice(base);
        features.extend_from_slice(&perf.feature_vector(pin_id, row.request_day));
        if features.len() != feature_dim {
            return Err(Error::InvalidInput(format!(
                "row ({request_id}, {pin_id}) has {} features, expected {feature_dim}",
                features.len()
            )));
        }
        examples.push(TrainingExample {
            request_id: request_id.clone(),
            candidate_pin_id: pin_id.clone(),
            user_id: row.user_id.clone(),
            features,
            labels: row.labels,
        });
    }
    Ok(Dataset { feature_dim, examples })
}

fn header(feature_dim: usize) -> String {
    let mut h = String::from("request_id,pin_id,user_id");
    for i in 0..feature_dim {
        h.push_str(&format!(",f{i}"));
    }
    for c in LABEL_COLUMNS {
        h.push(',');
        h.push_str(c);
    }
    h
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Groups rows by request, preserving row order within each request.
    pub fn requests(&self) -> Vec<&[TrainingExample]> {
        self.examples.chunk_by(|a, b| a.request_id == b.request_id).collect()
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", header(self.feature_dim))?;
        for ex in &self.examples {
            if ex.features.len() != self.feature_dim {
                return Err(Error::InvalidInput(format!(
                    "row ({}, {}) has {} features, expected {}",
                    ex.request_id,
                    ex.candidate_pin_id,
                    ex.features.len(),
                    self.feature_dim
                )));
            }
            write!(out, "{},{},{}", ex.request_id, ex.candidate_pin_id, ex.user_id)?;
            for &x in &ex.features {
                out.write_all(b",")?;
                csvio::write_real9(&mut out, x)?;
            }
            for &y in &ex.labels {
                write!(out, ",{}", csvio::flag(y))?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(mut reader: R) -> Result<Self> {
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let first = first.trim_end_matches(['\n', '\r']);
        let width = first.split(',').count();
        let feature_dim = width
            .checked_sub(3 + LABEL_COLUMNS.len())
            .ok_or_else(|| Error::parse(1, "header", "too few columns"))?;
        if first != header(feature_dim) {
            return Err(Error::parse(
                1,
                "header",
                format!("unexpected dataset header `{first}`"),
            ));
        }
        let mut examples = Vec::new();
        csvio::for_each_row(reader, Some(width), |line, f| {
            let features = f[3..3 + feature_dim]
                .iter()
                .enumerate()
                .map(|(i, raw)| csvio::parse_num::<f64>(line, &format!("f{i}"), raw))
                .collect::<Result<Vec<_>>>()?;
            let mut labels = [false; TaskId::COUNT];
            for (i, name) in LABEL_COLUMNS.iter().enumerate() {
                labels[i] = csvio::parse_flag(line, name, f[3 + feature_dim + i])?;
            }
            if labels[TaskId::RepinAndRevisit.index()] && !labels[TaskId::Repin.index()] {
                return Err(Error::parse(line, "y_rp_rv", "revisit label set without a repin"));
            }
            examples.push(TrainingExample {
                request_id: f[0].to_string(),
                candidate_pin_id: f[1].to_string(),
                user_id: f[2].to_string(),
                features,
                labels,
            });
            Ok(())
        })?;
        Ok(Dataset { feature_dim, examples })
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::label_log;
    use crate::event::Topic;

    fn ev(ts: i64, pin: &str, surface: Surface, action: Action, request: &str) -> EventRecord {
        EventRecord {
            timestamp: ts,
            user_id: "u".into(),
            pin_id: pin.into(),
            surface,
            action,
            request_id: request.into(),
            topic: Topic::Travel,
            slot: (surface == Surface::RelatedPins).then_some(0),
        }
    }

    fn rp(ts: i64, pin: &str, action: Action) -> EventRecord {
        ev(ts, pin, Surface::RelatedPins, action, "r1")
    }

    #[test]
    fn action_label_rows() {
        let log = vec![
            rp(1, "a", Action::Impression),
            rp(1, "b", Action::Impression),
            rp(5, "b", Action::Repin),
            rp(6, "b", Action::Click),
        ];
        let rows = extract_action_labels(&log).unwrap();
        assert_eq!(rows[&("r1".into(), "a".into())].labels, [false; 5]);
        assert_eq!(
            rows[&("r1".into(), "b".into())].labels,
            [false, true, true, false, false]
        );
    }

    #[test]
    fn action_without_impression_fails() {
        let log = vec![rp(5, "b", Action::Repin)];
        assert!(matches!(extract_action_labels(&log), Err(Error::Integrity(_))));
    }

    #[test]
    fn revisit_label_requires_repin() {
        let log = vec![
            rp(1, "a", Action::Impression),
            rp(2, "a", Action::Repin),
            ev(50, "a", Surface::OwnProfile, Action::GridClick, ""),
            rp(1, "b", Action::Impression),
            ev(60, "b", Surface::OwnProfile, Action::GridClick, ""),
        ];
        let (_, labels) = label_log(&log).unwrap();
        let rows = attach_revisit_label(extract_action_labels(&log).unwrap(), &labels).unwrap();
        assert!(rows[&("r1".into(), "a".into())].labels[4]);
        // stray own-profile activity on an unsaved candidate stays negative
        assert!(!rows[&("r1".into(), "b".into())].labels[4]);

        let mut orphan = labels[0].clone();
        orphan.pin_id = "b".into();
        assert!(attach_revisit_label(extract_action_labels(&log).unwrap(), &[orphan]).is_err());
    }

    #[test]
    fn missing_perf_is_zero_and_file_round_trips() {
        let log = vec![rp(1, "a", Action::Impression), rp(2, "a", Action::GridClick)];
        let rows = attach_revisit_label(extract_action_labels(&log).unwrap(), &[]).unwrap();
        let mut sidecar = FeatureSidecar::new(2);
        sidecar.insert("r1", "a", vec![0.25, -1.5]).unwrap();
        let perf = PerfTables::from_rows(Vec::new(), DayIndex(0), DayIndex(3)).unwrap();
        let ds = assemble(&sidecar, &perf, &rows, DayIndex(0), DayIndex(0)).unwrap();
        assert_eq!(ds.feature_dim, 32);
        assert_eq!(&ds.examples[0].features[..2], &[0.25, -1.5]);
        assert!(ds.examples[0].features[2..].iter().all(|&x| x == 0.0));

        let mut buf = Vec::new();
        ds.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("request_id,pin_id,user_id,f0,f1,f2,"));
        assert!(text
            .lines()
            .next()
            .unwrap()
            .ends_with(",f31,y_grid,y_repin,y_click,y_longclick,y_rp_rv"));
        assert_eq!(Dataset::read(buf.as_slice()).unwrap(), ds);
    }

    #[test]
    fn missing_sidecar_row_fails() {
        let log = vec![rp(1, "a", Action::Impression)];
        let rows = extract_action_labels(&log).unwrap();
        let perf = PerfTables::from_rows(Vec::new(), DayIndex(0), DayIndex(0)).unwrap();
        assert!(assemble(&FeatureSidecar::new(1), &perf, &rows, DayIndex(0), DayIndex(0)).is_err());
    }
}
