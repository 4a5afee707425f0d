//! Stage runner for the full flow and the per-stage file transformations
//! the CLI exposes.
//!
//! ```text
//! generate -> { perf_features, action_labels, revisit_join } -> revisit_labels
//!          -> assemble -> train -> evaluate -> analyze
//! ```
//!
//! The three stages in braces only read the event log and run concurrently.
//! Stages communicate through files in the output directory, and every run
//! writes `manifest.toml` with the SHA-256 digest of each stage's inputs and
//! outputs, also when a stage fails.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analyzer::{self, FeedComparison};
use crate::attribution::{self, derive_saves, Attribution};
use crate::dataset::{self, Dataset};
use crate::error::{Error, Result};
use crate::evaluator;
use crate::event::{self, day_span, DayIndex, Surface, TaskId};
use crate::features::{self, PerfTables};
use crate::loggen::{self, FeatureSidecar, GenConfig};
use crate::ranker::{self, TaskWeights, TrainConfig, N_TASKS};

pub const EVENTS_FILE: &str = "events.csv";
pub const SIDECAR_FILE: &str = "features.csv";
pub const PERF_FILE: &str = "perf_features.csv";
pub const ACTION_LABELS_FILE: &str = "action_labels.csv";
pub const ATTRIBUTIONS_FILE: &str = "attributions.csv";
pub const REVISIT_LABELS_FILE: &str = "revisit_labels.csv";
pub const TRAIN_SET_FILE: &str = "dataset_train.csv";
pub const EVAL_SET_FILE: &str = "dataset_eval.csv";
pub const MODEL_FILE: &str = "model.txt";
pub const EVAL_REPORT_FILE: &str = "eval_report.csv";
pub const TOPIC_REPORT_FILE: &str = "topic_report.csv";
pub const ANALYSIS_DIR: &str = "analysis";
pub const MANIFEST_FILE: &str = "manifest.toml";

/// The `[pipeline]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub out_dir: PathBuf,
    /// Existing event log to use instead of generating one.
    pub event_log: Option<PathBuf>,
    /// Existing feature sidecar; emitted from the generator config if unset.
    pub feature_sidecar: Option<PathBuf>,
    /// Existing model to evaluate when training is off.
    pub model: Option<PathBuf>,
    pub train: bool,
    pub evaluate: bool,
    pub analyze: bool,
    pub plot_data: bool,
    /// Trailing days of the log whose requests form the evaluation set.
    pub eval_days: u32,
    pub k: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            out_dir: PathBuf::from("revisit-lab-out"),
            event_log: None,
            feature_sidecar: None,
            model: None,
            train: true,
            evaluate: true,
            analyze: true,
            plot_data: false,
            eval_days: 7,
            k: 3,
        }
    }
}

/// The `[weights]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsSection {
    pub loss: Vec<f64>,
    pub utility: Vec<f64>,
    /// If set, overrides the revisit utility with `ratio * u(Repin)`.
    pub u_rp_rv_ratio: Option<f64>,
}

impl Default for WeightsSection {
    fn default() -> Self {
        WeightsSection {
            loss: ranker::default_loss_weights().to_vec(),
            utility: ranker::default_utilities().to_vec(),
            u_rp_rv_ratio: None,
        }
    }
}

fn task_weights(name: &str, v: &[f64]) -> Result<TaskWeights> {
    let w: TaskWeights = v
        .try_into()
        .map_err(|_| Error::Config(format!("weights.{name} needs {N_TASKS} values, found {}", v.len())))?;
    if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Config(format!("weights.{name} must be non-negative: {v:?}")));
    }
    Ok(w)
}

impl WeightsSection {
    pub fn loss_weights(&self) -> Result<TaskWeights> {
        task_weights("loss", &self.loss)
    }

    pub fn utility_weights(&self) -> Result<TaskWeights> {
        let mut u = task_weights("utility", &self.utility)?;
        if let Some(ratio) = self.u_rp_rv_ratio {
            if !(ratio.is_finite() && ratio >= 0.0) {
                return Err(Error::Config(format!("u_rp_rv_ratio = {ratio} must be non-negative")));
            }
            u[TaskId::RepinAndRevisit.index()] = ratio * u[TaskId::Repin.index()];
        }
        Ok(u)
    }
}

/// Utilities with the revisit term removed.
pub fn baseline_utilities(u: &TaskWeights) -> TaskWeights {
    let mut b = *u;
    b[TaskId::RepinAndRevisit.index()] = 0.0;
    b
}

/// Generator keys at top level plus `[pipeline]`, `[train]` and `[weights]`.
/// A missing `train.rng_seed` follows the top-level `rng_seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub gen: GenConfig,
    pub pipeline: PipelineSection,
    pub train: TrainConfig,
    pub weights: WeightsSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let gen = GenConfig::default();
        let train = TrainConfig {
            rng_seed: gen.rng_seed,
            ..TrainConfig::default()
        };
        PipelineConfig {
            gen,
            pipeline: PipelineSection::default(),
            train,
            weights: WeightsSection::default(),
        }
    }
}

fn section<T: serde::de::DeserializeOwned + Default>(table: &mut toml::Table, name: &str) -> Result<T> {
    match table.remove(name) {
        None => Ok(T::default()),
        Some(value) => value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("[{name}]: {}", e.message()))),
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let pipeline: PipelineSection = section(&mut table, "pipeline")?;
        let weights: WeightsSection = section(&mut table, "weights")?;
        let train_seed_given = table
            .get("train")
            .and_then(|t| t.as_table())
            .is_some_and(|t| t.contains_key("rng_seed"));
        let mut train: TrainConfig = section(&mut table, "train")?;
        let gen: GenConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        if !train_seed_given {
            train.rng_seed = gen.rng_seed;
        }
        Ok(PipelineConfig {
            gen,
            pipeline,
            train,
            weights,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Seeds every randomized stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.gen.rng_seed = seed;
        self.train.rng_seed = seed;
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.pipeline.out_dir.join(name)
    }

    pub fn events_path(&self) -> PathBuf {
        self.pipeline
            .event_log
            .clone()
            .unwrap_or_else(|| self.out_path(EVENTS_FILE))
    }

    pub fn sidecar_path(&self) -> PathBuf {
        self.pipeline
            .feature_sidecar
            .clone()
            .unwrap_or_else(|| self.out_path(SIDECAR_FILE))
    }

    pub fn model_path(&self) -> PathBuf {
        match (&self.pipeline.model, self.pipeline.train) {
            (Some(p), false) => p.clone(),
            _ => self.out_path(MODEL_FILE),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pipeline.event_log.is_none() {
            self.gen.validate()?;
        }
        self.train.validate()?;
        self.weights.loss_weights()?;
        self.weights.utility_weights()?;
        if self.pipeline.eval_days == 0 {
            return Err(Error::Config("pipeline.eval_days must be at least 1".into()));
        }
        if self.pipeline.k == 0 {
            return Err(Error::Config("pipeline.k must be at least 1".into()));
        }
        let inputs = [&self.pipeline.event_log, &self.pipeline.feature_sidecar];
        for path in inputs.into_iter().flatten() {
            if !path.is_file() {
                return Err(Error::Config(format!("input file {} does not exist", path.display())));
            }
        }
        if !self.pipeline.train && self.pipeline.evaluate {
            if let Some(model) = &self.pipeline.model {
                if !model.is_file() {
                    return Err(Error::Config(format!("model file {} does not exist", model.display())));
                }
            }
        }
        Ok(())
    }
}

/// Generates the event log and its feature sidecar.
pub fn stage_generate(gen: &GenConfig, events_out: &Path, sidecar_out: &Path) -> Result<()> {
    let log = loggen::generate_log(gen)?;
    event::write_event_log_file(&log, events_out)?;
    loggen::emit_feature_sidecar(gen, &log)?.write_file(sidecar_out)
}

/// Emits the sidecar for an existing log from the generator's seeded tables.
pub fn stage_sidecar(gen: &GenConfig, events: &Path, sidecar_out: &Path) -> Result<()> {
    let log = event::read_event_log_file(events)?;
    loggen::emit_feature_sidecar(gen, &log)?.write_file(sidecar_out)
}

fn related_join(log: &[event::EventRecord]) -> Result<Vec<Attribution>> {
    let saves = derive_saves(log, Some(Surface::RelatedPins));
    let revisits = attribution::derive_revisit_events(log);
    attribution::join_revisits(&saves, &revisits)
}

fn log_span(log: &[event::EventRecord]) -> Result<(DayIndex, DayIndex)> {
    day_span(log).ok_or_else(|| Error::InvalidInput("empty event log".into()))
}

/// Perf tables over the log's day span, with their own save/revisit join.
pub fn stage_perf_features(events: &Path, out: &Path) -> Result<()> {
    let log = event::read_event_log_file(events)?;
    let (first, last) = log_span(&log)?;
    let join = related_join(&log)?;
    PerfTables::compute(&log, &join, first, last)?.write_file(out)
}

pub fn stage_action_labels(events: &Path, out: &Path) -> Result<()> {
    let log = event::read_event_log_file(events)?;
    dataset::write_action_labels_file(&dataset::extract_action_labels(&log)?, out)
}

pub fn stage_revisit_join(events: &Path, out: &Path) -> Result<()> {
    let log = event::read_event_log_file(events)?;
    attribution::write_attributions_file(&related_join(&log)?, out)
}

pub fn stage_revisit_labels(events: &Path, attributions: &Path, out: &Path) -> Result<()> {
    let log = event::read_event_log_file(events)?;
    let saves = derive_saves(&log, Some(Surface::RelatedPins));
    let pairs = attribution::read_attributions_file(attributions)?;
    attribution::write_labels_file(&attribution::build_labels(&pairs, &saves)?, out)
}

pub struct AssembleInputs<'a> {
    pub events: &'a Path,
    pub sidecar: &'a Path,
    pub perf: &'a Path,
    pub action_labels: &'a Path,
    pub revisit_labels: &'a Path,
}

/// Requests of the last `eval_days` days form the evaluation set. Training
/// requests end at least six days before the log does, so their revisit
/// labels have matured.
pub fn stage_assemble(inputs: &AssembleInputs<'_>, eval_days: u32, train_out: &Path, eval_out: &Path) -> Result<()> {
    let log = event::read_event_log_file(inputs.events)?;
    let (first, last) = log_span(&log)?;
    drop(log);
    let split = DayIndex(last.0 - eval_days as i64);
    let train_last = DayIndex(split.0.min(last.0 - attribution::LABEL_MAX_OFFSET));
    if train_last < first {
        return Err(Error::InsufficientHorizon(format!(
            "log spans days {first}..={last}, too short for {eval_days} evaluation days"
        )));
    }
    let sidecar = FeatureSidecar::read_file(inputs.sidecar)?;
    let perf = PerfTables::from_rows(features::read_feature_rows_file(inputs.perf)?, first, last)?;
    let labeled = dataset::attach_revisit_label(
        dataset::read_action_labels_file(inputs.action_labels)?,
        &attribution::read_labels_file(inputs.revisit_labels)?,
    )?;
    dataset::assemble(&sidecar, &perf, &labeled, first, train_last)?.write_file(train_out)?;
    dataset::assemble(&sidecar, &perf, &labeled, DayIndex(split.0 + 1), last)?.write_file(eval_out)
}

pub fn stage_train(
    train_set: &Path,
    config: &TrainConfig,
    loss_weights: &TaskWeights,
    utility_weights: &TaskWeights,
    model_out: &Path,
) -> Result<Vec<f64>> {
    let data = Dataset::read_file(train_set)?;
    let outcome = ranker::train(&data, config, loss_weights, utility_weights)?;
    ranker::write_model_file(&outcome.params, model_out)?;
    Ok(outcome.epoch_losses)
}

/// Evaluates `model` ranked with its own utilities against the same model
/// with the revisit utility zeroed, writing the lift report.
pub fn stage_evaluate(model: &Path, eval_set: &Path, k: usize, out: &Path) -> Result<()> {
    let params = ranker::read_model_file(model)?;
    let data = Dataset::read_file(eval_set)?;
    let u = params.utility_weights;
    let a = evaluator::eval_feed(&evaluator::rank_dataset(&params, &u, &data)?, k)?;
    let b = evaluator::eval_feed(&evaluator::rank_dataset(&params, &baseline_utilities(&u), &data)?, k)?;
    evaluator::write_lift_report_file(&a, &b, out)
}

/// Compares two model files on one dataset, each with its own utilities.
pub fn compare_models(model_a: &Path, model_b: &Path, eval_set: &Path, k: usize, out: &Path) -> Result<()> {
    let a = ranker::read_model_file(model_a)?;
    let b = ranker::read_model_file(model_b)?;
    let data = Dataset::read_file(eval_set)?;
    let ra = evaluator::eval_feed(&evaluator::rank_dataset(&a, &a.utility_weights, &data)?, k)?;
    let rb = evaluator::eval_feed(&evaluator::rank_dataset(&b, &b.utility_weights, &data)?, k)?;
    evaluator::write_lift_report_file(&ra, &rb, out)
}

pub struct AnalyzeInputs<'a> {
    pub events: &'a Path,
    pub revisit_labels: &'a Path,
    /// Model and evaluation set for the per-topic model columns.
    pub model: Option<(&'a Path, &'a Path)>,
}

/// Writes `topic_report.csv`, plus every figure file with `plot_data`.
pub fn stage_analyze(inputs: &AnalyzeInputs<'_>, k: usize, plot_data: bool, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let log = event::read_event_log_file(inputs.events)?;
    let labels = attribution::read_labels_file(inputs.revisit_labels)?;
    let feeds = match inputs.model {
        Some((model, eval_set)) => {
            let params = ranker::read_model_file(model)?;
            let data = Dataset::read_file(eval_set)?;
            let u = params.utility_weights;
            Some((
                evaluator::rank_dataset(&params, &u, &data)?,
                evaluator::rank_dataset(&params, &baseline_utilities(&u), &data)?,
            ))
        }
        None => None,
    };
    let comparison = feeds.as_ref().map(|(a, b)| FeedComparison {
        model_a: a,
        model_b: b,
        k,
    });
    std::fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
    let report_path = out_dir.join(TOPIC_REPORT_FILE);
    write_topic_report(&analyzer::topic_report(&log, &labels, comparison)?, &report_path)?;
    let mut outputs = vec![report_path];
    if plot_data {
        analyzer::write_plot_data(&log, &labels, comparison, out_dir)?;
        outputs.extend(analyzer::PLOT_FILES.iter().map(|f| out_dir.join(f)));
    }
    Ok(outputs)
}

pub const TOPIC_REPORT_HEADER: &str = "topic,impressions,repins,labeled_saves,saves,repin_rate,revisit_rate,\
revisit_grid_rate,long_short_ratio,mean_p_rp_rv,repin_volume_lift_pct";

pub fn write_topic_report(rows: &[analyzer::TopicReportRow], path: &Path) -> Result<()> {
    use std::io::Write;
    let opt = |v: Option<f64>| v.map_or_else(|| "null".to_string(), |v| format!("{v:.9}"));
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "{TOPIC_REPORT_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.topic,
            r.impressions,
            r.repins,
            r.labeled_saves,
            r.saves,
            opt(r.repin_rate),
            opt(r.revisit_rate),
            opt(r.revisit_grid_rate),
            opt(r.long_short_ratio),
            opt(r.mean_p_rp_rv),
            opt(r.repin_volume_lift_pct)
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::file(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub inputs: Vec<FileDigest>,
    #[serde(default)]
    pub outputs: Vec<FileDigest>,
}

/// Stages in execution order with their file digests.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub gen_seed: u64,
    pub train_seed: u64,
    #[serde(rename = "stage")]
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Checks that every input produced inside the run comes from an
    /// earlier stage and carries the digest that stage recorded.
    pub fn verify_dag(&self) -> Result<()> {
        let mut producer: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        for (i, stage) in self.stages.iter().enumerate() {
            for out in &stage.outputs {
                if let Some((j, _)) = producer.insert(&out.path, (i, &out.sha256)) {
                    return Err(Error::Integrity(format!(
                        "{} written by both {} and {}",
                        out.path, self.stages[j].name, stage.name
                    )));
                }
            }
        }
        for (i, stage) in self.stages.iter().enumerate() {
            for input in &stage.inputs {
                let Some(&(j, digest)) = producer.get(input.path.as_str()) else {
                    continue;
                };
                if j >= i {
                    return Err(Error::Integrity(format!(
                        "{} reads {} produced by the later stage {}",
                        stage.name, input.path, self.stages[j].name
                    )));
                }
                if digest != input.sha256 {
                    return Err(Error::Integrity(format!(
                        "{} read {} with a digest other than the one {} wrote",
                        stage.name, input.path, self.stages[j].name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::file(path, e))
    }
}

/// Scheduling of the three event-log stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Concurrent,
    /// One after another, in the given order of
    /// `[perf_features, action_labels, revisit_join]` indices.
    Sequential([usize; 3]),
}

struct Runner<'a> {
    out_dir: &'a Path,
    manifest: Manifest,
}

impl Runner<'_> {
    fn name(&self, path: &Path) -> String {
        match path.strip_prefix(self.out_dir) {
            Ok(rel) => rel.to_string_lossy().replace('\\', "/"),
            Err(_) => path.to_string_lossy().into_owned(),
        }
    }

    fn digests(&self, paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
        paths
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: self.name(p),
                    sha256: sha256_file(p)?,
                })
            })
            .collect()
    }

    fn record(&mut self, name: &str, inputs: &[PathBuf], outputs: &[PathBuf], result: Result<()>) -> Result<()> {
        let record = match result.and_then(|()| Ok((self.digests(inputs)?, self.digests(outputs)?))) {
            Ok((inputs, outputs)) => StageRecord {
                name: name.to_string(),
                status: StageStatus::Ok,
                error: None,
                inputs,
                outputs,
            },
            Err(e) => {
                self.manifest.stages.push(StageRecord {
                    name: name.to_string(),
                    status: StageStatus::Failed,
                    error: Some(e.to_string()),
                    inputs: Vec::new(),
                    outputs: Vec::new(),
                });
                return Err(e);
            }
        };
        self.manifest.stages.push(record);
        Ok(())
    }

    fn skip(&mut self, name: &str) {
        self.manifest.stages.push(StageRecord {
            name: name.to_string(),
            status: StageStatus::Skipped,
            error: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        });
    }

    /// Runs `f` and records the outcome.
    fn run(
        &mut self,
        name: &str,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
        f: impl FnOnce() -> Result<()>,
    ) -> Result<()> {
        let result = f();
        self.record(name, inputs, outputs, result)
    }
}

/// Runs every enabled stage and writes the manifest.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Manifest> {
    run_pipeline_with(config, Schedule::Concurrent)
}

pub fn run_pipeline_with(config: &PipelineConfig, schedule: Schedule) -> Result<Manifest> {
    config.validate()?;
    let out_dir = &config.pipeline.out_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
    let pool = crate::thread_pool()?;
    let mut runner = Runner {
        out_dir,
        manifest: Manifest {
            gen_seed: config.gen.rng_seed,
            train_seed: config.train.rng_seed,
            stages: Vec::new(),
        },
    };
    if let Err(e) = run_stages(config, schedule, &pool, &mut runner) {
        for name in STAGE_NAMES {
            if runner.manifest.stage(name).is_none() {
                runner.skip(name);
            }
        }
        runner.manifest.write_file(&out_dir.join(MANIFEST_FILE))?;
        return Err(e);
    }
    runner.manifest.verify_dag()?;
    runner.manifest.write_file(&out_dir.join(MANIFEST_FILE))?;
    Ok(runner.manifest)
}

pub const STAGE_NAMES: [&str; 9] = [
    "generate",
    "perf_features",
    "action_labels",
    "revisit_join",
    "revisit_labels",
    "assemble",
    "train",
    "evaluate",
    "analyze",
];

/// A stage reading the event log and writing one file.
type FileStage = fn(&Path, &Path) -> Result<()>;

fn run_stages(
    config: &PipelineConfig,
    schedule: Schedule,
    pool: &rayon::ThreadPool,
    runner: &mut Runner<'_>,
) -> Result<()> {
    let p = &config.pipeline;
    let events = config.events_path();
    let sidecar = config.sidecar_path();
    match (&p.event_log, &p.feature_sidecar) {
        (None, _) => {
            let outs = [events.clone(), sidecar.clone()];
            runner.run("generate", &[], &outs, || {
                pool.install(|| stage_generate(&config.gen, &events, &sidecar))
            })?
        }
        (Some(_), None) => {
            let ins = [events.clone()];
            let outs = [sidecar.clone()];
            runner.run("generate", &ins, &outs, || {
                pool.install(|| stage_sidecar(&config.gen, &events, &sidecar))
            })?
        }
        (Some(_), Some(_)) => runner.skip("generate"),
    }

    let perf = config.out_path(PERF_FILE);
    let actions = config.out_path(ACTION_LABELS_FILE);
    let pairs = config.out_path(ATTRIBUTIONS_FILE);
    let parallel: [(&str, &PathBuf, FileStage); 3] = [
        ("perf_features", &perf, stage_perf_features),
        ("action_labels", &actions, stage_action_labels),
        ("revisit_join", &pairs, stage_revisit_join),
    ];
    let results: Vec<Result<()>> = match schedule {
        Schedule::Concurrent => std::thread::scope(|scope| {
            let handles: Vec<_> = parallel
                .iter()
                .map(|&(_, out, f)| {
                    let events = &events;
                    scope.spawn(move || pool.install(|| f(events, out)))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(Error::Integrity("stage thread panicked".into())))
                })
                .collect()
        }),
        Schedule::Sequential(order) => {
            let mut results: Vec<Option<Result<()>>> = vec![None, None, None];
            for i in order {
                let (_, out, f) = parallel[i];
                results[i] = Some(pool.install(|| f(&events, out)));
            }
            results
                .into_iter()
                .map(|r| r.unwrap_or_else(|| Err(Error::InvalidInput("schedule omits a stage".into()))))
                .collect()
        }
    };
    let mut first_error = None;
    for ((name, out, _), result) in parallel.iter().zip(results) {
        if let Err(e) = runner.record(name, std::slice::from_ref(&events), &[(*out).clone()], result) {
            first_error.get_or_insert(e);
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }

    let labels = config.out_path(REVISIT_LABELS_FILE);
    runner.run(
        "revisit_labels",
        &[events.clone(), pairs.clone()],
        std::slice::from_ref(&labels),
        || pool.install(|| stage_revisit_labels(&events, &pairs, &labels)),
    )?;

    let train_set = config.out_path(TRAIN_SET_FILE);
    let eval_set = config.out_path(EVAL_SET_FILE);
    let assemble_inputs = AssembleInputs {
        events: &events,
        sidecar: &sidecar,
        perf: &perf,
        action_labels: &actions,
        revisit_labels: &labels,
    };
    runner.run(
        "assemble",
        &[
            events.clone(),
            sidecar.clone(),
            perf.clone(),
            actions.clone(),
            labels.clone(),
        ],
        &[train_set.clone(), eval_set.clone()],
        || pool.install(|| stage_assemble(&assemble_inputs, p.eval_days, &train_set, &eval_set)),
    )?;

    let model = config.model_path();
    if p.train {
        let loss_w = config.weights.loss_weights()?;
        let util_w = config.weights.utility_weights()?;
        runner.run(
            "train",
            std::slice::from_ref(&train_set),
            std::slice::from_ref(&model),
            || pool.install(|| stage_train(&train_set, &config.train, &loss_w, &util_w, &model).map(|_| ())),
        )?;
    } else {
        runner.skip("train");
    }
    let have_model = p.train || p.model.is_some();

    if p.evaluate && have_model {
        let report = config.out_path(EVAL_REPORT_FILE);
        runner.run(
            "evaluate",
            &[model.clone(), eval_set.clone()],
            std::slice::from_ref(&report),
            || pool.install(|| stage_evaluate(&model, &eval_set, p.k, &report)),
        )?;
    } else {
        runner.skip("evaluate");
    }

    if p.analyze {
        let dir = config.out_path(ANALYSIS_DIR);
        let mut inputs = vec![events.clone(), labels.clone()];
        if have_model {
            inputs.extend([model.clone(), eval_set.clone()]);
        }
        let analyze_inputs = AnalyzeInputs {
            events: &events,
            revisit_labels: &labels,
            model: have_model.then_some((model.as_path(), eval_set.as_path())),
        };
        let outputs = pool.install(|| stage_analyze(&analyze_inputs, p.k, p.plot_data, &dir));
        match outputs {
            Ok(outs) => runner.record("analyze", &inputs, &outs, Ok(()))?,
            Err(e) => runner.record("analyze", &inputs, &[], Err(e))?,
        }
    } else {
        runner.skip("analyze");
    }
    Ok(())
}
