//! Offline ranking metrics over ranked feeds with binary labels.
//!
//! Per task and request, with `k` the cutoff:
//!
//! * Hits@k: 1 if any of the top `k` candidates is positive. Counted over
//!   every request, including those without positives.
//! * NDCG@k: binary-gain DCG with a `log2(rank + 1)` discount divided by the
//!   DCG of the label-sorted list.
//! * MAP@k: precision at each positive rank within the top `k`, summed and
//!   divided by `min(k, positives)`.
//! * Reciprocal rank@k: `1 / rank` of the first positive if within `k`.
//! * Recall@k: positives in the top `k` over all positives.
//! * Pairwise accuracy: share of (positive, negative) pairs where the
//!   positive ranks higher, over the whole list.
//!
//! Rank metrics are skipped for requests without a positive (pairwise
//! accuracy also without a negative); the skip count is reported.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::event::TaskId;
use crate::ranker::{self, Candidate, ModelParams, TaskWeights, N_TASKS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Ndcg,
    Map,
    RecipRank,
    Recall,
    PairwiseAccuracy,
    Hits,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Ndcg,
        Metric::Map,
        Metric::RecipRank,
        Metric::Recall,
        Metric::PairwiseAccuracy,
        Metric::Hits,
    ];

    pub fn name(self, k: usize) -> String {
        match self {
            Metric::Ndcg => format!("ndcg@{k}"),
            Metric::Map => format!("map@{k}"),
            Metric::RecipRank => format!("recip_rank@{k}"),
            Metric::Recall => format!("recall@{k}"),
            Metric::PairwiseAccuracy => "pairwise_accuracy".to_string(),
            Metric::Hits => format!("hits@{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedItem {
    pub pin_id: String,
    pub probabilities: [f64; N_TASKS],
    pub score: f64,
    pub labels: [bool; N_TASKS],
}

/// Candidates of one request in ranked order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedFeed {
    pub request_id: String,
    pub items: Vec<FeedItem>,
}

impl RankedFeed {
    pub fn labels(&self, task: TaskId) -> Vec<bool> {
        self.items.iter().map(|i| i.labels[task.index()]).collect()
    }
}

/// Scores and ranks every request of a dataset.
pub fn rank_dataset(params: &ModelParams, u: &TaskWeights, dataset: &Dataset) -> Result<Vec<RankedFeed>> {
    dataset
        .requests()
        .par_iter()
        .map(|rows| {
            let candidates: Vec<Candidate<'_>> = rows
                .iter()
                .map(|r| Candidate {
                    pin_id: &r.candidate_pin_id,
                    features: &r.features,
                })
                .collect();
            let ranked = ranker::rank(params, u, &candidates)?;
            let items = ranked
                .into_iter()
                .map(|rc| {
                    let row = rows
                        .iter()
                        .find(|r| r.candidate_pin_id == rc.pin_id)
                        .expect("ranked candidate comes from this request");
                    FeedItem {
                        labels: row.labels,
                        pin_id: rc.pin_id,
                        probabilities: rc.probabilities,
                        score: rc.score,
                    }
                })
                .collect();
            Ok(RankedFeed {
                request_id: rows[0].request_id.clone(),
                items,
            })
        })
        .collect()
}

/// Per-request metric values in [`Metric::ALL`] order; `None` if undefined.
pub fn request_metrics(labels: &[bool], k: usize) -> [Option<f64>; 6] {
    let positives = labels.iter().filter(|&&y| y).count();
    let negatives = labels.len() - positives;
    let top = &labels[..k.min(labels.len())];
    let hits = if top.iter().any(|&y| y) { 1.0 } else { 0.0 };
    if positives == 0 {
        return [None, None, None, None, None, Some(hits)];
    }

    let mut dcg = 0.0;
    let mut precision_sum = 0.0;
    let mut found = 0usize;
    let mut first_rank = None;
    for (i, &y) in top.iter().enumerate() {
        if y {
            found += 1;
            dcg += 1.0 / ((i + 2) as f64).log2();
            precision_sum += found as f64 / (i + 1) as f64;
            first_rank.get_or_insert(i + 1);
        }
    }
    let ideal: f64 = (0..positives.min(k)).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    let ndcg = dcg / ideal;
    let map = precision_sum / positives.min(k) as f64;
    let rr = first_rank.map_or(0.0, |r| 1.0 / r as f64);
    let recall = found as f64 / positives as f64;

    let pairwise = (negatives > 0).then(|| {
        let mut negatives_below = negatives;
        let mut concordant = 0usize;
        for &y in labels {
            if y {
                concordant += negatives_below;
            } else {
                negatives_below -= 1;
            }
        }
        concordant as f64 / (positives * negatives) as f64
    });
    [
        Some(ndcg),
        Some(map),
        Some(rr),
        Some(recall.min(1.0)),
        pairwise,
        Some(hits),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue {
    /// Mean over requests where the metric is defined; `None` if none are.
    pub value: Option<f64>,
    pub n_skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub k: usize,
    pub n_requests: usize,
    /// Indexed by task, then by [`Metric::ALL`] position.
    pub metrics: [[MetricValue; 6]; N_TASKS],
}

impl EvalResult {
    pub fn get(&self, task: TaskId, metric: Metric) -> MetricValue {
        let m = Metric::ALL.iter().position(|&x| x == metric).expect("known metric");
        self.metrics[task.index()][m]
    }

    /// Defined value of a metric, 0 if every request was skipped.
    pub fn value(&self, task: TaskId, metric: Metric) -> f64 {
        self.get(task, metric).value.unwrap_or(0.0)
    }
}

pub fn eval_feed(feeds: &[RankedFeed], k: usize) -> Result<EvalResult> {
    if feeds.is_empty() {
        return Err(Error::InvalidInput("no feeds to evaluate".into()));
    }
    if k < 1 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let served: Vec<&RankedFeed> = feeds.iter().filter(|f| !f.items.is_empty()).collect();
    let per_request: Vec<[[Option<f64>; 6]; N_TASKS]> = served
        .par_iter()
        .map(|feed| TaskId::ALL.map(|task| request_metrics(&feed.labels(task), k)))
        .collect();
    let mut metrics = [[MetricValue {
        value: None,
        n_skipped: 0,
    }; 6]; N_TASKS];
    for t in 0..N_TASKS {
        for m in 0..6 {
            let mut sum = 0.0;
            let mut n = 0usize;
            for r in &per_request {
                if let Some(v) = r[t][m] {
                    sum += v;
                    n += 1;
                }
            }
            metrics[t][m] = MetricValue {
                value: (n > 0).then(|| sum / n as f64),
                n_skipped: per_request.len() - n,
            };
        }
    }
    Ok(EvalResult {
        k,
        n_requests: served.len(),
        metrics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lift {
    Percent(f64),
    Undefined,
}

impl std::fmt::Display for Lift {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Lift::Percent(p) => write!(f, "{p:.6}"),
            Lift::Undefined => f.write_str("undefined"),
        }
    }
}

pub fn lift_value(a: Option<f64>, b: Option<f64>) -> Lift {
    match (a, b) {
        (Some(a), Some(b)) if b != 0.0 => Lift::Percent(100.0 * (a - b) / b),
        _ => Lift::Undefined,
    }
}

/// Percentage lift of `a` over `b` for every task and metric.
pub fn lift(a: &EvalResult, b: &EvalResult) -> Result<[[Lift; 6]; N_TASKS]> {
    if a.k != b.k {
        return Err(Error::InvalidInput(format!(
            "cannot compare k = {} with k = {}",
            a.k, b.k
        )));
    }
    let mut out = [[Lift::Undefined; 6]; N_TASKS];
    for t in 0..N_TASKS {
        for m in 0..6 {
            out[t][m] = lift_value(a.metrics[t][m].value, b.metrics[t][m].value);
        }
    }
    Ok(out)
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.12}"))
}

pub const REPORT_HEADER: &str = "task,metric,value,n_requests,n_skipped";

pub fn write_report<W: Write>(result: &EvalResult, mut out: W) -> Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for task in TaskId::ALL {
        for (m, metric) in Metric::ALL.iter().enumerate() {
            let v = result.metrics[task.index()][m];
            writeln!(
                out,
                "{task},{},{},{},{}",
                metric.name(result.k),
                fmt_value(v.value),
                result.n_requests,
                v.n_skipped
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Report of `a` with its lift over `b` in a trailing `lift_pct` column.
pub fn write_lift_report<W: Write>(a: &EvalResult, b: &EvalResult, mut out: W) -> Result<()> {
    let lifts = lift(a, b)?;
    writeln!(out, "{REPORT_HEADER},lift_pct")?;
    for task in TaskId::ALL {
        for (m, metric) in Metric::ALL.iter().enumerate() {
            let v = a.metrics[task.index()][m];
            writeln!(
                out,
                "{task},{},{},{},{},{}",
                metric.name(a.k),
                fmt_value(v.value),
                a.n_requests,
                v.n_skipped,
                lifts[task.index()][m]
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_report_file(result: &EvalResult, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    write_report(result, std::io::BufWriter::new(file))
}

pub fn write_lift_report_file(a: &EvalResult, b: &EvalResult, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    write_lift_report(a, b, std::io::BufWriter::new(file))
}

/// Area under the ROC curve with ties counted as one half. `None` unless
/// both classes are present.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let positives = pairs.iter().filter(|p| p.1).count();
    let negatives = pairs.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    // midranks over tied scores
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            j += 1;
        }
        let midrank = (i + j + 1) as f64 / 2.0;
        rank_sum += midrank * pairs[i..j].iter().filter(|p| p.1).count() as f64;
        i = j;
    }
    let u = rank_sum - (positives * (positives + 1)) as f64 / 2.0;
    Some(u / (positives * negatives) as f64)
}
