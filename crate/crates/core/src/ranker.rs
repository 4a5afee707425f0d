//! Multi-task ranker: a shared perceptron trunk with rectifier activations
//! feeding five independent sigmoid heads, one per [`TaskId`].
//!
//! The training loss of one example is `sum_i w_i * BCE(p_i, c_i)` over all
//! five tasks, averaged over the batch. Candidates are ranked by the utility
//! score `sum_i u_i * p_i`. With `w` and `u` zero on the revisit task both
//! reduce exactly to the four-task engagement model.

use std::cmp::Ordering;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::dataset::{Dataset, TrainingExample};
use crate::error::{Error, Result};
use crate::event::TaskId;

pub const N_TASKS: usize = TaskId::COUNT;

/// Probability clamp applied before taking logs.
pub const PROB_EPS: f64 = 1e-12;

/// Revisit utility relative to the repin utility.
pub const DEFAULT_REVISIT_UTILITY_RATIO: f64 = 1.27;

pub const DEFAULT_HIDDEN: [usize; 2] = [64, 32];

pub type TaskWeights = [f64; N_TASKS];

pub fn default_loss_weights() -> TaskWeights {
    [1.0; N_TASKS]
}

/// Engagement utilities with the revisit utility set to `ratio * u(Repin)`.
pub fn utilities_with_ratio(ratio: f64) -> TaskWeights {
    let mut u = [1.0, 2.0, 1.0, 1.0, 0.0];
    u[TaskId::RepinAndRevisit.index()] = ratio * u[TaskId::Repin.index()];
    u
}

pub fn default_utilities() -> TaskWeights {
    utilities_with_ratio(DEFAULT_REVISIT_UTILITY_RATIO)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer, weights stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseLayer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn he_uniform<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / inputs.max(1) as f64).sqrt();
        DenseLayer {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.random_range(-limit..limit)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs.max(1)).zip(&self.bias))
        {
            let mut acc = *b;
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            *o = acc;
        }
        if self.inputs == 0 {
            out.copy_from_slice(&self.bias);
        }
    }
}

/// Trunk and head weights plus per-task loss and utility weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub trunk: Vec<DenseLayer>,
    /// Five rows, one per task, over the trunk output.
    pub heads: DenseLayer,
    pub loss_weights: TaskWeights,
    pub utility_weights: TaskWeights,
}

impl ModelParams {
    fn shaped(input_dim: usize, hidden: &[usize], mut layer: impl FnMut(usize, usize) -> DenseLayer) -> Self {
        let mut trunk = Vec::with_capacity(hidden.len());
        let mut width = input_dim;
        for &h in hidden {
            trunk.push(layer(width, h));
            width = h;
        }
        ModelParams {
            trunk,
            heads: layer(width, N_TASKS),
            loss_weights: default_loss_weights(),
            utility_weights: default_utilities(),
        }
    }

    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Self {
        Self::shaped(input_dim, hidden, DenseLayer::zeros)
    }

    /// He-uniform weights, zero biases.
    pub fn init(input_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::shaped(input_dim, hidden, |i, o| DenseLayer::he_uniform(i, o, &mut rng))
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.first().unwrap_or(&self.heads).inputs
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.trunk.iter().map(|l| l.outputs));
        sizes.push(self.heads.outputs);
        sizes
    }

    fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.trunk.iter().chain(std::iter::once(&self.heads))
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.trunk.iter_mut().chain(std::iter::once(&mut self.heads))
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(DenseLayer::param_count).sum()
    }

    /// All trainable values: per layer, weights then bias; trunk first.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in self.layers() {
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.bias);
        }
        flat
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        let mut at = 0;
        for layer in self.layers_mut() {
            let n = layer.weights.len();
            layer.weights.copy_from_slice(&flat[at..at + n]);
            at += n;
            let n = layer.bias.len();
            layer.bias.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::InvalidInput(format!(
                "feature vector has {} values, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("feature {i} is not finite")));
        }
        Ok(())
    }
}

/// Per-layer activations of one forward pass, reused across examples.
struct Workspace {
    /// `pre[l]` holds the pre-activation of trunk layer `l`.
    pre: Vec<Vec<f64>>,
    /// `act[0]` is the input; `act[l + 1]` the output of trunk layer `l`.
    act: Vec<Vec<f64>>,
    logits: [f64; N_TASKS],
    delta: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(params: &ModelParams) -> Self {
        let mut act = vec![vec![0.0; params.input_dim()]];
        act.extend(params.trunk.iter().map(|l| vec![0.0; l.outputs]));
        Workspace {
            pre: params.trunk.iter().map(|l| vec![0.0; l.outputs]).collect(),
            delta: params.trunk.iter().map(|l| vec![0.0; l.outputs]).collect(),
            act,
            logits: [0.0; N_TASKS],
        }
    }

    fn forward(&mut self, params: &ModelParams, x: &[f64]) -> [f64; N_TASKS] {
        self.act[0].copy_from_slice(x);
        for (l, layer) in params.trunk.iter().enumerate() {
            layer.apply(&self.act[l], &mut self.pre[l]);
            for (a, &z) in self.act[l + 1].iter_mut().zip(&self.pre[l]) {
                *a = z.max(0.0);
            }
        }
        let top = self.act.last().expect("input activation");
        params.heads.apply(top, &mut self.logits);
        self.logits.map(sigmoid)
    }
}

/// Head probabilities for one feature vector.
pub fn forward(params: &ModelParams, x: &[f64]) -> Result<[f64; N_TASKS]> {
    params.check_input(x)?;
    Ok(Workspace::new(params).forward(params, x))
}

fn bce(p: f64, label: bool) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean over the batch of the weighted per-task cross entropy.
pub fn loss(params: &ModelParams, batch: &[TrainingExample], w: &TaskWeights) -> Result<f64> {
    let refs: Vec<&TrainingExample> = batch.iter().collect();
    batch_loss(params, &refs, w, None)
}

/// Loss and its gradient in [`ModelParams::flatten`] layout.
pub fn loss_and_gradient(params: &ModelParams, batch: &[&TrainingExample], w: &TaskWeights) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; params.param_count()];
    let loss = batch_loss(params, batch, w, Some(&mut grad))?;
    Ok((loss, grad))
}

fn check_weights(w: &TaskWeights) -> Result<()> {
    if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::InvalidInput(format!("loss weights must be non-negative: {w:?}")));
    }
    Ok(())
}

fn batch_loss(
    params: &ModelParams,
    batch: &[&TrainingExample],
    w: &TaskWeights,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    check_weights(w)?;
    let scale = 1.0 / batch.len() as f64;
    let mut ws = Workspace::new(params);
    let mut total = 0.0;
    // offsets of each layer's weights in the flat layout
    let mut offsets = Vec::new();
    let mut at = 0;
    for layer in params.layers() {
        offsets.push(at);
        at += layer.param_count();
    }
    for ex in batch {
        params.check_input(&ex.features)?;
        let p = ws.forward(params, &ex.features);
        let mut example_loss = 0.0;
        for t in 0..N_TASKS {
            example_loss += w[t] * bce(p[t], ex.labels[t]);
        }
        total += example_loss;

        let Some(grad) = grad.as_deref_mut() else { continue };
        let mut d_logit = [0.0; N_TASKS];
        for t in 0..N_TASKS {
            let inside = p[t] > PROB_EPS && p[t] < 1.0 - PROB_EPS;
            if inside {
                d_logit[t] = scale * w[t] * (p[t] - f64::from(u8::from(ex.labels[t])));
            }
        }
        let top = ws.act.last().expect("input activation");
        let heads = &params.heads;
        let base = offsets[params.trunk.len()];
        let bias_base = base + heads.weights.len();
        let hidden = heads.inputs;
        for t in 0..N_TASKS {
            let row = &mut grad[base + t * hidden..base + (t + 1) * hidden];
            for (g, &a) in row.iter_mut().zip(top) {
                *g += d_logit[t] * a;
            }
            grad[bias_base + t] += d_logit[t];
        }
        // back through the trunk
        let n_trunk = params.trunk.len();
        if n_trunk == 0 {
            continue;
        }
        let last = n_trunk - 1;
        for j in 0..hidden {
            let mut d = 0.0;
            for t in 0..N_TASKS {
                d += heads.weights[t * hidden + j] * d_logit[t];
            }
            ws.delta[last][j] = if ws.pre[last][j] > 0.0 { d } else { 0.0 };
        }
        for l in (0..n_trunk).rev() {
            let layer = &params.trunk[l];
            let base = offsets[l];
            let bias_base = base + layer.weights.len();
            for o in 0..layer.outputs {
                let d = ws.delta[l][o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[base + o * layer.inputs..base + (o + 1) * layer.inputs];
                for (g, &a) in row.iter_mut().zip(&ws.act[l]) {
                    *g += d * a;
                }
                grad[bias_base + o] += d;
            }
            if l > 0 {
                let (below, above) = ws.delta.split_at_mut(l);
                let lower = &mut below[l - 1];
                for (i, slot) in lower.iter_mut().enumerate() {
                    let mut d = 0.0;
                    for o in 0..layer.outputs {
                        d += layer.weights[o * layer.inputs + i] * above[0][o];
                    }
                    *slot = if ws.pre[l - 1][i] > 0.0 { d } else { 0.0 };
                }
            }
        }
    }
    Ok(total * scale)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub hidden: Vec<usize>,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 1024,
            epochs: 1,
            momentum: 0.9,
            hidden: DEFAULT_HIDDEN.to_vec(),
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Sequential mini-batch SGD with momentum (`v = mu v + g; theta -= lr v`).
#[derive(Debug, Clone)]
pub struct Trainer {
    pub params: ModelParams,
    velocity: Vec<f64>,
    learning_rate: f64,
    momentum: f64,
}

impl Trainer {
    pub fn new(params: ModelParams, config: &TrainConfig) -> Self {
        Trainer {
            velocity: vec![0.0; params.param_count()],
            params,
            learning_rate: config.learning_rate,
            momentum: config.momentum,
        }
    }

    /// One update on `batch`; returns the loss before the update.
    pub fn step(&mut self, batch: &[&TrainingExample]) -> Result<f64> {
        let w = self.params.loss_weights;
        let (loss, grad) = loss_and_gradient(&self.params, batch, &w)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite loss {loss} or gradient")));
        }
        let mut flat = self.params.flatten();
        for ((theta, v), g) in flat.iter_mut().zip(&mut self.velocity).zip(&grad) {
            *v = self.momentum * *v + g;
            *theta -= self.learning_rate * *v;
        }
        self.params.set_flat(&flat);
        Ok(loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean batch loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains a fresh model. Deterministic given `config.rng_seed`: the
/// initialization and every epoch's shuffle derive from it.
pub fn train(
    dataset: &Dataset,
    config: &TrainConfig,
    loss_weights: &TaskWeights,
    utility_weights: &TaskWeights,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_weights(loss_weights)?;
    if dataset.feature_dim == 0 {
        return Err(Error::InvalidInput("dataset has no feature columns".into()));
    }
    if dataset.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let mut params = ModelParams::init(dataset.feature_dim, &config.hidden, config.rng_seed);
    params.loss_weights = *loss_weights;
    params.utility_weights = *utility_weights;
    let mut trainer = Trainer::new(params, config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ 0x005e_ed0f_5be1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut steps = 0;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&TrainingExample> = chunk.iter().map(|&i| &dataset.examples[i]).collect();
            let loss = trainer.step(&batch).map_err(|e| match e {
                Error::Numerical(msg) => Error::Numerical(format!("epoch {epoch}, step {step}: {msg}")),
                other => other,
            })?;
            sum += loss;
            steps += 1;
        }
        epoch_losses.push(sum / steps as f64);
    }
    Ok(TrainOutcome {
        params: trainer.params,
        epoch_losses,
    })
}

/// Utility-weighted score `sum_i u_i p_i`, accumulated in task order.
pub fn score(probabilities: &[f64; N_TASKS], u: &TaskWeights) -> f64 {
    let mut s = 0.0;
    for t in 0..N_TASKS {
        s += u[t] * probabilities[t];
    }
    s
}

#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub pin_id: &'a str,
    pub features: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidate {
    pub pin_id: String,
    pub probabilities: [f64; N_TASKS],
    pub score: f64,
}

/// Orders by descending score, then ascending pin id.
pub fn ranking_order(a_score: f64, a_pin: &str, b_score: f64, b_pin: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_pin.cmp(b_pin))
}

pub fn rank(params: &ModelParams, u: &TaskWeights, candidates: &[Candidate<'_>]) -> Result<Vec<RankedCandidate>> {
    let mut ws = Workspace::new(params);
    let mut ranked = candidates
        .iter()
        .map(|c| {
            params.check_input(c.features)?;
            let probabilities = ws.forward(params, c.features);
            Ok(RankedCandidate {
                pin_id: c.pin_id.to_string(),
                score: score(&probabilities, u),
                probabilities,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| ranking_order(a.score, &a.pin_id, b.score, &b.pin_id));
    Ok(ranked)
}

/// Writes the model file: layer sizes on line one, then for each layer one
/// line per output row of weights followed by a bias line, then the
/// `[weights]` section with loss and utility weights. Values carry 17
/// significant digits, so a written model reads back bit-for-bit.
pub fn write_model<W: Write>(params: &ModelParams, mut out: W) -> Result<()> {
    let sizes: Vec<String> = params.layer_sizes().iter().map(usize::to_string).collect();
    writeln!(out, "{}", sizes.join(" "))?;
    let write_row = |out: &mut W, row: &[f64]| -> std::io::Result<()> {
        for (i, &v) in row.iter().enumerate() {
            if i > 0 {
                out.write_all(b" ")?;
            }
            csvio::write_real17(out, v)?;
        }
        writeln!(out)
    };
    for layer in params.layers() {
        for row in layer.weights.chunks(layer.inputs.max(1)).take(layer.outputs) {
            if layer.inputs == 0 {
                writeln!(out)?;
            } else {
                write_row(&mut out, row)?;
            }
        }
        write_row(&mut out, &layer.bias)?;
    }
    writeln!(out, "[weights]")?;
    write!(out, "loss ")?;
    write_row(&mut out, &params.loss_weights)?;
    write!(out, "utility ")?;
    write_row(&mut out, &params.utility_weights)?;
    out.flush()?;
    Ok(())
}

pub fn read_model<R: BufRead>(reader: R) -> Result<ModelParams> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, l)) => Ok((n, l?)),
            None => Err(Error::parse(0, what, "unexpected end of model file")),
        }
    };
    let parse_row = |n: usize, line: &str, expected: usize, what: &str| -> Result<Vec<f64>> {
        let row = line
            .split_whitespace()
            .map(|raw| csvio::parse_num::<f64>(n, what, raw))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != expected {
            return Err(Error::parse(
                n,
                what,
                format!("expected {expected} values, found {}", row.len()),
            ));
        }
        Ok(row)
    };
    let (n, first) = next("layer sizes")?;
    let sizes = first
        .split_whitespace()
        .map(|raw| csvio::parse_num::<usize>(n, "layer sizes", raw))
        .collect::<Result<Vec<_>>>()?;
    if sizes.len() < 2 || *sizes.last().expect("non-empty") != N_TASKS {
        return Err(Error::parse(
            n,
            "layer sizes",
            format!("need input size and {N_TASKS} heads"),
        ));
    }
    let mut params = ModelParams::zeros(sizes[0], &sizes[1..sizes.len() - 1]);
    for layer in params.layers_mut() {
        let mut weights = Vec::with_capacity(layer.weights.len());
        for _ in 0..layer.outputs {
            let (n, line) = next("weights")?;
            weights.extend(parse_row(n, &line, layer.inputs, "weights")?);
        }
        layer.weights = weights;
        let (n, line) = next("bias")?;
        layer.bias = parse_row(n, &line, layer.outputs, "bias")?;
    }
    let (n, line) = next("[weights]")?;
    if line.trim() != "[weights]" {
        return Err(Error::parse(n, "[weights]", "missing weights section"));
    }
    for (prefix, target) in [
        ("loss", &mut params.loss_weights),
        ("utility", &mut params.utility_weights),
    ] {
        let (n, line) = next(prefix)?;
        let rest = line
            .strip_prefix(prefix)
            .ok_or_else(|| Error::parse(n, prefix, "missing entry"))?;
        target.copy_from_slice(&parse_row(n, rest, N_TASKS, prefix)?);
    }
    if params.flatten().iter().any(|v| !v.is_finite()) {
        return Err(Error::parse(0, "weights", "non-finite parameter"));
    }
    Ok(params)
}

pub fn write_model_file(params: &ModelParams, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    write_model(params, std::io::BufWriter::new(file))
}

pub fn read_model_file(path: &Path) -> Result<ModelParams> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    read_model(std::io::BufReader::new(file))
}
