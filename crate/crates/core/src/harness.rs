//! Training loop, size and containment evaluation, cross-wiring runs and
//! metrics output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::datagen::{DatagenError, ObjectPool, PairSample, PairSampler, SamplerConfig};
use crate::model::{Head, Model, ModelConfig, ModelError, Task};
use crate::multiset::{
    intersection_size_from_reps, relation_from_sizes, symdiff_from_intersection,
    symdiff_size_from_reps, ContainmentRelation, LabelVector,
};
use crate::nn::{AdamConfig, NnError};
use crate::transform::{TransformError, UniverseTransformation};

/// Iterations averaged into one loss-curve point.
pub const LOSS_WINDOW: usize = 100;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss {loss} at iteration {iter} (|A| = {size_a}, |B| = {size_b})")]
    NonFiniteLoss {
        iter: usize,
        loss: f64,
        size_a: f64,
        size_b: f64,
    },
    #[error("cross-wiring needs a fixed head, got {0}")]
    CrossWireHead(Head),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DatagenError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("metrics: {0}")]
    Metrics(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub sampler: SamplerConfig,
    pub iterations: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Seeds parameter initialization; the sampler carries its own seed.
    pub seed: u64,
    #[serde(default)]
    pub checkpoint_path: Option<PathBuf>,
}

impl TrainConfig {
    /// Adam defaults: lr 5e-5, β₁ 0.9, β₂ 0.999, ε 1e-8.
    pub fn new(model: ModelConfig, sampler: SamplerConfig, iterations: usize, seed: u64) -> Self {
        let adam = AdamConfig::default();
        Self {
            model,
            sampler,
            iterations,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            seed,
            checkpoint_path: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        self.model.validate()?;
        self.sampler.validate()?;
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    /// Hex SHA-256 of the JSON encoding, ignoring the checkpoint path.
    pub fn config_hash(&self) -> String {
        let key = TrainConfig {
            checkpoint_path: None,
            ..self.clone()
        };
        let json = serde_json::to_vec(&key).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricEvent {
    TrainStep,
    Eval,
}

/// One JSON Lines record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub event: MetricEvent,
    pub iter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae_symdiff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae_intersection: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub containment_accuracy: Option<f64>,
    /// Row-major, true relation by row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Vec<u64>>,
    pub config_hash: String,
    pub seed: u64,
}

impl MetricRecord {
    pub fn eval(report: &EvalReport, iter: usize, config_hash: String, seed: u64) -> Self {
        Self {
            event: MetricEvent::Eval,
            iter,
            loss: None,
            mae_symdiff: Some(report.mae_symdiff),
            mae_intersection: Some(report.mae_intersection),
            containment_accuracy: report.containment_accuracy,
            confusion: report
                .confusion
                .map(|c| c.iter().flatten().copied().collect()),
            config_hash,
            seed,
        }
    }
}

pub trait MetricSink {
    fn record(&mut self, r: &MetricRecord) -> Result<(), HarnessError>;
}

impl MetricSink for Vec<MetricRecord> {
    fn record(&mut self, r: &MetricRecord) -> Result<(), HarnessError> {
        self.push(r.clone());
        Ok(())
    }
}

/// Writes one JSON object per line.
pub struct MetricsWriter<W: Write> {
    out: W,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl MetricsWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self, HarnessError> {
        Ok(Self::new(BufWriter::new(File::create(path)?)))
    }
}

impl<W: Write> MetricSink for MetricsWriter<W> {
    fn record(&mut self, r: &MetricRecord) -> Result<(), HarnessError> {
        serde_json::to_writer(&mut self.out, r)
            .map_err(|e| HarnessError::Metrics(e.to_string()))?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    /// Iterations completed when the window closed.
    pub iter: usize,
    pub mean_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub loss_curve: Vec<LossPoint>,
}

impl TrainOutcome {
    pub fn final_mean_loss(&self) -> Option<f64> {
        self.loss_curve.last().map(|p| p.mean_loss)
    }
}

/// One Adam step per freshly sampled pair, `cfg.iterations` times.
pub fn train(
    cfg: &TrainConfig,
    pool: &ObjectPool,
    sink: &mut dyn MetricSink,
) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    if pool.dim() != cfg.model.input_dim {
        return Err(ModelError::InputDim {
            expected: cfg.model.input_dim,
            got: pool.dim(),
        }
        .into());
    }
    let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
    let mut sampler = PairSampler::new(pool, cfg.sampler)?;
    let adam = cfg.adam();
    let hash = cfg.config_hash();
    let mut curve = Vec::new();
    let mut window = 0.0;
    let mut in_window = 0;
    for iter in 1..=cfg.iterations {
        let pair = sampler.next_pair()?;
        let out = match model.loss(&pair) {
            Ok(out) => out,
            Err(ModelError::NonFiniteLoss(loss)) => {
                return Err(HarnessError::NonFiniteLoss {
                    iter,
                    loss,
                    size_a: pair.size_a(),
                    size_b: pair.size_b(),
                })
            }
            Err(e) => return Err(e.into()),
        };
        model.params_mut().adam_step(&out.grads, &adam)?;
        window += out.loss;
        in_window += 1;
        if in_window == LOSS_WINDOW || iter == cfg.iterations {
            let point = LossPoint {
                iter,
                mean_loss: window / in_window as f64,
            };
            curve.push(point);
            sink.record(&MetricRecord {
                event: MetricEvent::TrainStep,
                iter,
                loss: Some(point.mean_loss),
                mae_symdiff: None,
                mae_intersection: None,
                containment_accuracy: None,
                confusion: None,
                config_hash: hash.clone(),
                seed: cfg.seed,
            })?;
            window = 0.0;
            in_window = 0;
        }
    }
    if let Some(path) = &cfg.checkpoint_path {
        model.save(path)?;
    }
    Ok(TrainOutcome {
        model,
        loss_curve: curve,
    })
}

/// Anything that predicts a size for a pair.
pub trait PairPredictor: Sync {
    fn task(&self) -> Task;
    fn predict_pair(&self, pair: &PairSample) -> Result<f64, HarnessError>;
}

impl PairPredictor for Model {
    fn task(&self) -> Task {
        self.config().task
    }

    fn predict_pair(&self, pair: &PairSample) -> Result<f64, HarnessError> {
        Ok(self.predict_sets(&pair.a, &pair.b)?)
    }
}

/// Predicts from the exact natural representations of the pushforward.
pub struct OraclePredictor<'a> {
    pub transform: &'a UniverseTransformation,
    pub task: Task,
}

impl PairPredictor for OraclePredictor<'_> {
    fn task(&self) -> Task {
        self.task
    }

    fn predict_pair(&self, pair: &PairSample) -> Result<f64, HarnessError> {
        let ra: LabelVector = self.transform.pushforward(&pair.a_ids)?;
        let rb: LabelVector = self.transform.pushforward(&pair.b_ids)?;
        let value = match self.task {
            Task::SymDiff => symdiff_size_from_reps(&ra, &rb),
            Task::Intersection => intersection_size_from_reps(&ra, &rb),
        };
        Ok(value.map_err(TransformError::from)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_pairs: usize,
    pub size_range: (usize, usize),
    pub mae_symdiff: f64,
    pub mae_intersection: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub containment_accuracy: Option<f64>,
    /// `confusion[true][predicted]`, indexed by [`ContainmentRelation::index`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<[[u64; 4]; 4]>,
}

impl EvalReport {
    pub fn mae(&self, task: Task) -> f64 {
        match task {
            Task::SymDiff => self.mae_symdiff,
            Task::Intersection => self.mae_intersection,
        }
    }
}

/// Predicted `(d̂, î)` for a pair, converting between the two via `d = |A| + |B| − 2i`.
fn predicted_sizes(
    pred: &dyn PairPredictor,
    pair: &PairSample,
) -> Result<(f64, f64), HarnessError> {
    let p = pred.predict_pair(pair)?;
    let (a, b) = (pair.size_a(), pair.size_b());
    Ok(match pred.task() {
        Task::SymDiff => (p, (a + b - p) / 2.0),
        Task::Intersection => (symdiff_from_intersection(a, b, p), p),
    })
}

fn evaluate_pairs(
    pred: &dyn PairPredictor,
    pairs: &[PairSample],
    size_range: (usize, usize),
    tau: Option<f64>,
) -> Result<EvalReport, HarnessError> {
    let predictions = pairs
        .par_iter()
        .map(|p| predicted_sizes(pred, p))
        .collect::<Result<Vec<_>, _>>()?;
    let (mut err_d, mut err_i) = (0.0, 0.0);
    let mut confusion = [[0u64; 4]; 4];
    for (pair, &(d_hat, i_hat)) in pairs.iter().zip(&predictions) {
        err_d += (d_hat - pair.target_symdiff).abs();
        err_i += (i_hat - pair.target_intersection).abs();
        if let Some(tau) = tau {
            let r = relation_from_sizes(pair.size_a(), pair.size_b(), d_hat, tau);
            confusion[pair.relation.index()][r.index()] += 1;
        }
    }
    let n = pairs.len().max(1) as f64;
    let correct: u64 = (0..4).map(|i| confusion[i][i]).sum();
    Ok(EvalReport {
        n_pairs: pairs.len(),
        size_range,
        mae_symdiff: err_d / n,
        mae_intersection: err_i / n,
        tau,
        containment_accuracy: tau.map(|_| correct as f64 / n),
        confusion: tau.map(|_| confusion),
    })
}

/// Size MAEs over `n_pairs` uniform pairs from `pool`.
pub fn evaluate_sizes(
    pred: &dyn PairPredictor,
    pool: &ObjectPool,
    size_range: (usize, usize),
    n_pairs: usize,
    seed: u64,
) -> Result<EvalReport, HarnessError> {
    let cfg = SamplerConfig::uniform(size_range.0, size_range.1, seed);
    let pairs = PairSampler::new(pool, cfg)?.take_pairs(n_pairs)?;
    evaluate_pairs(pred, &pairs, size_range, None)
}

/// 4-way containment accuracy over `n_pairs` relation-balanced pairs.
pub fn evaluate_containment(
    pred: &dyn PairPredictor,
    pool: &ObjectPool,
    size_range: (usize, usize),
    n_pairs: usize,
    tau: f64,
    seed: u64,
) -> Result<EvalReport, HarnessError> {
    let cfg = SamplerConfig::balanced(size_range.0, size_range.1, seed);
    let pairs = PairSampler::new(pool, cfg)?.take_pairs(n_pairs)?;
    evaluate_pairs(pred, &pairs, size_range, Some(tau))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossWireReport {
    pub task: Task,
    pub matched_head: Head,
    pub cross_wired_head: Head,
    pub matched_mae: f64,
    pub cross_wired_mae: f64,
    pub ratio: f64,
}

/// Trains the matched model and one with the swapped head on the same seeds
/// and pair stream, then compares their MAE on the configured task.
pub fn run_cross_wire(
    cfg: &TrainConfig,
    train_pool: &ObjectPool,
    eval_pool: &ObjectPool,
    size_range: (usize, usize),
    n_pairs: usize,
    eval_seed: u64,
) -> Result<CrossWireReport, HarnessError> {
    if cfg.model.head == Head::LearnedOp {
        return Err(HarnessError::CrossWireHead(Head::LearnedOp));
    }
    let mut matched = cfg.clone();
    matched.model.head = cfg.model.task.matched_head();
    matched.checkpoint_path = None;
    let mut crossed = matched.clone();
    crossed.model = matched.model.cross_wired()?;

    let run = |c: &TrainConfig| -> Result<f64, HarnessError> {
        let out = train(c, train_pool, &mut Vec::new())?;
        let report = evaluate_sizes(&out.model, eval_pool, size_range, n_pairs, eval_seed)?;
        Ok(report.mae(c.model.task))
    };
    let (m, c) = rayon::join(|| run(&matched), || run(&crossed));
    let (matched_mae, cross_wired_mae) = (m?, c?);
    Ok(CrossWireReport {
        task: cfg.model.task,
        matched_head: matched.model.head,
        cross_wired_head: crossed.model.head,
        matched_mae,
        cross_wired_mae,
        ratio: cross_wired_mae / matched_mae,
    })
}

/// Per-object embeddings, in pool order.
pub fn embed_pool(model: &Model, pool: &ObjectPool) -> Result<Vec<Vec<f64>>, HarnessError> {
    (0..pool.len())
        .into_par_iter()
        .map(|i| Ok(model.embed_object(pool.features(i))?))
        .collect()
}

/// CSV `id,label,e1..e_k̂`, one row per pool object.
pub fn dump_representations(
    model: &Model,
    pool: &ObjectPool,
    out_path: &Path,
) -> Result<(), HarnessError> {
    let rows = embed_pool(model, pool)?;
    let mut w = BufWriter::new(File::create(out_path)?);
    let width = rows.first().map_or(0, Vec::len);
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((1..=width).map(|j| format!("e{j}")));
    writeln!(w, "{}", header.join(","))?;
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(
            w,
            "{},{},{}",
            pool.ids()[i],
            pool.labels()[i],
            cells.join(",")
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Fraction of pairs classified correctly per true relation, indexed like
/// [`ContainmentRelation::ALL`].
pub fn per_class_accuracy(confusion: &[[u64; 4]; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for r in ContainmentRelation::ALL {
        let i = r.index();
        let total: u64 = confusion[i].iter().sum();
        out[i] = if total == 0 {
            0.0
        } else {
            confusion[i][i] as f64 / total as f64
        };
    }
    out
}
