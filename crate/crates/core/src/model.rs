//! The six model variants: {simplex, unrestricted, DeepSets} multiset
//! representations, each paired with either a fixed operation head or a
//! learned one.
//!
//! * Simplex: `Ψ(A) = Σ_x m_A(x) · f(φ(x)) / ‖f(φ(x))‖₁` with `f` = softplus.
//! * Unrestricted: `Ψ(A) = Σ_x m_A(x) · φ(x)`.
//! * DeepSets: `Ψ(A) = ρ₁(Σ_x m_A(x) · φ(x))`.
//!
//! Fixed heads predict `‖Ψ(A) − Ψ(B)‖₁` or `‖min(Ψ(A), Ψ(B))‖₁`; the learned
//! head predicts `ρ₂(Ψ(A) + Ψ(B))`.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::PairSample;
use crate::nn::{self, NnError, ParameterStore, Tape, Tensor, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("input has dimension {got}, model expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("representation has dimension {got}, model expects {expected}")]
    RepresentationDim { expected: usize, got: usize },
    #[error("cannot cross-wire a model with a {0} head")]
    CrossWire(Head),
    #[error("non-finite loss {0}")]
    NonFiniteLoss(f64),
    #[error("checkpoint does not match config: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("checkpoint sidecar: {0}")]
    Sidecar(String),
}

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $s:literal),+ $(,)? }) => {
        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $s),+ }
            }
        }
        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($s => Ok($name::$variant),)+
                    other => Err(format!(
                        "unknown {} `{other}` (expected one of: {})",
                        stringify!($name).to_lowercase(),
                        [$($s),+].join(", ")
                    )),
                }
            }
        }
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "simplex")]
    Simplex,
    #[serde(rename = "unrestricted")]
    Unrestricted,
    #[serde(rename = "deepsets")]
    DeepSets,
}
string_enum!(Variant { Simplex => "simplex", Unrestricted => "unrestricted", DeepSets => "deepsets" });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Head {
    #[serde(rename = "symdiff-l1")]
    SymDiffL1,
    #[serde(rename = "intersection-min")]
    IntersectionMin,
    #[serde(rename = "learned-op")]
    LearnedOp,
}
string_enum!(Head { SymDiffL1 => "symdiff-l1", IntersectionMin => "intersection-min", LearnedOp => "learned-op" });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "symdiff")]
    SymDiff,
    #[serde(rename = "intersection")]
    Intersection,
}
string_enum!(Task { SymDiff => "symdiff", Intersection => "intersection" });

impl Task {
    /// The fixed head that computes this task's quantity exactly on natural
    /// representations.
    pub fn matched_head(self) -> Head {
        match self {
            Task::SymDiff => Head::SymDiffL1,
            Task::Intersection => Head::IntersectionMin,
        }
    }
}

pub const DEFAULT_FEATURIZER_HIDDEN: [usize; 2] = [64, 64];
pub const DEFAULT_RHO1_WIDTHS: [usize; 2] = [100, 100];
pub const DEFAULT_RHO2_HIDDEN: [usize; 1] = [100];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub head: Head,
    pub task: Task,
    pub input_dim: usize,
    /// Featurizer output size k̂.
    pub rep_dim: usize,
    /// Hidden layer widths of φ (ReLU between layers).
    pub featurizer_hidden: Vec<usize>,
    /// Layer output widths of ρ₁ (tanh between layers); DeepSets only.
    #[serde(default)]
    pub rho1_widths: Vec<usize>,
    /// Hidden widths of ρ₂ (tanh between layers, scalar output); learned head only.
    #[serde(default)]
    pub rho2_hidden: Vec<usize>,
}

impl ModelConfig {
    /// Default widths; ρ₁ and ρ₂ are only present when the variant/head uses them.
    pub fn new(variant: Variant, head: Head, task: Task, input_dim: usize, rep_dim: usize) -> Self {
        Self {
            variant,
            head,
            task,
            input_dim,
            rep_dim,
            featurizer_hidden: DEFAULT_FEATURIZER_HIDDEN.to_vec(),
            rho1_widths: if variant == Variant::DeepSets {
                DEFAULT_RHO1_WIDTHS.to_vec()
            } else {
                Vec::new()
            },
            rho2_hidden: if head == Head::LearnedOp {
                DEFAULT_RHO2_HIDDEN.to_vec()
            } else {
                Vec::new()
            },
        }
    }

    /// A config whose head matches `task`.
    pub fn matched(variant: Variant, task: Task, input_dim: usize, rep_dim: usize) -> Self {
        Self::new(variant, task.matched_head(), task, input_dim, rep_dim)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.input_dim == 0 {
            return bad("input_dim must be at least 1");
        }
        if self.rep_dim == 0 {
            return bad("rep_dim must be at least 1");
        }
        if self.featurizer_hidden.contains(&0)
            || self.rho1_widths.contains(&0)
            || self.rho2_hidden.contains(&0)
        {
            return bad("layer widths must be positive");
        }
        if self.variant == Variant::DeepSets && self.rho1_widths.is_empty() {
            return bad("the deepsets variant requires rho1 widths");
        }
        if self.variant != Variant::DeepSets && !self.rho1_widths.is_empty() {
            return bad("rho1 widths are only used by the deepsets variant");
        }
        if self.head == Head::LearnedOp && self.rho2_hidden.is_empty() {
            return bad("the learned-op head requires rho2 widths");
        }
        if self.head != Head::LearnedOp && !self.rho2_hidden.is_empty() {
            return bad("rho2 widths are only used by the learned-op head");
        }
        Ok(())
    }

    /// Dimension of `Ψ(A)`.
    pub fn representation_dim(&self) -> usize {
        match self.variant {
            Variant::DeepSets => *self.rho1_widths.last().unwrap_or(&self.rep_dim),
            _ => self.rep_dim,
        }
    }

    /// Same config with the fixed head swapped; the task is unchanged.
    pub fn cross_wired(&self) -> Result<Self, ModelError> {
        let head = match self.head {
            Head::SymDiffL1 => Head::IntersectionMin,
            Head::IntersectionMin => Head::SymDiffL1,
            Head::LearnedOp => return Err(ModelError::CrossWire(Head::LearnedOp)),
        };
        Ok(Self {
            head,
            ..self.clone()
        })
    }

    /// `(name, fan_in, fan_out)` for every dense layer, in parameter order.
    fn layers(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        let mut chain = |prefix: &str, dims: Vec<usize>| {
            for (i, w) in dims.windows(2).enumerate() {
                out.push((format!("{prefix}.{i}"), w[0], w[1]));
            }
        };
        let mut phi = vec![self.input_dim];
        phi.extend(&self.featurizer_hidden);
        phi.push(self.rep_dim);
        chain("phi", phi);
        if !self.rho1_widths.is_empty() {
            let mut rho1 = vec![self.rep_dim];
            rho1.extend(&self.rho1_widths);
            chain("rho1", rho1);
        }
        if !self.rho2_hidden.is_empty() {
            let mut rho2 = vec![self.representation_dim()];
            rho2.extend(&self.rho2_hidden);
            rho2.push(1);
            chain("rho2", rho2);
        }
        out
    }
}

/// A multiset of feature vectors with multiplicities.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureMultiset {
    items: Vec<(Vec<f64>, f64)>,
}

impl FeatureMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_items(items: Vec<(Vec<f64>, f64)>) -> Self {
        Self { items }
    }

    pub fn push(&mut self, features: Vec<f64>, multiplicity: f64) {
        self.items.push((features, multiplicity));
    }

    pub fn items(&self) -> &[(Vec<f64>, f64)] {
        &self.items
    }

    pub fn is_empty(&self) -> bool {
        self.items.iter().all(|(_, m)| *m == 0.0)
    }

    pub fn cardinality(&self) -> f64 {
        self.items.iter().map(|(_, m)| m).sum()
    }

    /// Items sorted by feature vector with duplicates merged and zero
    /// multiplicities dropped. Any listing of the same multiset gives the same
    /// result.
    pub fn canonical(&self) -> Vec<(&[f64], f64)> {
        let mut sorted: Vec<(&[f64], f64)> = self
            .items
            .iter()
            .filter(|(_, m)| *m != 0.0)
            .map(|(f, m)| (f.as_slice(), *m))
            .collect();
        sorted.sort_by(|a, b| lex_cmp(a.0, b.0).then(a.1.total_cmp(&b.1)));
        let mut merged: Vec<(&[f64], f64)> = Vec::with_capacity(sorted.len());
        for (f, m) in sorted {
            match merged.last_mut() {
                Some(last) if lex_cmp(last.0, f) == Ordering::Equal => last.1 += m,
                _ => merged.push((f, m)),
            }
        }
        merged
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Loss and parameter gradients for one pair.
#[derive(Clone, Debug)]
pub struct LossOutput {
    pub loss: f64,
    pub prediction: f64,
    /// One tensor per parameter, in [`ParameterStore`] order.
    pub grads: Vec<Tensor>,
    /// Distance to the nearest relu / ℓ1 / min kink seen during the forward pass.
    pub kink_margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ParameterStore,
}

impl Model {
    /// Initializes every weight and bias uniformly in `±1/√fan_in`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterStore::new();
        for (name, fan_in, fan_out) in config.layers() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut uniform = |n: usize| -> Vec<f64> {
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            };
            let w = Tensor::new(vec![fan_in, fan_out], uniform(fan_in * fan_out))?;
            let b = Tensor::new(vec![fan_out], uniform(fan_out))?;
            params.push(format!("{name}.weight"), w);
            params.push(format!("{name}.bias"), b);
        }
        Ok(Self { config, params })
    }

    /// Pairs a config with existing parameters, checking names and shapes.
    pub fn from_parts(config: ModelConfig, params: ParameterStore) -> Result<Self, ModelError> {
        config.validate()?;
        let layers = config.layers();
        if params.len() != 2 * layers.len() {
            return Err(ModelError::CheckpointMismatch(format!(
                "expected {} tensors, found {}",
                2 * layers.len(),
                params.len()
            )));
        }
        for (i, (name, fan_in, fan_out)) in layers.iter().enumerate() {
            let expect = [
                (format!("{name}.weight"), vec![*fan_in, *fan_out]),
                (format!("{name}.bias"), vec![*fan_out]),
            ];
            for (j, (n, shape)) in expect.iter().enumerate() {
                let idx = 2 * i + j;
                if params.name(idx) != n || params.value(idx).shape() != shape.as_slice() {
                    return Err(ModelError::CheckpointMismatch(format!(
                        "tensor {idx} is `{}` {:?}, expected `{n}` {shape:?}",
                        params.name(idx),
                        params.value(idx).shape()
                    )));
                }
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    /// Same parameters, head swapped (see [`ModelConfig::cross_wired`]).
    pub fn cross_wire(&self) -> Result<Model, ModelError> {
        Ok(Self {
            config: self.config.cross_wired()?,
            params: self.params.clone(),
        })
    }

    fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params
            .values()
            .iter()
            .map(|t| tape.param(t.clone()))
            .collect()
    }

    fn mlp(
        tape: &mut Tape,
        vars: &[Var],
        first_layer: usize,
        layers: usize,
        mut x: Var,
        activation: fn(&mut Tape, Var) -> Var,
    ) -> Result<Var, ModelError> {
        for l in 0..layers {
            let i = first_layer + l;
            x = tape.linear(x, vars[2 * i], vars[2 * i + 1])?;
            if l + 1 < layers {
                x = activation(tape, x);
            }
        }
        Ok(x)
    }

    fn phi_layers(&self) -> usize {
        self.config.featurizer_hidden.len() + 1
    }

    fn rho1_layers(&self) -> usize {
        self.config.rho1_widths.len()
    }

    fn featurize_on_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        rows: Var,
    ) -> Result<Var, ModelError> {
        Self::mlp(tape, vars, 0, self.phi_layers(), rows, Tape::relu)
    }

    /// Per-object rows after the variant's object-level map: simplex rows for
    /// [`Variant::Simplex`], raw `φ(x)` otherwise.
    fn objects_on_tape(&self, tape: &mut Tape, vars: &[Var], rows: Var) -> Result<Var, ModelError> {
        let z = self.featurize_on_tape(tape, vars, rows)?;
        if self.config.variant == Variant::Simplex {
            let f = tape.softplus(z);
            Ok(tape.normalize_l1(f)?)
        } else {
            Ok(z)
        }
    }

    fn rows_tensor(&self, rows: &[&[f64]]) -> Result<Tensor, ModelError> {
        for r in rows {
            if r.len() != self.config.input_dim {
                return Err(ModelError::InputDim {
                    expected: self.config.input_dim,
                    got: r.len(),
                });
            }
        }
        Ok(Tensor::from_rows(rows)?)
    }

    fn represent_on_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        set: &FeatureMultiset,
    ) -> Result<Var, ModelError> {
        let items = set.canonical();
        let pooled = if items.is_empty() {
            tape.constant(Tensor::zeros(&[self.config.rep_dim]))
        } else {
            let rows: Vec<&[f64]> = items.iter().map(|(f, _)| *f).collect();
            let x = tape.constant(self.rows_tensor(&rows)?);
            let objects = self.objects_on_tape(tape, vars, x)?;
            let weights = items.iter().map(|(_, m)| *m).collect();
            tape.weighted_sum_rows(objects, weights)?
        };
        if self.config.variant == Variant::DeepSets {
            let first = self.phi_layers();
            Self::mlp(tape, vars, first, self.rho1_layers(), pooled, Tape::tanh)
        } else {
            Ok(pooled)
        }
    }

    fn head_on_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        ra: Var,
        rb: Var,
    ) -> Result<Var, ModelError> {
        match self.config.head {
            Head::SymDiffL1 => Ok(tape.l1_distance(ra, rb)?),
            Head::IntersectionMin => Ok(tape.min_pool_sum(ra, rb)?),
            Head::LearnedOp => {
                let s = tape.add(ra, rb)?;
                let first = self.phi_layers() + self.rho1_layers();
                let layers = self.config.rho2_hidden.len() + 1;
                Self::mlp(tape, vars, first, layers, s, Tape::tanh)
            }
        }
    }

    /// `φ(x)`.
    pub fn featurize(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let rows = tape.constant(self.rows_tensor(&[x])?);
        let z = self.featurize_on_tape(&mut tape, &vars, rows)?;
        Ok(tape.value(z).data().to_vec())
    }

    /// Per-object embedding: the simplex point for [`Variant::Simplex`], `φ(x)`
    /// for the other variants.
    pub fn embed_object(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let rows = tape.constant(self.rows_tensor(&[x])?);
        let z = self.objects_on_tape(&mut tape, &vars, rows)?;
        Ok(tape.value(z).data().to_vec())
    }

    /// `Ψ(A)`. The empty multiset maps to the zero vector, or `ρ₁(0)` for DeepSets.
    pub fn represent(&self, set: &FeatureMultiset) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let r = self.represent_on_tape(&mut tape, &vars, set)?;
        Ok(tape.value(r).data().to_vec())
    }

    /// Head output on two representations from this model.
    pub fn predict(&self, ra: &[f64], rb: &[f64]) -> Result<f64, ModelError> {
        let dim = self.config.representation_dim();
        for r in [ra, rb] {
            if r.len() != dim {
                return Err(ModelError::RepresentationDim {
                    expected: dim,
                    got: r.len(),
                });
            }
        }
        let (ta, tb) = (Tensor::vector(ra.to_vec()), Tensor::vector(rb.to_vec()));
        match self.config.head {
            Head::SymDiffL1 => Ok(nn::l1_distance(&ta, &tb)?),
            Head::IntersectionMin => Ok(nn::min_pool_sum(&ta, &tb)?),
            Head::LearnedOp => {
                let mut tape = Tape::new();
                let vars = self.bind(&mut tape);
                let a = tape.constant(ta);
                let b = tape.constant(tb);
                let out = self.head_on_tape(&mut tape, &vars, a, b)?;
                Ok(tape.value(out).data()[0])
            }
        }
    }

    /// Prediction of the configured task's quantity for `(A, B)`.
    pub fn predict_sets(
        &self,
        a: &FeatureMultiset,
        b: &FeatureMultiset,
    ) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let ra = self.represent_on_tape(&mut tape, &vars, a)?;
        let rb = self.represent_on_tape(&mut tape, &vars, b)?;
        let out = self.head_on_tape(&mut tape, &vars, ra, rb)?;
        Ok(tape.value(out).data()[0])
    }

    /// Squared error of the prediction against `target`, with gradients.
    pub fn loss_for(
        &self,
        a: &FeatureMultiset,
        b: &FeatureMultiset,
        target: f64,
    ) -> Result<LossOutput, ModelError> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let ra = self.represent_on_tape(&mut tape, &vars, a)?;
        let rb = self.represent_on_tape(&mut tape, &vars, b)?;
        let pred = self.head_on_tape(&mut tape, &vars, ra, rb)?;
        let loss = tape.squared_error(pred, target)?;
        let value = tape.value(loss).data()[0];
        if !value.is_finite() {
            return Err(ModelError::NonFiniteLoss(value));
        }
        let mut g = tape.backward(loss)?;
        let grads = vars
            .iter()
            .zip(self.params.values())
            .map(|(v, p)| g.take(*v).unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect();
        Ok(LossOutput {
            loss: value,
            prediction: tape.value(pred).data()[0],
            grads,
            kink_margin: tape.kink_margin(),
        })
    }

    /// Loss on a sampled pair against the target for this model's task.
    pub fn loss(&self, pair: &PairSample) -> Result<LossOutput, ModelError> {
        self.loss_for(&pair.a, &pair.b, pair.target(self.config.task))
    }

    /// Forward-only loss, for finite differences.
    pub fn loss_value(
        &self,
        a: &FeatureMultiset,
        b: &FeatureMultiset,
        target: f64,
    ) -> Result<f64, ModelError> {
        let p = self.predict_sets(a, b)?;
        Ok((p - target).powi(2))
    }

    /// Path of the JSON config written next to a checkpoint.
    pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
        let mut s = checkpoint.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// Writes the binary checkpoint and its JSON config sidecar.
    pub fn save(&self, checkpoint: &Path) -> Result<(), ModelError> {
        self.params.save(checkpoint)?;
        let json = serde_json::to_string_pretty(&self.config)
            .map_err(|e| ModelError::Sidecar(e.to_string()))?;
        fs::write(Self::sidecar_path(checkpoint), json).map_err(NnError::from)?;
        Ok(())
    }

    pub fn load(checkpoint: &Path) -> Result<Self, ModelError> {
        let sidecar = Self::sidecar_path(checkpoint);
        let json = fs::read_to_string(&sidecar)
            .map_err(|e| ModelError::Sidecar(format!("{}: {e}", sidecar.display())))?;
        let config: ModelConfig =
            serde_json::from_str(&json).map_err(|e| ModelError::Sidecar(e.to_string()))?;
        let params = ParameterStore::load(checkpoint)?;
        Self::from_parts(config, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bag(items: &[(&[f64], f64)]) -> FeatureMultiset {
        FeatureMultiset::from_items(items.iter().map(|(f, m)| (f.to_vec(), *m)).collect())
    }

    fn zero_last_phi(model: &mut Model) {
        let layers = model.config.featurizer_hidden.len();
        for suffix in ["weight", "bias"] {
            let idx = model
                .params
                .index_of(&format!("phi.{layers}.{suffix}"))
                .unwrap();
            for v in model.params.value_mut(idx).data_mut() {
                *v = 0.0;
            }
        }
    }

    #[test]
    fn config_validation() {
        let ok = ModelConfig::new(Variant::DeepSets, Head::LearnedOp, Task::SymDiff, 4, 3);
        assert!(ok.validate().is_ok());
        assert_eq!(ok.representation_dim(), 100);

        let mut bad = ok.clone();
        bad.rho1_widths.clear();
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.rho2_hidden.clear();
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.rep_dim = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_final_layer_featurizes_to_zero() {
        let cfg = ModelConfig::matched(Variant::Unrestricted, Task::SymDiff, 3, 4);
        let mut m = Model::new(cfg, 1).unwrap();
        zero_last_phi(&mut m);
        assert_eq!(m.featurize(&[0.3, -2.0, 1.0]).unwrap(), vec![0.0; 4]);
        assert!(matches!(
            m.featurize(&[1.0]),
            Err(ModelError::InputDim {
                expected: 3,
                got: 1
            })
        ));
    }

    #[test]
    fn simplex_closed_form() {
        // φ(x) = 0 → softplus gives ln 2 everywhere → uniform simplex point
        let cfg = ModelConfig::matched(Variant::Simplex, Task::SymDiff, 2, 2);
        let mut m = Model::new(cfg, 7).unwrap();
        zero_last_phi(&mut m);
        let r = m.represent(&bag(&[(&[0.5, 0.5], 2.0)])).unwrap();
        assert_eq!(r, vec![1.0, 1.0]);
        assert_eq!(m.embed_object(&[1.0, 2.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn canonical_merges_and_sorts() {
        let b = bag(&[(&[2.0], 1.0), (&[1.0], 1.0), (&[2.0], 1.0), (&[3.0], 0.0)]);
        let c = b.canonical();
        assert_eq!(c, vec![(&[1.0][..], 1.0), (&[2.0][..], 2.0)]);
    }

    #[test]
    fn empty_multiset_representations() {
        let empty = FeatureMultiset::new();
        let m = Model::new(
            ModelConfig::matched(Variant::Simplex, Task::SymDiff, 2, 3),
            0,
        )
        .unwrap();
        assert_eq!(m.represent(&empty).unwrap(), vec![0.0; 3]);

        let ds = Model::new(
            ModelConfig::matched(Variant::DeepSets, Task::SymDiff, 2, 3),
            0,
        )
        .unwrap();
        let r = ds.represent(&empty).unwrap();
        assert_eq!(r.len(), 100);
        // ρ₁(0) is the output of the bias path alone
        let b0 = ds
            .params
            .value(ds.params.index_of("rho1.0.bias").unwrap())
            .data();
        let w1 = ds
            .params
            .value(ds.params.index_of("rho1.1.weight").unwrap());
        let b1 = ds.params.value(ds.params.index_of("rho1.1.bias").unwrap());
        let h = Tensor::vector(b0.iter().map(|v| v.tanh()).collect());
        let expected = nn::linear(&h, w1, b1).unwrap();
        assert_eq!(r, expected.data());
    }

    #[test]
    fn fixed_heads_on_known_reps() {
        let cfg = ModelConfig::matched(Variant::Simplex, Task::Intersection, 2, 3);
        let m = Model::new(cfg, 0).unwrap();
        assert_eq!(m.predict(&[3.0, 2.0, 0.0], &[2.0, 1.0, 1.0]).unwrap(), 3.0);
        let sd = m.cross_wire().unwrap();
        assert_eq!(sd.config().head, Head::SymDiffL1);
        assert_eq!(sd.config().task, Task::Intersection);
        assert_eq!(sd.predict(&[3.0, 2.0, 0.0], &[3.0, 2.0, 0.0]).unwrap(), 0.0);
        assert!(m.predict(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn cross_wire_is_an_involution() {
        let cfg = ModelConfig::matched(Variant::Simplex, Task::SymDiff, 2, 3);
        assert_eq!(cfg.cross_wired().unwrap().head, Head::IntersectionMin);
        let m = Model::new(cfg, 3).unwrap();
        assert_eq!(m.cross_wire().unwrap().cross_wire().unwrap(), m);
        let learned = ModelConfig::new(Variant::Simplex, Head::LearnedOp, Task::SymDiff, 2, 3);
        assert!(matches!(
            Model::new(learned, 0).unwrap().cross_wire(),
            Err(ModelError::CrossWire(Head::LearnedOp))
        ));
    }

    #[test]
    fn identical_sets_give_zero_loss() {
        let cfg = ModelConfig::matched(Variant::Simplex, Task::SymDiff, 2, 3);
        let m = Model::new(cfg, 11).unwrap();
        let a = bag(&[(&[0.1, 0.2], 1.0), (&[-1.0, 3.0], 2.0)]);
        let out = m.loss_for(&a, &a.clone(), 0.0).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grads.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn string_enums() {
        assert_eq!("deepsets".parse::<Variant>().unwrap(), Variant::DeepSets);
        assert_eq!("learned-op".parse::<Head>().unwrap(), Head::LearnedOp);
        assert_eq!(Task::Intersection.to_string(), "intersection");
        assert!("lstm".parse::<Variant>().is_err());
        let json = serde_json::to_string(&Head::SymDiffL1).unwrap();
        assert_eq!(json, "\"symdiff-l1\"");
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let cfg = ModelConfig::new(Variant::DeepSets, Head::LearnedOp, Task::Intersection, 3, 2);
        let m = Model::new(cfg, 5).unwrap();
        m.save(&path).unwrap();
        assert!(Model::sidecar_path(&path).exists());
        assert_eq!(Model::load(&path).unwrap(), m);

        let other = ModelConfig::matched(Variant::Simplex, Task::SymDiff, 3, 2);
        assert!(Model::from_parts(other, m.params().clone()).is_err());
    }
}
