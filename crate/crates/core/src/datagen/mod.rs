//! Synthetic labeled universes, multiset pair samplers and IDX ingestion.

mod idx;

pub use idx::{encode_idx_images, encode_idx_labels, parse_idx_images, parse_idx_labels, read_idx};

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FeatureMultiset, Task};
use crate::multiset::{ContainmentRelation, ElementId, Multiset};
use crate::transform::{ground_truth_pair, TransformError, UniverseTransformation};

/// Attempts allowed when drawing an incomparable pair by rejection.
pub const MAX_REJECTIONS: usize = 1000;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("invalid universe spec: {0}")]
    InvalidSpec(String),
    #[error("invalid sampler config: {0}")]
    InvalidSampler(String),
    #[error("object pool is empty")]
    EmptyPool,
    #[error("no object carries label {0}")]
    MissingLabel(usize),
    #[error("no incomparable pair after {0} attempts")]
    RejectionFailed(usize),
    #[error("{file}: bad magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic {
        file: &'static str,
        expected: u32,
        found: u32,
    },
    #[error("{file}: truncated at byte offset {offset} (needed {needed} more bytes)")]
    Truncated {
        file: &'static str,
        offset: usize,
        needed: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

impl From<csv::Error> for DatagenError {
    fn from(e: csv::Error) -> Self {
        DatagenError::Csv(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticUniverseSpec {
    pub k: usize,
    pub d: usize,
    #[serde(default = "default_prototype_scale")]
    pub prototype_scale: f64,
    /// Expected Euclidean norm of the noise vector added to each object; each
    /// coordinate gets standard deviation `noise_sigma / √d`.
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    pub n_train: usize,
    pub n_eval: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_prototype_scale() -> f64 {
    3.0
}

fn default_noise_sigma() -> f64 {
    1.0
}

impl SyntheticUniverseSpec {
    pub fn new(k: usize, d: usize, n_train: usize, n_eval: usize, seed: u64) -> Self {
        Self {
            k,
            d,
            prototype_scale: default_prototype_scale(),
            noise_sigma: default_noise_sigma(),
            n_train,
            n_eval,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |m: String| Err(DatagenError::InvalidSpec(m));
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        if self.d < 2 {
            return bad(format!("d must be at least 2, got {}", self.d));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            ));
        }
        if !self.prototype_scale.is_finite() {
            return bad("prototype_scale must be finite".into());
        }
        Ok(())
    }
}

/// Labeled objects with features. Object ids are unique within a pool.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectPool {
    ids: Vec<ElementId>,
    labels: Vec<usize>,
    features: Vec<Vec<f64>>,
    k: usize,
    index: HashMap<ElementId, usize>,
    by_label: Vec<Vec<usize>>,
    transform: UniverseTransformation,
}

impl ObjectPool {
    /// `k` labels; every label must be `< k` and every feature row the same length.
    pub fn new(
        k: usize,
        ids: Vec<ElementId>,
        labels: Vec<usize>,
        features: Vec<Vec<f64>>,
    ) -> Result<Self, DatagenError> {
        if ids.len() != labels.len() || ids.len() != features.len() {
            return Err(DatagenError::InvalidSpec(format!(
                "pool columns differ in length: {} ids, {} labels, {} feature rows",
                ids.len(),
                labels.len(),
                features.len()
            )));
        }
        if let Some(first) = features.first() {
            if features.iter().any(|f| f.len() != first.len()) {
                return Err(DatagenError::InvalidSpec("ragged feature rows".into()));
            }
        }
        let transform = UniverseTransformation::from_labels(
            k,
            ids.iter().copied().zip(labels.iter().copied()),
        )?;
        if transform.len() != ids.len() {
            return Err(DatagenError::InvalidSpec("duplicate object ids".into()));
        }
        let index = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut by_label = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            by_label[l].push(i);
        }
        Ok(Self {
            ids,
            labels,
            features,
            k,
            index,
            by_label,
            transform,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Feature dimension (0 for an empty pool).
    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn ids(&self) -> &[ElementId] {
        &self.ids
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn position(&self, id: ElementId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn features_of(&self, id: ElementId) -> Option<&[f64]> {
        self.position(id).map(|i| self.features(i))
    }

    /// The true labeling as a universe transformation.
    pub fn transformation(&self) -> &UniverseTransformation {
        &self.transform
    }

    /// Same pool with every id shifted by `offset`.
    pub fn with_id_offset(self, offset: ElementId) -> Result<Self, DatagenError> {
        let ids = self.ids.iter().map(|id| id + offset).collect();
        Self::new(self.k, ids, self.labels, self.features)
    }

    pub fn label_histogram(&self) -> Vec<usize> {
        self.by_label.iter().map(Vec::len).collect()
    }

    /// Features of an object multiset drawn from this pool.
    pub fn feature_multiset(&self, ms: &Multiset) -> FeatureMultiset {
        FeatureMultiset::from_items(
            ms.iter()
                .map(|(id, m)| {
                    let f = self
                        .features_of(id)
                        .expect("multiset element drawn from this pool");
                    (f.to_vec(), m)
                })
                .collect(),
        )
    }

    /// `id,label,f1..fd` with a header row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DatagenError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend((1..=self.dim()).map(|j| format!("f{j}")));
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.ids[i].to_string(), self.labels[i].to_string()];
            row.extend(self.features[i].iter().map(|v| format!("{v:?}")));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), DatagenError> {
        self.write_csv(File::create(path)?)
    }

    /// Reads the CSV layout written by [`ObjectPool::write_csv`]. When `k` is
    /// `None` it is taken as one more than the largest label.
    pub fn read_csv<R: Read>(r: R, k: Option<usize>) -> Result<Self, DatagenError> {
        let mut rdr = csv::Reader::from_reader(r);
        let (mut ids, mut labels, mut features) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |j: usize| rec.get(j).unwrap_or("");
            let bad = |what: &str| DatagenError::Csv(format!("row {}: bad {what}", line + 2));
            ids.push(field(0).parse::<ElementId>().map_err(|_| bad("id"))?);
            labels.push(field(1).parse::<usize>().map_err(|_| bad("label"))?);
            let f = (2..rec.len())
                .map(|j| field(j).parse::<f64>().map_err(|_| bad("feature")))
                .collect::<Result<Vec<_>, _>>()?;
            features.push(f);
        }
        let k = k.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        Self::new(k, ids, labels, features)
    }

    pub fn load_csv(path: &Path, k: Option<usize>) -> Result<Self, DatagenError> {
        Self::read_csv(File::open(path)?, k)
    }
}

/// Train and eval pools drawn from one synthetic universe.
#[derive(Clone, Debug)]
pub struct Universe {
    pub prototypes: Vec<Vec<f64>>,
    pub train: ObjectPool,
    pub eval: ObjectPool,
}

/// Random prototypes, orthonormalized when `k ≤ d`, then scaled.
fn prototypes(spec: &SyntheticUniverseSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(spec.k);
    while out.len() < spec.k {
        let mut v: Vec<f64> = (0..spec.d).map(|_| StandardNormal.sample(rng)).collect();
        if out.len() < spec.d {
            for p in &out {
                let dot: f64 = v.iter().zip(p).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(p).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        out.push(v.into_iter().map(|a| a / norm).collect());
    }
    for p in &mut out {
        p.iter_mut().for_each(|a| *a *= spec.prototype_scale);
    }
    out
}

fn draw_pool(
    spec: &SyntheticUniverseSpec,
    protos: &[Vec<f64>],
    first_id: ElementId,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ObjectPool, DatagenError> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % spec.k).collect();
    labels.shuffle(rng);
    let std = spec.noise_sigma / (spec.d as f64).sqrt();
    let features = labels
        .iter()
        .map(|&l| {
            protos[l]
                .iter()
                .map(|&p| {
                    let z: f64 = StandardNormal.sample(rng);
                    p + std * z
                })
                .collect()
        })
        .collect();
    let ids = (0..n as ElementId).map(|i| first_id + i).collect();
    ObjectPool::new(spec.k, ids, labels, features)
}

/// Train ids are `0..n_train`, eval ids follow, so the pools never share an id.
pub fn gen_universe(spec: &SyntheticUniverseSpec) -> Result<Universe, DatagenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let protos = prototypes(spec, &mut rng);
    let train = draw_pool(spec, &protos, 0, spec.n_train, &mut rng)?;
    let eval = draw_pool(
        spec,
        &protos,
        spec.n_train as ElementId,
        spec.n_eval,
        &mut rng,
    )?;
    Ok(Universe {
        prototypes: protos,
        train,
        eval,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMode {
    /// Both multisets drawn independently.
    Uniform,
    /// The four containment relations equally likely.
    RelationBalanced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub size_min: usize,
    pub size_max: usize,
    pub mode: SamplerMode,
    #[serde(default)]
    pub seed: u64,
}

impl SamplerConfig {
    pub fn uniform(size_min: usize, size_max: usize, seed: u64) -> Self {
        Self {
            size_min,
            size_max,
            mode: SamplerMode::Uniform,
            seed,
        }
    }

    pub fn balanced(size_min: usize, size_max: usize, seed: u64) -> Self {
        Self {
            mode: SamplerMode::RelationBalanced,
            ..Self::uniform(size_min, size_max, seed)
        }
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        if self.size_min < 2 || self.size_min > self.size_max {
            return Err(DatagenError::InvalidSampler(format!(
                "need 2 <= size_min <= size_max, got [{}, {}]",
                self.size_min, self.size_max
            )));
        }
        if self.mode == SamplerMode::RelationBalanced && self.size_min == self.size_max {
            return Err(DatagenError::InvalidSampler(
                "relation-balanced sampling needs size_max > size_min".into(),
            ));
        }
        Ok(())
    }
}

/// A pair of object multisets with exact targets under the pool's labeling.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSample {
    pub a_ids: Multiset,
    pub b_ids: Multiset,
    pub a: FeatureMultiset,
    pub b: FeatureMultiset,
    pub target_symdiff: f64,
    pub target_intersection: f64,
    pub relation: ContainmentRelation,
}

impl PairSample {
    pub fn from_ids(
        pool: &ObjectPool,
        a_ids: Multiset,
        b_ids: Multiset,
    ) -> Result<Self, DatagenError> {
        let gt = ground_truth_pair(pool.transformation(), &a_ids, &b_ids)?;
        Ok(Self {
            a: pool.feature_multiset(&a_ids),
            b: pool.feature_multiset(&b_ids),
            a_ids,
            b_ids,
            target_symdiff: gt.symdiff,
            target_intersection: gt.intersection,
            relation: gt.relation,
        })
    }

    pub fn size_a(&self) -> f64 {
        self.a_ids.cardinality()
    }

    pub fn size_b(&self) -> f64 {
        self.b_ids.cardinality()
    }

    pub fn target(&self, task: Task) -> f64 {
        match task {
            Task::SymDiff => self.target_symdiff,
            Task::Intersection => self.target_intersection,
        }
    }

    /// `B, A`.
    pub fn swapped(&self) -> Self {
        Self {
            a_ids: self.b_ids.clone(),
            b_ids: self.a_ids.clone(),
            a: self.b.clone(),
            b: self.a.clone(),
            target_symdiff: self.target_symdiff,
            target_intersection: self.target_intersection,
            relation: self.relation.flipped(),
        }
    }
}

fn draw_objects<R: Rng>(pool: &ObjectPool, size: usize, rng: &mut R) -> Multiset {
    Multiset::from_elements((0..size).map(|_| pool.ids[rng.random_range(0..pool.len())]))
}

/// Cardinality uniform on `[size_min, size_max]`, elements uniform with replacement.
pub fn sample_multiset<R: Rng>(
    pool: &ObjectPool,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Multiset, DatagenError> {
    if pool.is_empty() {
        return Err(DatagenError::EmptyPool);
    }
    let size = rng.random_range(cfg.size_min..=cfg.size_max);
    Ok(draw_objects(pool, size, rng))
}

pub fn sample_pair<R: Rng>(
    pool: &ObjectPool,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<PairSample, DatagenError> {
    let a = sample_multiset(pool, cfg, rng)?;
    let b = sample_multiset(pool, cfg, rng)?;
    PairSample::from_ids(pool, a, b)
}

/// One object per entry of `labels`, each drawn uniformly among objects with that label.
fn objects_with_labels<R: Rng>(
    pool: &ObjectPool,
    labels: &[usize],
    rng: &mut R,
) -> Result<Multiset, DatagenError> {
    let mut ids = Vec::with_capacity(labels.len());
    for &l in labels {
        let i = pool.by_label[l]
            .choose(rng)
            .ok_or(DatagenError::MissingLabel(l))?;
        ids.push(pool.ids[*i]);
    }
    Ok(Multiset::from_elements(ids))
}

fn label_list(pool: &ObjectPool, ms: &Multiset) -> Vec<usize> {
    let mut out = Vec::new();
    for (id, m) in ms.iter() {
        let l = pool.labels[pool.position(id).expect("id from pool")];
        out.extend(std::iter::repeat_n(l, m as usize));
    }
    out
}

/// `(A, B)` with `T(A) ⊊ T(B)`.
fn proper_subset_pair<R: Rng>(
    pool: &ObjectPool,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<(Multiset, Multiset), DatagenError> {
    let b_size = rng.random_range(cfg.size_min + 1..=cfg.size_max);
    let b = draw_objects(pool, b_size, rng);
    let a_size = rng.random_range(cfg.size_min..b_size);
    let mut labels = label_list(pool, &b);
    labels.shuffle(rng);
    labels.truncate(a_size);
    let a = objects_with_labels(pool, &labels, rng)?;
    Ok((a, b))
}

/// Each [`ContainmentRelation`] with probability 1/4. Equal and subset pairs
/// are constructed from label multisets, incomparable pairs by rejection.
pub fn sample_pair_balanced<R: Rng>(
    pool: &ObjectPool,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<PairSample, DatagenError> {
    if pool.is_empty() {
        return Err(DatagenError::EmptyPool);
    }
    let relation = ContainmentRelation::ALL[rng.random_range(0..4)];
    let (a, b) = match relation {
        ContainmentRelation::Equal => {
            let b = sample_multiset(pool, cfg, rng)?;
            let a = objects_with_labels(pool, &label_list(pool, &b), rng)?;
            (a, b)
        }
        ContainmentRelation::ProperSubset => proper_subset_pair(pool, cfg, rng)?,
        ContainmentRelation::ProperSuperset => {
            let (a, b) = proper_subset_pair(pool, cfg, rng)?;
            (b, a)
        }
        ContainmentRelation::Incomparable => {
            let mut found = None;
            for _ in 0..MAX_REJECTIONS {
                let a = sample_multiset(pool, cfg, rng)?;
                let b = sample_multiset(pool, cfg, rng)?;
                let ta = pool.transform.pushforward(&a)?.to_multiset();
                let tb = pool.transform.pushforward(&b)?.to_multiset();
                if ta.containment_relation(&tb) == ContainmentRelation::Incomparable {
                    found = Some((a, b));
                    break;
                }
            }
            found.ok_or(DatagenError::RejectionFailed(MAX_REJECTIONS))?
        }
    };
    let pair = PairSample::from_ids(pool, a, b)?;
    debug_assert_eq!(pair.relation, relation);
    Ok(pair)
}

/// A seeded pair stream over one pool.
#[derive(Debug)]
pub struct PairSampler<'a> {
    pool: &'a ObjectPool,
    cfg: SamplerConfig,
    rng: ChaCha8Rng,
}

impl<'a> PairSampler<'a> {
    pub fn new(pool: &'a ObjectPool, cfg: SamplerConfig) -> Result<Self, DatagenError> {
        cfg.validate()?;
        if pool.is_empty() {
            return Err(DatagenError::EmptyPool);
        }
        Ok(Self {
            pool,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }

    pub fn next_pair(&mut self) -> Result<PairSample, DatagenError> {
        match self.cfg.mode {
            SamplerMode::Uniform => sample_pair(self.pool, &self.cfg, &mut self.rng),
            SamplerMode::RelationBalanced => {
                sample_pair_balanced(self.pool, &self.cfg, &mut self.rng)
            }
        }
    }

    pub fn take_pairs(&mut self, n: usize) -> Result<Vec<PairSample>, DatagenError> {
        (0..n).map(|_| self.next_pair()).collect()
    }
}
