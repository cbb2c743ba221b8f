//! Maps from object multisets to label multisets.
//!
//! [`UniverseTransformation`] labels each object deterministically and induces
//! the pushforward transformation; [`ProbabilisticTransformation`] assigns each
//! object a distribution over labels and induces the expectation
//! transformation. Both preserve cardinality.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::multiset::{ContainmentRelation, ElementId, LabelVector, Multiset, MultisetError};

/// Tolerance for a distribution summing to one.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("element {0} has no label")]
    Unlabeled(ElementId),
    #[error("element {0} has no distribution")]
    MissingDistribution(ElementId),
    #[error("label {label} for element {id} is outside 0..{k}")]
    LabelOutOfRange {
        id: ElementId,
        label: usize,
        k: usize,
    },
    #[error("distribution for element {id} is invalid: {reason}")]
    InvalidDistribution { id: ElementId, reason: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Multiset(#[from] MultisetError),
}

/// Deterministic labeling `t: Ω → {0, …, k-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct UniverseTransformation {
    k: usize,
    label_of: BTreeMap<ElementId, usize>,
}

impl UniverseTransformation {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            label_of: BTreeMap::new(),
        }
    }

    pub fn from_labels<I>(k: usize, labels: I) -> Result<Self, TransformError>
    where
        I: IntoIterator<Item = (ElementId, usize)>,
    {
        let mut t = Self::new(k);
        for (id, label) in labels {
            t.insert(id, label)?;
        }
        Ok(t)
    }

    pub fn insert(&mut self, id: ElementId, label: usize) -> Result<(), TransformError> {
        if label >= self.k {
            return Err(TransformError::LabelOutOfRange {
                id,
                label,
                k: self.k,
            });
        }
        self.label_of.insert(id, label);
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn label(&self, id: ElementId) -> Option<usize> {
        self.label_of.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.label_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.label_of.is_empty()
    }

    /// Pushforward of `a`: component `y` is the total multiplicity of the
    /// elements labeled `y`.
    pub fn pushforward(&self, a: &Multiset) -> Result<LabelVector, TransformError> {
        let mut out = LabelVector::zeros(self.k);
        for (id, m) in a.iter() {
            let label = self.label(id).ok_or(TransformError::Unlabeled(id))?;
            out.add_scaled(label, m);
        }
        Ok(out)
    }

    /// The equivalent point-mass probabilistic transformation.
    pub fn to_probabilistic(&self) -> ProbabilisticTransformation {
        let mut p = ProbabilisticTransformation::new(self.k);
        for (&id, &label) in &self.label_of {
            let mut dist = vec![0.0; self.k];
            dist[label] = 1.0;
            p.dist_of.insert(id, dist);
        }
        p
    }
}

impl fmt::Display for UniverseTransformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (id, label) in &self.label_of {
            writeln!(f, "{id} {label}")?;
        }
        Ok(())
    }
}

impl UniverseTransformation {
    /// Parses `<element-id> <label>` lines.
    pub fn parse(k: usize, text: &str) -> Result<Self, TransformError> {
        let mut t = Self::new(k);
        for (line, fields) in table_lines(text) {
            let [id, label] = fields.as_slice() else {
                return Err(TransformError::Parse {
                    line,
                    message: "expected `<element-id> <label>`".into(),
                });
            };
            let id = parse_field::<ElementId>(line, id)?;
            let label = parse_field::<usize>(line, label)?;
            t.insert(id, label)?;
        }
        Ok(t)
    }
}

/// Per-object label distribution `ℓ: Ω → Δ({0, …, k̂-1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilisticTransformation {
    k_hat: usize,
    dist_of: BTreeMap<ElementId, Vec<f64>>,
}

impl ProbabilisticTransformation {
    pub fn new(k_hat: usize) -> Self {
        Self {
            k_hat,
            dist_of: BTreeMap::new(),
        }
    }

    pub fn k_hat(&self) -> usize {
        self.k_hat
    }

    pub fn insert(&mut self, id: ElementId, dist: Vec<f64>) -> Result<(), TransformError> {
        let invalid = |reason: String| TransformError::InvalidDistribution { id, reason };
        if dist.len() != self.k_hat {
            return Err(invalid(format!(
                "length {} but k̂ = {}",
                dist.len(),
                self.k_hat
            )));
        }
        if let Some(p) = dist.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(invalid(format!("entry {p} is negative or non-finite")));
        }
        let total: f64 = dist.iter().sum();
        if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(invalid(format!("sums to {total}")));
        }
        self.dist_of.insert(id, dist);
        Ok(())
    }

    pub fn distribution(&self, id: ElementId) -> Option<&[f64]> {
        self.dist_of.get(&id).map(Vec::as_slice)
    }

    /// Expectation transformation: `Σ_x m_A(x) · ℓ(x)`.
    pub fn expectation_transform(&self, a: &Multiset) -> Result<LabelVector, TransformError> {
        let mut out = LabelVector::zeros(self.k_hat);
        for (id, m) in a.iter() {
            let dist = self
                .distribution(id)
                .ok_or(TransformError::MissingDistribution(id))?;
            out.add_assign_scaled(dist, m);
        }
        Ok(out)
    }

    /// Parses `<element-id> p₁ … p_k̂` lines.
    pub fn parse(k_hat: usize, text: &str) -> Result<Self, TransformError> {
        let mut p = Self::new(k_hat);
        for (line, fields) in table_lines(text) {
            let Some((id, probs)) = fields.split_first() else {
                continue;
            };
            let id = parse_field::<ElementId>(line, id)?;
            let dist = probs
                .iter()
                .map(|s| parse_field::<f64>(line, s))
                .collect::<Result<Vec<_>, _>>()?;
            p.insert(id, dist)?;
        }
        Ok(p)
    }
}

impl fmt::Display for ProbabilisticTransformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (id, dist) in &self.dist_of {
            write!(f, "{id}")?;
            for p in dist {
                write!(f, " {p}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn table_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.trim();
        (!line.is_empty() && !line.starts_with('#'))
            .then(|| (i + 1, line.split_whitespace().collect()))
    })
}

fn parse_field<T: FromStr>(line: usize, s: &str) -> Result<T, TransformError>
where
    T::Err: fmt::Display,
{
    s.parse().map_err(|e| TransformError::Parse {
        line,
        message: format!("{s:?}: {e}"),
    })
}

/// Exact pair targets under the true labeling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruth {
    pub symdiff: f64,
    pub intersection: f64,
    pub relation: ContainmentRelation,
}

pub fn ground_truth_pair(
    t: &UniverseTransformation,
    a: &Multiset,
    b: &Multiset,
) -> Result<GroundTruth, TransformError> {
    let ta = t.pushforward(a)?.to_multiset();
    let tb = t.pushforward(b)?.to_multiset();
    Ok(GroundTruth {
        symdiff: ta.sym_difference(&tb).cardinality(),
        intersection: ta.intersect(&tb).cardinality(),
        relation: ta.containment_relation(&tb),
    })
}
