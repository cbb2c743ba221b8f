//! Exact multiset algebra over a countable universe.
//!
//! Multiplicities are non-negative reals and the dominating measure is the
//! counting measure, so the cardinality of a multiset is the sum of its
//! multiplicities. Multisets are kept in canonical form: zero multiplicities
//! are never stored, which makes equality a plain map comparison.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque element identifier.
pub type ElementId = u64;

/// Absolute tolerance used when comparing memberships.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-9;

/// Default margin for [`relation_from_sizes`]. For whole-number multisets the
/// symmetric-difference size under containment and without containment differ
/// by at least 2, so 1.0 sits in the middle.
pub const DEFAULT_TAU: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum MultisetError {
    #[error("multiplicity for element {id} must be finite and non-negative, got {value}")]
    InvalidMultiplicity { id: ElementId, value: f64 },
    #[error("label vector component {index} must be finite and non-negative, got {value}")]
    InvalidComponent { index: usize, value: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A finite-support multiset with real multiplicities.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(
    try_from = "BTreeMap<ElementId, f64>",
    into = "BTreeMap<ElementId, f64>"
)]
pub struct Multiset {
    entries: BTreeMap<ElementId, f64>,
    integer_valued: bool,
}

impl PartialEq for Multiset {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Multiset {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
            integer_valued: true,
        }
    }

    /// Builds a multiset from `(id, multiplicity)` pairs. Repeated ids add up.
    pub fn from_entries<I>(entries: I) -> Result<Self, MultisetError>
    where
        I: IntoIterator<Item = (ElementId, f64)>,
    {
        let mut map = BTreeMap::new();
        for (id, value) in entries {
            if !value.is_finite() || value < 0.0 {
                return Err(MultisetError::InvalidMultiplicity { id, value });
            }
            *map.entry(id).or_insert(0.0) += value;
        }
        Ok(Self::from_map(map))
    }

    /// Builds a whole-number multiset from `(id, count)` pairs.
    pub fn from_counts<I>(counts: I) -> Self
    where
        I: IntoIterator<Item = (ElementId, u64)>,
    {
        let mut map = BTreeMap::new();
        for (id, count) in counts {
            *map.entry(id).or_insert(0.0) += count as f64;
        }
        Self::from_map(map)
    }

    /// Builds a whole-number multiset by counting occurrences.
    pub fn from_elements<I>(elements: I) -> Self
    where
        I: IntoIterator<Item = ElementId>,
    {
        Self::from_counts(elements.into_iter().map(|id| (id, 1)))
    }

    fn from_map(mut map: BTreeMap<ElementId, f64>) -> Self {
        map.retain(|_, m| *m > 0.0);
        let integer_valued = map.values().all(|m| m.fract() == 0.0);
        Self {
            entries: map,
            integer_valued,
        }
    }

    /// Adds `multiplicity` copies of `id`.
    pub fn insert(&mut self, id: ElementId, multiplicity: f64) -> Result<(), MultisetError> {
        if !multiplicity.is_finite() || multiplicity < 0.0 {
            return Err(MultisetError::InvalidMultiplicity {
                id,
                value: multiplicity,
            });
        }
        if multiplicity == 0.0 {
            return Ok(());
        }
        let m = self.entries.entry(id).or_insert(0.0);
        *m += multiplicity;
        self.integer_valued &= m.fract() == 0.0;
        Ok(())
    }

    pub fn multiplicity(&self, id: ElementId) -> f64 {
        self.entries.get(&id).copied().unwrap_or(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of distinct elements in the support.
    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_integer_valued(&self) -> bool {
        self.integer_valued
    }

    /// Iterates `(id, multiplicity)` in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (ElementId, f64)> + '_ {
        self.entries.iter().map(|(&id, &m)| (id, m))
    }

    /// Total multiplicity mass.
    pub fn cardinality(&self) -> f64 {
        self.entries.values().sum()
    }

    fn zip_with(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Self {
        let mut map = BTreeMap::new();
        for &id in self.entries.keys().chain(other.entries.keys()) {
            if map.contains_key(&id) {
                continue;
            }
            map.insert(id, op(self.multiplicity(id), other.multiplicity(id)));
        }
        Self::from_map(map)
    }

    pub fn intersect(&self, other: &Self) -> Self {
        self.zip_with(other, f64::min)
    }

    pub fn union(&self, other: &Self) -> Self {
        self.zip_with(other, f64::max)
    }

    /// Multiset sum: multiplicities add.
    pub fn msum(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    /// Clamped difference `A \ B`.
    pub fn difference(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| (a - b).max(0.0))
    }

    pub fn sym_difference(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| (a - b).abs())
    }

    /// `self ⊆ other` up to [`MEMBERSHIP_TOLERANCE`].
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.iter()
            .all(|(id, m)| m <= other.multiplicity(id) + MEMBERSHIP_TOLERANCE)
    }

    pub fn containment_relation(&self, other: &Self) -> ContainmentRelation {
        containment_relation(self, other)
    }
}

impl fmt::Display for Multiset {
    /// One `<id> <multiplicity>` line per element, ascending id.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (id, m) in self.iter() {
            writeln!(f, "{id} {m}")?;
        }
        Ok(())
    }
}

impl FromStr for Multiset {
    type Err = MultisetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut entries = Vec::new();
        for (i, raw) in s.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| MultisetError::Parse {
                line: i + 1,
                message,
            };
            let mut parts = line.split_whitespace();
            let (Some(id), Some(m), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(parse_err(format!(
                    "expected `<id> <multiplicity>`, got {line:?}"
                )));
            };
            let id: ElementId = id
                .parse()
                .map_err(|e| parse_err(format!("bad element id {id:?}: {e}")))?;
            let m: f64 = m
                .parse()
                .map_err(|e| parse_err(format!("bad multiplicity {m:?}: {e}")))?;
            entries.push((id, m));
        }
        Self::from_entries(entries)
    }
}

impl TryFrom<BTreeMap<ElementId, f64>> for Multiset {
    type Error = MultisetError;

    fn try_from(map: BTreeMap<ElementId, f64>) -> Result<Self, Self::Error> {
        Self::from_entries(map)
    }
}

impl From<Multiset> for BTreeMap<ElementId, f64> {
    fn from(ms: Multiset) -> Self {
        ms.entries
    }
}

/// The four mutually exclusive containment outcomes for an ordered pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainmentRelation {
    Equal,
    ProperSubset,
    ProperSuperset,
    Incomparable,
}

impl ContainmentRelation {
    pub const ALL: [ContainmentRelation; 4] = [
        ContainmentRelation::Equal,
        ContainmentRelation::ProperSubset,
        ContainmentRelation::ProperSuperset,
        ContainmentRelation::Incomparable,
    ];

    /// Row/column index in a confusion matrix.
    pub fn index(self) -> usize {
        match self {
            ContainmentRelation::Equal => 0,
            ContainmentRelation::ProperSubset => 1,
            ContainmentRelation::ProperSuperset => 2,
            ContainmentRelation::Incomparable => 3,
        }
    }

    /// The relation of the swapped pair.
    pub fn flipped(self) -> Self {
        match self {
            ContainmentRelation::ProperSubset => ContainmentRelation::ProperSuperset,
            ContainmentRelation::ProperSuperset => ContainmentRelation::ProperSubset,
            other => other,
        }
    }
}

impl fmt::Display for ContainmentRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ContainmentRelation::Equal => "equal",
            ContainmentRelation::ProperSubset => "proper_subset",
            ContainmentRelation::ProperSuperset => "proper_superset",
            ContainmentRelation::Incomparable => "incomparable",
        };
        f.write_str(s)
    }
}

pub fn containment_relation(a: &Multiset, b: &Multiset) -> ContainmentRelation {
    match (a.is_subset_of(b), b.is_subset_of(a)) {
        (true, true) => ContainmentRelation::Equal,
        (true, false) => ContainmentRelation::ProperSubset,
        (false, true) => ContainmentRelation::ProperSuperset,
        (false, false) => ContainmentRelation::Incomparable,
    }
}

/// Dense multiplicity vector of a multiset over the finite universe `{0, …, k̂-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelVector(Vec<f64>);

impl LabelVector {
    pub fn new(components: Vec<f64>) -> Result<Self, MultisetError> {
        if let Some((index, &value)) = components
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(MultisetError::InvalidComponent { index, value });
        }
        Ok(Self(components))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Natural representation of a multiset whose ids are labels below `dim`.
    pub fn from_multiset(ms: &Multiset, dim: usize) -> Result<Self, MultisetError> {
        let mut v = vec![0.0; dim];
        for (id, m) in ms.iter() {
            let slot = v
                .get_mut(id as usize)
                .ok_or(MultisetError::DimensionMismatch {
                    left: id as usize + 1,
                    right: dim,
                })?;
            *slot = m;
        }
        Ok(Self(v))
    }

    /// The label multiset this vector represents.
    pub fn to_multiset(&self) -> Multiset {
        Multiset::from_map(
            self.0
                .iter()
                .enumerate()
                .map(|(i, &m)| (i as ElementId, m))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn cardinality(&self) -> f64 {
        self.0.iter().sum()
    }

    pub(crate) fn add_scaled(&mut self, index: usize, amount: f64) {
        self.0[index] += amount;
    }

    pub(crate) fn add_assign_scaled(&mut self, other: &[f64], scale: f64) {
        for (a, b) in self.0.iter_mut().zip(other) {
            *a += scale * b;
        }
    }
}

fn check_dims(r: &LabelVector, s: &LabelVector) -> Result<(), MultisetError> {
    if r.dim() != s.dim() {
        return Err(MultisetError::DimensionMismatch {
            left: r.dim(),
            right: s.dim(),
        });
    }
    Ok(())
}

/// `|R △ S|` computed as the ℓ1 distance of the natural representations.
pub fn symdiff_size_from_reps(r: &LabelVector, s: &LabelVector) -> Result<f64, MultisetError> {
    check_dims(r, s)?;
    Ok(r.0.iter().zip(&s.0).map(|(a, b)| (a - b).abs()).sum())
}

/// `|R ∩ S|` computed as the ℓ1 norm of the coordinate-wise minimum.
pub fn intersection_size_from_reps(r: &LabelVector, s: &LabelVector) -> Result<f64, MultisetError> {
    check_dims(r, s)?;
    Ok(r.0.iter().zip(&s.0).map(|(a, b)| a.min(*b)).sum())
}

/// Result of a conversion that may have been clamped into its valid range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Clamped {
    pub value: f64,
    pub clamped: bool,
}

/// Intersection size from `|A|`, `|B|` and `|A △ B|`: `(a + b - d) / 2`,
/// clamped into `[0, min(a, b)]`.
pub fn intersection_from_symdiff(a: f64, b: f64, d: f64) -> Clamped {
    let raw = (a + b - d) / 2.0;
    let value = raw.clamp(0.0, a.min(b));
    Clamped {
        value,
        clamped: value != raw,
    }
}

/// Symmetric-difference size from `|A|`, `|B|` and `|A ∩ B|`.
pub fn symdiff_from_intersection(a: f64, b: f64, i: f64) -> f64 {
    a + b - 2.0 * i
}

/// Decides the containment relation from sizes alone, using `A ⊆ B ⇔ |A △ B| ≤ |B| - |A|`
/// with margin `tau`. Equal requires the test to pass in both directions,
/// i.e. `d_hat + |a - b| ≤ tau`.
pub fn relation_from_sizes(a: f64, b: f64, d_hat: f64, tau: f64) -> ContainmentRelation {
    if d_hat + (a - b).abs() <= tau {
        ContainmentRelation::Equal
    } else if a < b && d_hat <= (b - a) + tau {
        ContainmentRelation::ProperSubset
    } else if b < a && d_hat <= (a - b) + tau {
        ContainmentRelation::ProperSuperset
    } else {
        ContainmentRelation::Incomparable
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ContainmentRelation::*;

    fn ms(pairs: &[(ElementId, f64)]) -> Multiset {
        Multiset::from_entries(pairs.iter().copied()).unwrap()
    }

    // A = {1,1,1,2,2}, B = {1,1,2,3}
    fn sample_pair() -> (Multiset, Multiset) {
        (
            ms(&[(1, 3.0), (2, 2.0)]),
            ms(&[(1, 2.0), (2, 1.0), (3, 1.0)]),
        )
    }

    #[test]
    fn binary_operations_on_worked_example() {
        let (a, b) = sample_pair();
        assert_eq!(a.intersect(&b), ms(&[(1, 2.0), (2, 1.0)]));
        assert_eq!(a.union(&b), ms(&[(1, 3.0), (2, 2.0), (3, 1.0)]));
        assert_eq!(a.msum(&b), ms(&[(1, 5.0), (2, 3.0), (3, 1.0)]));
        assert_eq!(a.difference(&b), ms(&[(1, 1.0), (2, 1.0)]));
        assert_eq!(a.sym_difference(&b), ms(&[(1, 1.0), (2, 1.0), (3, 1.0)]));
        assert_eq!(a.difference(&a.difference(&b)), a.intersect(&b));
    }

    #[test]
    fn empty_and_idempotent_cases() {
        let (a, b) = sample_pair();
        let empty = Multiset::new();
        assert_eq!(empty.intersect(&b), empty);
        assert_eq!(empty.union(&b), b);
        assert_eq!(empty.msum(&b), b);
        assert_eq!(a.union(&a), a);
        assert_eq!(a.difference(&a), empty);
        assert_eq!(a.sym_difference(&a), empty);
        assert_eq!(a.sym_difference(&empty), a);
        assert!(a.difference(&a).is_empty());
    }

    #[test]
    fn real_valued_memberships() {
        let a = ms(&[(1, 0.5)]);
        let b = ms(&[(1, 1.2)]);
        assert_eq!(a.intersect(&b), ms(&[(1, 0.5)]));
        assert!(!a.is_integer_valued());
        assert_eq!(ms(&[(1, 0.25), (7, 0.75)]).cardinality(), 1.0);
    }

    #[test]
    fn cardinality_examples() {
        assert_eq!(ms(&[(1, 3.0), (2, 2.0)]).cardinality(), 5.0);
        assert_eq!(Multiset::new().cardinality(), 0.0);
    }

    #[test]
    fn zero_multiplicities_are_pruned() {
        let a = ms(&[(1, 0.0), (2, 1.0)]);
        assert_eq!(a.support_len(), 1);
        assert_eq!(a, ms(&[(2, 1.0)]));
    }

    #[test]
    fn rejects_negative_and_nan() {
        assert!(Multiset::from_entries([(1, -1.0)]).is_err());
        assert!(Multiset::from_entries([(1, f64::NAN)]).is_err());
        assert!(LabelVector::new(vec![1.0, -0.5]).is_err());
    }

    #[test]
    fn integer_flag_tracks_contents() {
        let a = ms(&[(1, 0.5)]);
        assert!(!a.is_integer_valued());
        assert!(a.msum(&a).is_integer_valued());
        assert!(Multiset::from_counts([(3, 2)]).is_integer_valued());
    }

    #[test]
    fn containment_examples() {
        assert_eq!(
            containment_relation(&ms(&[(1, 1.0)]), &ms(&[(1, 1.0)])),
            Equal
        );
        assert_eq!(
            containment_relation(&ms(&[(1, 1.0)]), &ms(&[(1, 2.0), (3, 1.0)])),
            ProperSubset
        );
        assert_eq!(
            containment_relation(&ms(&[(1, 2.0), (3, 1.0)]), &ms(&[(1, 1.0)])),
            ProperSuperset
        );
        assert_eq!(
            containment_relation(&ms(&[(1, 2.0)]), &ms(&[(1, 1.0), (3, 1.0)])),
            Incomparable
        );
    }

    #[test]
    fn sizes_from_representations() {
        let r = LabelVector::new(vec![3.0, 2.0, 0.0]).unwrap();
        let s = LabelVector::new(vec![2.0, 1.0, 1.0]).unwrap();
        assert_eq!(symdiff_size_from_reps(&r, &s).unwrap(), 3.0);
        assert_eq!(intersection_size_from_reps(&r, &s).unwrap(), 3.0);
        assert_eq!(symdiff_size_from_reps(&r, &r).unwrap(), 0.0);
        assert_eq!(
            intersection_size_from_reps(&r, &r).unwrap(),
            r.cardinality()
        );

        let e1 = LabelVector::new(vec![1.0, 0.0]).unwrap();
        let e2 = LabelVector::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(symdiff_size_from_reps(&e1, &e2).unwrap(), 2.0);
        assert_eq!(intersection_size_from_reps(&e1, &e2).unwrap(), 0.0);

        assert_eq!(
            symdiff_size_from_reps(&r, &e1),
            Err(MultisetError::DimensionMismatch { left: 3, right: 2 })
        );
        assert!(intersection_size_from_reps(&e1, &r).is_err());
    }

    #[test]
    fn intersection_from_symdiff_examples() {
        assert_eq!(intersection_from_symdiff(5.0, 4.0, 3.0).value, 3.0);
        assert_eq!(intersection_from_symdiff(3.0, 3.0, 0.0).value, 3.0);
        let disjoint = intersection_from_symdiff(2.0, 2.0, 4.0);
        assert_eq!(disjoint.value, 0.0);
        assert!(!disjoint.clamped);

        let over = intersection_from_symdiff(2.0, 2.0, 5.0);
        assert_eq!(over.value, 0.0);
        assert!(over.clamped);
        let under = intersection_from_symdiff(2.0, 5.0, 1.0);
        assert_eq!(under.value, 2.0);
        assert!(under.clamped);
    }

    #[test]
    fn relation_from_sizes_examples() {
        assert_eq!(relation_from_sizes(2.0, 3.0, 1.05, 1.0), ProperSubset);
        assert_eq!(relation_from_sizes(3.0, 2.0, 1.05, 1.0), ProperSuperset);
        assert_eq!(relation_from_sizes(2.0, 2.0, 0.1, 1.0), Equal);
        assert_eq!(relation_from_sizes(2.0, 2.0, 4.0, 1.0), Incomparable);
        // adjacent sizes with exact d are a proper subset, not Equal
        assert_eq!(relation_from_sizes(2.0, 3.0, 1.0, 1.0), ProperSubset);
        assert_eq!(relation_from_sizes(2.0, 3.0, 1.0, 1.9), ProperSubset);
    }

    #[test]
    fn relation_from_exact_sizes_matches_containment() {
        let a = Multiset::from_counts([(1, 2), (2, 1)]);
        let cases = [
            Multiset::from_counts([(1, 2), (2, 1)]),
            Multiset::from_counts([(1, 2), (2, 2)]),
            Multiset::from_counts([(1, 2)]),
            Multiset::from_counts([(1, 1), (3, 1)]),
        ];
        for b in &cases {
            let d = a.sym_difference(b).cardinality();
            for tau in [0.01, 0.5, 1.0, 1.5, 1.99] {
                assert_eq!(
                    relation_from_sizes(a.cardinality(), b.cardinality(), d, tau),
                    a.containment_relation(b)
                );
            }
        }
    }

    #[test]
    fn label_vector_round_trip() {
        let (a, _) = sample_pair();
        let v = LabelVector::from_multiset(&a, 4).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 3.0, 2.0, 0.0]);
        assert_eq!(v.to_multiset(), a);
        assert!(LabelVector::from_multiset(&a, 2).is_err());
    }

    #[test]
    fn text_format() {
        let (_, b) = sample_pair();
        let text = b.to_string();
        assert_eq!(text, "1 2\n2 1\n3 1\n");
        assert_eq!(text.parse::<Multiset>().unwrap(), b);
        assert_eq!(
            "0 0.25\n9 1.5\n".parse::<Multiset>().unwrap().cardinality(),
            1.75
        );

        let err = "1 2\n2 x\n".parse::<Multiset>().unwrap_err();
        assert!(matches!(err, MultisetError::Parse { line: 2, .. }));
        assert!("1 2 3".parse::<Multiset>().is_err());
    }
}
