//! Clustering from symmetric-difference queries: the oracle, an `n − 1` query
//! certificate with its verifier, and an adaptive recovery baseline.
//!
//! Objects are `0..n`; a query compares the label multisets of two object sets.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::multiset::Multiset;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClusteringError {
    #[error("label {label} of object {object} is outside 0..{k}")]
    LabelOutOfRange {
        object: usize,
        label: usize,
        k: usize,
    },
    #[error("label {0} is never used")]
    UnusedLabel(usize),
    #[error("clustering is not a partition of 0..{n}: {reason}")]
    NotAPartition { n: usize, reason: String },
}

/// Objects `0..n` with hidden labels in `0..k`, each label used at least once.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterInstance {
    pub objects: usize,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
}

impl ClusterInstance {
    pub fn new(k: usize, labels: Vec<usize>) -> Result<Self, ClusteringError> {
        let mut used = vec![false; k];
        for (object, &label) in labels.iter().enumerate() {
            if label >= k {
                return Err(ClusteringError::LabelOutOfRange { object, label, k });
            }
            used[label] = true;
        }
        if let Some(l) = used.iter().position(|u| !u) {
            return Err(ClusteringError::UnusedLabel(l));
        }
        Ok(Self {
            objects: labels.len(),
            k,
            labels: Some(labels),
        })
    }

    /// `n ≥ k` objects, every label used, otherwise uniform.
    pub fn random<R: Rng>(n: usize, k: usize, rng: &mut R) -> Self {
        assert!(k >= 1 && n >= k, "need n >= k >= 1");
        let mut labels: Vec<usize> = (0..k).collect();
        labels.extend((k..n).map(|_| rng.random_range(0..k)));
        labels.shuffle(rng);
        Self::new(k, labels).expect("every label used")
    }

    pub fn n(&self) -> usize {
        self.objects
    }

    /// Hidden labels. Panics on an instance read without them.
    pub fn labels(&self) -> &[usize] {
        self.labels.as_deref().expect("instance carries labels")
    }

    /// The true clusters, each sorted, ordered by smallest member.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels().iter().enumerate() {
            out[l].push(i);
        }
        canonical(out)
    }
}

/// `Δ(A, B) = |M(A) △ M(B)|`, where `M` maps an object set to its label multiset.
pub fn delta_oracle(inst: &ClusterInstance, a: &[usize], b: &[usize]) -> usize {
    let labels = inst.labels();
    let m = |s: &[usize]| Multiset::from_elements(s.iter().map(|&x| labels[x] as u64));
    m(a).sym_difference(&m(b)).cardinality() as usize
}

pub trait DeltaOracle {
    fn delta(&self, a: &[usize], b: &[usize]) -> usize;
}

/// [`delta_oracle`] on one instance, counting queries.
#[derive(Debug)]
pub struct InstanceOracle<'a> {
    inst: &'a ClusterInstance,
    queries: AtomicUsize,
}

impl<'a> InstanceOracle<'a> {
    pub fn new(inst: &'a ClusterInstance) -> Self {
        Self {
            inst,
            queries: AtomicUsize::new(0),
        }
    }

    pub fn queries(&self) -> usize {
        self.queries.load(Ordering::Relaxed)
    }
}

impl DeltaOracle for InstanceOracle<'_> {
    fn delta(&self, a: &[usize], b: &[usize]) -> usize {
        self.queries.fetch_add(1, Ordering::Relaxed);
        delta_oracle(self.inst, a, b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Split,
    Singleton,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub kind: QueryKind,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub expected: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub objects: usize,
    pub clusters: Vec<Vec<usize>>,
    pub queries: Vec<Query>,
}

impl Certificate {
    pub fn count(&self, kind: QueryKind) -> usize {
        self.queries.iter().filter(|q| q.kind == kind).count()
    }
}

/// Sorts members and orders clusters by smallest member.
fn canonical(mut clusters: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    clusters.retain(|c| !c.is_empty());
    clusters.iter_mut().for_each(|c| c.sort_unstable());
    clusters.sort();
    clusters
}

fn check_partition(n: usize, clusters: &[Vec<usize>]) -> Result<(), ClusteringError> {
    let bad = |reason: String| Err(ClusteringError::NotAPartition { n, reason });
    let mut seen = BTreeSet::new();
    for c in clusters {
        if c.is_empty() {
            return bad("empty cluster".into());
        }
        for &x in c {
            if x >= n {
                return bad(format!("object {x} out of range"));
            }
            if !seen.insert(x) {
                return bad(format!("object {x} appears twice"));
            }
        }
    }
    if seen.len() != n {
        return bad(format!("{} of {n} objects covered", seen.len()));
    }
    Ok(())
}

fn split_queries(groups: &[Vec<usize>], out: &mut Vec<Query>) {
    if groups.len() < 2 {
        return;
    }
    let mid = groups.len().div_ceil(2);
    let (l, r) = groups.split_at(mid);
    let flat = |g: &[Vec<usize>]| -> Vec<usize> {
        let mut v: Vec<usize> = g.iter().flatten().copied().collect();
        v.sort_unstable();
        v
    };
    let (left, right) = (flat(l), flat(r));
    out.push(Query {
        kind: QueryKind::Split,
        expected: left.len() + right.len(),
        left,
        right,
    });
    split_queries(l, out);
    split_queries(r, out);
}

/// `k − 1` split queries from recursive halving of the claimed clusters, then
/// `s − 1` consecutive singleton queries inside each cluster of size `s`.
pub fn build_certificate(
    n: usize,
    clusters: &[Vec<usize>],
) -> Result<Certificate, ClusteringError> {
    check_partition(n, clusters)?;
    let clusters = canonical(clusters.to_vec());
    let mut queries = Vec::with_capacity(n.saturating_sub(1));
    split_queries(&clusters, &mut queries);
    for c in &clusters {
        for w in c.windows(2) {
            queries.push(Query {
                kind: QueryKind::Singleton,
                left: vec![w[0]],
                right: vec![w[1]],
                expected: 0,
            });
        }
    }
    Ok(Certificate {
        objects: n,
        clusters,
        queries,
    })
}

/// True iff every oracle answer equals the expected one.
pub fn verify_certificate(cert: &Certificate, oracle: &dyn DeltaOracle) -> bool {
    cert.queries
        .iter()
        .all(|q| oracle.delta(&q.left, &q.right) == q.expected)
}

/// Assigns each object to the first discovered cluster whose representative
/// answers 0, or opens a new cluster. At most `n·k` queries.
pub fn recover_adaptive(n: usize, oracle: &dyn DeltaOracle) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for x in 0..n {
        match clusters
            .iter()
            .position(|c| oracle.delta(&[x], &[c[0]]) == 0)
        {
            Some(i) => clusters[i].push(x),
            None => clusters.push(vec![x]),
        }
    }
    clusters
}

/// Same partition, ignoring cluster and member order.
pub fn same_partition(a: &[Vec<usize>], b: &[Vec<usize>]) -> bool {
    canonical(a.to_vec()) == canonical(b.to_vec())
}

/// Clusters `i` and `j` merged into one.
pub fn merge_clusters(clusters: &[Vec<usize>], i: usize, j: usize) -> Vec<Vec<usize>> {
    let mut out = clusters.to_vec();
    let moved = std::mem::take(&mut out[j]);
    out[i].extend(moved);
    canonical(out)
}

/// Cluster `i` cut after its first `at` members (`0 < at < len`).
pub fn split_cluster(clusters: &[Vec<usize>], i: usize, at: usize) -> Vec<Vec<usize>> {
    let mut out = clusters.to_vec();
    let tail = out[i].split_off(at);
    out.push(tail);
    canonical(out)
}

/// Member `a` of cluster `i` exchanged with member `b` of cluster `j`.
pub fn swap_members(
    clusters: &[Vec<usize>],
    i: usize,
    a: usize,
    j: usize,
    b: usize,
) -> Vec<Vec<usize>> {
    let mut out = clusters.to_vec();
    let tmp = out[i][a];
    out[i][a] = out[j][b];
    out[j][b] = tmp;
    canonical(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// a b c d with labels 0 0 1 2
    fn four() -> ClusterInstance {
        ClusterInstance::new(3, vec![0, 0, 1, 2]).unwrap()
    }

    #[test]
    fn oracle_examples() {
        let inst = four();
        assert_eq!(delta_oracle(&inst, &[0], &[1]), 0);
        assert_eq!(delta_oracle(&inst, &[0], &[2]), 2);
        assert_eq!(delta_oracle(&inst, &[0, 2, 3], &[0, 2, 3]), 0);
        assert_eq!(delta_oracle(&inst, &[0, 1], &[2, 3]), 4);
    }

    #[test]
    fn four_object_certificate() {
        let inst = four();
        let cert = build_certificate(4, &inst.clusters()).unwrap();
        assert_eq!(cert.count(QueryKind::Split), 2);
        assert_eq!(cert.count(QueryKind::Singleton), 1);
        assert_eq!(cert.queries[0].left, vec![0, 1, 2]);
        assert_eq!(cert.queries[0].right, vec![3]);
        assert_eq!(cert.queries[0].expected, 4);
        assert!(verify_certificate(&cert, &InstanceOracle::new(&inst)));
    }

    #[test]
    fn single_cluster() {
        let inst = ClusterInstance::new(1, vec![0; 5]).unwrap();
        let cert = build_certificate(5, &inst.clusters()).unwrap();
        assert_eq!(cert.count(QueryKind::Split), 0);
        assert_eq!(cert.count(QueryKind::Singleton), 4);
        let oracle = InstanceOracle::new(&inst);
        assert_eq!(recover_adaptive(5, &oracle), vec![vec![0, 1, 2, 3, 4]]);
        assert_eq!(oracle.queries(), 4);
    }

    #[test]
    fn one_object() {
        let inst = ClusterInstance::new(1, vec![0]).unwrap();
        let oracle = InstanceOracle::new(&inst);
        assert_eq!(recover_adaptive(1, &oracle), vec![vec![0]]);
        assert_eq!(oracle.queries(), 0);
    }

    #[test]
    fn wrong_clusterings_rejected() {
        // six objects, labels 0 0 1 1 2 2
        let inst = ClusterInstance::new(3, vec![0, 0, 1, 1, 2, 2]).unwrap();
        let truth = inst.clusters();
        let merged = merge_clusters(&truth, 0, 1);
        let cert = build_certificate(6, &merged).unwrap();
        let oracle = InstanceOracle::new(&inst);
        assert!(!verify_certificate(&cert, &oracle));
        let failing: Vec<&Query> = cert
            .queries
            .iter()
            .filter(|q| delta_oracle(&inst, &q.left, &q.right) != q.expected)
            .collect();
        assert!(
            failing
                .iter()
                .any(|q| q.kind == QueryKind::Singleton
                    && delta_oracle(&inst, &q.left, &q.right) == 2)
        );

        let split = split_cluster(&truth, 0, 1);
        let cert = build_certificate(6, &split).unwrap();
        let short = cert
            .queries
            .iter()
            .find(|q| delta_oracle(&inst, &q.left, &q.right) != q.expected)
            .unwrap();
        assert_eq!(short.kind, QueryKind::Split);
        assert!(delta_oracle(&inst, &short.left, &short.right) < short.expected);
    }

    #[test]
    fn partition_checks() {
        assert!(build_certificate(3, &[vec![0, 1]]).is_err());
        assert!(build_certificate(2, &[vec![0, 1], vec![1]]).is_err());
        assert!(build_certificate(2, &[vec![0, 2]]).is_err());
        assert!(ClusterInstance::new(3, vec![0, 1]).is_err());
        assert!(ClusterInstance::new(2, vec![0, 2]).is_err());
    }

    #[test]
    fn random_instances_recover() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let k = rng.random_range(1..=6);
            let n = rng.random_range(k..=30);
            let inst = ClusterInstance::random(n, k, &mut rng);
            let cert = build_certificate(n, &inst.clusters()).unwrap();
            assert_eq!(cert.queries.len(), n - 1);
            let oracle = InstanceOracle::new(&inst);
            assert!(same_partition(
                &recover_adaptive(n, &oracle),
                &inst.clusters()
            ));
            assert!(oracle.queries() <= n * k);
        }
    }

    #[test]
    fn json_round_trip() {
        let inst = four();
        let cert = build_certificate(4, &inst.clusters()).unwrap();
        let text = serde_json::to_string(&cert).unwrap();
        assert!(text.contains("\"queries\""));
        assert_eq!(serde_json::from_str::<Certificate>(&text).unwrap(), cert);
        let hidden = ClusterInstance {
            labels: None,
            ..inst.clone()
        };
        assert_eq!(
            serde_json::to_string(&hidden).unwrap(),
            r#"{"objects":4,"k":3}"#
        );
        assert_eq!(
            serde_json::from_str::<ClusterInstance>(&serde_json::to_string(&inst).unwrap())
                .unwrap(),
            inst
        );
    }
}
