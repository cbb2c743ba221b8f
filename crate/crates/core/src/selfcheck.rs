//! Quick invariant suites over every module, plus the model gradient check
//! they share with the test suites.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::clustering::{
    build_certificate, merge_clusters, recover_adaptive, same_partition, verify_certificate,
    ClusterInstance, InstanceOracle,
};
use crate::datagen::{gen_universe, PairSampler, SamplerConfig, SyntheticUniverseSpec};
use crate::harness::{evaluate_containment, evaluate_sizes, OraclePredictor};
use crate::model::{FeatureMultiset, Head, Model, ModelConfig, ModelError, Task, Variant};
use crate::multiset::{
    intersection_size_from_reps, relation_from_sizes, symdiff_size_from_reps, ContainmentRelation,
    LabelVector, Multiset,
};
use crate::nn::{finite_difference_at, relative_error, ParameterStore};

/// Central-difference step for gradient checks.
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Draws whose forward pass comes closer than this to a relu, ℓ1 or min kink
/// are skipped.
pub const GRADCHECK_MIN_MARGIN: f64 = 1e-4;

/// All six variant/head combinations.
pub fn all_variants() -> Vec<(Variant, Head)> {
    let mut out = Vec::new();
    for v in [Variant::Simplex, Variant::Unrestricted, Variant::DeepSets] {
        for h in [Head::SymDiffL1, Head::LearnedOp] {
            out.push((v, h));
        }
    }
    out
}

/// Integer multiset over ids `0..universe` with multiplicities in `0..=max_mult`.
pub fn random_multiset<R: Rng>(rng: &mut R, universe: u64, max_mult: u32) -> Multiset {
    Multiset::from_counts((0..universe).map(|id| (id, rng.random_range(0..=max_mult as u64))))
}

/// Random feature multiset with `1..=max_items` distinct vectors.
pub fn random_feature_multiset<R: Rng>(
    rng: &mut R,
    dim: usize,
    max_items: usize,
) -> FeatureMultiset {
    let n = rng.random_range(1..=max_items);
    FeatureMultiset::from_items(
        (0..n)
            .map(|_| {
                let f = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
                (f, rng.random_range(1..=3) as f64)
            })
            .collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub coords: usize,
}

/// Compares tape gradients with central differences on up to `per_tensor`
/// random coordinates of every parameter tensor. `None` when the draw is
/// within [`GRADCHECK_MIN_MARGIN`] of a kink.
pub fn gradient_check<R: Rng>(
    model: &Model,
    a: &FeatureMultiset,
    b: &FeatureMultiset,
    target: f64,
    per_tensor: usize,
    rng: &mut R,
) -> Result<Option<GradCheck>, ModelError> {
    let out = model.loss_for(a, b, target)?;
    if out.kink_margin < GRADCHECK_MIN_MARGIN {
        return Ok(None);
    }
    let params = model.params();
    let mut coords = Vec::new();
    for i in 0..params.len() {
        let mut js: Vec<usize> = (0..params.value(i).numel()).collect();
        js.shuffle(rng);
        coords.extend(js.into_iter().take(per_tensor).map(|j| (i, j)));
    }
    let loss = |s: &ParameterStore| {
        let mut m = model.clone();
        *m.params_mut() = s.clone();
        m.loss_value(a, b, target).unwrap_or(f64::NAN)
    };
    let fd = finite_difference_at(loss, params, &coords, GRADCHECK_STEP);
    let max_rel_error = coords
        .iter()
        .zip(&fd)
        .map(|(&(i, j), &f)| relative_error(out.grads[i].data()[j], f))
        .fold(0.0, f64::max);
    Ok(Some(GradCheck {
        max_rel_error,
        coords: coords.len(),
    }))
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> CheckResult {
    match f() {
        Ok(detail) => CheckResult {
            name,
            passed: true,
            detail,
        },
        Err(detail) => CheckResult {
            name,
            passed: false,
            detail,
        },
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn multiset_laws(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let n = 2000;
    for _ in 0..n {
        let a = random_multiset(rng, 8, 5);
        let b = random_multiset(rng, 8, 5);
        let (ca, cb) = (a.cardinality(), b.cardinality());
        let sd = a.sym_difference(&b);
        let inter = a.intersect(&b);
        ensure(
            sd.cardinality() == ca + cb - 2.0 * inter.cardinality(),
            || format!("symmetric difference size identity fails for {a:?} {b:?}"),
        )?;
        ensure(a.difference(&a.difference(&b)) == inter, || {
            format!("A \\ (A \\ B) != A ∩ B for {a:?} {b:?}")
        })?;
        ensure(a.difference(&b).msum(&b.difference(&a)) == sd, || {
            format!("A △ B != (A \\ B) + (B \\ A) for {a:?} {b:?}")
        })?;
        ensure(sd.cardinality() >= (ca - cb).abs(), || {
            "|A △ B| < ||A| - |B||".into()
        })?;
        let contained = matches!(
            a.containment_relation(&b),
            ContainmentRelation::Equal | ContainmentRelation::ProperSubset
        );
        ensure(contained == (sd.cardinality() == cb - ca), || {
            format!("containment test disagrees for {a:?} {b:?}")
        })?;
        ensure(
            inter == b.intersect(&a) && a.union(&b) == b.union(&a) && a.intersect(&a) == a,
            || "commutativity or idempotence fails".into(),
        )?;
        for tau in [0.5, 1.0, 1.5] {
            ensure(
                relation_from_sizes(ca, cb, sd.cardinality(), tau) == a.containment_relation(&b),
                || format!("relation_from_sizes disagrees at tau {tau}"),
            )?;
        }
        let (ra, rb) = (
            LabelVector::from_multiset(&a, 8).map_err(|e| e.to_string())?,
            LabelVector::from_multiset(&b, 8).map_err(|e| e.to_string())?,
        );
        ensure(
            symdiff_size_from_reps(&ra, &rb) == Ok(sd.cardinality())
                && intersection_size_from_reps(&ra, &rb) == Ok(inter.cardinality()),
            || "sizes from natural representations disagree".into(),
        )?;
    }
    Ok(format!("{n} random pairs"))
}

fn simplex_cardinality(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let n = 100;
    for seed in 0..n {
        let cfg = ModelConfig::matched(Variant::Simplex, Task::SymDiff, 4, 3);
        let model = Model::new(cfg, seed).map_err(|e| e.to_string())?;
        let set = random_feature_multiset(rng, 4, 6);
        let r = model.represent(&set).map_err(|e| e.to_string())?;
        let mass: f64 = r.iter().sum();
        ensure(
            r.iter().all(|&v| v >= 0.0) && (mass - set.cardinality()).abs() <= 1e-9,
            || {
                format!(
                    "representation mass {mass} vs cardinality {}",
                    set.cardinality()
                )
            },
        )?;
    }
    Ok(format!("{n} untrained models"))
}

fn model_invariants(rng: &mut ChaCha8Rng) -> Result<String, String> {
    for (variant, head) in all_variants() {
        let cfg = ModelConfig::new(variant, head, Task::SymDiff, 3, 4);
        let model = Model::new(cfg, rng.random()).map_err(|e| e.to_string())?;
        let set = random_feature_multiset(rng, 3, 5);
        let mut shuffled = set.items().to_vec();
        shuffled.shuffle(rng);
        let r1 = model.represent(&set).map_err(|e| e.to_string())?;
        let r2 = model
            .represent(&FeatureMultiset::from_items(shuffled))
            .map_err(|e| e.to_string())?;
        ensure(r1 == r2, || {
            format!("{variant}/{head}: order changes the representation")
        })?;
        let other = model
            .represent(&random_feature_multiset(rng, 3, 5))
            .map_err(|e| e.to_string())?;
        let (p, q) = (
            model.predict(&r1, &other).map_err(|e| e.to_string())?,
            model.predict(&other, &r1).map_err(|e| e.to_string())?,
        );
        ensure(p == q, || {
            format!("{variant}/{head}: prediction not symmetric")
        })?;
    }
    Ok("permutation invariance and symmetry for 6 variants".into())
}

fn gradients(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for (variant, head) in all_variants() {
        let cfg = ModelConfig::new(variant, head, Task::SymDiff, 3, 4);
        let mut checked = 0;
        for _ in 0..50 {
            let model = Model::new(cfg.clone(), rng.random()).map_err(|e| e.to_string())?;
            let a = random_feature_multiset(rng, 3, 3);
            let b = random_feature_multiset(rng, 3, 3);
            let target = rng.random_range(0.0..6.0);
            if let Some(g) =
                gradient_check(&model, &a, &b, target, 5, rng).map_err(|e| e.to_string())?
            {
                ensure(g.max_rel_error <= 1e-4, || {
                    format!("{variant}/{head}: relative error {:e}", g.max_rel_error)
                })?;
                worst = worst.max(g.max_rel_error);
                checked += 1;
                if checked == 2 {
                    break;
                }
            }
        }
        ensure(checked == 2, || {
            format!("{variant}/{head}: every draw was kink-adjacent")
        })?;
    }
    Ok(format!("worst relative error {worst:.2e}"))
}

fn data_and_eval() -> Result<String, String> {
    let u =
        gen_universe(&SyntheticUniverseSpec::new(4, 8, 400, 200, 0)).map_err(|e| e.to_string())?;
    ensure(
        u.train
            .ids()
            .iter()
            .all(|id| u.eval.position(*id).is_none()),
        || "train and eval pools share an id".into(),
    )?;
    let mut sampler =
        PairSampler::new(&u.train, SamplerConfig::balanced(2, 5, 1)).map_err(|e| e.to_string())?;
    for _ in 0..500 {
        let p = sampler.next_pair().map_err(|e| e.to_string())?;
        let (a, b) = (p.size_a(), p.size_b());
        ensure(
            p.target_symdiff == a + b - 2.0 * p.target_intersection
                && relation_from_sizes(a, b, p.target_symdiff, 1.0) == p.relation,
            || "pair targets inconsistent".into(),
        )?;
    }
    let oracle = OraclePredictor {
        transform: u.eval.transformation(),
        task: Task::SymDiff,
    };
    let sizes = evaluate_sizes(&oracle, &u.eval, (2, 20), 300, 2).map_err(|e| e.to_string())?;
    let cont =
        evaluate_containment(&oracle, &u.eval, (2, 5), 300, 1.0, 2).map_err(|e| e.to_string())?;
    ensure(
        sizes.mae_symdiff == 0.0 && sizes.mae_intersection == 0.0,
        || "oracle size MAE is not zero".into(),
    )?;
    ensure(cont.containment_accuracy == Some(1.0), || {
        "oracle containment accuracy below 1".into()
    })?;
    Ok("pair identities, disjoint pools, exact oracle".into())
}

fn checkpoint_round_trip(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let cfg = ModelConfig::new(Variant::DeepSets, Head::LearnedOp, Task::Intersection, 3, 2);
    let model = Model::new(cfg, rng.random()).map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    model
        .params()
        .write_to(&mut bytes)
        .map_err(|e| e.to_string())?;
    let back = ParameterStore::read_from(bytes.as_slice()).map_err(|e| e.to_string())?;
    ensure(&back == model.params(), || {
        "checkpoint bytes do not round-trip".into()
    })?;
    Ok(format!("{} bytes", bytes.len()))
}

fn clustering(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let n_inst = 50;
    for _ in 0..n_inst {
        let k = rng.random_range(2..=8);
        let n = rng.random_range(k..=50);
        let inst = ClusterInstance::random(n, k, rng);
        let truth = inst.clusters();
        let cert = build_certificate(n, &truth).map_err(|e| e.to_string())?;
        let oracle = InstanceOracle::new(&inst);
        ensure(cert.queries.len() == n - 1, || {
            format!("certificate has {} queries", cert.queries.len())
        })?;
        ensure(verify_certificate(&cert, &oracle), || {
            "truth rejected".into()
        })?;
        let merged =
            build_certificate(n, &merge_clusters(&truth, 0, 1)).map_err(|e| e.to_string())?;
        ensure(!verify_certificate(&merged, &oracle), || {
            "merged clustering accepted".into()
        })?;
        ensure(
            same_partition(&recover_adaptive(n, &oracle), &truth),
            || "adaptive recovery wrong".into(),
        )?;
    }
    Ok(format!("{n_inst} instances"))
}

/// Every suite, each from its own fixed seed.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    let rng = |i: u64| ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000).wrapping_add(i));
    vec![
        check("multiset_laws", || multiset_laws(&mut rng(1))),
        check("simplex_cardinality", || simplex_cardinality(&mut rng(2))),
        check("model_invariants", || model_invariants(&mut rng(3))),
        check("gradients", || gradients(&mut rng(4))),
        check("data_and_eval", data_and_eval),
        check("checkpoint", || checkpoint_round_trip(&mut rng(5))),
        check("clustering", || clustering(&mut rng(6))),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for r in run_all(0) {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
