use std::sync::Mutex;

use msl_core::datagen::{
    gen_universe, PairSample, PairSampler, SamplerConfig, SyntheticUniverseSpec,
};
use msl_core::harness::{
    dump_representations, evaluate_containment, evaluate_sizes, train, HarnessError, MetricRecord,
    PairPredictor, TrainConfig,
};
use msl_core::model::{Model, ModelConfig, Task, Variant};
use msl_core::multiset::ContainmentRelation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn noiseless_simplex_fits() {
    let mut spec = SyntheticUniverseSpec::new(3, 8, 2000, 500, 5);
    spec.noise_sigma = 0.0;
    let u = gen_universe(&spec).unwrap();
    let cfg = TrainConfig::new(
        ModelConfig::matched(Variant::Simplex, Task::SymDiff, 8, 3),
        SamplerConfig::uniform(2, 5, 6),
        20_000,
        7,
    );
    let out = train(&cfg, &u.train, &mut Vec::new()).unwrap();
    let last = out.final_mean_loss().unwrap();
    assert!(last < 0.05, "final mean loss {last}");
    assert_eq!(out.loss_curve.len(), 200);
}

#[test]
fn checkpoints_identical_and_reloadable() {
    let u = gen_universe(&SyntheticUniverseSpec::new(4, 6, 500, 200, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for run in 0..2 {
        let mut cfg = TrainConfig::new(
            ModelConfig::matched(Variant::DeepSets, Task::Intersection, 6, 4),
            SamplerConfig::uniform(2, 5, 2),
            300,
            3,
        );
        let path = dir.path().join(format!("run{run}.bin"));
        cfg.checkpoint_path = Some(path.clone());
        train(&cfg, &u.train, &mut Vec::new()).unwrap();
        paths.push(path);
    }
    let bytes: Vec<Vec<u8>> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
    assert_eq!(bytes[0], bytes[1]);

    let model = Model::load(&paths[0]).unwrap();
    assert_eq!(model.params().step(), 0);
    let a = evaluate_sizes(&model, &u.eval, (2, 20), 200, 1).unwrap();
    let b = evaluate_sizes(&Model::load(&paths[1]).unwrap(), &u.eval, (2, 20), 200, 1).unwrap();
    assert_eq!(a, b);

    let reps = dir.path().join("reps.csv");
    dump_representations(&model, &u.eval, &reps).unwrap();
    let text = std::fs::read_to_string(reps).unwrap();
    assert_eq!(text.lines().count(), u.eval.len() + 1);
}

#[test]
fn eval_metrics_serialize_as_jsonl_fields() {
    let u = gen_universe(&SyntheticUniverseSpec::new(3, 4, 200, 200, 2)).unwrap();
    let model = Model::new(
        ModelConfig::matched(Variant::Simplex, Task::SymDiff, 4, 3),
        1,
    )
    .unwrap();
    let report = evaluate_containment(&model, &u.eval, (2, 5), 100, 1.0, 3).unwrap();
    let json = serde_json::to_string(&MetricRecord::eval(&report, 0, "abc".into(), 9)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["event"], "eval");
    assert_eq!(v["confusion"].as_array().unwrap().len(), 16);
    assert_eq!(v["seed"], 9);
    let acc = v["containment_accuracy"].as_f64().unwrap();
    let c = report.confusion.unwrap();
    assert_eq!(acc, (0..4).map(|i| c[i][i]).sum::<u64>() as f64 / 100.0);
}

/// `d̂` uniform on `[0, |A| + |B|]`.
struct UniformGuess(Mutex<ChaCha8Rng>);

impl PairPredictor for UniformGuess {
    fn task(&self) -> Task {
        Task::SymDiff
    }

    fn predict_pair(&self, pair: &PairSample) -> Result<f64, HarnessError> {
        let top = pair.size_a() + pair.size_b();
        Ok(self.0.lock().unwrap().random_range(0.0..top))
    }
}

/// Probability that a uniform `d̂` on `[0, a + b]` lands in the true relation's
/// decision region.
fn chance_of_correct(a: f64, b: f64, truth: ContainmentRelation, tau: f64) -> f64 {
    let top = a + b;
    let frac = |x: f64| x.clamp(0.0, top) / top;
    let equal = frac(tau - (a - b).abs());
    let contained = if a != b {
        frac((a - b).abs() + tau) - equal
    } else {
        0.0
    };
    match truth {
        ContainmentRelation::Equal => equal,
        ContainmentRelation::ProperSubset if a < b => contained,
        ContainmentRelation::ProperSuperset if a > b => contained,
        ContainmentRelation::Incomparable => 1.0 - equal - contained,
        _ => 0.0,
    }
}

#[test]
fn uniform_guessing_matches_chance() {
    let u = gen_universe(&SyntheticUniverseSpec::new(5, 4, 200, 1000, 3)).unwrap();
    let n = 20_000;
    let guess = UniformGuess(Mutex::new(ChaCha8Rng::seed_from_u64(1)));
    let report = evaluate_containment(&guess, &u.eval, (2, 5), n, 1.0, 8).unwrap();
    let pairs = PairSampler::new(&u.eval, SamplerConfig::balanced(2, 5, 8))
        .unwrap()
        .take_pairs(n)
        .unwrap();
    let expected: f64 = pairs
        .iter()
        .map(|p| chance_of_correct(p.size_a(), p.size_b(), p.relation, 1.0))
        .sum::<f64>()
        / n as f64;
    let acc = report.containment_accuracy.unwrap();
    let sd = (expected * (1.0 - expected) / n as f64).sqrt();
    assert!(
        (acc - expected).abs() <= 4.0 * sd,
        "accuracy {acc}, expected {expected}"
    );
}
