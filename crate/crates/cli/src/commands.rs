use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use msl_core::clustering::{
    build_certificate, recover_adaptive, same_partition, verify_certificate, ClusterInstance,
    InstanceOracle,
};
use msl_core::datagen::{
    gen_universe, ObjectPool, SamplerConfig, SamplerMode, SyntheticUniverseSpec,
};
use msl_core::harness::{
    evaluate_containment, evaluate_sizes, run_cross_wire, train as run_training, MetricsWriter,
    TrainConfig,
};
use msl_core::model::{Head, Model, ModelConfig, Task, Variant};
use msl_core::selfcheck::run_all;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{check_writable, require_file, usage, RunConfig};
use crate::{
    ClusterDemoArgs, Common, CrossWireArgs, EvalArgs, GenDataArgs, ModelArgs, SelfcheckArgs,
    TrainArgs,
};

const DEFAULT_ITERATIONS: usize = 300_000;
const DEFAULT_TRAIN_SIZES: (usize, usize) = (2, 5);
const DEFAULT_EVAL_SIZES: (usize, usize) = (2, 20);
const DEFAULT_CONTAINMENT_SIZES: (usize, usize) = (2, 5);
const DEFAULT_EVAL_PAIRS: usize = 30_000;

fn load_config(common: &Common) -> anyhow::Result<(RunConfig, u64)> {
    let file = RunConfig::load(common.config.as_deref())?;
    let seed = common.seed.or(file.seed).unwrap_or(0);
    Ok((file, seed))
}

fn sizes_or(
    flag: Option<(usize, usize)>,
    lo: Option<usize>,
    hi: Option<usize>,
    default: (usize, usize),
) -> (usize, usize) {
    flag.unwrap_or((lo.unwrap_or(default.0), hi.unwrap_or(default.1)))
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    println!("{text}");
    if let Some(path) = path {
        fs::write(path, format!("{text}\n"))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

pub fn gen_data(args: GenDataArgs) -> anyhow::Result<ExitCode> {
    let (file, seed) = load_config(&args.common)?;
    let mut spec = SyntheticUniverseSpec::new(
        args.k.or(file.k).unwrap_or(5),
        args.d.or(file.d).unwrap_or(16),
        args.n_train.or(file.n_train).unwrap_or(5000),
        args.n_eval.or(file.n_eval).unwrap_or(2000),
        seed,
    );
    if let Some(s) = args.noise_sigma.or(file.noise_sigma) {
        spec.noise_sigma = s;
    }
    if let Some(s) = args.prototype_scale.or(file.prototype_scale) {
        spec.prototype_scale = s;
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let out_dir = args
        .out_dir
        .or(file.out_dir)
        .unwrap_or_else(|| PathBuf::from("data"));
    if out_dir.exists() && !out_dir.is_dir() {
        return Err(usage(format!("{} is not a directory", out_dir.display())));
    }

    let universe = gen_universe(&spec)?;
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let train_path = out_dir.join("train.csv");
    let eval_path = out_dir.join("eval.csv");
    universe.train.save_csv(&train_path)?;
    universe.eval.save_csv(&eval_path)?;
    println!(
        "wrote {} ({} objects)",
        train_path.display(),
        universe.train.len()
    );
    println!(
        "wrote {} ({} objects)",
        eval_path.display(),
        universe.eval.len()
    );
    Ok(ExitCode::SUCCESS)
}

/// Flags over file over defaults; `rep_dim` falls back to the pool's label count.
fn train_config(
    m: &ModelArgs,
    file: &RunConfig,
    seed: u64,
    pool: &ObjectPool,
) -> anyhow::Result<TrainConfig> {
    let task = m.task.or(file.task).unwrap_or(Task::SymDiff);
    let variant = m.variant.or(file.variant).unwrap_or(Variant::Simplex);
    let head = m.head.or(file.head).unwrap_or(task.matched_head());
    let rep_dim = m.rep_dim.or(file.rep_dim).unwrap_or(pool.k());
    let (lo, hi) = sizes_or(m.sizes, file.size_min, file.size_max, DEFAULT_TRAIN_SIZES);
    let sampler = SamplerConfig {
        size_min: lo,
        size_max: hi,
        mode: m.sampler.or(file.sampler).unwrap_or(SamplerMode::Uniform),
        seed: seed.wrapping_add(1),
    };
    let model = ModelConfig::new(variant, head, task, pool.dim(), rep_dim);
    let mut cfg = TrainConfig::new(
        model,
        sampler,
        m.iterations
            .or(file.iterations)
            .unwrap_or(DEFAULT_ITERATIONS),
        seed,
    );
    if let Some(v) = m.learning_rate.or(file.learning_rate) {
        cfg.learning_rate = v;
    }
    if let Some(v) = m.beta1.or(file.beta1) {
        cfg.beta1 = v;
    }
    if let Some(v) = m.beta2.or(file.beta2) {
        cfg.beta2 = v;
    }
    if let Some(v) = m.epsilon.or(file.epsilon) {
        cfg.epsilon = v;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn load_pool(path: &Path, what: &str) -> anyhow::Result<ObjectPool> {
    require_file(path, what)?;
    ObjectPool::load_csv(path, None).with_context(|| format!("loading {}", path.display()))
}

pub fn train(args: TrainArgs) -> anyhow::Result<ExitCode> {
    let (file, seed) = load_config(&args.common)?;
    let data = args
        .model
        .train_data
        .clone()
        .or(file.train_data.clone())
        .unwrap_or_else(|| "data/train.csv".into());
    let checkpoint = args
        .checkpoint
        .or(file.checkpoint.clone())
        .unwrap_or_else(|| "model.bin".into());
    let metrics = args
        .metrics
        .or(file.metrics.clone())
        .unwrap_or_else(|| "metrics.jsonl".into());
    check_writable(&checkpoint)?;
    check_writable(&metrics)?;
    let pool = load_pool(&data, "training data")?;
    let mut cfg = train_config(&args.model, &file, seed, &pool)?;
    cfg.checkpoint_path = Some(checkpoint.clone());

    let mut sink = MetricsWriter::create(&metrics)?;
    let outcome = run_training(&cfg, &pool, &mut sink)?;
    println!(
        "trained {}/{}/{} for {} iterations; final mean loss {:.6}",
        cfg.model.variant,
        cfg.model.head,
        cfg.model.task,
        cfg.iterations,
        outcome.final_mean_loss().unwrap_or(f64::NAN)
    );
    println!("checkpoint: {}", checkpoint.display());
    println!("metrics: {}", metrics.display());
    Ok(ExitCode::SUCCESS)
}

pub fn eval(args: EvalArgs) -> anyhow::Result<ExitCode> {
    let (file, seed) = load_config(&args.common)?;
    let checkpoint = args
        .checkpoint
        .or(file.checkpoint)
        .unwrap_or_else(|| "model.bin".into());
    let data = args
        .eval_data
        .or(file.eval_data)
        .unwrap_or_else(|| "data/eval.csv".into());
    let containment = args.containment || file.containment.unwrap_or(false);
    let default_sizes = if containment {
        DEFAULT_CONTAINMENT_SIZES
    } else {
        DEFAULT_EVAL_SIZES
    };
    let sizes = sizes_or(
        args.sizes,
        file.eval_size_min,
        file.eval_size_max,
        default_sizes,
    );
    let pairs = args.pairs.or(file.pairs).unwrap_or(DEFAULT_EVAL_PAIRS);
    let tau = args.tau.or(file.tau).unwrap_or(1.0);
    let report_path = args.report.or(file.report).unwrap_or_else(|| {
        let mut p = checkpoint.clone().into_os_string();
        p.push(".eval.json");
        p.into()
    });

    if pairs == 0 {
        return Err(usage("pairs must be at least 1"));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(usage(format!("tau must be finite and >= 0, got {tau}")));
    }
    let sampler = if containment {
        SamplerConfig::balanced(sizes.0, sizes.1, seed)
    } else {
        SamplerConfig::uniform(sizes.0, sizes.1, seed)
    };
    sampler.validate().map_err(|e| usage(e.to_string()))?;
    require_file(&checkpoint, "checkpoint")?;
    check_writable(&report_path)?;
    let pool = load_pool(&data, "evaluation data")?;
    let model =
        Model::load(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;

    let report = if containment {
        evaluate_containment(&model, &pool, sizes, pairs, tau, seed)?
    } else {
        evaluate_sizes(&model, &pool, sizes, pairs, seed)?
    };
    emit_json(&report, Some(&report_path))?;
    Ok(ExitCode::SUCCESS)
}

pub fn cross_wire(args: CrossWireArgs) -> anyhow::Result<ExitCode> {
    let (file, seed) = load_config(&args.common)?;
    let train_data = args
        .model
        .train_data
        .clone()
        .or(file.train_data.clone())
        .unwrap_or_else(|| "data/train.csv".into());
    let eval_data = args
        .eval_data
        .or(file.eval_data.clone())
        .unwrap_or_else(|| "data/eval.csv".into());
    let sizes = sizes_or(
        args.eval_sizes,
        file.eval_size_min,
        file.eval_size_max,
        DEFAULT_EVAL_SIZES,
    );
    let pairs = args.pairs.or(file.pairs).unwrap_or(DEFAULT_EVAL_PAIRS);
    let report_path = args.report.or(file.report.clone());
    if pairs == 0 {
        return Err(usage("pairs must be at least 1"));
    }
    SamplerConfig::uniform(sizes.0, sizes.1, seed)
        .validate()
        .map_err(|e| usage(e.to_string()))?;
    if let Some(p) = &report_path {
        check_writable(p)?;
    }
    let train_pool = load_pool(&train_data, "training data")?;
    let eval_pool = load_pool(&eval_data, "evaluation data")?;
    let cfg = train_config(&args.model, &file, seed, &train_pool)?;
    if cfg.model.head == Head::LearnedOp {
        return Err(usage("cross-wire needs a fixed head, not learned-op"));
    }

    let report = run_cross_wire(
        &cfg,
        &train_pool,
        &eval_pool,
        sizes,
        pairs,
        seed.wrapping_add(2),
    )?;
    emit_json(&report, report_path.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ClusterSummary {
    instances: usize,
    n: usize,
    k: usize,
    certificates_verified: usize,
    recovered: usize,
    mean_adaptive_queries: f64,
}

pub fn cluster_demo(args: ClusterDemoArgs) -> anyhow::Result<ExitCode> {
    let (file, seed) = load_config(&args.common)?;
    let n = args.n.or(file.n).unwrap_or(20);
    let k = args.k.or(file.clusters).unwrap_or(4);
    let instances = args.instances.or(file.instances).unwrap_or(100);
    if k == 0 || k > n {
        return Err(usage(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut verified, mut recovered, mut adaptive_total) = (0, 0, 0);
    for i in 0..instances {
        let inst = ClusterInstance::random(n, k, &mut rng);
        let cert = build_certificate(n, &inst.clusters())?;
        let ok = verify_certificate(&cert, &InstanceOracle::new(&inst));
        let oracle = InstanceOracle::new(&inst);
        let found = same_partition(&recover_adaptive(n, &oracle), &inst.clusters());
        verified += usize::from(ok);
        recovered += usize::from(found);
        adaptive_total += oracle.queries();
        println!(
            "instance {i}: certificate queries: {}, verified: {ok}, adaptive queries: {}, recovered: {found}",
            cert.queries.len(),
            oracle.queries()
        );
    }
    let summary = ClusterSummary {
        instances,
        n,
        k,
        certificates_verified: verified,
        recovered,
        mean_adaptive_queries: adaptive_total as f64 / instances.max(1) as f64,
    };
    println!("{}", serde_json::to_string(&summary)?);
    Ok(if verified == instances && recovered == instances {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

pub fn selfcheck(args: SelfcheckArgs) -> anyhow::Result<ExitCode> {
    let (_, seed) = load_config(&args.common)?;
    let results = run_all(seed);
    let failed = results.iter().filter(|r| !r.passed).count();
    for r in &results {
        println!(
            "{} {}: {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    println!(
        "{} of {} checks passed",
        results.len() - failed,
        results.len()
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
