//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line per criterion, then fails if any criterion failed.

use std::f64::consts::{FRAC_PI_4, PI};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use afsearch::bnn::{
    evaluate, fuse_sign_threshold, pack_bits, sign, ste_backward, train_epoch, verify_fusion, AdamConfig,
    AdamState, BnnError, FusedThreshold, Model, ModelSpec,
};
use afsearch::cli::data::{split_train_validation, synthetic, SYNTHETIC_SHAPE};
use afsearch::cli::{cmd_search, FitnessMode, RunConfig};
use afsearch::expr::{
    catalog_af, ActivationFn, BinaryOp, ChannelActivation, EncodingType, Genome, UnaryOp,
};
use afsearch::fitness::{
    analytic_fitness, evaluate_activation, AnalyticEvaluator, EpochControl, EvalStatus, Evaluator, FitnessCache,
    FitnessConfig, NetTrainer, Trainer, TrainingEvaluator,
};
use afsearch::ga::{self, GARunState, GaConfig, SelectionTechnique};
use afsearch::Tensor;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Error normalized so that `< 1e-4` passes: relative for gradients of
/// magnitude ≥ 1e-2, absolute (scaled so 1e-6 maps to 1e-4) below that.
fn grad_err(a: f64, b: f64) -> f64 {
    let mag = a.abs().max(b.abs());
    if mag < 1e-2 {
        (a - b).abs() * 100.0
    } else {
        (a - b).abs() / mag
    }
}

// 1. Operator gradients against central differences.

fn unary_point(op: UnaryOp, rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let x: f64 = rng.gen_range(-3.0..3.0);
        let ok = match op {
            UnaryOp::Abs
            | UnaryOp::Relu
            | UnaryOp::NegPart
            | UnaryOp::ExpNegAbs
            | UnaryOp::SignSqrt
            | UnaryOp::LogAbs => x.abs() > 1e-3,
            UnaryOp::Tan => ((x - PI / 2.0) / PI - ((x - PI / 2.0) / PI).round()).abs() * PI > 1e-2,
            _ => true,
        };
        if ok {
            return x;
        }
    }
}

fn binary_point(op: BinaryOp, rng: &mut ChaCha8Rng) -> (f64, f64) {
    loop {
        let x: f64 = rng.gen_range(-3.0..3.0);
        let y: f64 = rng.gen_range(-3.0..3.0);
        let ok = match op {
            BinaryOp::Div => y.abs() > 1e-3,
            BinaryOp::Ratio => (x + y).abs() > 1e-3,
            BinaryOp::Max | BinaryOp::Min | BinaryOp::ExpAbsDiff => (x - y).abs() > 1e-3,
            _ => true,
        };
        if ok {
            return (x, y);
        }
    }
}

fn criterion_gradients() -> Outcome {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut note = |err: f64, what: String| {
        if err > worst {
            worst = err;
            worst_at = what;
        }
    };
    for i in 0..22 {
        let op = UnaryOp::from_index(i).unwrap();
        for _ in 0..100 {
            let x = unary_point(op, &mut rng);
            let a: f64 = rng.gen_range(-2.0..2.0);
            let (dx, da) = op.grad(x, a);
            let nx = (op.apply(x + h, a) - op.apply(x - h, a)) / (2.0 * h);
            let na = (op.apply(x, a + h) - op.apply(x, a - h)) / (2.0 * h);
            note(grad_err(dx, nx), format!("{} d/dx at {x}", op.name()));
            note(grad_err(da, na), format!("{} d/da at {x}", op.name()));
        }
    }
    for i in 0..11 {
        let op = BinaryOp::from_index(i).unwrap();
        for _ in 0..100 {
            let (x, y) = binary_point(op, &mut rng);
            let b: f64 = rng.gen_range(-1.0..2.0);
            let (dx, dy, db) = op.grad(x, y, b);
            let nx = (op.apply(x + h, y, b) - op.apply(x - h, y, b)) / (2.0 * h);
            let ny = (op.apply(x, y + h, b) - op.apply(x, y - h, b)) / (2.0 * h);
            let nb = (op.apply(x, y, b + h) - op.apply(x, y, b - h)) / (2.0 * h);
            note(grad_err(dx, nx), format!("{} d/dx at ({x}, {y})", op.name()));
            note(grad_err(dy, ny), format!("{} d/dy at ({x}, {y})", op.name()));
            note(grad_err(db, nb), format!("{} d/db at ({x}, {y})", op.name()));
        }
    }
    outcome(worst < 1e-4, format!("3,300 points, worst normalized error {worst:.2e} ({worst_at})"))
}

// 2. Catalog formulas, written out independently of the operator tables.

/// `erf(x) = 2/√π · e^(−x²) · Σ 2ⁿ x^(2n+1) / (2n+1)!!`. Every term is
/// positive, so there is no cancellation anywhere on `[−10, 10]`.
fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    while term.abs() > 1e-18 * sum.abs() {
        n += 1.0;
        term *= 2.0 * x * x / (2.0 * n + 1.0);
        sum += term;
    }
    std::f64::consts::FRAC_2_SQRT_PI * (-x * x).exp() * sum
}

fn catalog_formula(n: usize, x: f64, a: f64, b: f64) -> f64 {
    let erf = erf_series;
    match n {
        1 => x.sin() - x.cos(),
        2 => x.sin() + x.cos(),
        3 => x.max(0.0) + x.sin(),
        4 => b * x.cos() + (1.0 - b) * x,
        5 => x.min(0.0) + x.sin(),
        6 => b * erf(x) + (1.0 - b) * x.max(0.0),
        7 => (-x * x).exp() - x.sin(),
        8 => x.cos() + x.atan(),
        9 => b * x.cos() + (1.0 - b) * x.atan(),
        10 => x.cos() - x.atan(),
        11 => (x.atan() / 2.0).cos() + x,
        12 => b * (x + a).cos() + (1.0 - b) * x,
        13 => x.atan().cos() + x,
        14 => erf(x).cos() - x,
        15 => (-x).cos() + x,
        _ => unreachable!(),
    }
}

fn criterion_catalog() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut worst = 0.0f64;
    let mut worst_af = 0;
    for n in 1..=15 {
        let ActivationFn::Expr(mut af) = catalog_af(&format!("AF{n}"), 1).unwrap() else {
            return outcome(false, format!("AF{n} is not an expression"));
        };
        // Random parameters, read back as stored so the oracle sees the same values.
        for p in af.params_mut() {
            p[0] = rng.gen_range(-1.5f32..1.5);
        }
        let owners = af.param_owners().to_vec();
        let mut a = 0.0;
        let mut b = 0.0;
        for (slot, owner) in owners.iter().enumerate() {
            let v = af.params()[slot][0] as f64;
            match owner {
                afsearch::expr::ParamOwner::Unary(_) => a = v,
                afsearch::expr::ParamOwner::Binary(_) => b = v,
            }
        }
        for _ in 0..1000 {
            let x: f64 = rng.gen_range(-10.0..10.0);
            let err = (af.value(x, 0) - catalog_formula(n, x, a, b)).abs();
            if err > worst {
                worst = err;
                worst_af = n;
            }
        }
    }
    let rsign = catalog_af("RSign", 1).unwrap();
    let rsign_ok = (0..=10_000).all(|i| {
        let x = -5.0 + i as f64 * 1e-3;
        sign(rsign.value(x, 0) as f32) == sign(x as f32)
    }) && sign(rsign.value(0.0, 0) as f32) == 1.0;
    let mut rprelu = catalog_af("RPReLU", 1).unwrap();
    {
        let p = rprelu.params_mut();
        p[0][0] = 0.0;
        p[1][0] = 0.0;
        p[2][0] = 1.0;
    }
    let rprelu_ok = (0..=10_000).all(|i| {
        let x = -5.0 + i as f64 * 1e-3;
        rprelu.value(x, 0) == x
    });
    outcome(
        worst <= 1e-12 && rsign_ok && rprelu_ok,
        format!("max |AF - formula| {worst:.1e} (AF{worst_af}); RSign(α=0)=sign {rsign_ok}; RPReLU identity {rprelu_ok}"),
    )
}

// 3. Sign and straight-through contracts.

fn criterion_ste() -> Outcome {
    let xs: Vec<f32> = (0..=10_000).map(|i| (-2.0 + 4.0 * i as f64 / 10_000.0) as f32).collect();
    let x = Tensor::from_vec(&[xs.len()], xs.clone()).unwrap();
    let y = afsearch::bnn::sign_forward(&x);
    let signs_ok = y
        .data()
        .iter()
        .zip(&xs)
        .all(|(&s, &v)| (s == 1.0 || s == -1.0) && (s == 1.0) == (v >= 0.0));
    let zero_ok = sign(0.0) == 1.0 && sign(-0.0) == 1.0;
    let g = Tensor::full(&[xs.len()], 1.0);
    let dx = ste_backward(&x, &g, 1.0).unwrap();
    let ste_ok = dx
        .data()
        .iter()
        .zip(&xs)
        .all(|(&d, &v)| if v.abs() >= 1.0 { d == 0.0 } else { d == 1.0 });
    let boundary = xs.iter().filter(|v| v.abs() == 1.0).count();
    outcome(
        signs_ok && zero_ok && ste_ok && boundary == 2,
        format!("10,001 points; sign {signs_ok}, sign(0)=+1 {zero_ok}, STE {ste_ok}"),
    )
}

// 4. Packed xnor/popcount dot product against the float dot product.

fn float_dot(a: &[f32], b: &[f32]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f32>() as i64
}

fn from_bits(bits: u64, n: usize) -> Vec<f32> {
    (0..n).map(|i| if bits >> i & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

fn criterion_bits() -> Outcome {
    let mut cases = 0u64;
    let mut mismatches = 0u64;
    for n in 1..=8usize {
        for ab in 0..(1u64 << (2 * n)) {
            let a = from_bits(ab & ((1 << n) - 1), n);
            let b = from_bits(ab >> n, n);
            let got = afsearch::bnn::xnor_popcount_dot(&pack_bits(&a).unwrap(), &pack_bits(&b).unwrap(), n).unwrap();
            cases += 1;
            mismatches += (got != float_dot(&a, &b)) as u64;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let sizes: Vec<usize> = (9..=16).chain([64, 1000, 4096]).collect();
    for &n in &sizes {
        for _ in 0..10_000 {
            let a: Vec<f32> = (0..n).map(|_| if rng.gen() { 1.0 } else { -1.0 }).collect();
            let b: Vec<f32> = (0..n).map(|_| if rng.gen() { 1.0 } else { -1.0 }).collect();
            let got = afsearch::bnn::xnor_popcount_dot(&pack_bits(&a).unwrap(), &pack_bits(&b).unwrap(), n).unwrap();
            cases += 1;
            mismatches += (got != float_dot(&a, &b)) as u64;
        }
    }
    outcome(mismatches == 0, format!("{cases} cases, {mismatches} mismatches"))
}

// 5. GA against exhaustive enumeration.

fn criterion_enumeration() -> Outcome {
    let mut all: Vec<f64> = Genome::all_type_i().map(|g| analytic_fitness(&g)).collect();
    if all.len() != 5324 {
        return outcome(false, format!("enumerated {} genomes", all.len()));
    }
    all.sort_by(|a, b| b.total_cmp(a));
    let top = all.len() / 100;
    let cutoff = all[top];
    let cfg = GaConfig {
        population_size: 30,
        budget: 2000,
        mutation_probability: 1.0,
        ..GaConfig::default()
    };
    let mut hits = 0;
    let mut ranks = Vec::new();
    for seed in 0..10u64 {
        let cache = FitnessCache::new();
        let (report, _) = ga::run(&cfg, seed, &AnalyticEvaluator, &cache, 1).unwrap();
        let rank = all.iter().filter(|&&f| f > report.best_fitness).count();
        ranks.push(rank);
        if report.best_fitness > cutoff {
            hits += 1;
        }
    }
    outcome(
        hits >= 9,
        format!("{hits}/10 seeds in the top 1% ({top} of 5,324); best ranks {ranks:?}"),
    )
}

// 6. Structural invariants of the search loop.

fn criterion_invariants() -> Outcome {
    let cfg = GaConfig {
        budget: 1000,
        stagnation_limit: 1_000_000,
        ..GaConfig::default()
    };
    let cache = FitnessCache::new();
    let ev = AnalyticEvaluator;
    let mut state = GARunState::init(&cfg, 5, &ev, &cache, 1).unwrap();
    let mut problems = Vec::new();
    let mut tournaments = 0;
    for step in 0..1000 {
        let before = state.population.members().to_vec();
        let rec = state.step(&cfg, &ev, &cache);
        let after = state.population.members();
        if after.len() != cfg.population_size {
            problems.push(format!("step {step}: size {}", after.len()));
        }
        if !state.population.is_sorted() {
            problems.push(format!("step {step}: unsorted"));
        }
        if after[0].fitness < before[0].fitness || after[after.len() - 1].fitness < before[before.len() - 1].fitness {
            problems.push(format!("step {step}: best or worst decreased"));
        }
        if rec.technique == SelectionTechnique::Tournament {
            tournaments += 1;
            if before[rec.parents.1].fitness > before[rec.parents.0].fitness {
                problems.push(format!("step {step}: tournament parent 2 fitter"));
            }
        }
        if Genome::new(rec.offspring.encoding(), rec.offspring.genes().to_vec()).is_err() {
            problems.push(format!("step {step}: invalid offspring {}", rec.offspring));
        }
    }
    outcome(
        problems.is_empty() && state.steps == 1000,
        if problems.is_empty() {
            format!("1,000 steps, {tournaments} tournaments, no violations")
        } else {
            problems[..problems.len().min(3)].join("; ")
        },
    )
}

// 7. End-to-end training on synthetic data.

fn synthetic_trainer() -> NetTrainer {
    let data = synthetic(&SYNTHETIC_SHAPE, 1250, 2, 0.5, 0).unwrap();
    let (train, validation) = split_train_validation(&data, 0);
    NetTrainer {
        spec: ModelSpec::tiny_bin_net(SYNTHETIC_SHAPE, 2, 8),
        train,
        validation,
    }
}

fn criterion_training() -> Outcome {
    let trainer = synthetic_trainer();
    if trainer.train.len() != 1000 || trainer.validation.len() != 250 {
        return outcome(false, "split is not 1000/250");
    }
    let mut model = Model::new(trainer.spec.clone(), 1).unwrap();
    let mut adam = AdamState::new(AdamConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut reached = None;
    let mut best = 0.0f64;
    for epoch in 1..=50 {
        train_epoch(&mut model, &mut adam, &trainer.train, 128, &mut rng).unwrap();
        let acc = evaluate(&model, &trainer.train, 256).unwrap();
        best = best.max(acc);
        if acc >= 0.9 {
            reached = Some(epoch);
            break;
        }
    }
    let config = FitnessConfig::default();
    let af1 = catalog_af("AF1", 1).unwrap();
    let r = evaluate_activation(&trainer, Some(&af1), &config, config.eval_seed(0), config.threshold_at(0)).unwrap();
    let af1_ok = r.status == EvalStatus::Completed && r.epoch_history.len() == config.epochs && r.fitness > 0.11;
    outcome(
        reached.is_some() && af1_ok,
        format!(
            "baseline train acc ≥ 0.9 at epoch {} (best {best:.3}); AF1 {:?} after {} epochs, fitness {:.3}",
            reached.map_or("-".to_string(), |e| e.to_string()),
            r.status,
            r.epoch_history.len(),
            r.fitness
        ),
    )
}

// 8. Early rejection with a scripted trainer.

struct Scripted {
    accuracies: Vec<f64>,
    epochs_run: std::sync::atomic::AtomicUsize,
}

impl Trainer for Scripted {
    fn train(
        &self,
        _af: Option<&ActivationFn>,
        config: &FitnessConfig,
        _seed: u64,
        on_epoch: &mut dyn FnMut(usize, f64) -> EpochControl,
    ) -> Result<(), BnnError> {
        for epoch in 1..=config.epochs {
            self.epochs_run.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            if on_epoch(epoch, self.accuracies[(epoch - 1).min(self.accuracies.len() - 1)]) == EpochControl::Stop {
                break;
            }
        }
        Ok(())
    }

    fn fingerprint(&self) -> u64 {
        1
    }
}

fn criterion_rejection() -> Outcome {
    let stub = Scripted {
        accuracies: vec![0.10, 0.5, 0.6],
        epochs_run: 0.into(),
    };
    let config = FitnessConfig::default();
    let r = evaluate_activation(&stub, None, &config, 0, 0.11).unwrap();
    let work = stub.epochs_run.load(std::sync::atomic::Ordering::SeqCst);
    let rejected = r.status == EvalStatus::EarlyRejected && work == 1 && r.epoch_history == vec![0.10];

    let ev = TrainingEvaluator::new(
        Scripted {
            accuracies: vec![0.3],
            epochs_run: 0.into(),
        },
        config,
    )
    .unwrap();
    let expected = [
        (0, 0.11),
        (499, 0.11),
        (500, 0.25),
        (1499, 0.25),
        (1500, 0.35),
        (2999, 0.35),
        (3000, 0.40),
        (100_000, 0.40),
    ];
    let schedule_ok = expected.iter().all(|&(i, t)| ev.threshold_at(i) == t);
    let genome: Genome = "t1:U11-U12-B1".parse().unwrap();
    let at_500 = ev.evaluate(&genome, 500).unwrap().status == EvalStatus::Completed;
    let at_1500 = ev.evaluate(&genome, 1500).unwrap().status == EvalStatus::EarlyRejected;
    outcome(
        rejected && schedule_ok && at_500 && at_1500,
        format!(
            "{:?} after {work} epoch(s); schedule switches at 500/1500/3000 {schedule_ok}; 0.30 passes at 500 {at_500}, rejected at 1500 {at_1500}",
            r.status
        ),
    )
}

// 9. Threshold fusion.

fn criterion_fusion() -> Outcome {
    let mut fused_names = Vec::new();
    let mut skipped = Vec::new();
    let mut problems = Vec::new();
    for n in 1..=15 {
        let name = format!("AF{n}");
        let af = catalog_af(&name, 1).unwrap();
        let fused = fuse_sign_threshold(&af, 0);
        if let FusedThreshold::Unfusable { .. } = fused {
            if n <= 2 {
                problems.push(format!("{name} unfusable"));
            }
            skipped.push(name);
            continue;
        }
        let check = verify_fusion(&af, 0, &fused, 100_000, n as u64).unwrap();
        if !check.passed() {
            problems.push(format!("{name}: {} violations", check.violations));
        }
        if n == 1 {
            let t = fused.thresholds();
            let ok = !t.is_empty()
                && t.iter().all(|&v| {
                    let k = ((v - FRAC_PI_4) / PI).round();
                    (v - (FRAC_PI_4 + k * PI)).abs() < 1e-9
                });
            let expected = (-30..=30).filter(|&k| (FRAC_PI_4 + k as f64 * PI).abs() <= 64.0).count();
            if !ok || t.len() != expected {
                problems.push(format!("AF1 thresholds: {} found, {expected} expected, on grid {ok}", t.len()));
            }
        }
        fused_names.push(name);
    }
    outcome(
        problems.is_empty(),
        format!(
            "fused {} ({}); non-monotone skipped: {}{}",
            fused_names.len(),
            fused_names.join(" "),
            skipped.join(" "),
            if problems.is_empty() {
                String::new()
            } else {
                format!("; {}", problems.join("; "))
            }
        ),
    )
}

// 10. Reproducibility of search output.

fn strip_wall_time(jsonl: &str) -> String {
    jsonl
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("wall_time_s");
            v.to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn search_files(cfg: &RunConfig, jobs: usize) -> (String, String, Vec<(String, f64)>) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        out_dir: dir.path().join("run"),
        ..cfg.clone()
    };
    let out = cmd_search(&cfg, jobs).unwrap();
    let report = std::fs::read_to_string(&out.report_path).unwrap();
    let log = std::fs::read_to_string(&out.log_path).unwrap();
    let pop = out
        .report
        .final_population
        .iter()
        .map(|m| (m.genome.to_string(), m.fitness))
        .collect();
    (report, log, pop)
}

fn criterion_reproducibility() -> Outcome {
    let analytic = RunConfig {
        fitness: FitnessMode::Analytic,
        budget: 500,
        seed: 7,
        ..RunConfig::default()
    };
    let (r1, l1, p1) = search_files(&analytic, 1);
    let (r2, l2, _) = search_files(&analytic, 1);
    let (_, _, p4) = search_files(&analytic, 4);
    let analytic_ok = r1 == r2 && l1 == l2 && p1 == p4;

    let trained = RunConfig {
        fitness: FitnessMode::Train,
        encoding: EncodingType::TypeII,
        population_size: 6,
        budget: 4,
        epochs: 2,
        dataset_samples: 200,
        model_width: 4,
        seed: 3,
        ..RunConfig::default()
    };
    let (t1, tl1, tp1) = search_files(&trained, 1);
    let (t2, tl2, _) = search_files(&trained, 1);
    let (_, tl4, tp4) = search_files(&trained, 4);
    let trained_ok = t1 == t2 && strip_wall_time(&tl1) == strip_wall_time(&tl2) && tp1 == tp4 && strip_wall_time(&tl1) == strip_wall_time(&tl4);
    outcome(
        analytic_ok && trained_ok,
        format!("analytic: identical report/log {}, jobs 4 = jobs 1 {}; trained: identical {}", r1 == r2 && l1 == l2, p1 == p4, trained_ok),
    )
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("operator gradients", Duration::from_secs(10), criterion_gradients),
        ("catalog fidelity", Duration::from_secs(5), criterion_catalog),
        ("sign/STE contracts", Duration::from_secs(5), criterion_ste),
        ("bit-path equivalence", Duration::from_secs(30), criterion_bits),
        ("enumeration vs GA", Duration::from_secs(60), criterion_enumeration),
        ("GA invariants", Duration::from_secs(10), criterion_invariants),
        ("end-to-end training", Duration::from_secs(120), criterion_training),
        ("early rejection", Duration::from_secs(5), criterion_rejection),
        ("threshold fusion", Duration::from_secs(20), criterion_fusion),
        ("reproducibility", Duration::from_secs(120), criterion_reproducibility),
    ];
    let mut failed = Vec::new();
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed <= *limit;
        println!(
            "criterion {:>2} {:<22} {}  [{:.2}s / {}s] {}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs(),
            o.detail
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
