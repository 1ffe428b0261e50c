use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;

use super::args::{Cli, Command};
use super::config::{FitnessMode, RunConfig};
use super::data::{encode_cifar10, load_dataset, split_train_validation, synthetic, CIFAR_SHAPE};
use super::render::render_formula;
use super::CliError;
use crate::bnn::{fuse_sign_threshold, verify_fusion, FusedThreshold, FusionCheck};
use crate::expr::{
    catalog_af, canonicalize, search_space_size, ActivationExpr, ActivationFn, EncodingType, ExprError, Genome,
};
use crate::fitness::{
    cached_evaluate, evaluate_activation, AnalyticEvaluator, EvalRecord, Evaluator, FitnessCache, FitnessResult,
    NetTrainer, TrainingEvaluator,
};
use crate::ga::{self, SearchReport};

/// Uniform samples used to verify a fused threshold.
pub const FUSE_SAMPLES: usize = 100_000;

const REPORT_FILE: &str = "search_report.json";
const LOG_FILE: &str = "evaluations.jsonl";
const META_FILE: &str = "run_metadata.json";
const ENUM_FILE: &str = "enumeration.csv";
const GEN_DATA_FILE: &str = "synthetic_cifar10.bin";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

/// Loads the configured dataset and splits it 80/20 into train and
/// validation.
pub fn build_trainer(cfg: &RunConfig) -> Result<NetTrainer, CliError> {
    let data = load_dataset(&cfg.dataset_source())?;
    let (train, validation) = split_train_validation(&data, cfg.seed);
    let spec = cfg.model_spec(&data.sample_shape, data.classes);
    spec.validate()?;
    Ok(NetTrainer {
        spec,
        train,
        validation,
    })
}

pub fn build_evaluator(cfg: &RunConfig) -> Result<Box<dyn Evaluator>, CliError> {
    Ok(match cfg.fitness {
        FitnessMode::Analytic => Box::new(AnalyticEvaluator),
        FitnessMode::Train => Box::new(TrainingEvaluator::new(build_trainer(cfg)?, cfg.fitness_config())?),
    })
}

fn unix_seconds(t: SystemTime) -> f64 {
    t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

#[derive(Debug, Clone, Serialize)]
struct MemberView {
    genome: Genome,
    formula: String,
    fitness: f64,
    status: crate::fitness::EvalStatus,
    eval_index: u64,
}

#[derive(Debug)]
pub struct SearchOutcome {
    pub report: SearchReport,
    pub records: Vec<EvalRecord>,
    pub report_path: PathBuf,
    pub log_path: PathBuf,
}

/// Runs a search and writes the report, the evaluation log, and a metadata
/// file with timings. The report and log depend only on the config and
/// seed; everything time-dependent goes to the metadata file.
pub fn cmd_search(cfg: &RunConfig, jobs: usize) -> Result<SearchOutcome, CliError> {
    cfg.validate()?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let evaluator = build_evaluator(cfg)?;
    let cache = FitnessCache::new();
    let (report, records) = ga::run(&cfg.ga_config(), cfg.seed, evaluator.as_ref(), &cache, jobs.max(1))?;

    let mut log = String::new();
    for r in &records {
        log.push_str(&serde_json::to_string(r)?);
        log.push('\n');
    }
    let log_path = cfg.out_dir.join(LOG_FILE);
    write_file(&log_path, log.as_bytes())?;

    let mut config = serde_json::to_value(cfg)?;
    if let Some(obj) = config.as_object_mut() {
        obj.remove("out_dir");
    }
    let population: Vec<MemberView> = report
        .final_population
        .iter()
        .map(|m| MemberView {
            genome: m.genome.clone(),
            formula: render_formula(&m.genome),
            fitness: m.fitness,
            status: m.status,
            eval_index: m.eval_index,
        })
        .collect();
    let doc = json!({
        "config": config,
        "seed": report.seed,
        "best_genome": report.best_genome,
        "best_formula": render_formula(&report.best_genome),
        "best_canonical": canonicalize(&report.best_genome).to_string(),
        "best_fitness": report.best_fitness,
        "termination": report.termination,
        "steps": report.steps,
        "evaluations": report.evaluations,
        "best_history": report.best_history,
        "final_population": population,
        "evaluation_log": LOG_FILE,
        "preprocessing": "pixels scaled to [-1, 1]; no augmentation",
    });
    let report_path = cfg.out_dir.join(REPORT_FILE);
    write_file(&report_path, serde_json::to_string_pretty(&doc)?.as_bytes())?;

    let meta = json!({
        "started_unix_s": unix_seconds(started),
        "finished_unix_s": unix_seconds(SystemTime::now()),
        "wall_time_s": clock.elapsed().as_secs_f64(),
        "jobs": jobs,
        "cache_entries": cache.len(),
    });
    write_file(&cfg.out_dir.join(META_FILE), serde_json::to_string_pretty(&meta)?.as_bytes())?;

    Ok(SearchOutcome {
        report,
        records,
        report_path,
        log_path,
    })
}

/// One enumeration row: genome, canonical form, fitness.
pub type EnumRow = (Genome, String, f64);

/// Scores every Type-I genome and writes `genome,canonical,fitness` rows,
/// best first. Ties keep enumeration order.
pub fn cmd_enumerate(cfg: &RunConfig) -> Result<(PathBuf, Vec<EnumRow>), CliError> {
    if cfg.encoding == EncodingType::TypeII {
        return Err(CliError::Refused(format!(
            "enumeration covers Type-I only; the Type-II space holds {} genomes",
            group_thousands(search_space_size(EncodingType::TypeII))
        )));
    }
    cfg.validate()?;
    let evaluator = build_evaluator(cfg)?;
    let cache = FitnessCache::new();
    let mut rows = Vec::new();
    for (i, g) in Genome::all_type_i().enumerate() {
        let (r, _) = cached_evaluate(evaluator.as_ref(), &cache, &g, i as u64)?;
        let canonical = canonicalize(&g).to_string();
        rows.push((g, canonical, r.fitness));
    }
    rows.sort_by(|a, b| b.2.total_cmp(&a.2));
    let path = cfg.out_dir.join(ENUM_FILE);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["genome", "canonical", "fitness"])?;
    for (g, c, f) in &rows {
        w.write_record([g.to_string(), c.clone(), f.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error()).map_err(io_err(&path))?;
    write_file(&path, &bytes)?;
    Ok((path, rows))
}

fn group_thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// What `eval` and `fuse` operate on.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalTarget {
    /// Plain sign binarization.
    Baseline,
    Activation(ActivationFn),
}

const TARGET_GRAMMAR: &str = "a genome such as t1:U11-U12-B1, AF1..AF15, RSign, RPReLU, or baseline";

pub fn parse_target(text: &str) -> Result<EvalTarget, CliError> {
    let text = text.trim();
    if text.eq_ignore_ascii_case("baseline") {
        return Ok(EvalTarget::Baseline);
    }
    let target = |e: ExprError| CliError::Target {
        token: text.to_string(),
        reason: e.to_string(),
        expected: TARGET_GRAMMAR,
    };
    if text.contains(':') {
        let g: Genome = text.parse().map_err(target)?;
        return Ok(EvalTarget::Activation(ActivationFn::Expr(ActivationExpr::decode(&g, 1)?)));
    }
    catalog_af(text, 1).map(EvalTarget::Activation).map_err(target)
}

/// One training run at evaluation index 0.
pub fn cmd_eval(cfg: &RunConfig, target: &EvalTarget) -> Result<FitnessResult, CliError> {
    cfg.validate()?;
    let trainer = build_trainer(cfg)?;
    let fc = cfg.fitness_config();
    fc.validate()?;
    let af = match target {
        EvalTarget::Baseline => None,
        EvalTarget::Activation(af) => Some(af),
    };
    Ok(evaluate_activation(&trainer, af, &fc, fc.eval_seed(0), fc.threshold_at(0))?)
}

#[derive(Debug, Clone, Serialize)]
pub struct FuseOutcome {
    pub target: String,
    pub fused: FusedThreshold,
    /// `None` when unfusable.
    pub check: Option<FusionCheck>,
}

/// Fuses channel 0 of a freshly initialized activation.
pub fn cmd_fuse(target: &EvalTarget, seed: u64) -> Result<FuseOutcome, CliError> {
    let af = match target {
        EvalTarget::Baseline => ActivationFn::Expr(ActivationExpr::decode(&"t1:U0-U3-B0".parse()?, 1)?),
        EvalTarget::Activation(af) => af.clone(),
    };
    let fused = fuse_sign_threshold(&af, 0);
    let check = verify_fusion(&af, 0, &fused, FUSE_SAMPLES, seed);
    Ok(FuseOutcome {
        target: match target {
            EvalTarget::Baseline => "baseline".into(),
            EvalTarget::Activation(af) => af.to_string(),
        },
        fused,
        check,
    })
}

/// Writes `samples` synthetic `[3, 32, 32]` images as cifar10 records.
pub fn cmd_gen_data(out_dir: &Path, samples: usize, classes: usize, noise: f64, seed: u64) -> Result<PathBuf, CliError> {
    let data = synthetic(&CIFAR_SHAPE, samples, classes, noise, seed)?;
    let path = out_dir.join(GEN_DATA_FILE);
    write_file(&path, &encode_cifar10(&data)?)?;
    Ok(path)
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn w(out: &mut dyn Write, text: String) -> Result<(), CliError> {
    writeln!(out, "{text}").map_err(io_err(Path::new("<stdout>")))
}

/// Runs a parsed command line, printing human-readable results to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = resolve_config(&cli)?;
    match &cli.command {
        Command::Search(o) => {
            o.apply(&mut cfg);
            let s = cmd_search(&cfg, cli.jobs)?;
            let r = &s.report;
            w(out, format!("best genome: {}", r.best_genome))?;
            w(out, format!("formula:     {}", render_formula(&r.best_genome)))?;
            w(out, format!("fitness:     {}", r.best_fitness))?;
            w(
                out,
                format!("steps {}, evaluations {}, stopped by {:?}", r.steps, r.evaluations, r.termination),
            )?;
            w(out, format!("report: {}", s.report_path.display()))?;
        }
        Command::Enumerate(o) => {
            if o.fitness.is_none() {
                cfg.fitness = FitnessMode::Analytic;
            }
            o.apply(&mut cfg);
            let (path, rows) = cmd_enumerate(&cfg)?;
            for (g, _, f) in rows.iter().take(5) {
                w(out, format!("{g}  {f:.6}  {}", render_formula(g)))?;
            }
            w(out, format!("{} rows written to {}", rows.len(), path.display()))?;
        }
        Command::Eval { target, overrides } => {
            overrides.apply(&mut cfg);
            let t = parse_target(target)?;
            let r = cmd_eval(&cfg, &t)?;
            w(out, serde_json::to_string_pretty(&r)?)?;
        }
        Command::Fuse { target } => {
            let t = parse_target(target)?;
            let f = cmd_fuse(&t, cfg.seed)?;
            w(out, serde_json::to_string_pretty(&f.fused)?)?;
            match f.check {
                Some(c) => w(
                    out,
                    format!(
                        "verification: {} ({} samples, {} disagreements, {} away from a threshold)",
                        if c.passed() { "pass" } else { "fail" },
                        c.samples,
                        c.disagreements,
                        c.violations
                    ),
                )?,
                None => w(out, "verification: skipped (unfusable)".into())?,
            }
        }
        Command::GenData { samples, classes, noise } => {
            let p = cmd_gen_data(&cfg.out_dir, *samples, *classes, *noise, cfg.seed)?;
            w(out, format!("wrote {samples} records to {}", p.display()))?;
        }
    }
    Ok(())
}
