use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{analytic_fitness, EvalStatus, FitnessConfig, FitnessError, FitnessResult};
use crate::bnn::{evaluate, train_epoch, AdamConfig, AdamState, BnnError, Dataset, Model, ModelSpec};
use crate::expr::{ActivationExpr, ActivationFn, Genome};
use crate::{mix64, stable_hash};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochControl {
    Continue,
    Stop,
}

/// Trains a fresh model with an activation installed, reporting validation
/// accuracy after every epoch. `on_epoch` receives the 1-based epoch and
/// the accuracy and may stop training early.
pub trait Trainer: Send + Sync {
    fn train(
        &self,
        af: Option<&ActivationFn>,
        config: &FitnessConfig,
        seed: u64,
        on_epoch: &mut dyn FnMut(usize, f64) -> EpochControl,
    ) -> Result<(), BnnError>;

    /// Identifies the model and data, so cached results never cross them.
    fn fingerprint(&self) -> u64;
}

/// [`Trainer`] over a concrete model spec and train/validation split.
#[derive(Debug, Clone)]
pub struct NetTrainer {
    pub spec: ModelSpec,
    pub train: Dataset,
    pub validation: Dataset,
}

fn dataset_hash(d: &Dataset) -> u64 {
    let mut bytes: Vec<u8> = d.images.iter().flat_map(|v| v.to_le_bytes()).collect();
    bytes.extend_from_slice(&d.labels);
    stable_hash(&bytes)
}

impl Trainer for NetTrainer {
    fn train(
        &self,
        af: Option<&ActivationFn>,
        config: &FitnessConfig,
        seed: u64,
        on_epoch: &mut dyn FnMut(usize, f64) -> EpochControl,
    ) -> Result<(), BnnError> {
        let mut model = Model::new(self.spec.clone(), seed)?;
        model.set_af(af)?;
        let mut adam = AdamState::new(AdamConfig {
            lr: config.lr,
            beta1: config.betas[0],
            beta2: config.betas[1],
            ..AdamConfig::default()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed));
        for epoch in 1..=config.epochs {
            train_epoch(&mut model, &mut adam, &self.train, config.batch_size, &mut rng)?;
            let acc = evaluate(&model, &self.validation, config.batch_size)?;
            if on_epoch(epoch, acc) == EpochControl::Stop {
                break;
            }
        }
        Ok(())
    }

    fn fingerprint(&self) -> u64 {
        let spec = serde_json::to_string(&self.spec).expect("spec serializes");
        mix64(stable_hash(spec.as_bytes()) ^ dataset_hash(&self.train) ^ dataset_hash(&self.validation).rotate_left(1))
    }
}

/// Runs the fitness protocol for any activation (or none): train, reject
/// after epoch 1 if below `threshold`, otherwise continue to the budget.
pub fn evaluate_activation(
    trainer: &dyn Trainer,
    af: Option<&ActivationFn>,
    config: &FitnessConfig,
    seed: u64,
    threshold: f64,
) -> Result<FitnessResult, FitnessError> {
    let start = Instant::now();
    let mut history = Vec::with_capacity(config.epochs);
    let mut rejected = false;
    let outcome = trainer.train(af, config, seed, &mut |epoch, acc| {
        history.push(acc);
        if epoch == 1 && acc < threshold {
            rejected = true;
            EpochControl::Stop
        } else {
            EpochControl::Continue
        }
    });
    let wall = start.elapsed().as_secs_f64();
    match outcome {
        Ok(()) => {}
        Err(BnnError::Diverged(_) | BnnError::NonFinite(_)) => return Ok(FitnessResult::diverged(history, wall)),
        Err(e) => return Err(e.into()),
    }
    let fitness = history.last().copied().unwrap_or(0.0);
    if !fitness.is_finite() {
        return Ok(FitnessResult::diverged(history, wall));
    }
    Ok(FitnessResult {
        fitness: fitness.clamp(0.0, 1.0),
        status: if rejected {
            EvalStatus::EarlyRejected
        } else {
            EvalStatus::Completed
        },
        epoch_history: history,
        wall_time_s: wall,
    })
}

/// Scores genomes; the search loop is generic over this.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, genome: &Genome, eval_index: u64) -> Result<FitnessResult, FitnessError>;

    /// Distinguishes evaluators (and their configs) for caching.
    fn fingerprint(&self) -> u64;

    fn seed_for(&self, _eval_index: u64) -> u64 {
        0
    }

    fn threshold_at(&self, _eval_index: u64) -> f64 {
        0.0
    }
}

/// Trained fitness with early rejection.
pub struct TrainingEvaluator<T: Trainer> {
    pub trainer: T,
    pub config: FitnessConfig,
}

impl<T: Trainer> TrainingEvaluator<T> {
    pub fn new(trainer: T, config: FitnessConfig) -> Result<Self, FitnessError> {
        config.validate()?;
        Ok(TrainingEvaluator { trainer, config })
    }
}

impl<T: Trainer> Evaluator for TrainingEvaluator<T> {
    fn evaluate(&self, genome: &Genome, eval_index: u64) -> Result<FitnessResult, FitnessError> {
        let af = ActivationFn::Expr(ActivationExpr::decode(genome, 1)?);
        evaluate_activation(
            &self.trainer,
            Some(&af),
            &self.config,
            self.seed_for(eval_index),
            self.threshold_at(eval_index),
        )
    }

    fn fingerprint(&self) -> u64 {
        mix64(self.trainer.fingerprint() ^ self.config.fingerprint())
    }

    fn seed_for(&self, eval_index: u64) -> u64 {
        self.config.eval_seed(eval_index)
    }

    fn threshold_at(&self, eval_index: u64) -> f64 {
        self.config.threshold_at(eval_index)
    }
}

/// [`analytic_fitness`] as an evaluator; never rejects.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyticEvaluator;

impl Evaluator for AnalyticEvaluator {
    fn evaluate(&self, genome: &Genome, _eval_index: u64) -> Result<FitnessResult, FitnessError> {
        let f = analytic_fitness(genome);
        Ok(FitnessResult {
            fitness: f,
            status: EvalStatus::Completed,
            epoch_history: vec![f],
            wall_time_s: 0.0,
        })
    }

    fn fingerprint(&self) -> u64 {
        0xa11a_1171_c000_0001
    }
}
