//! Genome scoring: train a binary network with the candidate activation and
//! report validation accuracy, with early rejection after epoch 1 and a
//! cache shared across canonically equivalent genomes.

mod analytic;
mod cache;
mod trainer;

pub use analytic::analytic_fitness;
pub use cache::{cached_evaluate, EvalRecord, FitnessCache};
pub use trainer::{
    evaluate_activation, AnalyticEvaluator, EpochControl, Evaluator, NetTrainer, Trainer, TrainingEvaluator,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bnn::BnnError;
use crate::expr::ExprError;
use crate::{mix64, stable_hash};

#[derive(Debug, Error)]
pub enum FitnessError {
    #[error("invalid fitness config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("training failed: {0}")]
    Training(#[from] BnnError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Training protocol for one fitness evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitnessConfig {
    pub epochs: usize,
    /// `(evaluation index boundary, threshold)` pairs; the active threshold
    /// is the one with the largest boundary not exceeding the index.
    pub rejection_schedule: Vec<(u64, f64)>,
    pub lr: f64,
    pub batch_size: usize,
    pub betas: [f64; 2],
    /// Master seed; evaluation seeds are derived from it per index.
    pub seed: u64,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        FitnessConfig {
            epochs: 15,
            rejection_schedule: vec![(0, 0.11), (500, 0.25), (1500, 0.35), (3000, 0.40)],
            lr: 5e-3,
            batch_size: 128,
            betas: [0.9, 0.999],
            seed: 0,
        }
    }
}

impl FitnessConfig {
    /// Offending fields, empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.epochs == 0 {
            out.push("epochs: must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            out.push(format!("lr: must be positive, got {}", self.lr));
        }
        if self.batch_size < 2 {
            out.push(format!("batch_size: must be at least 2, got {}", self.batch_size));
        }
        if !self.betas.iter().all(|b| (0.0..1.0).contains(b)) {
            out.push(format!("betas: each must lie in [0, 1), got {:?}", self.betas));
        }
        let s = &self.rejection_schedule;
        if s.iter().any(|&(_, t)| !(0.0..1.0).contains(&t)) {
            out.push("rejection_schedule: thresholds must lie in [0, 1)".into());
        }
        if s.windows(2).any(|w| w[1].0 <= w[0].0 || w[1].1 < w[0].1) {
            out.push(
                "rejection_schedule: boundaries must increase and thresholds must not decrease".into(),
            );
        }
        out
    }

    pub fn validate(&self) -> Result<(), FitnessError> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(FitnessError::InvalidConfig(p))
        }
    }

    /// Early-rejection threshold for evaluation `eval_index`; `0` before
    /// the first boundary.
    pub fn threshold_at(&self, eval_index: u64) -> f64 {
        self.rejection_schedule
            .iter()
            .take_while(|&&(b, _)| b <= eval_index)
            .last()
            .map_or(0.0, |&(_, t)| t)
    }

    pub fn eval_seed(&self, eval_index: u64) -> u64 {
        mix64(self.seed ^ mix64(eval_index.wrapping_add(0x0ebe_11ed)))
    }

    pub fn fingerprint(&self) -> u64 {
        stable_hash(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Completed,
    EarlyRejected,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessResult {
    pub fitness: f64,
    pub status: EvalStatus,
    pub epoch_history: Vec<f64>,
    pub wall_time_s: f64,
}

impl FitnessResult {
    pub fn diverged(epoch_history: Vec<f64>, wall_time_s: f64) -> Self {
        FitnessResult {
            fitness: 0.0,
            status: EvalStatus::Diverged,
            epoch_history,
            wall_time_s,
        }
    }
}
