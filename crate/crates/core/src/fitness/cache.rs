use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{EvalStatus, Evaluator, FitnessError, FitnessResult};
use crate::expr::{canonicalize, Genome};

/// Results keyed by canonical form and evaluator fingerprint.
#[derive(Debug, Default)]
pub struct FitnessCache {
    map: Mutex<HashMap<String, FitnessResult>>,
}

impl FitnessCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn key(genome: &Genome, fingerprint: u64) -> String {
        format!("{}#{fingerprint:016x}", canonicalize(genome))
    }

    pub fn get(&self, key: &str) -> Option<FitnessResult> {
        self.map.lock().expect("cache lock").get(key).cloned()
    }

    /// Last writer wins; identical keys hold identical results.
    pub fn insert(&self, key: String, result: FitnessResult) {
        self.map.lock().expect("cache lock").insert(key, result);
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Returns the cached result (with zero wall time) or evaluates and stores.
/// The flag reports a cache hit.
pub fn cached_evaluate(
    evaluator: &dyn Evaluator,
    cache: &FitnessCache,
    genome: &Genome,
    eval_index: u64,
) -> Result<(FitnessResult, bool), FitnessError> {
    let key = FitnessCache::key(genome, evaluator.fingerprint());
    if let Some(mut hit) = cache.get(&key) {
        hit.wall_time_s = 0.0;
        return Ok((hit, true));
    }
    let result = evaluator.evaluate(genome, eval_index)?;
    cache.insert(key, result.clone());
    Ok((result, false))
}

/// One line of the evaluation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub eval_index: u64,
    pub genome: Genome,
    pub canonical_genome: String,
    pub status: EvalStatus,
    pub fitness: f64,
    pub epoch_history: Vec<f64>,
    pub seed: u64,
    pub wall_time_s: f64,
    pub threshold_active: f64,
}

impl EvalRecord {
    pub fn new(evaluator: &dyn Evaluator, eval_index: u64, genome: &Genome, result: &FitnessResult) -> Self {
        EvalRecord {
            eval_index,
            genome: genome.clone(),
            canonical_genome: canonicalize(genome).to_string(),
            status: result.status,
            fitness: result.fitness,
            epoch_history: result.epoch_history.clone(),
            seed: evaluator.seed_for(eval_index),
            wall_time_s: result.wall_time_s,
            threshold_active: evaluator.threshold_at(eval_index),
        }
    }
}
