//! Steady-state genetic algorithm.
//!
//! One offspring per step: select two parents, cross over, mutate, score,
//! and replace the worst member only if the offspring is strictly fitter.

mod operators;

pub use operators::{
    crossover, crossover_at, mutate, random_genome, select, select_with, SelectionTechnique,
};

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EncodingType, Genome};
use crate::fitness::{
    cached_evaluate, EvalRecord, EvalStatus, Evaluator, FitnessCache, FitnessError, FitnessResult,
};
use crate::mix64;

#[derive(Debug, Error)]
pub enum GaError {
    #[error("invalid search config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("initialization accepted {accepted} of {needed} individuals after {attempts} evaluations")]
    InitExhausted {
        accepted: usize,
        needed: usize,
        attempts: u64,
    },
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Fitness(#[from] FitnessError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub encoding: EncodingType,
    pub population_size: usize,
    /// Steps after initialization.
    pub budget: u64,
    /// Consecutive non-replacing steps that end the search.
    pub stagnation_limit: u64,
    pub mutation_probability: f64,
    /// Evaluations allowed during initialization before giving up, as a
    /// multiple of the population size.
    pub init_attempt_factor: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            encoding: EncodingType::TypeI,
            population_size: 30,
            budget: 2000,
            stagnation_limit: 200,
            mutation_probability: 1.0,
            init_attempt_factor: 50,
        }
    }
}

impl GaConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.population_size < 2 {
            out.push(format!("population_size: must be at least 2, got {}", self.population_size));
        }
        if !(0.0..=1.0).contains(&self.mutation_probability) {
            out.push(format!(
                "mutation_probability: must lie in [0, 1], got {}",
                self.mutation_probability
            ));
        }
        if self.stagnation_limit == 0 {
            out.push("stagnation_limit: must be at least 1".into());
        }
        if self.init_attempt_factor == 0 {
            out.push("init_attempt_factor: must be at least 1".into());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Genome,
    pub fitness: f64,
    pub status: EvalStatus,
    pub eval_index: u64,
}

/// Members sorted by descending fitness; ties keep the earlier evaluation
/// first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Population {
    members: Vec<Individual>,
}

impl Population {
    pub fn new(mut members: Vec<Individual>) -> Self {
        sort_members(&mut members);
        Population { members }
    }

    pub fn members(&self) -> &[Individual] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn best(&self) -> &Individual {
        &self.members[0]
    }

    pub fn worst(&self) -> &Individual {
        self.members.last().expect("population is non-empty")
    }

    pub fn is_sorted(&self) -> bool {
        self.members.windows(2).all(|w| order(&w[0], &w[1]) != std::cmp::Ordering::Greater)
    }

    /// Replaces the worst member if `candidate` is strictly fitter.
    pub fn offer(&mut self, candidate: Individual) -> bool {
        if candidate.status != EvalStatus::Completed || !(candidate.fitness > self.worst().fitness) {
            return false;
        }
        *self.members.last_mut().expect("population is non-empty") = candidate;
        sort_members(&mut self.members);
        true
    }
}

fn order(a: &Individual, b: &Individual) -> std::cmp::Ordering {
    b.fitness
        .total_cmp(&a.fitness)
        .then(a.eval_index.cmp(&b.eval_index))
}

fn sort_members(members: &mut [Individual]) {
    members.sort_by(order);
}

/// What one step did.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub technique: SelectionTechnique,
    pub parents: (usize, usize),
    pub offspring: Genome,
    pub eval_index: u64,
    pub fitness: f64,
    pub status: EvalStatus,
    pub replaced: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Budget,
    Stagnation,
}

/// Mutable search state.
pub struct GARunState {
    pub population: Population,
    rng: ChaCha8Rng,
    pub evaluations: u64,
    pub steps: u64,
    pub best_history: Vec<f64>,
    pub stagnation: u64,
    pub log: Vec<EvalRecord>,
}

/// Stream seed for the search itself, decorrelated from evaluation seeds.
fn search_seed(seed: u64) -> u64 {
    mix64(seed ^ 0x9a5e_a5c4_0000_0001)
}

/// Evaluates `genomes` (indices `first_index..`) with at most `jobs`
/// threads. Cache hits and repeats within the batch reuse one result, and
/// results are written back in index order, so the outcome does not depend
/// on `jobs`.
fn evaluate_batch(
    genomes: &[Genome],
    first_index: u64,
    evaluator: &dyn Evaluator,
    cache: &FitnessCache,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Vec<FitnessResult>, FitnessError> {
    let fp = evaluator.fingerprint();
    let keys: Vec<String> = genomes.iter().map(|g| FitnessCache::key(g, fp)).collect();
    let mut first_of: HashMap<&str, usize> = HashMap::new();
    let mut misses = Vec::new();
    for (i, k) in keys.iter().enumerate() {
        if cache.get(k).is_none() && !first_of.contains_key(k.as_str()) {
            misses.push(i);
        }
        first_of.entry(k.as_str()).or_insert(i);
    }
    let run = |&i: &usize| evaluator.evaluate(&genomes[i], first_index + i as u64).map(|r| (i, r));
    let computed: Vec<(usize, FitnessResult)> = match pool {
        Some(p) => p.install(|| misses.par_iter().map(run).collect::<Result<_, _>>())?,
        None => misses.iter().map(run).collect::<Result<_, _>>()?,
    };
    let mut fresh: HashMap<usize, FitnessResult> = computed.into_iter().collect();
    let mut out = Vec::with_capacity(genomes.len());
    for (i, k) in keys.iter().enumerate() {
        let r = match fresh.remove(&i) {
            Some(r) => {
                cache.insert(k.clone(), r.clone());
                r
            }
            None => {
                let mut hit = cache.get(k).expect("earlier entry in this batch or cache");
                hit.wall_time_s = 0.0;
                hit
            }
        };
        out.push(r);
    }
    Ok(out)
}

impl GARunState {
    /// Random initial population. Candidates that are rejected or diverge
    /// are discarded and redrawn. With `jobs > 1` each wave of draws is
    /// scored in parallel.
    pub fn init(
        config: &GaConfig,
        seed: u64,
        evaluator: &dyn Evaluator,
        cache: &FitnessCache,
        jobs: usize,
    ) -> Result<Self, GaError> {
        let problems = config.problems();
        if !problems.is_empty() {
            return Err(GaError::InvalidConfig(problems));
        }
        let pool = if jobs > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(jobs)
                    .build()
                    .map_err(|e| GaError::ThreadPool(e.to_string()))?,
            )
        } else {
            None
        };
        let s = config.population_size;
        let max_attempts = config.init_attempt_factor * s as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(search_seed(seed));
        let mut members = Vec::with_capacity(s);
        let mut log = Vec::new();
        let mut evaluations = 0u64;
        while members.len() < s {
            if evaluations >= max_attempts {
                return Err(GaError::InitExhausted {
                    accepted: members.len(),
                    needed: s,
                    attempts: evaluations,
                });
            }
            let need = (s - members.len()).min((max_attempts - evaluations) as usize);
            let wave: Vec<Genome> = (0..need).map(|_| random_genome(config.encoding, &mut rng)).collect();
            let results = evaluate_batch(&wave, evaluations, evaluator, cache, pool.as_ref())?;
            for (g, r) in wave.into_iter().zip(results) {
                let idx = evaluations;
                evaluations += 1;
                log.push(EvalRecord::new(evaluator, idx, &g, &r));
                if r.status == EvalStatus::Completed {
                    members.push(Individual {
                        genome: g,
                        fitness: r.fitness,
                        status: r.status,
                        eval_index: idx,
                    });
                }
            }
        }
        let population = Population::new(members);
        Ok(GARunState {
            best_history: vec![population.best().fitness],
            population,
            rng,
            evaluations,
            steps: 0,
            stagnation: 0,
            log,
        })
    }

    /// One select → crossover → mutate → evaluate → replace iteration.
    pub fn step(&mut self, config: &GaConfig, evaluator: &dyn Evaluator, cache: &FitnessCache) -> StepRecord {
        let members = self.population.members();
        let (technique, (i, j)) = select(members, &mut self.rng);
        let child = crossover(&members[i].genome, &members[j].genome, &mut self.rng);
        let coin = self.rng.gen::<f64>();
        let child = if coin < config.mutation_probability {
            mutate(&child, &mut self.rng)
        } else {
            child
        };
        let idx = self.evaluations;
        self.evaluations += 1;
        let result = cached_evaluate(evaluator, cache, &child, idx)
            .map(|(r, _)| r)
            .unwrap_or_else(|_| FitnessResult::diverged(Vec::new(), 0.0));
        self.log.push(EvalRecord::new(evaluator, idx, &child, &result));
        let replaced = self.population.offer(Individual {
            genome: child.clone(),
            fitness: result.fitness,
            status: result.status,
            eval_index: idx,
        });
        self.stagnation = if replaced { 0 } else { self.stagnation + 1 };
        self.steps += 1;
        self.best_history.push(self.population.best().fitness);
        StepRecord {
            technique,
            parents: (i, j),
            offspring: child,
            eval_index: idx,
            fitness: result.fitness,
            status: result.status,
            replaced,
        }
    }

    /// Steps until the budget is spent or the population stagnates.
    pub fn run_to_end(&mut self, config: &GaConfig, evaluator: &dyn Evaluator, cache: &FitnessCache) -> Termination {
        loop {
            if self.steps >= config.budget {
                return Termination::Budget;
            }
            if self.stagnation >= config.stagnation_limit {
                return Termination::Stagnation;
            }
            self.step(config, evaluator, cache);
        }
    }
}

/// Final search summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchReport {
    pub seed: u64,
    pub best_genome: Genome,
    pub best_fitness: f64,
    pub termination: Termination,
    pub steps: u64,
    pub evaluations: u64,
    pub final_population: Vec<Individual>,
    pub best_history: Vec<f64>,
}

/// Initializes and runs a search.
pub fn run(
    config: &GaConfig,
    seed: u64,
    evaluator: &dyn Evaluator,
    cache: &FitnessCache,
    jobs: usize,
) -> Result<(SearchReport, Vec<EvalRecord>), GaError> {
    let mut state = GARunState::init(config, seed, evaluator, cache, jobs)?;
    let termination = state.run_to_end(config, evaluator, cache);
    let best = state.population.best().clone();
    Ok((
        SearchReport {
            seed,
            best_genome: best.genome,
            best_fitness: best.fitness,
            termination,
            steps: state.steps,
            evaluations: state.evaluations,
            final_population: state.population.members().to_vec(),
            best_history: state.best_history,
        },
        state.log,
    ))
}
