//! Cheap deterministic stand-in for trained fitness, used to check search
//! dynamics against exhaustive enumeration.
//!
//! Scores are additive over the canonical operator tree (per-operator
//! table entries plus a pairwise interaction term for binary nodes), so
//! good building blocks compose the way a search expects. A `1e-9` tie
//! break hashed from the raw genes makes the score injective in practice;
//! uniqueness of the maximum is checked by enumeration in the tests, not
//! assumed.

use crate::expr::{canonicalize, BinaryOp, Genome, Term, UnaryOp};
use crate::{mix64, stable_hash};

const TABLE_SEED: u64 = 0x5eed_af00_c0de_0001;
const INTERACTION: f64 = 0.35;
const TIE_BREAK: f64 = 1e-9;

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn unary_weight(op: UnaryOp) -> f64 {
    unit(mix64(TABLE_SEED ^ op.index() as u64))
}

fn binary_weight(op: BinaryOp) -> f64 {
    unit(mix64(TABLE_SEED.rotate_left(17) ^ op.index() as u64))
}

fn key(t: &Term) -> u64 {
    match t {
        Term::X => 0x78,
        Term::Unary(op, a) => mix64(0x100 + op.index() as u64) ^ key(a).rotate_left(7),
        Term::Binary(op, l, r) => {
            mix64(0x200 + op.index() as u64) ^ key(l).rotate_left(13) ^ key(r).rotate_left(29)
        }
    }
}

fn score(t: &Term) -> f64 {
    match t {
        Term::X => 0.0,
        Term::Unary(op, a) => unary_weight(*op) + 0.5 * score(a),
        Term::Binary(op, l, r) => {
            let pair = unit(mix64(key(l) ^ key(r).rotate_left(1) ^ mix64(op.index() as u64)));
            binary_weight(*op) + score(l) + score(r) + INTERACTION * pair
        }
    }
}

/// Deterministic score in `[0, 1)`.
pub fn analytic_fitness(genome: &Genome) -> f64 {
    let s = score(canonicalize(genome).term());
    let tie = unit(stable_hash(genome.genes()));
    ((1.0 - (-s / 2.0).exp()) * (1.0 - 2.0 * TIE_BREAK) + TIE_BREAK * tie).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unique_type_i_maximum() {
        let scores: Vec<f64> = Genome::all_type_i().map(|g| analytic_fitness(&g)).collect();
        assert_eq!(scores.len(), 5324);
        let max = scores.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(scores.iter().filter(|&&s| s == max).count(), 1);
        assert!(scores.iter().all(|s| (0.0..1.0).contains(s)));
    }

    #[test]
    fn equivalent_genomes_differ_only_by_tie_break() {
        let a = analytic_fitness(&Genome::from_genes(&[11, 12, 0]).unwrap());
        let b = analytic_fitness(&Genome::from_genes(&[12, 11, 0]).unwrap());
        assert_ne!(a, b);
        assert!((a - b).abs() < 2e-9);
    }
}
