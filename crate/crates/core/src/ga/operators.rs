//! Selection, crossover, and mutation.
//!
//! Every random draw comes from the caller's stream in this order per step:
//! technique (`0..3`), selection draws, crossover point `k ∈ [1, L−1]`,
//! orientation (`bool`), mutation coin (`f64`), mutation position, and the
//! replacement gene.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Individual;
use crate::expr::{EncodingType, Genome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionTechnique {
    Elitism,
    Tournament,
    Proportionate,
}

impl SelectionTechnique {
    pub const ALL: [SelectionTechnique; 3] = [
        SelectionTechnique::Elitism,
        SelectionTechnique::Tournament,
        SelectionTechnique::Proportionate,
    ];
}

/// Uniformly random valid genome, drawing one gene per position.
pub fn random_genome<R: Rng>(encoding: EncodingType, rng: &mut R) -> Genome {
    let genes = (0..encoding.len())
        .map(|p| rng.gen_range(0..encoding.slot(p).cardinality()) as u8)
        .collect();
    Genome::new(encoding, genes).expect("slot-typed draws are valid")
}

/// Draws from `p(i) = fitness(i) / Σ fitness`, or uniformly when the total
/// is zero.
fn proportionate_draw<R: Rng>(members: &[Individual], total: f64, rng: &mut R) -> usize {
    if !(total > 0.0) {
        return rng.gen_range(0..members.len());
    }
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, m) in members.iter().enumerate() {
        if m.fitness > 0.0 {
            acc += m.fitness;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Parent indices into a population sorted by descending fitness.
pub fn select_with<R: Rng>(technique: SelectionTechnique, members: &[Individual], rng: &mut R) -> (usize, usize) {
    let s = members.len();
    assert!(s >= 2, "selection needs at least two members");
    match technique {
        SelectionTechnique::Elitism => (0, 1),
        SelectionTechnique::Tournament => {
            let i = rng.gen_range(0..s - 1);
            let j = rng.gen_range(i + 1..s);
            (i, j)
        }
        SelectionTechnique::Proportionate => {
            let total: f64 = members.iter().map(|m| m.fitness.max(0.0)).sum();
            let a = proportionate_draw(members, total, rng);
            let b = proportionate_draw(members, total, rng);
            (a, b)
        }
    }
}

/// Picks a technique uniformly, then selects with it.
pub fn select<R: Rng>(members: &[Individual], rng: &mut R) -> (SelectionTechnique, (usize, usize)) {
    let technique = SelectionTechnique::ALL[rng.gen_range(0..3)];
    (technique, select_with(technique, members, rng))
}

/// Left `k` genes of one parent joined to the remaining genes of the other;
/// `first` takes the left part from `p1`.
pub fn crossover_at(p1: &Genome, p2: &Genome, k: usize, first: bool) -> Genome {
    assert_eq!(p1.encoding(), p2.encoding(), "parents must share an encoding");
    let (left, right) = if first { (p1, p2) } else { (p2, p1) };
    let genes = left.genes()[..k]
        .iter()
        .chain(&right.genes()[k..])
        .copied()
        .collect();
    Genome::new(p1.encoding(), genes).expect("positions keep their slot types")
}

pub fn crossover<R: Rng>(p1: &Genome, p2: &Genome, rng: &mut R) -> Genome {
    let k = rng.gen_range(1..p1.len());
    let first = rng.gen::<bool>();
    crossover_at(p1, p2, k, first)
}

/// Resamples one uniformly chosen position from its slot's operator set;
/// the new gene may equal the old one.
pub fn mutate<R: Rng>(g: &Genome, rng: &mut R) -> Genome {
    let position = rng.gen_range(0..g.len());
    let gene = rng.gen_range(0..g.encoding().slot(position).cardinality()) as u8;
    g.with_gene(position, gene).expect("slot-typed draw is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitness::EvalStatus;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pop(fs: &[f64]) -> Vec<Individual> {
        fs.iter()
            .enumerate()
            .map(|(i, &f)| Individual {
                genome: Genome::from_genes(&[0, 0, 0]).unwrap(),
                fitness: f,
                status: EvalStatus::Completed,
                eval_index: i as u64,
            })
            .collect()
    }

    #[test]
    fn selection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = pop(&[0.9, 0.8, 0.7]);
        assert_eq!(select_with(SelectionTechnique::Elitism, &p, &mut rng), (0, 1));
        let degenerate = pop(&[1.0, 0.0, 0.0]);
        for _ in 0..200 {
            assert_eq!(select_with(SelectionTechnique::Proportionate, &degenerate, &mut rng), (0, 0));
        }
        let zeros = pop(&[0.0, 0.0, 0.0, 0.0]);
        let mut seen = [false; 4];
        for _ in 0..200 {
            let (a, _) = select_with(SelectionTechnique::Proportionate, &zeros, &mut rng);
            seen[a] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn tournament_second_parent_is_right_of_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = pop(&[0.9, 0.8, 0.8, 0.5, 0.1]);
        for _ in 0..1000 {
            let (i, j) = select_with(SelectionTechnique::Tournament, &p, &mut rng);
            assert!(i < j && j < 5);
            assert!(p[j].fitness <= p[i].fitness);
        }
    }

    #[test]
    fn crossover_examples() {
        let a = Genome::from_genes(&[1, 2, 3]).unwrap();
        let b = Genome::from_genes(&[4, 5, 6]).unwrap();
        assert_eq!(crossover_at(&a, &b, 1, true).genes(), &[1, 5, 6]);
        assert_eq!(crossover_at(&a, &b, 2, false).genes(), &[4, 5, 3]);
        for k in 1..3 {
            assert_eq!(crossover_at(&a, &a, k, true), a);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let x = random_genome(EncodingType::TypeII, &mut rng);
            let y = random_genome(EncodingType::TypeII, &mut rng);
            for k in 1..6 {
                for first in [true, false] {
                    let c = crossover_at(&x, &y, k, first);
                    assert!(Genome::new(EncodingType::TypeII, c.genes().to_vec()).is_ok());
                }
            }
        }
    }

    #[test]
    fn mutation_slot_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Genome::from_genes(&[11, 12, 1]).unwrap();
        let n = 10_000;
        let mut changed_binary = 0;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let m = mutate(&g, &mut rng);
            assert!(m.genes()[2] <= 10);
            let diff: Vec<usize> = (0..3).filter(|&i| m.genes()[i] != g.genes()[i]).collect();
            if diff == [2] {
                changed_binary += 1;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..n {
            let mut probe = rng.clone();
            counts[probe.gen_range(0..3)] += 1;
            mutate(&g, &mut rng);
        }
        let (p, sigma) = (1.0 / 3.0, (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt());
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
        assert!(changed_binary > 0);
    }
}
