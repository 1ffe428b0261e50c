use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use afsearch::expr::{
    apply, canonicalize, catalog_genome, ActivationExpr, ChannelActivation, EncodingType, Genome,
};
use afsearch::ga::random_genome;
use afsearch::Tensor;

fn genome_strategy(encoding: EncodingType) -> impl Strategy<Value = Genome> {
    let slots: Vec<_> = (0..encoding.len()).map(|p| 0..encoding.slot(p).cardinality() as u8).collect();
    slots.prop_map(move |genes| Genome::new(encoding, genes).unwrap())
}

fn any_genome() -> impl Strategy<Value = Genome> {
    prop_oneof![genome_strategy(EncodingType::TypeI), genome_strategy(EncodingType::TypeII)]
}

proptest! {
    #[test]
    fn forward_preserves_shape(g in any_genome(), n in 1usize..4, c in 1usize..4, hw in 1usize..5) {
        let af = ActivationExpr::decode(&g, c).unwrap();
        let len = n * c * hw * hw;
        let x = Tensor::from_vec(&[n, c, hw, hw], (0..len).map(|i| (i as f32 * 0.37).sin() * 3.0).collect()).unwrap();
        let y = apply(&af, &x).unwrap();
        prop_assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn display_parse_round_trip(g in any_genome()) {
        prop_assert_eq!(g.to_string().parse::<Genome>().unwrap(), g);
    }
}

#[test]
fn every_type_i_genome_is_total() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data: Vec<f32> = (0..64).map(|_| rng.gen_range(-4.0f32..4.0)).collect();
    let x = Tensor::from_vec(&[4, 2, 8], data).unwrap();
    let mut count = 0;
    for g in Genome::all_type_i() {
        let af = ActivationExpr::decode(&g, 2).unwrap();
        let y = apply(&af, &x).unwrap();
        assert!(y.all_finite(), "{g} is not finite on the fixed batch");
        count += 1;
    }
    assert_eq!(count, 5324);
}

fn values(g: &Genome, xs: &[f64]) -> Vec<f64> {
    let af = ActivationExpr::decode(g, 1).unwrap();
    xs.iter().map(|&x| af.value(x, 0)).collect()
}

fn same(a: &[f64], b: &[f64]) -> bool {
    a.iter()
        .zip(b)
        .all(|(&u, &v)| u == v || (u.is_nan() && v.is_nan()) || (u - v).abs() <= 1e-12 * u.abs().max(1.0))
}

#[test]
fn canonically_equal_type_i_genomes_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xs: Vec<f64> = (0..1000).map(|_| rng.gen_range(-10.0..10.0)).collect();
    let mut classes: HashMap<String, Vec<Genome>> = HashMap::new();
    for g in Genome::all_type_i() {
        classes.entry(canonicalize(&g).to_string()).or_default().push(g);
    }
    assert!(classes.len() < 5324, "commutative twins should merge");
    for members in classes.values().filter(|m| m.len() > 1) {
        let reference = values(&members[0], &xs);
        for g in &members[1..] {
            assert!(same(&reference, &values(g, &xs)), "{} and {g} differ", members[0]);
        }
    }
}

#[test]
fn canonically_equal_type_ii_genomes_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs: Vec<f64> = (0..1000).map(|_| rng.gen_range(-10.0..10.0)).collect();
    let mut checked = 0;
    for _ in 0..3000 {
        let g = random_genome(EncodingType::TypeII, &mut rng);
        let key = canonicalize(&g).to_string();
        // Swap the operands of B1; the pair is compared only when canonicalization merges them.
        let genes = g.genes();
        let swapped = Genome::new(
            EncodingType::TypeII,
            vec![genes[1], genes[0], genes[2], genes[3], genes[4], genes[5]],
        )
        .unwrap();
        if canonicalize(&swapped).to_string() == key {
            assert!(same(&values(&g, &xs), &values(&swapped, &xs)), "{g} vs {swapped}");
            checked += 1;
        }
    }
    assert!(checked > 500, "only {checked} equal pairs exercised");
}

/// Central difference at two step sizes; `None` when they disagree, which
/// marks a kink, a clamp boundary, or a pole nearby.
fn smooth_derivative(f: impl Fn(f64) -> f64, x: f64) -> Option<f64> {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let (a, b) = (d(1e-5), d(1e-4));
    let scale = a.abs().max(b.abs()).max(1.0);
    (a.is_finite() && b.is_finite() && (a - b).abs() < 1e-5 * scale && f(x).abs() < 1e6).then_some(a)
}

#[test]
fn composite_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    let mut checked_params = 0;
    for _ in 0..400 {
        let encoding = if rng.gen() { EncodingType::TypeI } else { EncodingType::TypeII };
        let g = random_genome(encoding, &mut rng);
        let mut af = ActivationExpr::decode(&g, 1).unwrap();
        for p in af.params_mut() {
            p[0] = rng.gen_range(-1.0f32..1.0);
        }
        for _ in 0..5 {
            let x: f64 = rng.gen_range(-3.0..3.0);
            let mut pg = vec![0.0; af.param_slots()];
            let dx = af.grad(x, 0, 1.0, &mut pg);
            if let Some(n) = smooth_derivative(|v| af.value(v, 0), x) {
                let err = (dx - n).abs() / dx.abs().max(n.abs()).max(1e-2);
                assert!(err < 1e-4, "{g} at {x}: analytic {dx}, numeric {n}");
                checked += 1;
            }
            for slot in 0..af.param_slots() {
                let base = af.params()[slot][0];
                let f = |v: f64| {
                    let mut probe = af.clone();
                    probe.params_mut()[slot][0] = v as f32;
                    probe.value(x, 0)
                };
                // Parameters are stored as f32: snap the probes and divide by
                // the step actually taken.
                let d = |h: f64| {
                    let hi = (base as f64 + h) as f32 as f64;
                    let lo = (base as f64 - h) as f32 as f64;
                    (f(hi) - f(lo)) / (hi - lo)
                };
                let (a, b) = (d(1e-3), d(1e-2));
                let scale = a.abs().max(b.abs()).max(1e-2);
                if a.is_finite() && b.is_finite() && (a - b).abs() < 1e-3 * scale {
                    let err = (pg[slot] - a).abs() / pg[slot].abs().max(a.abs()).max(1e-2);
                    assert!(err < 1e-3, "{g} param {slot} at {x}: analytic {}, numeric {a}", pg[slot]);
                    checked_params += 1;
                }
            }
        }
    }
    assert!(checked > 1000, "only {checked} smooth points");
    assert!(checked_params > 100, "only {checked_params} parameter checks");
}

#[test]
fn catalog_encodings() {
    for n in 1..=15 {
        let g = catalog_genome(n).unwrap();
        let expected = if n <= 10 { EncodingType::TypeI } else { EncodingType::TypeII };
        assert_eq!(g.encoding(), expected, "AF{n}");
    }
    assert!(catalog_genome(0).is_none());
    assert!(catalog_genome(16).is_none());
}

#[test]
fn worked_example_af1() {
    let af = ActivationExpr::decode(&"t1:U11-U12-B1".parse().unwrap(), 1).unwrap();
    assert_eq!(af.value(0.0, 0), -1.0);
    let mut pg = [];
    assert_eq!(af.grad(0.0, 0, 1.0, &mut pg), 1.0);
}
