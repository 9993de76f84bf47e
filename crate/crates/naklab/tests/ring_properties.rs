//! Construction-soundness checks for the two ring structures.
//!
//! The ring product is computed by reducing the left factor to a polynomial
//! in the chosen generators and applying the matching operator chains to the
//! right factor.  Nothing in that pipeline forces the answer to be well
//! defined: were the generator operators not honest multiplication
//! operators, two expressions of the same class would act differently,
//! products could fail to associate or commute, and degrees could drift.
//! These tests drive exactly those failure modes on the shipped models.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use naklab::fock::FockVector;
use naklab::frobenius::fixtures;
use naklab::frobenius::AlgebraElement;
use naklab::operators::{gtilde_operator, ok_operator};
use naklab::rings::{
    build_ring, psi, psi_inverse, GeneratorId, GeneratorMonomial, RingModel, Side,
};
use naklab::scalar::Scalar;
use naklab::{NakajimaMonomial, OperatorExpr};

const SEED: u64 = 20260818;

/// One multiplication operator per generator, built the same way the ring
/// builds its own.
fn generator_ops(ring: &RingModel) -> BTreeMap<GeneratorId, OperatorExpr> {
    ring.generators()
        .iter()
        .map(|&g| {
            let class = AlgebraElement::basis(g.basis);
            let op = match ring.side() {
                Side::Orbifold => ok_operator(ring.algebra(), g.order, &class, false),
                Side::QuantumCorrected => gtilde_operator(ring.algebra(), g.order, &class, false),
            };
            (g, op)
        })
        .collect()
}

/// Apply an operator chain to `w`, rightmost factor first, bypassing the
/// ring's reduction table entirely.
fn chain_apply(
    ops: &BTreeMap<GeneratorId, OperatorExpr>,
    factors: &[GeneratorId],
    w: &FockVector,
) -> FockVector {
    let mut v = w.clone();
    for g in factors.iter().rev() {
        v = ops[g].apply(&v);
    }
    v
}

/// Every product of `count` generators drawn with repetition from `gens`,
/// in lexicographic order.
fn expressions(gens: &[GeneratorId], count: usize) -> Vec<Vec<GeneratorId>> {
    fn rec(
        gens: &[GeneratorId],
        start: usize,
        left: usize,
        stack: &mut Vec<GeneratorId>,
        out: &mut Vec<Vec<GeneratorId>>,
    ) {
        if left == 0 {
            out.push(stack.clone());
            return;
        }
        for i in start..gens.len() {
            stack.push(gens[i]);
            rec(gens, i, left - 1, stack, out);
            stack.pop();
        }
    }
    let mut out = Vec::new();
    rec(gens, 0, count, &mut Vec::new(), &mut out);
    out
}

/// A short random combination of basis monomials at the ring's level.
fn random_vector(rng: &mut ChaCha8Rng, ring: &RingModel) -> FockVector {
    let dim = ring.basis().len();
    let mut v = FockVector::zero();
    for _ in 0..rng.gen_range(1..=3usize) {
        let j = rng.gen_range(0..dim);
        let c = loop {
            let c = rng.gen_range(-3i64..=3);
            if c != 0 {
                break c;
            }
        };
        v.add_term(ring.basis()[j].clone(), Scalar::from_int(c));
    }
    v
}

/// Checks one expression against one basis column: the direct operator
/// chain must agree with the reduce-then-apply product of its class.
fn check_expression(
    ring: &RingModel,
    ops: &BTreeMap<GeneratorId, OperatorExpr>,
    factors: &[GeneratorId],
    class: &FockVector,
    w: &NakajimaMonomial,
) {
    let w = FockVector::monomial(w.clone(), Scalar::one());
    let direct = chain_apply(ops, factors, &w);
    let via_ring = ring
        .ring_product(class, &w)
        .expect("chains stay inside the level");
    assert_eq!(
        direct,
        via_ring,
        "expression {} acts differently from its reduced class ({:?}, n={})",
        GeneratorMonomial::new(factors.to_vec())
            .display_with(ring.algebra(), ring.side().generator_letter()),
        ring.side(),
        ring.level(),
    );
}

#[test]
fn expression_independence_holds_exhaustively_at_low_levels() {
    let cases = [(fixtures::p2(), 3u32), (fixtures::p1xp1(), 2u32)];
    for (alg, top) in cases {
        for n in 1..=top {
            for side in [Side::Orbifold, Side::QuantumCorrected] {
                let ring = build_ring(&alg, side, n).expect("fixture rings build");
                let ops = generator_ops(&ring);
                let mut redundant = 0usize;
                for count in 1..=2usize {
                    for factors in expressions(ring.generators(), count) {
                        let class = chain_apply(&ops, &factors, &ring.unit_class());
                        let canon = ring.reduce(&class).expect("classes reduce");
                        let mut literal = naklab::rings::GeneratorPolynomial::zero();
                        literal.add_term(GeneratorMonomial::new(factors.clone()), Scalar::one());
                        if canon != literal {
                            redundant += 1;
                        }
                        for w in ring.basis() {
                            check_expression(&ring, &ops, &factors, &class, w);
                        }
                        // The same multiset applied in the opposite order is
                        // another expression of the same class.
                        if factors.len() == 2 && factors[0] != factors[1] {
                            let flipped = vec![factors[1], factors[0]];
                            for w in ring.basis() {
                                check_expression(&ring, &ops, &flipped, &class, w);
                            }
                        }
                    }
                }
                if n >= 2 {
                    assert!(
                        redundant > 0,
                        "no redundant expressions found at n={n}; the check is vacuous"
                    );
                }
            }
        }
    }
}

#[test]
fn expression_independence_holds_on_samples_at_level_four() {
    let alg = fixtures::p2();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for side in [Side::Orbifold, Side::QuantumCorrected] {
        let ring = build_ring(&alg, side, 4).expect("fixture rings build");
        let ops = generator_ops(&ring);
        let gens = ring.generators();
        for _ in 0..12 {
            let count = rng.gen_range(1..=3usize);
            let factors: Vec<GeneratorId> =
                (0..count).map(|_| gens[rng.gen_range(0..gens.len())]).collect();
            let class = chain_apply(&ops, &factors, &ring.unit_class());
            for _ in 0..6 {
                let w = &ring.basis()[rng.gen_range(0..ring.basis().len())];
                check_expression(&ring, &ops, &factors, &class, w);
            }
        }
    }
}

#[test]
fn products_are_associative_and_commutative_on_sampled_triples() {
    let cases = [(fixtures::p2(), 4u32, 5usize), (fixtures::p1xp1(), 3u32, 3usize)];
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for (alg, top, triples) in cases {
        for n in 1..=top {
            for side in [Side::Orbifold, Side::QuantumCorrected] {
                let ring = build_ring(&alg, side, n).expect("fixture rings build");
                for _ in 0..triples {
                    let u = random_vector(&mut rng, &ring);
                    let v = random_vector(&mut rng, &ring);
                    let w = random_vector(&mut rng, &ring);
                    let uv = ring.ring_product(&u, &v).unwrap();
                    let vu = ring.ring_product(&v, &u).unwrap();
                    assert_eq!(uv, vu, "product not commutative ({:?}, n={n})", side);
                    let left = ring.ring_product(&uv, &w).unwrap();
                    let vw = ring.ring_product(&v, &w).unwrap();
                    let right = ring.ring_product(&u, &vw).unwrap();
                    assert_eq!(left, right, "product not associative ({:?}, n={n})", side);
                }
            }
        }
    }
}

#[test]
fn product_degrees_add_on_homogeneous_classes() {
    let cases = [(fixtures::p2(), 3u32), (fixtures::p1xp1(), 2u32)];
    for (alg, n) in cases {
        for side in [Side::Orbifold, Side::QuantumCorrected] {
            let ring = build_ring(&alg, side, n).expect("fixture rings build");
            let dim = ring.basis().len();
            for i in 0..dim {
                let v = FockVector::monomial(ring.basis()[i].clone(), Scalar::one());
                for j in i..dim {
                    let w = FockVector::monomial(ring.basis()[j].clone(), Scalar::one());
                    let product = ring.ring_product(&v, &w).unwrap();
                    let want = ring.basis_degrees()[i] + ring.basis_degrees()[j];
                    for (mono, _) in product.terms() {
                        let k = ring.basis_position(mono).expect("product stays in level");
                        assert_eq!(
                            ring.basis_degrees()[k],
                            want,
                            "degree drift in basis_{i} . basis_{j} ({:?}, n={n})",
                            side
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn structure_tables_transport_through_the_phase_twist() {
    // Bilinearity turns the ring isomorphism into an equality of structure
    // constants up to the age phases, which is checkable table against
    // table with no products at all.
    let alg = fixtures::p2();
    for n in 2..=3u32 {
        let orb = build_ring(&alg, Side::Orbifold, n).unwrap();
        let qc = build_ring(&alg, Side::QuantumCorrected, n).unwrap();
        assert_eq!(orb.basis(), qc.basis(), "the two sides share the basis");
        let ages: Vec<i64> = orb.basis().iter().map(|m| m.age() as i64).collect();
        let collect = |ring: &RingModel| -> BTreeMap<(usize, usize, usize), Scalar> {
            ring.structure_constants()
                .entries
                .iter()
                .map(|e| ((e.i, e.j, e.k), e.value()))
                .collect()
        };
        let orb_table = collect(&orb);
        let qc_table = collect(&qc);
        assert_eq!(
            orb_table.keys().collect::<Vec<_>>(),
            qc_table.keys().collect::<Vec<_>>(),
            "supports differ at n={n}"
        );
        for (&(i, j, k), c_orb) in &orb_table {
            let phase = Scalar::i_pow(ages[i] + ages[j] - ages[k]);
            assert_eq!(
                qc_table[&(i, j, k)],
                c_orb * &phase,
                "twisted constants differ at (i,j,k)=({i},{j},{k}), n={n}"
            );
        }
    }
}

#[test]
fn psi_round_trips_and_preserves_level_and_age_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for _ in 0..50 {
        let parts: Vec<(u32, usize)> = (0..rng.gen_range(0..=4usize))
            .map(|_| (rng.gen_range(1..=4u32), rng.gen_range(0..3usize)))
            .collect();
        let mono = NakajimaMonomial::new(&parts);
        let mut v = FockVector::monomial(mono.clone(), Scalar::from_int(rng.gen_range(1..=5)));
        v.add_term(
            NakajimaMonomial::new(&[(1, 0)]),
            Scalar::from_int(rng.gen_range(-5..=-1)),
        );
        assert_eq!(psi_inverse(&psi(&v)), v);
        assert_eq!(psi(&psi_inverse(&v)), v);
        for (m, _) in psi(&v).terms() {
            assert!(
                v.terms().any(|(orig, _)| orig == m),
                "the twist must not move monomials"
            );
        }
    }
}
