use std::sync::Arc;

use approx::abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use watatani::algebra::{group_algebra, Inclusion, StarAlgebra};
use watatani::angle::{AngleContext, AnglePath};
use watatani::expectation::CondExpectation;
use watatani::groups::{presets, Perm, PermGroup, DEFAULT_ENUMERATION_BOUND};
use watatani::linalg::{op_norm, random_complex_matrix, random_unitary};
use watatani::pimsner::{index_of, reconstruction_residual};
use watatani::{Matrix, Tolerances};

fn perm(degree: usize) -> impl Strategy<Value = Perm> {
    Just((0..degree).collect::<Vec<_>>())
        .prop_shuffle()
        .prop_map(|images| Perm::from_images(images).unwrap())
}

fn s4_element() -> impl Strategy<Value = Perm> {
    perm(4)
}

fn trace_preserving(big: StarAlgebra, small: StarAlgebra, tol: &Tolerances) -> CondExpectation {
    let inc = Inclusion::new(Arc::new(big), Arc::new(small), tol).unwrap();
    CondExpectation::trace_preserving(inc, tol).unwrap()
}

fn conjugated(alg: &StarAlgebra, u: &Matrix, tol: &Tolerances) -> StarAlgebra {
    let gens: Vec<Matrix> = alg.generators().iter().map(|g| u * g * u.adjoint()).collect();
    StarAlgebra::from_generators(alg.ambient_dim(), &gens, tol).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn composition_is_associative((a, b, c) in (perm(6), perm(6), perm(6))) {
        prop_assert_eq!(a.compose(&b).compose(&c), a.compose(&b.compose(&c)));
    }

    #[test]
    fn inverse_cancels(p in perm(7)) {
        prop_assert!(p.compose(&p.inverse()).is_identity());
        prop_assert!(p.inverse().compose(&p).is_identity());
        prop_assert_eq!(p.inverse().inverse(), p);
    }

    #[test]
    fn cycle_notation_round_trips(p in perm(7)) {
        let text = p.to_string();
        prop_assert_eq!(Perm::parse_cycles(7, &text).unwrap(), p);
    }

    #[test]
    fn order_annihilates(p in perm(7)) {
        let mut q = p.clone();
        for _ in 1..p.order() {
            prop_assert!(!q.is_identity());
            q = q.compose(&p);
        }
        prop_assert!(q.is_identity());
    }

    #[test]
    fn lagrange_holds_for_generated_subgroups(gens in prop::collection::vec(s4_element(), 0..3)) {
        let g = presets::s4();
        let h = PermGroup::closure(4, &gens).unwrap();
        prop_assert!(h.is_subgroup_of(&g));
        prop_assert_eq!(g.index(&h).unwrap() * h.order(), g.order());
        prop_assert_eq!(g.left_coset_representatives(&h).unwrap().len(), g.index(&h).unwrap());
    }

    #[test]
    fn intermediates_sit_between(gens in prop::collection::vec(s4_element(), 0..2)) {
        let g = presets::s4();
        let h = PermGroup::closure(4, &gens).unwrap();
        for k in g.intermediate_subgroups(&h, DEFAULT_ENUMERATION_BOUND).unwrap() {
            prop_assert!(h.is_subgroup_of(&k));
            prop_assert!(k.is_subgroup_of(&g));
            prop_assert!(k.is_closed());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn index_is_unitarily_covariant(seed in any::<u64>()) {
        let tol = Tolerances::default();
        let ga = group_algebra(&presets::s3(), &tol).unwrap();
        let sub = PermGroup::from_cycle_strings(3, &["(1 2)"]).unwrap();
        let b = ga.subalgebra(&sub, &tol).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_unitary(&mut rng, 6);

        let e = trace_preserving((*ga.algebra).clone(), (*b).clone(), &tol);
        let eu = trace_preserving(conjugated(&ga.algebra, &u, &tol), conjugated(&b, &u, &tol), &tol);
        let (_, ind) = index_of(&e, &tol).unwrap();
        let (_, ind_u) = index_of(&eu, &tol).unwrap();

        let moved = &u * &ind.value * u.adjoint();
        prop_assert!(op_norm(&(moved - &ind_u.value)).unwrap() < 1e-9);
        prop_assert!(abs_diff_eq!(ind_u.norm(), 3.0, epsilon = 1e-9));
    }

    #[test]
    fn quasi_basis_reconstructs_elements(seed in any::<u64>(), which in 0usize..3) {
        let tol = Tolerances::default();
        let (g, h) = [
            (presets::s3(), PermGroup::from_cycle_strings(3, &["(1 2)"]).unwrap()),
            (presets::d4(), presets::d4_center()),
            (presets::d4(), presets::trivial(4)),
        ][which].clone();
        let ga = group_algebra(&g, &tol).unwrap();
        let b = ga.subalgebra(&h, &tol).unwrap();
        let e = trace_preserving((*ga.algebra).clone(), (*b).clone(), &tol);
        let (basis, _) = index_of(&e, &tol).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = ga.algebra.ambient_dim();
        let x = ga.algebra.project(&random_complex_matrix(&mut rng, n, n));
        prop_assert!(reconstruction_residual(&e, &basis.elements, &x) < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn interior_angle_is_symmetric(i in 0usize..8, j in 0usize..8) {
        let tol = Tolerances::default();
        let g = presets::d4();
        let h = presets::trivial(4);
        let ga = group_algebra(&g, &tol).unwrap();
        let b = ga.subalgebra(&h, &tol).unwrap();
        let e = trace_preserving((*ga.algebra).clone(), (*b).clone(), &tol);
        let subs: Vec<PermGroup> = g
            .intermediate_subgroups(&h, DEFAULT_ENUMERATION_BOUND)
            .unwrap()
            .into_iter()
            .filter(|s| s.order() != 1 && s.order() != 8)
            .collect();
        prop_assert_eq!(subs.len(), 8);

        let ctx = AngleContext::new(&e, &tol).unwrap();
        let p = ctx.intermediate(ga.subalgebra(&subs[i], &tol).unwrap()).unwrap();
        let q = ctx.intermediate(ga.subalgebra(&subs[j], &tol).unwrap()).unwrap();
        let pq = ctx.interior_angle(&p, &q, AnglePath::Both).unwrap();
        let qp = ctx.interior_angle(&q, &p, AnglePath::Both).unwrap();
        prop_assert!(abs_diff_eq!(pq.cos_value, qp.cos_value, epsilon = 1e-10));
        prop_assert!((0.0..=std::f64::consts::FRAC_PI_2).contains(&pq.angle));
    }
}
