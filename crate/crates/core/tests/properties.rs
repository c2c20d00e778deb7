use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ucp_core::channel::random_elementary_with;
use ucp_core::exact_channel::gns;
use ucp_core::oracle::{
    choi_membership_oracle, random_algebra, random_element, random_hermitian_with, random_state_with, HermitianOptions,
    StateOptions,
};
use ucp_core::reachability::{
    check_hermitian_reachable, check_hermitian_reachable_general, check_more_mixed, check_state_reachable,
};
use ucp_core::{AlgebraSpec, Element, Functional, KrausMap, Tolerances, Verdict, C64};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn algebra(r: &mut ChaCha8Rng) -> AlgebraSpec {
    random_algebra(3, 4, r)
}

fn state(a: &AlgebraSpec, r: &mut ChaCha8Rng) -> Functional {
    let max_rank = if r.random_bool(0.3) { Some(1) } else { None };
    random_state_with(a, r, &StateOptions { center: None, max_rank }).unwrap()
}

fn hermitian(a: &AlgebraSpec, r: &mut ChaCha8Rng) -> Functional {
    random_hermitian_with(a, r, &HermitianOptions::default()).unwrap()
}

fn unital_map(a: &AlgebraSpec, r: &mut ChaCha8Rng) -> KrausMap {
    let k = r.random_range(1..=3);
    random_elementary_with(a, k, r).unwrap()
}

fn tol() -> Tolerances {
    Tolerances::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jordan_parts_reconstruct_and_split_the_norm(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = algebra(&mut r);
        let w = hermitian(&a, &mut r);
        let parts = w.jordan_decompose().unwrap();
        prop_assert!(parts.reconstruct().max_abs_diff(&w).unwrap() <= 1e-12);
        prop_assert!((parts.total_mass() - w.norm().unwrap()).abs() <= 1e-10);
        prop_assert!(parts.positive_part.is_positive(1e-12).unwrap());
        prop_assert!(parts.negative_part.is_positive(1e-12).unwrap());
    }

    #[test]
    fn evaluation_is_linear(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = algebra(&mut r);
        let w = hermitian(&a, &mut r);
        let x = random_element(&a, &mut r);
        let y = random_element(&a, &mut r);
        let s = C64::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
        let lhs = w.evaluate(&(&x.scale(s) + &y)).unwrap();
        let rhs = s * w.evaluate(&x).unwrap() + w.evaluate(&y).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + x.norm() + y.norm()));
        // hermitian functionals are real on self-adjoint elements
        let h = &x + &x.adjoint();
        prop_assert!(w.evaluate(&h).unwrap().im.abs() <= 1e-10 * (1.0 + h.norm()));
    }

    #[test]
    fn predual_is_dual_to_the_map(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = algebra(&mut r);
        let w = hermitian(&a, &mut r);
        let phi = unital_map(&a, &mut r);
        let x = random_element(&a, &mut r);
        let lhs = phi.predual_apply(&w).unwrap().evaluate(&x).unwrap();
        let rhs = w.evaluate(&phi.apply(&x).unwrap()).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + x.norm()));
    }

    #[test]
    fn unital_maps_preserve_the_center_restriction(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = algebra(&mut r);
        let w = hermitian(&a, &mut r);
        let phi = unital_map(&a, &mut r);
        prop_assert!(phi.is_unital(1e-10));
        let image = phi.predual_apply(&w).unwrap();
        for (x, y) in image.block_masses().iter().zip(w.block_masses()) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
        prop_assert!(phi.choi().is_completely_positive(1e-10).unwrap());
        prop_assert!(phi.choi().is_unital(1e-10));
    }

    #[test]
    fn unitalization_completes_subunital_maps(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = algebra(&mut r);
        let phi = unital_map(&a, &mut r);
        let shrink = C64::new(r.random_range(0.1..0.95), 0.0);
        let sub = KrausMap::new(&a, phi.kraus().iter().map(|k| k.scale(shrink)).collect()).unwrap();
        prop_assert!(!sub.is_unital(1e-6));
        let completed = sub.unitalize(1e-12).unwrap();
        prop_assert!(completed.is_unital(1e-9));
        prop_assert_eq!(completed.len(), sub.len() + 1);
    }

    #[test]
    fn images_under_unital_maps_are_always_reachable(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = algebra(&mut r);
        let t = tol();
        let w = hermitian(&a, &mut r);
        let rho = unital_map(&a, &mut r).predual_apply(&w).unwrap();
        prop_assert_ne!(check_hermitian_reachable(&w, &rho, &t).unwrap().verdict, Verdict::No);
        prop_assert_ne!(check_hermitian_reachable_general(&w, &rho, &t).unwrap().decision.verdict, Verdict::No);
        let s = state(&a, &mut r);
        let sigma = unital_map(&a, &mut r).predual_apply(&s).unwrap();
        prop_assert_ne!(check_state_reachable(&s, &sigma, &t).unwrap().verdict, Verdict::No);
        prop_assert_ne!(check_more_mixed(&s, &sigma, &t).unwrap().verdict, Verdict::No);
    }

    #[test]
    fn reachability_is_a_preorder(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = algebra(&mut r);
        let t = tol();
        let w = hermitian(&a, &mut r);
        prop_assert_eq!(check_hermitian_reachable(&w, &w, &t).unwrap().verdict, Verdict::Yes);
        let rho = unital_map(&a, &mut r).predual_apply(&w).unwrap();
        let sigma = unital_map(&a, &mut r).predual_apply(&rho).unwrap();
        prop_assert_ne!(check_hermitian_reachable(&w, &sigma, &t).unwrap().verdict, Verdict::No);
    }

    #[test]
    fn gns_data_is_consistent(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = algebra(&mut r);
        let w = state(&a, &mut r);
        let t = tol();
        let g = gns(&w, &t).unwrap();
        let expected: usize = (0..a.num_blocks()).map(|i| a.block_dim(i) * g.block_ranks()[i]).sum();
        prop_assert_eq!(g.carrier_dim(), expected);
        prop_assert_eq!(g.cyclic_rank().unwrap(), g.carrier_dim());
        prop_assert!(g.commutant_residual().unwrap() <= 1e-10);
        let x = random_element(&a, &mut r);
        prop_assert!((g.vector_state(&x).unwrap() - w.evaluate(&x).unwrap()).norm() <= 1e-10 * (1.0 + x.norm()));
        for i in 0..a.num_blocks() {
            prop_assert_eq!(g.kernel_ideal().contains_block(i), g.block_ranks()[i] == 0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn oracle_agrees_on_decisive_hermitian_pairs(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = algebra(&mut r);
        let t = tol();
        let w = hermitian(&a, &mut r);
        let rho = if r.random_bool(0.5) {
            unital_map(&a, &mut r).predual_apply(&w).unwrap()
        } else {
            let traces = w.block_masses();
            random_hermitian_with(&a, &mut r, &HermitianOptions { traces: Some(traces), trace_norms: None }).unwrap()
        };
        let decision = check_hermitian_reachable(&w, &rho, &t).unwrap();
        prop_assume!(decision.verdict != Verdict::Indeterminate && decision.margin.abs() >= 1e-6);
        let oracle = choi_membership_oracle(&w, &rho, &t).unwrap();
        prop_assume!(oracle.verdict != Verdict::Indeterminate);
        prop_assert_eq!(oracle.verdict, decision.verdict, "margin {:.3e}: {}", decision.margin, oracle.detail);
    }
}

#[test]
fn identity_map_fixes_every_functional() {
    let mut r = rng(5);
    for _ in 0..20 {
        let a = algebra(&mut r);
        let w = hermitian(&a, &mut r);
        let id = KrausMap::identity(&a);
        assert!(id.predual_apply(&w).unwrap().max_abs_diff(&w).unwrap() <= 1e-15);
        let x: Element = random_element(&a, &mut r);
        assert!(id.apply(&x).unwrap().distance(&x) <= 1e-15);
    }
}

#[test]
fn no_decision_rejects_an_actual_image() {
    let mut r = rng(500);
    let t = tol();
    let mut rejected = Vec::new();
    for case in 0..500 {
        let a = algebra(&mut r);
        let phi = unital_map(&a, &mut r);
        let (w, state_pair) = if case % 2 == 0 { (hermitian(&a, &mut r), false) } else { (state(&a, &mut r), true) };
        let rho = phi.predual_apply(&w).unwrap();
        let mut verdicts = vec![
            check_hermitian_reachable(&w, &rho, &t).unwrap().verdict,
            check_hermitian_reachable_general(&w, &rho, &t).unwrap().decision.verdict,
        ];
        if state_pair {
            verdicts.push(check_state_reachable(&w, &rho, &t).unwrap().verdict);
            verdicts.push(check_more_mixed(&w, &rho, &t).unwrap().verdict);
        }
        if verdicts.contains(&Verdict::No) {
            rejected.push((case, a.block_dims().to_vec(), verdicts));
        }
    }
    assert!(rejected.is_empty(), "{rejected:?}");
}
