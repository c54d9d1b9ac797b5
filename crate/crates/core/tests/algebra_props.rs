//! Invariants of the exterior algebra and the coefficient constants on random inputs.

use hodge_forms::coefficients::{conjugate_pullback, legendre_constant, legendre_hadamard_constant};
use hodge_forms::exterior::{binomial, hodge_star, inner, interior_product, pullback_linear, wedge, Form};
use nalgebra::DMatrix;
use proptest::prelude::*;

const TOL: f64 = 1e-10;

fn form(n: usize, k: isize) -> impl Strategy<Value = Form> {
    prop::collection::vec(-1.0f64..1.0, binomial(n, k)).prop_map(move |c| Form::from_coeffs(n, k, c).unwrap())
}

/// `(n, k, l)` with `k + l <= n`.
fn degrees() -> impl Strategy<Value = (usize, isize, isize)> {
    (1usize..=6).prop_flat_map(|n| (Just(n), 0..=n as isize)).prop_flat_map(|(n, k)| (Just(n), Just(k), 0..=(n as isize - k)))
}

fn close(a: &Form, b: &Form) -> bool {
    a.coeffs().iter().zip(b.coeffs()).all(|(x, y)| (x - y).abs() <= TOL)
}

fn sign(p: isize) -> f64 {
    if p % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn invertible(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-0.4f64..0.4, n * n).prop_map(move |v| DMatrix::identity(n, n) + DMatrix::from_vec(n, n, v))
}

proptest! {
    #[test]
    fn wedge_is_graded_commutative((xi, eta, kl) in degrees().prop_flat_map(|(n, k, l)| (form(n, k), form(n, l), Just(k * l)))) {
        let a = wedge(&xi, &eta).unwrap();
        let b = wedge(&eta, &xi).unwrap().scale(sign(kl));
        prop_assert!(close(&a, &b));
    }

    #[test]
    fn wedge_is_associative((xi, eta, zeta) in (1usize..=5).prop_flat_map(|n| (form(n, 1), form(n, 2.min(n as isize)), form(n, 1)))) {
        let l = wedge(&wedge(&xi, &eta).unwrap(), &zeta).unwrap();
        let r = wedge(&xi, &wedge(&eta, &zeta).unwrap()).unwrap();
        prop_assert!(close(&l, &r));
    }

    #[test]
    fn interior_is_an_antiderivation(
        (v, xi, eta, k) in degrees().prop_flat_map(|(n, k, l)| (form(n, 1), form(n, k), form(n, l), Just(k)))
    ) {
        let lhs = interior_product(&v, &wedge(&xi, &eta).unwrap()).unwrap();
        let a = wedge(&interior_product(&v, &xi).unwrap(), &eta).unwrap();
        let b = wedge(&xi, &interior_product(&v, &eta).unwrap()).unwrap().scale(sign(k));
        prop_assert!(close(&lhs, &a.add(&b).unwrap()));
    }

    #[test]
    fn interior_twice_vanishes((v, xi) in (1usize..=6).prop_flat_map(|n| (form(n, 1), (0..=n as isize).prop_flat_map(move |k| form(n, k))))) {
        let twice = interior_product(&v, &interior_product(&v, &xi).unwrap()).unwrap();
        prop_assert!(twice.norm() <= TOL);
    }

    #[test]
    fn star_gives_inner_product((xi, eta, n) in (1usize..=6).prop_flat_map(|n| (0..=n as isize).prop_flat_map(move |k| (form(n, k), form(n, k), Just(n))))) {
        let top = wedge(&xi, &hodge_star(&eta)).unwrap();
        prop_assert_eq!(top.coeffs().len(), 1);
        prop_assert!((top.coeffs()[0] - inner(&xi, &eta).unwrap()).abs() <= TOL);
        let k = xi.degree();
        let back = hodge_star(&hodge_star(&xi)).scale(sign(k * (n as isize - k)));
        prop_assert!(close(&back, &xi));
    }

    #[test]
    fn pullback_respects_wedge_and_composition(
        (s, t, xi, eta) in (2usize..=4).prop_flat_map(|n| (invertible(n), invertible(n), form(n, 1), form(n, 2)))
    ) {
        let lhs = pullback_linear(&t, &wedge(&xi, &eta).unwrap()).unwrap();
        let rhs = wedge(&pullback_linear(&t, &xi).unwrap(), &pullback_linear(&t, &eta).unwrap()).unwrap();
        prop_assert!(close(&lhs, &rhs));
        let nested = pullback_linear(&t, &pullback_linear(&s, &eta).unwrap()).unwrap();
        let composed = pullback_linear(&(&s * &t), &eta).unwrap();
        prop_assert!(close(&nested, &composed));
    }

    #[test]
    fn conjugate_pullback_round_trips(
        (a, t, k) in (2usize..=4).prop_flat_map(|n| (1..=n as isize).prop_flat_map(move |k| {
            let d = binomial(n, k);
            (prop::collection::vec(-1.0f64..1.0, d * d).prop_map(move |v| DMatrix::from_vec(d, d, v)), invertible(n), Just(k))
        }))
    ) {
        let tinv = t.clone().try_inverse().unwrap();
        let back = conjugate_pullback(&conjugate_pullback(&a, &t, k).unwrap(), &tinv, k).unwrap();
        prop_assert!((back - &a).abs().max() <= 1e-8);
    }

    #[test]
    fn lh_is_at_least_legendre(
        (a, n, k) in (2usize..=4).prop_flat_map(|n| (0..n as isize).prop_flat_map(move |k| {
            let d = binomial(n, k + 1);
            (prop::collection::vec(-1.0f64..1.0, d * d).prop_map(move |v| DMatrix::from_vec(d, d, v)), Just(n), Just(k))
        }))
    ) {
        // decomposables are a subset, so their minimum cannot fall below the full one
        let lh = legendre_hadamard_constant(&a, n, k).unwrap();
        prop_assert!(lh >= legendre_constant(&a).unwrap() - 1e-8);
    }
}

#[test]
fn lh_can_exceed_legendre() {
    // ⟨Aξ,ξ⟩ couples e¹⁴, e²³ with e³⁴; its minimizer violates the Plücker relation
    let mut a = DMatrix::zeros(6, 6);
    a[(2, 5)] = 0.26;
    a[(3, 5)] = 0.42;
    let lh = legendre_hadamard_constant(&a, 4, 1).unwrap();
    let leg = legendre_constant(&a).unwrap();
    assert!(lh > leg + 1e-3, "lh {lh}, legendre {leg}");
}
