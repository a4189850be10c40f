use hosfem::basis::{gll_points, legendre_and_derivative, SpectralBasis};
use proptest::prelude::*;

fn eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn eval_derivative(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (p, c)| acc * x + p as f64 * c)
}

#[test]
fn second_order_values_are_exact() {
    let b = SpectralBasis::new(2).unwrap();
    assert_eq!(b.points(), &[-1.0, 0.0, 1.0]);
    for (w, want) in b.weights().iter().zip([1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0]) {
        assert!((w - want).abs() <= 1e-12);
    }
    let d = [-1.5, 2.0, -0.5, -0.5, 0.0, 0.5, 0.5, -2.0, 1.5];
    for (got, want) in b.diff_matrix().iter().zip(d) {
        assert!((got - want).abs() <= 1e-12);
    }
}

#[test]
fn points_are_symmetric_and_increasing() {
    for n in 1..=16 {
        let x = gll_points(n).unwrap();
        for i in 0..=n {
            assert_eq!(x[i], -x[n - i]);
            if i > 0 {
                assert!(x[i] > x[i - 1]);
            }
        }
    }
}

#[test]
fn interior_points_are_derivative_roots() {
    for n in 2..=16 {
        let x = gll_points(n).unwrap();
        for &xi in &x[1..n] {
            assert!(legendre_and_derivative(n, xi).1.abs() < 1e-12, "N={n} x={xi}");
        }
    }
}

proptest! {
    #[test]
    fn differentiation_is_exact_for_degree_up_to_n(
        n in 1usize..=12,
        coeffs in prop::collection::vec(-1.0f64..1.0, 13),
    ) {
        let b = SpectralBasis::new(n).unwrap();
        let c = &coeffs[..=n];
        let x = b.points();
        for i in 0..=n {
            let du: f64 = (0..=n).map(|j| b.d(i, j) * eval(c, x[j])).sum();
            prop_assert!((du - eval_derivative(c, x[i])).abs() < 1e-10, "N={} i={}", n, i);
        }
    }

    #[test]
    fn quadrature_is_exact_for_degree_up_to_2n_minus_1(
        n in 1usize..=12,
        coeffs in prop::collection::vec(-1.0f64..1.0, 24),
    ) {
        let b = SpectralBasis::new(n).unwrap();
        let c = &coeffs[..2 * n];
        let q: f64 = b.points().iter().zip(b.weights()).map(|(&x, w)| w * eval(c, x)).sum();
        let exact: f64 = c
            .iter()
            .enumerate()
            .map(|(p, a)| if p % 2 == 0 { 2.0 * a / (p as f64 + 1.0) } else { 0.0 })
            .sum();
        prop_assert!((q - exact).abs() < 1e-12);
    }
}
