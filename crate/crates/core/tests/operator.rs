use hosfem::axlocal::dense::{dense_apply, dense_local_matrix};
use hosfem::axlocal::{ax_local_apply, HelmholtzCoefficients, PreparedOperator};
use hosfem::geometry::{discrete_factors, element_node_coordinates};
use hosfem::mesh::{reference_vertices, Element, LocalField};
use hosfem::verify::{random_parallelepiped, random_trilinear};
use hosfem::{Equation, FactorSource, KernelSpec, SpectralBasis};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn unit_coeffs(order: usize) -> HelmholtzCoefficients {
    HelmholtzCoefficients::constant(1, order, 1.0, 1.0)
}

#[test]
fn every_variant_matches_the_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for order in [1, 2, 4] {
        let basis = SpectralBasis::new(order).unwrap();
        let n = basis.nodes_per_element();
        for case in 0..6 {
            let v = if case % 2 == 0 { random_trilinear(&mut rng, &basis) } else { random_parallelepiped(&mut rng) };
            let el = Element::classify(v);
            let factors = discrete_factors(&element_node_coordinates(&v, &basis), &basis).unwrap();
            let x: Vec<f64> = (0..3 * n).map(|i| ((i * 13 + case) as f64).sin()).collect();
            for eq in Equation::ALL {
                let ones = vec![1.0; n];
                let a = dense_local_matrix(eq, &basis, &factors, Some(&ones), Some(&ones));
                for nc in [1, 3] {
                    let want = dense_apply(&a, &x[..nc * n], nc);
                    for variant in FactorSource::for_equation(eq) {
                        if !variant.accepts(el.kind) {
                            continue;
                        }
                        let spec = KernelSpec::new(eq, nc, variant, order).unwrap();
                        let got = ax_local_apply(&spec, &el, Some(&unit_coeffs(order)), &x[..nc * n]).unwrap();
                        let err = max_diff(&got, &want) / max_abs(&want);
                        assert!(err <= 1e-12, "N={order} {eq} n_col={nc} {variant}: {err:e}");
                    }
                }
            }
        }
    }
}

#[test]
fn batched_apply_matches_sequential_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let order = 3;
    let basis = SpectralBasis::new(order).unwrap();
    let elements: Vec<_> = (0..17).map(|_| Element::classify(random_trilinear(&mut rng, &basis))).collect();
    let coeffs = HelmholtzCoefficients::constant(elements.len(), order, 1.3, 0.7);
    let n = basis.nodes_per_element() * 3 * elements.len();
    let x = LocalField::from_vec(elements.len(), order, 3, (0..n).map(|i| (i as f64 * 0.1).cos()).collect()).unwrap();
    for variant in FactorSource::for_equation(Equation::Helmholtz) {
        if variant == FactorSource::ParallelepipedRecompute {
            continue;
        }
        let spec = KernelSpec::new(Equation::Helmholtz, 3, variant, order).unwrap();
        let op = PreparedOperator::new(spec, &elements, Some(&coeffs)).unwrap();
        let mut seq = LocalField::zeros(elements.len(), order, 3);
        op.apply_sequential(&x, &mut seq).unwrap();
        let par = op.apply_new(&x).unwrap();
        assert_eq!(seq.as_slice(), par.as_slice());
    }
}

#[test]
fn columns_are_independent() {
    let order = 3;
    let basis = SpectralBasis::new(order).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let el = Element::classify(random_trilinear(&mut rng, &basis));
    let n = basis.nodes_per_element();
    let x: Vec<f64> = (0..3 * n).map(|i| (i as f64 * 0.3).sin()).collect();
    let spec3 = KernelSpec::new(Equation::Poisson, 3, FactorSource::TrilinearRecompute, order).unwrap();
    let spec1 = KernelSpec::new(Equation::Poisson, 1, FactorSource::TrilinearRecompute, order).unwrap();
    let y3 = ax_local_apply(&spec3, &el, None, &x).unwrap();
    for c in 0..3 {
        let y1 = ax_local_apply(&spec1, &el, None, &x[c * n..(c + 1) * n]).unwrap();
        assert_eq!(&y3[c * n..(c + 1) * n], &y1[..]);
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let el = Element::classify(reference_vertices());
    let spec = KernelSpec::new(Equation::Poisson, 1, FactorSource::Stored, 2).unwrap();
    assert!(ax_local_apply(&spec, &el, None, &[0.0; 5]).is_err());
    let mut v = reference_vertices();
    v[0] = v[7];
    let spec = KernelSpec::new(Equation::Poisson, 1, FactorSource::TrilinearRecompute, 2).unwrap();
    assert!(ax_local_apply(&spec, &Element::classify(v), None, &[0.0; 27]).is_err());
    let spec = KernelSpec::new(Equation::Helmholtz, 1, FactorSource::Stored, 2).unwrap();
    assert!(ax_local_apply(&spec, &el, None, &[0.0; 27]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn apply_is_linear_and_symmetric(
        seed in any::<u64>(),
        order in 1usize..5,
        variant in prop::sample::select(vec![FactorSource::Stored, FactorSource::TrilinearRecompute, FactorSource::TrilinearPartial]),
        alpha in -2.0f64..2.0,
    ) {
        let basis = SpectralBasis::new(order).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let el = Element::classify(random_trilinear(&mut rng, &basis));
        let n = basis.nodes_per_element();
        let spec = KernelSpec::new(Equation::Poisson, 1, variant, order).unwrap();
        let x: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.9 + seed as f64 % 3.0).sin()).collect();
        let y: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.4).cos()).collect();
        let ax = ax_local_apply(&spec, &el, None, &x).unwrap();
        let ay = ax_local_apply(&spec, &el, None, &y).unwrap();
        let combo: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + b).collect();
        let ac = ax_local_apply(&spec, &el, None, &combo).unwrap();
        let scale = max_abs(&ax).max(max_abs(&ay)).max(1.0);
        for i in 0..n {
            prop_assert!((ac[i] - (alpha * ax[i] + ay[i])).abs() <= 1e-12 * scale * 4.0);
        }
        let xay: f64 = x.iter().zip(&ay).map(|(a, b)| a * b).sum();
        let yax: f64 = y.iter().zip(&ax).map(|(a, b)| a * b).sum();
        prop_assert!((xay - yax).abs() <= 1e-11 * xay.abs().max(scale));
    }

    #[test]
    fn poisson_energy_is_nonnegative(seed in any::<u64>(), order in 1usize..5) {
        let basis = SpectralBasis::new(order).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let el = Element::classify(random_trilinear(&mut rng, &basis));
        let n = basis.nodes_per_element();
        let spec = KernelSpec::new(Equation::Poisson, 1, FactorSource::TrilinearRecompute, order).unwrap();
        let x: Vec<f64> = (0..n).map(|i| ((i * 7) as f64 + (seed % 11) as f64).sin()).collect();
        let ax = ax_local_apply(&spec, &el, None, &x).unwrap();
        let e: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
        prop_assert!(e >= -1e-12 * max_abs(&ax));
    }
}
