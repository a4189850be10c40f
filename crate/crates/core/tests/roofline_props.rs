use hosfem::roofline::{
    measured_performance, roofline_bounds, roofline_sweep, BoundKind, HardwareProfile, KernelModel, ModelOptions, Toggle,
};
use hosfem::{Equation, FactorSource, KernelSpec};
use proptest::prelude::*;

fn profile(peak: f64, matrix: Option<f64>, bw: f64) -> HardwareProfile {
    HardwareProfile {
        name: "test".into(),
        peak_general: peak,
        peak_matrix: matrix,
        bandwidth_measured: bw,
        bandwidth_theoretical: bw * 1.5,
    }
}

proptest! {
    #[test]
    fn more_bandwidth_never_lowers_the_bound(
        f_ax in 1e3f64..1e6, f_geo in 0f64..1e6, m in 1e3f64..1e6,
        bw in 1e10f64..1e12, factor in 1.0f64..10.0,
    ) {
        let model = KernelModel::new(f_ax, f_geo, m, 0.0).unwrap();
        let lo = roofline_bounds(&model, &profile(1e13, None, bw)).unwrap();
        let hi = roofline_bounds(&model, &profile(1e13, None, bw * factor)).unwrap();
        prop_assert!(hi.r_eff >= lo.r_eff * (1.0 - 1e-15));
    }

    #[test]
    fn more_recomputation_never_raises_the_bound(
        f_ax in 1e3f64..1e6, f_geo in 0f64..1e6, extra in 0f64..1e6, m in 1e3f64..1e6,
    ) {
        let hw = profile(9.7e12, Some(19.5e12), 1.36e12);
        let a = roofline_bounds(&KernelModel::new(f_ax, f_geo, m, 0.0).unwrap(), &hw).unwrap();
        let b = roofline_bounds(&KernelModel::new(f_ax, f_geo + extra, m, 0.0).unwrap(), &hw).unwrap();
        prop_assert!(b.r_eff <= a.r_eff * (1.0 + 1e-15));
    }

    #[test]
    fn memory_bound_without_split_is_intensity_times_bandwidth(
        f_ax in 1e3f64..1e5, m in 1e4f64..1e6,
    ) {
        let hw = profile(1e14, None, 1e12);
        let b = roofline_bounds(&KernelModel::new(f_ax, 0.0, m, 0.0).unwrap(), &hw).unwrap();
        prop_assert_eq!(b.bound, BoundKind::Memory);
        prop_assert!((b.r_eff - f_ax / m * 1e12).abs() <= 1e-12 * b.r_eff);
    }

    #[test]
    fn effective_to_total_ratio_is_workload_ratio(
        f_ax in 1.0f64..1e6, f_geo in 0f64..1e6, t in 1e-9f64..1.0,
    ) {
        let (pe, pt) = measured_performance(f_ax, f_geo, t).unwrap();
        prop_assert!(pe <= pt);
        prop_assert!((pe / pt - f_ax / (f_ax + f_geo)).abs() <= 1e-14);
    }
}

#[test]
fn k100_trilinear_models_are_memory_bound() {
    let hw = HardwareProfile::k100();
    for order in 1..=9 {
        for eq in Equation::ALL {
            for nc in [1, 3] {
                for v in FactorSource::for_equation(eq) {
                    let spec = KernelSpec::new(eq, nc, v, order).unwrap();
                    let m = KernelModel::from_spec(&spec, &hw, &ModelOptions::default()).unwrap();
                    assert_eq!(m.matrix_unit_flops, 0.0);
                    assert_eq!(roofline_bounds(&m, &hw).unwrap().bound, BoundKind::Memory, "{spec:?}");
                }
            }
        }
    }
}

#[test]
fn model_options_change_split_and_traffic() {
    let hw = HardwareProfile::a100();
    let spec = KernelSpec::new(Equation::Helmholtz, 3, FactorSource::TrilinearMerged, 7).unwrap();
    let auto = KernelModel::from_spec(&spec, &hw, &ModelOptions::default()).unwrap();
    assert_eq!(auto.matrix_unit_flops, 3.0 * 8.0 * 8f64.powi(4));
    let plain = KernelModel::from_spec(
        &spec,
        &hw,
        &ModelOptions { tensor_cores: Toggle::Off, diff_in_cache: Toggle::Off, ..Default::default() },
    )
    .unwrap();
    assert_eq!(plain.matrix_unit_flops, 0.0);
    assert_eq!(plain.m_bytes - auto.m_bytes, 64.0 * 8.0);
    // Matrix units are only used at N1 = 8 under auto.
    let spec5 = KernelSpec { order: 5, ..spec };
    assert_eq!(KernelModel::from_spec(&spec5, &hw, &ModelOptions::default()).unwrap().matrix_unit_flops, 0.0);
    // Forcing matrix units where there are none is an error at bound time.
    let forced = ModelOptions { tensor_cores: Toggle::On, ..Default::default() };
    let k100 = HardwareProfile::k100();
    let m = KernelModel::from_spec(&spec, &k100, &forced).unwrap();
    assert!(roofline_bounds(&m, &k100).is_err());
}

#[test]
fn overlap_never_slows_compute() {
    let hw = HardwareProfile::a100();
    let spec = KernelSpec::new(Equation::Poisson, 1, FactorSource::TrilinearRecompute, 7).unwrap();
    let m = KernelModel::from_spec(&spec, &hw, &ModelOptions::default()).unwrap();
    let sum = hosfem::roofline::roofline_bounds_with(&m, &hw, &ModelOptions::default()).unwrap();
    let max = hosfem::roofline::roofline_bounds_with(&m, &hw, &ModelOptions { overlap: true, ..Default::default() }).unwrap();
    assert!(max.t_cmp < sum.t_cmp);
}

#[test]
fn sweep_skips_undefined_variants_and_intensity_grows_with_order() {
    let hw = HardwareProfile::a100();
    let rows = roofline_sweep(
        &hw,
        &[Equation::Poisson],
        &[1],
        &[3, 5, 7, 9],
        &[FactorSource::Stored, FactorSource::TrilinearMerged],
        &ModelOptions::default(),
    )
    .unwrap();
    assert_eq!(rows.len(), 4);
    for w in rows.windows(2) {
        assert!(w[1].intensity > w[0].intensity);
    }
}
