//! Self-checks run by `hosfem verify`: every kernel variant against the
//! assembled dense matrix, the factor routes against each other, the
//! analytic against the discrete Jacobian, the workload tables, the roofline
//! arithmetic and the basis.
//!
//! All randomness comes from a seeded generator, so reports are reproducible
//! bit for bit.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::axlocal::dense::{dense_apply, dense_local_matrix};
use crate::axlocal::workload::{self, workload_count, PublishedScheme};
use crate::axlocal::{ElementGeometry, Equation, FactorSource, HelmholtzCoefficients, KernelSpec, PreparedOperator};
use crate::basis::SpectralBasis;
use crate::error::Result;
use crate::geometry::{
    discrete_element_jacobians, discrete_factors, element_node_coordinates, lambda_geo_field, merged_scalar_setup,
    parallelepiped_setup, partial_recompute_factors, recompute_parallelepiped, recompute_trilinear,
    trilinear_jacobian_analytic, FactorConvention, GeometricFactorSet,
};
use crate::mesh::{reference_vertices, Element, LocalField, Vertices};
use crate::roofline::{
    machine_balance, mbp_crossing, roofline_bounds, Bandwidth, HardwareProfile, KernelModel, ModelOptions, Peak,
};

/// Tolerances, one per check family.
pub mod tol {
    pub const BASIS_VALUES: f64 = 1e-12;
    pub const BASIS_EXACTNESS: f64 = 1e-10;
    pub const OPERATOR: f64 = 1e-12;
    pub const SYMMETRY: f64 = 1e-12;
    pub const ROUTES: f64 = 1e-12;
    pub const JACOBIAN: f64 = 1e-12;
    pub const NULL_SPACE: f64 = 1e-10;
    pub const MASS: f64 = 1e-13;
    pub const ROOFLINE: f64 = 0.01;
}

pub const SUITES: [&str; 7] = ["basis", "operator", "routes", "jacobian", "workload", "roofline", "nullspace"];

/// What to run.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyScope {
    /// Orders for element-level suites; `None` uses each suite's default.
    pub orders: Option<Vec<usize>>,
    pub equations: Vec<Equation>,
    pub n_cols: Vec<usize>,
    /// Suite names; `None` runs all of [`SUITES`].
    pub suites: Option<Vec<String>>,
    pub elements_per_case: usize,
    pub seed: u64,
}

impl Default for VerifyScope {
    fn default() -> Self {
        Self {
            orders: None,
            equations: Equation::ALL.to_vec(),
            n_cols: vec![1, 3],
            suites: None,
            elements_per_case: 20,
            seed: 2024,
        }
    }
}

impl VerifyScope {
    fn orders_or(&self, default: &[usize]) -> Vec<usize> {
        self.orders.clone().unwrap_or_else(|| default.to_vec())
    }

    fn wants(&self, suite: &str) -> bool {
        self.suites.as_ref().map_or(true, |s| s.iter().any(|x| x == suite))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub checks: usize,
    /// Largest observed error relative to its tolerance.
    pub worst_ratio: f64,
    pub failures: Vec<String>,
}

impl SuiteResult {
    fn new(name: &str) -> Self {
        Self { name: name.to_string(), checks: 0, worst_ratio: 0.0, failures: Vec::new() }
    }

    /// Records `error <= tolerance` for the check named by `label`.
    fn check(&mut self, label: impl FnOnce() -> String, error: f64, tolerance: f64) {
        self.checks += 1;
        let ratio = if tolerance > 0.0 { error / tolerance } else if error == 0.0 { 0.0 } else { f64::INFINITY };
        if ratio.is_nan() || ratio > 1.0 {
            self.failures.push(format!("{}: error {error:.3e} > tol {tolerance:.1e}", label()));
        }
        if !ratio.is_nan() {
            self.worst_ratio = self.worst_ratio.max(ratio);
        } else {
            self.worst_ratio = f64::INFINITY;
        }
    }

    fn check_eq<T: PartialEq + fmt::Debug>(&mut self, label: impl FnOnce() -> String, got: T, want: T) {
        self.checks += 1;
        if got != want {
            self.failures.push(format!("{}: got {got:?}, want {want:?}", label()));
            self.worst_ratio = f64::INFINITY;
        }
    }

    fn error(&mut self, label: impl fmt::Display, e: impl fmt::Display) {
        self.checks += 1;
        self.failures.push(format!("{label}: {e}"));
        self.worst_ratio = f64::INFINITY;
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<10} {}  checks={} worst_error/tol={:.6e}",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.checks,
            self.worst_ratio
        )?;
        for msg in &self.failures {
            write!(f, "\n    {msg}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteResult::passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.suites {
            writeln!(f, "{s}")?;
        }
        write!(f, "overall {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

pub fn run(scope: &VerifyScope) -> VerifyReport {
    let mut suites = Vec::new();
    if scope.wants("basis") {
        suites.push(basis_suite());
    }
    if scope.wants("operator") {
        suites.push(operator_suite(scope));
    }
    if scope.wants("routes") {
        suites.push(route_suite(scope, &standard_routes()));
    }
    if scope.wants("jacobian") {
        suites.push(jacobian_suite(scope));
    }
    if scope.wants("workload") {
        suites.push(workload_suite());
    }
    if scope.wants("roofline") {
        suites.push(roofline_suite());
    }
    if scope.wants("nullspace") {
        suites.push(null_space_suite(scope));
    }
    VerifyReport { suites }
}

/// Random trilinear element: the reference cube scaled, sheared and with
/// every vertex jittered, redrawn until the Jacobian is positive at every
/// node of `basis`.
pub fn random_trilinear(rng: &mut impl Rng, basis: &SpectralBasis) -> Vertices {
    loop {
        let scale = [rng.gen_range(0.3..2.0), rng.gen_range(0.3..2.0), rng.gen_range(0.3..2.0)];
        let shear = rng.gen_range(-0.3..0.3);
        let offset = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let v = reference_vertices().map(|p| {
            let mut q = [0.0; 3];
            for d in 0..3 {
                q[d] = offset[d] + scale[d] * (p[d] + rng.gen_range(-0.25..0.25));
            }
            q[0] += shear * q[1];
            q
        });
        let coords = element_node_coordinates(&v, basis);
        if discrete_element_jacobians(&coords, basis).is_ok() {
            return v;
        }
    }
}

/// Random non-degenerate parallelepiped `o + (+-a +-b +-c) / 2`.
pub fn random_parallelepiped(rng: &mut impl Rng) -> Vertices {
    let mut m = [[0.0; 3]; 3];
    for (c, col) in m.iter_mut().enumerate() {
        for (d, x) in col.iter_mut().enumerate() {
            *x = if c == d { rng.gen_range(0.5..2.0) } else { rng.gen_range(-0.3..0.3) };
        }
    }
    let o = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
    std::array::from_fn(|i| {
        let sgn = [(i & 1) as f64 * 2.0 - 1.0, ((i >> 1) & 1) as f64 * 2.0 - 1.0, (i >> 2) as f64 * 2.0 - 1.0];
        std::array::from_fn(|d| o[d] + 0.5 * (sgn[0] * m[0][d] + sgn[1] * m[1][d] + sgn[2] * m[2][d]))
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn basis_suite() -> SuiteResult {
    let mut s = SuiteResult::new("basis");
    match SpectralBasis::new(2) {
        Ok(b) => {
            s.check(|| "N=2 points".into(), max_diff(b.points(), &[-1.0, 0.0, 1.0]), tol::BASIS_VALUES);
            s.check(|| "N=2 weights".into(), max_diff(b.weights(), &[1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0]), tol::BASIS_VALUES);
            let d = [-1.5, 2.0, -0.5, -0.5, 0.0, 0.5, 0.5, -2.0, 1.5];
            s.check(|| "N=2 differentiation matrix".into(), max_diff(b.diff_matrix(), &d), tol::BASIS_VALUES);
        }
        Err(e) => s.error("N=2", e),
    }
    for n in 1..=12 {
        let b = match SpectralBasis::new(n) {
            Ok(b) => b,
            Err(e) => {
                s.error(format!("N={n}"), e);
                continue;
            }
        };
        let (x, w) = (b.points(), b.weights());
        let n1 = b.n1();
        // D is exact on monomials of degree <= N.
        for p in 0..=n {
            let mut err = 0.0_f64;
            for i in 0..n1 {
                let du: f64 = (0..n1).map(|j| b.d(i, j) * x[j].powi(p as i32)).sum();
                let want = if p == 0 { 0.0 } else { p as f64 * x[i].powi(p as i32 - 1) };
                err = err.max((du - want).abs());
            }
            s.check(|| format!("N={n} derivative of x^{p}"), err, tol::BASIS_EXACTNESS);
        }
        // GLL quadrature is exact up to degree 2N - 1.
        for p in 0..2 * n {
            let q: f64 = x.iter().zip(w).map(|(xi, wi)| wi * xi.powi(p as i32)).sum();
            let want = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            s.check(|| format!("N={n} quadrature of x^{p}"), (q - want).abs(), tol::BASIS_EXACTNESS);
        }
    }
    s
}

/// One operator test case: an element, coefficient fields, the dense
/// oracle per equation.
fn random_coefficients(rng: &mut impl Rng, order: usize) -> HelmholtzCoefficients {
    let n = (order + 1).pow(3);
    let l0 = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    let l1 = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    HelmholtzCoefficients {
        lambda0: LocalField::from_vec(1, order, 1, l0).expect("sized"),
        lambda1: LocalField::from_vec(1, order, 1, l1).expect("sized"),
    }
}

fn operator_suite(scope: &VerifyScope) -> SuiteResult {
    let mut s = SuiteResult::new("operator");
    let mut rng = ChaCha8Rng::seed_from_u64(scope.seed);
    for order in scope.orders_or(&[1, 2, 3, 5, 7]) {
        let Ok(basis) = SpectralBasis::new(order) else {
            s.error(format!("N={order}"), "invalid order");
            continue;
        };
        let n = basis.nodes_per_element();
        for case in 0..scope.elements_per_case {
            // Every third case is a parallelepiped so that variant is covered.
            let v = if case % 3 == 2 { random_parallelepiped(&mut rng) } else { random_trilinear(&mut rng, &basis) };
            let element = Element::classify(v);
            let coeffs = random_coefficients(&mut rng, order);
            let coords = element_node_coordinates(&v, &basis);
            let oracle_factors = match discrete_factors(&coords, &basis) {
                Ok(f) => f,
                Err(e) => {
                    s.error(format!("N={order} case {case}"), e);
                    continue;
                }
            };
            let x: Vec<f64> = (0..3 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for &eq in &scope.equations {
                let a = dense_local_matrix(
                    eq,
                    &basis,
                    &oracle_factors,
                    Some(coeffs.lambda0.as_slice()),
                    Some(coeffs.lambda1.as_slice()),
                );
                let asym = max_abs((&a - a.transpose()).as_slice()) / max_abs(a.as_slice());
                s.check(|| format!("N={order} {eq} case {case} dense symmetry"), asym, tol::SYMMETRY);
                for &nc in &scope.n_cols {
                    let xs = &x[..nc * n];
                    let want = dense_apply(&a, xs, nc);
                    let scale = max_abs(&want);
                    for variant in FactorSource::for_equation(eq) {
                        if !variant.accepts(element.kind) {
                            continue;
                        }
                        let label = || format!("N={order} {eq} n_col={nc} {variant} case {case}");
                        let got = KernelSpec::new(eq, nc, variant, order).and_then(|spec| {
                            crate::axlocal::ax_local_apply(&spec, &element, Some(&coeffs), xs)
                        });
                        match got {
                            Ok(y) => s.check(label, max_diff(&y, &want) / scale, tol::OPERATOR),
                            Err(e) => s.error(label(), e),
                        }
                    }
                }
            }
        }
    }
    s
}

/// A way of producing weighted factors for one element. Routes without a
/// mass term return `gwj = None`.
#[derive(Clone, Copy)]
pub struct Route {
    pub name: &'static str,
    pub parallelepiped_only: bool,
    pub factors: fn(&Vertices, &SpectralBasis) -> Result<RouteFactors>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteFactors {
    pub g: [Vec<f64>; 6],
    pub gwj: Option<Vec<f64>>,
}

impl RouteFactors {
    fn from_set(set: GeometricFactorSet, with_gwj: bool) -> Self {
        let w = set.to_weighted();
        Self { g: w.g, gwj: with_gwj.then_some(w.gwj) }
    }
}

fn trilinear_route(v: &Vertices, b: &SpectralBasis) -> Result<RouteFactors> {
    Ok(RouteFactors::from_set(recompute_trilinear(v, b)?, true))
}

/// Merged scalars with unit coefficients: `Lambda2 g_u` and `Lambda3` are
/// exactly the weighted factors.
fn merged_route(v: &Vertices, b: &SpectralBasis) -> Result<RouteFactors> {
    let n = b.nodes_per_element();
    let spec = KernelSpec::new(Equation::Helmholtz, 1, FactorSource::TrilinearMerged, b.order())?;
    let coeffs = HelmholtzCoefficients::constant(1, b.order(), 1.0, 1.0);
    let op = PreparedOperator::new(spec, &[Element::classify(*v)], Some(&coeffs))?;
    let ElementGeometry::Merged { lambda2, lambda3, .. } = &op.geometry()[0] else {
        unreachable!("merged spec prepares merged geometry")
    };
    // Cross-check against the free-function setup.
    let unscaled = recompute_trilinear(v, b)?;
    let lg = unscaled.lambda_geo.as_deref().expect("unscaled");
    let gwj: Vec<f64> = (0..n).map(|i| unscaled.node(i).gwj).collect();
    let (l2, l3) = merged_scalar_setup(&vec![1.0; n], &vec![1.0; n], lg, &gwj)?;
    debug_assert!(l2 == *lambda2 && l3 == *lambda3);
    let g = std::array::from_fn(|a| (0..n).map(|i| lambda2[i] * unscaled.g[a][i]).collect());
    Ok(RouteFactors { g, gwj: Some(lambda3.clone()) })
}

fn partial_route(v: &Vertices, b: &SpectralBasis) -> Result<RouteFactors> {
    let lg = lambda_geo_field(v, b)?;
    Ok(RouteFactors::from_set(partial_recompute_factors(v, &lg, b), false))
}

fn parallelepiped_route(v: &Vertices, b: &SpectralBasis) -> Result<RouteFactors> {
    let h = parallelepiped_setup(v)?;
    let n1 = b.n1();
    let n = b.nodes_per_element();
    let mut set = GeometricFactorSet {
        convention: FactorConvention::Weighted,
        g: std::array::from_fn(|_| vec![0.0; n]),
        gwj: vec![0.0; n],
        lambda_geo: None,
    };
    for k in 0..n1 {
        for j in 0..n1 {
            for i in 0..n1 {
                let node = i + j * n1 + k * n1 * n1;
                let f = recompute_parallelepiped(&h, b, i, j, k);
                for a in 0..6 {
                    set.g[a][node] = f.g[a];
                }
                set.gwj[node] = f.gwj;
            }
        }
    }
    Ok(RouteFactors::from_set(set, true))
}

/// The recomputation routes compared against the discrete reference.
pub fn standard_routes() -> Vec<Route> {
    vec![
        Route { name: "trilinear", parallelepiped_only: false, factors: trilinear_route },
        Route { name: "trilinear-merged", parallelepiped_only: false, factors: merged_route },
        Route { name: "trilinear-partial", parallelepiped_only: false, factors: partial_route },
        Route { name: "parallelepiped", parallelepiped_only: true, factors: parallelepiped_route },
    ]
}

/// Compares every route against factors from the discrete Jacobian,
/// nodewise, relative to the largest reference factor of the element.
pub fn route_suite(scope: &VerifyScope, routes: &[Route]) -> SuiteResult {
    let mut s = SuiteResult::new("routes");
    let mut rng = ChaCha8Rng::seed_from_u64(scope.seed ^ 0x5eed);
    for order in scope.orders_or(&[1, 3, 5, 7]) {
        let Ok(basis) = SpectralBasis::new(order) else {
            s.error(format!("N={order}"), "invalid order");
            continue;
        };
        for case in 0..scope.elements_per_case {
            for shape in ["trilinear", "parallelepiped"] {
                let v = if shape == "trilinear" { random_trilinear(&mut rng, &basis) } else { random_parallelepiped(&mut rng) };
                let reference = match discrete_factors(&element_node_coordinates(&v, &basis), &basis) {
                    Ok(r) => r,
                    Err(e) => {
                        s.error(format!("N={order} {shape} case {case} reference"), e);
                        continue;
                    }
                };
                let scale = reference.g.iter().chain([&reference.gwj]).map(|f| max_abs(f)).fold(0.0, f64::max);
                for route in routes {
                    if route.parallelepiped_only && shape != "parallelepiped" {
                        continue;
                    }
                    let label = || format!("N={order} {shape} case {case} route {}", route.name);
                    match (route.factors)(&v, &basis) {
                        Ok(f) => {
                            let mut d = (0..6).map(|a| max_diff(&f.g[a], &reference.g[a])).fold(0.0, f64::max);
                            if let Some(gwj) = &f.gwj {
                                d = d.max(max_diff(gwj, &reference.gwj));
                            }
                            s.check(label, d / scale, tol::ROUTES);
                        }
                        Err(e) => s.error(label(), e),
                    }
                }
            }
        }
    }
    s
}

fn jacobian_suite(scope: &VerifyScope) -> SuiteResult {
    let mut s = SuiteResult::new("jacobian");
    let mut rng = ChaCha8Rng::seed_from_u64(scope.seed ^ 0x1ac0);
    for order in scope.orders_or(&[1, 2, 3, 5, 7]) {
        let Ok(basis) = SpectralBasis::new(order) else {
            s.error(format!("N={order}"), "invalid order");
            continue;
        };
        let n1 = basis.n1();
        let xi = basis.points();
        for case in 0..scope.elements_per_case {
            let v = random_trilinear(&mut rng, &basis);
            let field = match discrete_element_jacobians(&element_node_coordinates(&v, &basis), &basis) {
                Ok(f) => f,
                Err(e) => {
                    s.error(format!("N={order} case {case}"), e);
                    continue;
                }
            };
            let mut scale = 0.0_f64;
            let mut diff = 0.0_f64;
            for k in 0..n1 {
                for j in 0..n1 {
                    for i in 0..n1 {
                        let a = trilinear_jacobian_analytic(&v, xi[i], xi[j], xi[k]);
                        let d = &field.jacobians[i + j * n1 + k * n1 * n1];
                        for r in 0..3 {
                            for c in 0..3 {
                                scale = scale.max(a[r][c].abs());
                                diff = diff.max((a[r][c] - d[r][c]).abs());
                            }
                        }
                    }
                }
            }
            s.check(|| format!("N={order} case {case}"), diff / scale, tol::JACOBIAN);
        }
    }
    s
}

/// The per-element FLOP and word counts, transcribed row by row from the
/// reference tables, as independent closures of `N1`.
pub mod tables {
    use crate::axlocal::{Equation, FactorSource};

    /// `(equation, n_col, F_ax, M in words)`.
    pub fn operator_rows() -> Vec<(Equation, usize, fn(u64) -> u64, fn(u64) -> u64)> {
        vec![
            (Equation::Poisson, 1, |n| 12 * n.pow(4) + 15 * n.pow(3), |n| 8 * n.pow(3) + n.pow(2)),
            (Equation::Helmholtz, 1, |n| 12 * n.pow(4) + 20 * n.pow(3), |n| 11 * n.pow(3) + n.pow(2)),
            (Equation::Poisson, 3, |n| 36 * n.pow(4) + 45 * n.pow(3), |n| 12 * n.pow(3) + n.pow(2)),
            (Equation::Helmholtz, 3, |n| 36 * n.pow(4) + 60 * n.pow(3), |n| 15 * n.pow(3) + n.pow(2)),
        ]
    }

    /// `(source, equation, F_geo, M_geo in words)`.
    pub fn geometry_rows() -> Vec<(FactorSource, Equation, fn(u64) -> u64, fn(u64) -> u64)> {
        use Equation::*;
        use FactorSource::*;
        vec![
            (Stored, Poisson, |_| 0, |n| 6 * n.pow(3)),
            (Stored, Helmholtz, |_| 0, |n| 7 * n.pow(3)),
            (ParallelepipedRecompute, Poisson, |n| 7 * n.pow(3), |_| 6),
            (ParallelepipedRecompute, Helmholtz, |n| 8 * n.pow(3), |_| 7),
            (TrilinearRecompute, Poisson, |n| 72 * n + 45 * n.pow(2) + 80 * n.pow(3), |_| 24),
            (TrilinearRecompute, Helmholtz, |n| 72 * n + 45 * n.pow(2) + 80 * n.pow(3), |_| 24),
            (TrilinearMerged, Helmholtz, |n| 72 * n + 45 * n.pow(2) + 60 * n.pow(3), |_| 24),
            (TrilinearPartial, Poisson, |n| 72 * n + 45 * n.pow(2) + 60 * n.pow(3), |n| 24 + n.pow(3)),
        ]
    }

    /// Previously published schemes: `(F_geo, M_geo in words)`.
    pub fn published_rows() -> Vec<(&'static str, fn(u64) -> u64, fn(u64) -> u64)> {
        vec![
            ("all-hex-gpu", |n| 242 * n.pow(3), |_| 24),
            ("nekrs", |n| 296 * n.pow(3), |_| 24),
            ("fpga", |n| 81 * n.pow(3) + 18 * n.pow(4), |n| 24 + n.pow(3)),
        ]
    }
}

fn workload_suite() -> SuiteResult {
    let mut s = SuiteResult::new("workload");
    let fp = crate::FP_SIZE;
    for n1 in 2..=20u64 {
        let order = (n1 - 1) as usize;
        for (eq, nc, f, m) in tables::operator_rows() {
            let spec = KernelSpec { equation: eq, n_col: nc, factor_source: FactorSource::Stored, order };
            let w = workload_count(&spec);
            s.check_eq(|| format!("N1={n1} {eq} n_col={nc} F_ax"), w.f_ax, f(n1));
            s.check_eq(|| format!("N1={n1} {eq} n_col={nc} M"), w.m_bytes, m(n1) * fp);
            for (src, geq, fg, mg) in tables::geometry_rows() {
                if geq != eq {
                    continue;
                }
                let spec = KernelSpec { factor_source: src, ..spec };
                let w = workload_count(&spec);
                s.check_eq(|| format!("N1={n1} {eq} n_col={nc} {src} F_geo"), w.f_geo, fg(n1));
                s.check_eq(|| format!("N1={n1} {eq} n_col={nc} {src} M_geo"), w.m_geo_bytes, mg(n1) * fp);
                let total = (m(n1) - m_full(eq, n1) + mg(n1)) * fp;
                s.check_eq(|| format!("N1={n1} {eq} n_col={nc} {src} M"), w.m_bytes, total);
                s.check_eq(|| format!("N1={n1} {eq} n_col={nc} {src} F_ax"), w.f_ax, f(n1));
            }
        }
        for ((name, fg, mg), scheme) in tables::published_rows().into_iter().zip(PublishedScheme::ALL) {
            s.check_eq(|| format!("N1={n1} {name} name"), scheme.name(), name);
            s.check_eq(|| format!("N1={n1} {name} F_geo"), scheme.f_geo(n1), fg(n1));
            s.check_eq(|| format!("N1={n1} {name} M_geo"), scheme.m_geo_words(n1), mg(n1));
        }
        s.check_eq(|| format!("N1={n1} discrete Jacobian"), workload::discrete_jacobian_flops(n1), 18 * n1.pow(4));
    }
    s
}

fn m_full(eq: Equation, n1: u64) -> u64 {
    match eq {
        Equation::Poisson => 6 * n1.pow(3),
        Equation::Helmholtz => 7 * n1.pow(3),
    }
}

fn roofline_suite() -> SuiteResult {
    let mut s = SuiteResult::new("roofline");
    let a100 = HardwareProfile::a100();
    let k100 = HardwareProfile::k100();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let spec = KernelSpec::new(Equation::Helmholtz, 1, FactorSource::TrilinearRecompute, 7).expect("valid");
    match KernelModel::from_spec(&spec, &a100, &ModelOptions::default()).and_then(|m| Ok((m, roofline_bounds(&m, &a100)?)))
    {
        Ok((m, b)) => {
            s.check_eq(|| "A100 example M".into(), m.m_bytes, 16576.0);
            s.check_eq(|| "A100 example F_ax".into(), m.f_ax, 59392.0);
            s.check_eq(|| "A100 example F_geo".into(), m.f_geo, 44416.0);
            s.check_eq(|| "A100 example matrix-unit FLOPs".into(), m.matrix_unit_flops, 32768.0);
            s.check(|| "A100 example T_mem".into(), rel(b.t_mem, 1.22e-8), tol::ROOFLINE);
            s.check(|| "A100 example R_eff".into(), rel(b.r_eff, 4.87e12), tol::ROOFLINE);
            s.check_eq(|| "A100 example bound".into(), b.bound.name(), "memory");
        }
        Err(e) => s.error("A100 example", e),
    }
    match machine_balance(&a100, Peak::General, Bandwidth::Measured) {
        Ok(b) => s.check(|| "A100 balance".into(), rel(b, 9.7 / 1.36), 1e-12),
        Err(e) => s.error("A100 balance", e),
    }
    match mbp_crossing(Equation::Poisson, 3, &a100, Bandwidth::Measured) {
        Ok(n1) => s.check_eq(|| "A100 crossing, Poisson n_col=3".into(), n1, 18),
        Err(e) => s.error("A100 crossing", e),
    }
    s.check_eq(
        || "K100 has no crossing up to N1=64".into(),
        mbp_crossing(Equation::Poisson, 3, &k100, Bandwidth::Measured).is_err(),
        true,
    );
    for order in [3, 5, 7, 9] {
        for variant in [FactorSource::TrilinearRecompute, FactorSource::ParallelepipedRecompute] {
            let spec = KernelSpec::new(Equation::Helmholtz, 1, variant, order).expect("valid");
            let bound = KernelModel::from_spec(&spec, &k100, &ModelOptions::default())
                .and_then(|m| roofline_bounds(&m, &k100))
                .map(|b| b.bound.name());
            match bound {
                Ok(b) => s.check_eq(|| format!("K100 N={order} {variant} memory-bound"), b, "memory"),
                Err(e) => s.error(format!("K100 N={order}"), e),
            }
        }
    }
    s
}

fn null_space_suite(scope: &VerifyScope) -> SuiteResult {
    let mut s = SuiteResult::new("nullspace");
    let mut rng = ChaCha8Rng::seed_from_u64(scope.seed ^ 0x0ca7);
    for order in scope.orders_or(&[1, 2, 3, 5, 7]) {
        let Ok(basis) = SpectralBasis::new(order) else {
            s.error(format!("N={order}"), "invalid order");
            continue;
        };
        let n = basis.nodes_per_element();
        if scope.equations.contains(&Equation::Poisson) {
            for case in 0..scope.elements_per_case.min(5) {
                let v = if case % 2 == 0 { random_trilinear(&mut rng, &basis) } else { random_parallelepiped(&mut rng) };
                let el = Element::classify(v);
                let c = rng.gen_range(-3.0..3.0);
                for &nc in &scope.n_cols {
                    let x = vec![c; nc * n];
                    let xnorm = (x.iter().map(|v| v * v).sum::<f64>()).sqrt();
                    for variant in FactorSource::for_equation(Equation::Poisson) {
                        if !variant.accepts(el.kind) {
                            continue;
                        }
                        let label = || format!("N={order} n_col={nc} {variant} constant case {case}");
                        let y = KernelSpec::new(Equation::Poisson, nc, variant, order)
                            .and_then(|spec| crate::axlocal::ax_local_apply(&spec, &el, None, &x));
                        match y {
                            Ok(y) => s.check(label, (y.iter().map(|v| v * v).sum::<f64>()).sqrt() / xnorm, tol::NULL_SPACE),
                            Err(e) => s.error(label(), e),
                        }
                    }
                }
            }
        }
        if scope.equations.contains(&Equation::Helmholtz) {
            let el = Element::classify(reference_vertices());
            let coeffs = HelmholtzCoefficients::constant(1, order, 0.0, 1.0);
            let n1 = basis.n1();
            for &nc in &scope.n_cols {
                let x: Vec<f64> = (0..nc * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let want: Vec<f64> = (0..nc * n)
                    .map(|p| {
                        let l = p % n;
                        basis.weight3(l % n1, (l / n1) % n1, l / (n1 * n1)) * x[p]
                    })
                    .collect();
                for variant in FactorSource::for_equation(Equation::Helmholtz) {
                    let label = || format!("N={order} n_col={nc} {variant} mass action");
                    let y = KernelSpec::new(Equation::Helmholtz, nc, variant, order)
                        .and_then(|spec| crate::axlocal::ax_local_apply(&spec, &el, Some(&coeffs), &x));
                    match y {
                        Ok(y) => s.check(label, max_diff(&y, &want), tol::MASS),
                        Err(e) => s.error(label(), e),
                    }
                }
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_scope() -> VerifyScope {
        VerifyScope { orders: Some(vec![1, 3]), elements_per_case: 3, ..Default::default() }
    }

    #[test]
    fn small_scope_passes() {
        let r = run(&small_scope());
        assert!(r.passed(), "{r}");
        assert_eq!(r.suites.len(), SUITES.len());
    }

    #[test]
    fn suite_filter() {
        let scope = VerifyScope { suites: Some(vec!["workload".into()]), ..small_scope() };
        let r = run(&scope);
        assert_eq!(r.suites.len(), 1);
        assert_eq!(r.suites[0].name, "workload");
    }

    fn scaled_route(v: &Vertices, b: &SpectralBasis) -> Result<RouteFactors> {
        let mut f = trilinear_route(v, b)?;
        for x in f.g[1].iter_mut() {
            *x *= 1.0 + 1e-9;
        }
        Ok(f)
    }

    #[test]
    fn injected_scaling_bug_is_caught() {
        let mut routes = standard_routes();
        routes.push(Route { name: "mutant", parallelepiped_only: false, factors: scaled_route });
        let r = route_suite(&small_scope(), &routes);
        assert!(!r.passed());
        assert!(r.failures.iter().all(|f| f.contains("mutant")));
    }
}
