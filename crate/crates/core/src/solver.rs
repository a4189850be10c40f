//! Global operator `A = Q^T A_L Q` and an unpreconditioned CG benchmark.
//!
//! Boundary conditions are homogeneous Dirichlet, imposed by zeroing the
//! boundary entries of a global vector before and after every apply. The
//! benchmark problem is the manufactured solution
//! `u = sin(pi x) sin(pi y) sin(pi z)` on the unit box, with `lambda0 =
//! lambda1 = 1` for Helmholtz so that `f = (3 pi^2 + 1) u` (Poisson:
//! `3 pi^2 u`).
//!
//! Global multi-column vectors store column `c` of node `g` at `c * N + g`.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::axlocal::workload::workload_count;
use crate::axlocal::{Equation, FactorSource, HelmholtzCoefficients, KernelSpec, PreparedOperator};
use crate::basis::SpectralBasis;
use crate::error::{HosfemError, Result};
use crate::geometry::{discrete_factors, element_node_coordinates};
use crate::mesh::{BoxMeshParams, Mesh};

/// Assembled-free global operator over a mesh.
#[derive(Debug, Clone)]
pub struct GlobalOperator {
    mesh: Mesh,
    local: PreparedOperator,
    multiplicity: Vec<usize>,
}

impl GlobalOperator {
    pub fn new(mesh: Mesh, spec: KernelSpec, coefficients: Option<&HelmholtzCoefficients>) -> Result<Self> {
        if spec.order != mesh.order() {
            return Err(HosfemError::IncompatibleSpec(format!(
                "kernel order {} differs from mesh order {}",
                spec.order,
                mesh.order()
            )));
        }
        let local = PreparedOperator::new(spec, mesh.elements(), coefficients)?;
        let multiplicity = mesh.multiplicity();
        Ok(Self { mesh, local, multiplicity })
    }

    /// Helmholtz operators get `lambda0 = lambda1 = 1`.
    pub fn with_unit_coefficients(mesh: Mesh, spec: KernelSpec) -> Result<Self> {
        let coeffs = HelmholtzCoefficients::constant(mesh.element_count(), mesh.order(), 1.0, 1.0);
        Self::new(mesh, spec, Some(&coeffs))
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn local(&self) -> &PreparedOperator {
        &self.local
    }

    pub fn spec(&self) -> &KernelSpec {
        self.local.spec()
    }

    pub fn multiplicity(&self) -> &[usize] {
        &self.multiplicity
    }

    /// Length of a global vector: `N * n_col`.
    pub fn len(&self) -> usize {
        self.mesh.global_node_count() * self.spec().n_col
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Boundary mask expanded to all columns.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let b = self.mesh.boundary_nodes();
        (0..self.spec().n_col).flat_map(|_| b.iter().copied()).collect()
    }

    /// `Q^T A_L Q x`, also returning the time spent in the local kernel.
    pub fn apply_timed(&self, x: &[f64]) -> Result<(Vec<f64>, Duration)> {
        let n_col = self.spec().n_col;
        let xl = self.mesh.gather(x, n_col)?;
        let start = Instant::now();
        let yl = self.local.apply_new(&xl)?;
        let kernel = start.elapsed();
        Ok((self.mesh.scatter_add(&yl)?, kernel))
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.apply_timed(x)?.0)
    }

    /// Apply on the masked subspace: boundary entries of `x` are treated as
    /// zero and those of the result are zeroed.
    pub fn apply_masked_timed(&self, x: &[f64], mask: &[bool]) -> Result<(Vec<f64>, Duration)> {
        check_len("mask", self.len(), mask.len())?;
        let mut xm = x.to_vec();
        zero_masked(&mut xm, mask);
        let (mut y, t) = self.apply_timed(&xm)?;
        zero_masked(&mut y, mask);
        Ok((y, t))
    }
}

/// Free-function form of [`GlobalOperator::apply`].
pub fn global_apply(op: &GlobalOperator, x: &[f64]) -> Result<Vec<f64>> {
    op.apply(x)
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(HosfemError::SizeMismatch { what, expected, actual });
    }
    Ok(())
}

fn zero_masked(v: &mut [f64], mask: &[bool]) {
    for (x, &m) in v.iter_mut().zip(mask) {
        if m {
            *x = 0.0;
        }
    }
}

/// Inner product summed in index order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |s, (x, y)| s + x * y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgReport {
    pub iterations: usize,
    pub converged: bool,
    pub final_relative_residual: f64,
    /// Relative residual `|r_k| / |b|`, starting with `k = 0`.
    pub residual_history: Vec<f64>,
    /// Max-norm error against a reference solution, when one is supplied.
    pub solution_error: Option<f64>,
    #[serde(skip)]
    pub solution: Vec<f64>,
    /// Wall time of the iteration loop.
    pub wall_time_s: f64,
    /// Part of `wall_time_s` spent in the element kernel.
    pub kernel_time_s: f64,
}

/// Unpreconditioned CG from `x0 = 0` on the subspace where `mask` is false.
///
/// Stops once `|r| / |b| <= tol` or after `max_iter` iterations; running out
/// of iterations is reported through `converged`, not as an error. A
/// non-positive or non-finite curvature `p . A p` aborts with
/// [`HosfemError::SolverBreakdown`].
pub fn cg_solve(op: &GlobalOperator, b: &[f64], tol: f64, max_iter: usize, mask: &[bool]) -> Result<CgReport> {
    check_len("right-hand side", op.len(), b.len())?;
    check_len("mask", op.len(), mask.len())?;
    let start = Instant::now();
    let mut kernel = Duration::ZERO;

    let mut r = b.to_vec();
    zero_masked(&mut r, mask);
    let mut x = vec![0.0; r.len()];
    let b_norm = dot(&r, &r).sqrt();
    if !b_norm.is_finite() {
        return Err(HosfemError::SolverBreakdown("right-hand side is not finite".into()));
    }
    if b_norm == 0.0 {
        return Ok(CgReport {
            iterations: 0,
            converged: true,
            final_relative_residual: 0.0,
            residual_history: vec![0.0],
            solution_error: None,
            solution: x,
            wall_time_s: start.elapsed().as_secs_f64(),
            kernel_time_s: 0.0,
        });
    }

    let mut p = r.clone();
    let mut rr = b_norm * b_norm;
    let mut history = vec![1.0];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let (q, t) = op.apply_masked_timed(&p, mask)?;
        kernel += t;
        let pq = dot(&p, &q);
        if !(pq > 0.0) || !pq.is_finite() {
            return Err(HosfemError::SolverBreakdown(format!(
                "p.Ap = {pq:e} at iteration {iterations}; operator is not SPD on the masked subspace"
            )));
        }
        let alpha = rr / pq;
        for ((xi, ri), (pi, qi)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&q)) {
            *xi += alpha * pi;
            *ri -= alpha * qi;
        }
        let rr_new = dot(&r, &r);
        let rel = rr_new.sqrt() / b_norm;
        if !rel.is_finite() {
            return Err(HosfemError::SolverBreakdown(format!("residual is {rel} at iteration {iterations}")));
        }
        history.push(rel);
        if rel <= tol {
            converged = true;
            break;
        }
        let beta = rr_new / rr;
        debug_assert!(beta > 0.0);
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }

    Ok(CgReport {
        iterations,
        converged,
        final_relative_residual: *history.last().expect("non-empty"),
        residual_history: history,
        solution_error: None,
        solution: x,
        wall_time_s: start.elapsed().as_secs_f64(),
        kernel_time_s: kernel.as_secs_f64(),
    })
}

/// Coordinates of every global node, taken from the first element that
/// references it.
pub fn global_coordinates(mesh: &Mesh, basis: &SpectralBasis) -> Vec<[f64; 3]> {
    let n = mesh.nodes_per_element();
    let mut out = vec![[f64::NAN; 3]; mesh.global_node_count()];
    let mut seen = vec![false; out.len()];
    let coords = mesh.node_coordinates(basis);
    for e in 0..mesh.element_count() {
        for (l, &g) in mesh.element_connectivity(e).iter().enumerate() {
            if !seen[g] {
                seen[g] = true;
                out[g] = [coords.column(e, 0)[l], coords.column(e, 1)[l], coords.column(e, 2)[l]];
            }
        }
    }
    debug_assert!(seen.iter().all(|&s| s) && n > 0);
    out
}

/// `u = prod_d sin(pi x_d)`.
pub fn manufactured_solution(x: &[f64; 3]) -> f64 {
    (PI * x[0]).sin() * (PI * x[1]).sin() * (PI * x[2]).sin()
}

/// Right-hand side and exact nodal solution of the manufactured problem,
/// each repeated over `n_col` columns. `b = Q^T (B f)` with the diagonal
/// GLL mass `B = w |J|` from the discrete Jacobian, then masked.
#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedProblem {
    pub rhs: Vec<f64>,
    pub exact: Vec<f64>,
    pub mask: Vec<bool>,
}

pub fn manufactured_problem(mesh: &Mesh, equation: Equation, n_col: usize) -> Result<ManufacturedProblem> {
    let basis = SpectralBasis::new(mesh.order())?;
    let n = basis.nodes_per_element();
    let ng = mesh.global_node_count();
    let source = match equation {
        Equation::Poisson => 3.0 * PI * PI,
        Equation::Helmholtz => 3.0 * PI * PI + 1.0,
    };
    let mut b1 = vec![0.0; ng];
    for (e, el) in mesh.elements().iter().enumerate() {
        let coords = element_node_coordinates(&el.vertices, &basis);
        let factors = discrete_factors(&coords, &basis).map_err(crate::geometry::at_element(e))?;
        let conn = mesh.element_connectivity(e);
        for l in 0..n {
            let x = [coords[l], coords[n + l], coords[2 * n + l]];
            b1[conn[l]] += factors.node(l).gwj * source * manufactured_solution(&x);
        }
    }
    let boundary = mesh.boundary_nodes();
    zero_masked(&mut b1, &boundary);
    let exact1: Vec<f64> = global_coordinates(mesh, &basis)
        .iter()
        .zip(&boundary)
        .map(|(x, &m)| if m { 0.0 } else { manufactured_solution(x) })
        .collect();
    let repeat = |v: &[f64]| (0..n_col).flat_map(|_| v.iter().copied()).collect::<Vec<_>>();
    Ok(ManufacturedProblem {
        rhs: repeat(&b1),
        exact: repeat(&exact1),
        mask: (0..n_col).flat_map(|_| boundary.iter().copied()).collect(),
    })
}

pub fn max_abs_difference(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Parameters of a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NekboneConfig {
    pub order: usize,
    pub elements: [usize; 3],
    pub equation: Equation,
    pub n_col: usize,
    /// Empty means every variant defined for `equation`.
    pub variants: Vec<FactorSource>,
    pub tol: f64,
    pub max_iter: usize,
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for NekboneConfig {
    fn default() -> Self {
        Self {
            order: 7,
            elements: [4, 4, 4],
            equation: Equation::Poisson,
            n_col: 1,
            variants: Vec::new(),
            tol: 1e-8,
            max_iter: 2000,
            perturbation: 0.1,
            seed: 1,
        }
    }
}

/// Parses `INT` or `AxBxC`.
pub fn parse_elements(s: &str) -> Result<[usize; 3]> {
    let bad = || HosfemError::InvalidMesh(format!("expected INT or ExEyEz, got '{s}'"));
    let parts: Vec<usize> = s
        .split(['x', 'X'])
        .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    match parts[..] {
        [e] => Ok([e; 3]),
        [a, b, c] => Ok([a, b, c]),
        _ => Err(bad()),
    }
}

impl NekboneConfig {
    /// Parses `key = value` lines over the defaults. Keys: `order`,
    /// `elements`, `equation`, `n_col`, `variants` (comma separated), `tol`,
    /// `max_iter`, `perturbation`, `seed`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| HosfemError::Parse { line: n + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let wrap = |e: HosfemError| err(e.to_string());
            fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
                v.parse::<T>().map_err(|_| format!("invalid value '{v}'"))
            }
            match key {
                "order" => cfg.order = num(value).map_err(err)?,
                "elements" => cfg.elements = parse_elements(value).map_err(wrap)?,
                "equation" => cfg.equation = value.parse().map_err(wrap)?,
                "n_col" | "ncol" => cfg.n_col = num(value).map_err(err)?,
                "variants" | "variant" => {
                    cfg.variants = value
                        .split(',')
                        .map(|v| v.trim())
                        .filter(|v| !v.is_empty())
                        .map(|v| v.parse::<FactorSource>().map_err(wrap))
                        .collect::<Result<_>>()?;
                }
                "tol" => cfg.tol = num(value).map_err(err)?,
                "max_iter" => cfg.max_iter = num(value).map_err(err)?,
                "perturbation" => cfg.perturbation = num(value).map_err(err)?,
                "seed" => cfg.seed = num(value).map_err(err)?,
                _ => return Err(err(format!("unknown key '{key}'"))),
            }
        }
        Ok(cfg)
    }

    pub fn variants_or_default(&self) -> Vec<FactorSource> {
        if self.variants.is_empty() {
            FactorSource::for_equation(self.equation)
        } else {
            self.variants.clone()
        }
    }

    pub fn mesh(&self) -> Result<Mesh> {
        BoxMeshParams::unit(self.elements, self.order)
            .with_perturbation(self.perturbation, self.seed)
            .build()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NekboneRow {
    pub variant: String,
    pub iterations: usize,
    pub converged: bool,
    pub final_relative_residual: f64,
    pub error: f64,
    pub wall_time_s: f64,
    /// `iterations * E * F_ax / wall_time`, in GFLOP/s.
    pub gflops_eff: f64,
    /// Fraction of the wall time spent in the element kernel.
    pub axlocal_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NekboneReport {
    pub config: NekboneConfig,
    pub global_nodes: usize,
    pub rows: Vec<NekboneRow>,
    /// Variants left out, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Solves the manufactured problem once per variant on the same mesh and
/// right-hand side. Variants that are undefined for the equation or that do
/// not accept every element kind are skipped, not failed.
pub fn nekbone_benchmark(config: &NekboneConfig) -> Result<NekboneReport> {
    let mesh = config.mesh()?;
    let problem = manufactured_problem(&mesh, config.equation, config.n_col)?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for variant in config.variants_or_default() {
        if !variant.supports(config.equation) {
            skipped.push((variant.name().to_string(), format!("not defined for {}", config.equation)));
            continue;
        }
        if let Some(el) = mesh.elements().iter().find(|el| !variant.accepts(el.kind)) {
            skipped.push((variant.name().to_string(), format!("mesh contains {} elements", el.kind.name())));
            continue;
        }
        let spec = KernelSpec::new(config.equation, config.n_col, variant, config.order)?;
        let op = GlobalOperator::with_unit_coefficients(mesh.clone(), spec)?;
        let report = cg_solve(&op, &problem.rhs, config.tol, config.max_iter, &problem.mask)?;
        let error = max_abs_difference(&report.solution, &problem.exact);
        let flops = report.iterations as f64 * mesh.element_count() as f64 * workload_count(&spec).f_ax as f64;
        rows.push(NekboneRow {
            variant: variant.name().to_string(),
            iterations: report.iterations,
            converged: report.converged,
            final_relative_residual: report.final_relative_residual,
            error,
            wall_time_s: report.wall_time_s,
            gflops_eff: if report.wall_time_s > 0.0 { flops / report.wall_time_s / 1e9 } else { 0.0 },
            axlocal_share: if report.wall_time_s > 0.0 { report.kernel_time_s / report.wall_time_s } else { 0.0 },
        });
    }
    Ok(NekboneReport { config: config.clone(), global_nodes: mesh.global_node_count(), rows, skipped })
}
