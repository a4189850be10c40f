//! Geometric factors: every route from element geometry to the seven
//! per-node factors `w |J| J^-1 J^-T` (six symmetric entries) and `w |J|`.
//!
//! Jacobians follow the convention `J[c][d] = d x_c / d r_d`, i.e. column
//! `d` holds the derivative along reference direction `d` (r, s, t).
//!
//! Two factor conventions exist:
//!
//! * **Weighted** (canonical): `g_ab` and `gwj` already contain GLL weights
//!   and the determinant, ready for the kernel.
//! * **Unscaled**: the trilinear recomputation form, built from the
//!   Jacobian `8 J` (the `1/8` of the trilinear map is never applied). The
//!   adjugate entries `g_ab = adj(K)_ab` with `K = (8J)^T (8J)` and
//!   `gwj = (det 8J)^2 / 64` must be multiplied by the per-node scale
//!   `lambda_geo = w / (8 det 8J)`. Both the weighted `g_ab` and the weighted
//!   `Gwj` equal `lambda_geo` times their unscaled counterparts; see
//!   [`GeometricFactorSet::to_weighted`].

use nalgebra::Matrix3;

use crate::axlocal::contract::{contract_r, contract_s, contract_t};
use crate::basis::SpectralBasis;
use crate::error::{HosfemError, Result};
use crate::mesh::{map_point, parallelepiped_residual, Vertices};

pub type Mat3 = [[f64; 3]; 3];

/// Tolerance on the parallelepiped vertex identity accepted by
/// [`parallelepiped_setup`].
pub const PARALLELEPIPED_SETUP_TOL: f64 = 1e-10;

/// Per-node factors in the order `g00, g01, g02, g11, g12, g22`, plus `gwj`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeFactors {
    pub g: [f64; 6],
    pub gwj: f64,
}

/// Output of [`jacobi_to_geo`]: unscaled factors and their scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnscaledFactors {
    pub lambda_geo: f64,
    pub g: [f64; 6],
    pub gwj: f64,
}

impl UnscaledFactors {
    pub fn scaled(&self) -> NodeFactors {
        NodeFactors {
            g: self.g.map(|x| self.lambda_geo * x),
            gwj: self.lambda_geo * self.gwj,
        }
    }
}

/// Jacobians at all `N1^3` nodes of one element.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianField {
    pub jacobians: Vec<Mat3>,
}

impl JacobianField {
    /// Index and value of the smallest determinant.
    pub fn min_det(&self) -> (usize, f64) {
        self.jacobians
            .iter()
            .map(det3)
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, d)| if d < acc.1 { (i, d) } else { acc })
    }
}

#[inline]
pub fn det3(j: &Mat3) -> f64 {
    j[0][0] * (j[1][1] * j[2][2] - j[2][1] * j[1][2]) - j[1][0] * (j[0][1] * j[2][2] - j[2][1] * j[0][2])
        + j[2][0] * (j[0][1] * j[1][2] - j[1][1] * j[0][2])
}

fn degenerate(node: usize, det: f64) -> HosfemError {
    HosfemError::DegenerateElement {
        element: 0,
        node,
        det,
    }
}

/// Replaces the element index of a [`HosfemError::DegenerateElement`] or
/// [`HosfemError::NotParallelepiped`] error.
pub fn at_element(e: usize) -> impl Fn(HosfemError) -> HosfemError {
    move |err| match err {
        HosfemError::DegenerateElement { node, det, .. } => HosfemError::DegenerateElement {
            element: e,
            node,
            det,
        },
        HosfemError::NotParallelepiped { residual, .. } => HosfemError::NotParallelepiped {
            element: e,
            residual,
        },
        other => other,
    }
}

/// Discrete Jacobians of one element from its nodal coordinates: the
/// discrete gradient is applied to each coordinate column (nine
/// contractions) and entry `[i,j,k]` of the nine results forms the node's
/// Jacobian.
///
/// `coords` holds the three coordinate columns of the element back to back
/// (`3 * N1^3` values).
pub fn discrete_element_jacobians(coords: &[f64], basis: &SpectralBasis) -> Result<JacobianField> {
    let n1 = basis.n1();
    let n = basis.nodes_per_element();
    if coords.len() != 3 * n {
        return Err(HosfemError::SizeMismatch {
            what: "element coordinates",
            expected: 3 * n,
            actual: coords.len(),
        });
    }
    let d = basis.diff_matrix();
    let mut grads = vec![0.0; 9 * n];
    for c in 0..3 {
        let x = &coords[c * n..(c + 1) * n];
        let (dr, rest) = grads[(3 * c) * n..(3 * c + 3) * n].split_at_mut(n);
        let (ds, dt) = rest.split_at_mut(n);
        contract_r(x, d, n1, false, dr);
        contract_s(x, d, n1, false, ds);
        contract_t(x, d, n1, false, dt);
    }
    let mut jacobians = Vec::with_capacity(n);
    for node in 0..n {
        let mut j = [[0.0; 3]; 3];
        for (c, row) in j.iter_mut().enumerate() {
            for (dir, entry) in row.iter_mut().enumerate() {
                *entry = grads[(3 * c + dir) * n + node];
            }
        }
        jacobians.push(j);
    }
    let field = JacobianField { jacobians };
    let (node, det) = field.min_det();
    if !(det > 0.0) {
        return Err(degenerate(node, det));
    }
    Ok(field)
}

/// Discrete Jacobians for every element of a 3-column coordinate field.
pub fn discrete_jacobians(
    coords: &crate::mesh::LocalField,
    basis: &SpectralBasis,
) -> Result<Vec<JacobianField>> {
    if coords.n_col() != 3 {
        return Err(HosfemError::SizeMismatch {
            what: "coordinate columns",
            expected: 3,
            actual: coords.n_col(),
        });
    }
    (0..coords.elements())
        .map(|e| discrete_element_jacobians(coords.element(e), basis).map_err(at_element(e)))
        .collect()
}

/// Physical Jacobian of the trilinear map, evaluated literally from the
/// Kronecker form (including the `1/8` and the transpose).
pub fn trilinear_jacobian_analytic(v: &Vertices, r: f64, s: f64, t: f64) -> Mat3 {
    let ra = [1.0 - r, 1.0 + r];
    let sa = [1.0 - s, 1.0 + s];
    let ta = [1.0 - t, 1.0 + t];
    let pm = [-1.0, 1.0];
    // rows: derivative along r, s, t as an 8-vector applied to V
    let mut m = [[0.0; 3]; 3];
    for (i, vi) in v.iter().enumerate() {
        let (a, b, c) = (i & 1, (i >> 1) & 1, i >> 2);
        let wr = ta[c] * sa[b] * pm[a];
        let ws = ta[c] * pm[b] * ra[a];
        let wt = pm[c] * sa[b] * ra[a];
        for x in 0..3 {
            m[0][x] += wr * vi[x];
            m[1][x] += ws * vi[x];
            m[2][x] += wt * vi[x];
        }
    }
    let mut j = [[0.0; 3]; 3];
    for (c, row) in j.iter_mut().enumerate() {
        for (d, entry) in row.iter_mut().enumerate() {
            *entry = 0.125 * m[d][c];
        }
    }
    j
}

/// Canonical weighted factors from a physical Jacobian and the tensor weight
/// `w`, using an explicit 3x3 inverse: `w |J| J^-1 J^-T` and `w |J|`.
pub fn weighted_factors(j: &Mat3, w: f64) -> Result<NodeFactors> {
    let m = Matrix3::from_fn(|a, b| j[a][b]);
    let det = m.determinant();
    let inv = m
        .try_inverse()
        .ok_or(HosfemError::SingularJacobian(det))?;
    let g = (inv * inv.transpose()) * (w * det);
    Ok(NodeFactors {
        g: [g[(0, 0)], g[(0, 1)], g[(0, 2)], g[(1, 1)], g[(1, 2)], g[(2, 2)]],
        gwj: w * det,
    })
}

/// `K = J^T J` and `adj(K)` in the `g00..g22` order.
#[inline]
fn adjugate_of_gram(j: &Mat3) -> [f64; 6] {
    let k00 = j[0][0] * j[0][0] + j[1][0] * j[1][0] + j[2][0] * j[2][0];
    let k01 = j[0][0] * j[0][1] + j[1][0] * j[1][1] + j[2][0] * j[2][1];
    let k02 = j[0][0] * j[0][2] + j[1][0] * j[1][2] + j[2][0] * j[2][2];
    let k11 = j[0][1] * j[0][1] + j[1][1] * j[1][1] + j[2][1] * j[2][1];
    let k12 = j[0][1] * j[0][2] + j[1][1] * j[1][2] + j[2][1] * j[2][2];
    let k22 = j[0][2] * j[0][2] + j[1][2] * j[1][2] + j[2][2] * j[2][2];
    [
        k11 * k22 - k12 * k12,
        k02 * k12 - k01 * k22,
        k01 * k12 - k02 * k11,
        k00 * k22 - k02 * k02,
        k01 * k02 - k00 * k12,
        k00 * k11 - k01 * k01,
    ]
}

/// Unscaled factors of a recomputed Jacobian `J = 8 J_phys` with tensor
/// weight `w`: `lambda_geo = w / (8 det J)`, `gwj = (det J)^2 / 64`,
/// `g = adj(J^T J)`.
pub fn jacobi_to_geo(j: &Mat3, w: f64) -> Result<UnscaledFactors> {
    let det = det3(j);
    if det == 0.0 || !det.is_finite() {
        return Err(HosfemError::SingularJacobian(det));
    }
    Ok(UnscaledFactors {
        lambda_geo: 0.125 * w / det,
        g: adjugate_of_gram(j),
        gwj: 0.015625 * det * det,
    })
}

/// The reduced conversion used when `lambda_geo` is supplied from storage:
/// only the adjugate entries are formed.
#[inline]
pub fn jacobi_to_geo_unscaled_only(j: &Mat3) -> [f64; 6] {
    adjugate_of_gram(j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorConvention {
    Weighted,
    Unscaled,
}

/// Per-node factors for one element, structure-of-arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricFactorSet {
    pub convention: FactorConvention,
    /// `g00, g01, g02, g11, g12, g22`, each of length `N1^3`.
    pub g: [Vec<f64>; 6],
    pub gwj: Vec<f64>,
    /// Present exactly when `convention` is `Unscaled`.
    pub lambda_geo: Option<Vec<f64>>,
}

impl GeometricFactorSet {
    fn with_len(n: usize, convention: FactorConvention) -> Self {
        Self {
            convention,
            g: std::array::from_fn(|_| vec![0.0; n]),
            gwj: vec![0.0; n],
            lambda_geo: match convention {
                FactorConvention::Weighted => None,
                FactorConvention::Unscaled => Some(vec![0.0; n]),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.gwj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gwj.is_empty()
    }

    fn set_weighted(&mut self, node: usize, f: &NodeFactors) {
        for a in 0..6 {
            self.g[a][node] = f.g[a];
        }
        self.gwj[node] = f.gwj;
    }

    /// Weighted factors at `node`, applying `lambda_geo` if needed.
    pub fn node(&self, node: usize) -> NodeFactors {
        let g = std::array::from_fn(|a| self.g[a][node]);
        match &self.lambda_geo {
            None => NodeFactors {
                g,
                gwj: self.gwj[node],
            },
            Some(l) => UnscaledFactors {
                lambda_geo: l[node],
                g,
                gwj: self.gwj[node],
            }
            .scaled(),
        }
    }

    /// Bridge to the canonical form: multiplies every unscaled factor
    /// (including `gwj`) by `lambda_geo`. Identity on weighted sets.
    pub fn to_weighted(&self) -> GeometricFactorSet {
        if self.convention == FactorConvention::Weighted {
            return self.clone();
        }
        let mut out = Self::with_len(self.len(), FactorConvention::Weighted);
        for node in 0..self.len() {
            out.set_weighted(node, &self.node(node));
        }
        out
    }

    /// Largest nodewise difference of the weighted factors, relative to the
    /// largest weighted factor magnitude of `reference`.
    pub fn relative_difference(&self, reference: &GeometricFactorSet) -> f64 {
        let a = self.to_weighted();
        let b = reference.to_weighted();
        let scale = b
            .g
            .iter()
            .chain(std::iter::once(&b.gwj))
            .flat_map(|v| v.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()));
        let mut diff = 0.0_f64;
        for f in 0..7 {
            let (x, y) = if f < 6 { (&a.g[f], &b.g[f]) } else { (&a.gwj, &b.gwj) };
            for (p, q) in x.iter().zip(y) {
                diff = diff.max((p - q).abs());
            }
        }
        diff / scale
    }
}

/// Node coordinates of one element (3 columns back to back).
pub fn element_node_coordinates(v: &Vertices, basis: &SpectralBasis) -> Vec<f64> {
    let n1 = basis.n1();
    let n = basis.nodes_per_element();
    let xi = basis.points();
    let mut out = vec![0.0; 3 * n];
    for k in 0..n1 {
        for j in 0..n1 {
            for i in 0..n1 {
                let p = map_point(v, xi[i], xi[j], xi[k]);
                let id = i + j * n1 + k * n1 * n1;
                out[id] = p[0];
                out[n + id] = p[1];
                out[2 * n + id] = p[2];
            }
        }
    }
    out
}

/// Setup-stage route: discrete Jacobians from nodal coordinates, then the
/// weighted factors at every node.
pub fn discrete_factors(coords: &[f64], basis: &SpectralBasis) -> Result<GeometricFactorSet> {
    let field = discrete_element_jacobians(coords, basis)?;
    let n1 = basis.n1();
    let mut out = GeometricFactorSet::with_len(field.jacobians.len(), FactorConvention::Weighted);
    for (node, j) in field.jacobians.iter().enumerate() {
        let (i, jj, k) = (node % n1, (node / n1) % n1, node / (n1 * n1));
        let f = weighted_factors(j, basis.weight3(i, jj, k))?;
        out.set_weighted(node, &f);
    }
    Ok(out)
}

/// The four `N1 x 3` common-term matrices plus the per-`(i, j)` third
/// Jacobian column of a trilinear element, all in the unscaled (`8 J`)
/// convention.
#[derive(Debug, Clone, PartialEq)]
pub struct TrilinearCommonTerms {
    n1: usize,
    pub e0: Vec<[f64; 3]>,
    pub e1: Vec<[f64; 3]>,
    pub f0: Vec<[f64; 3]>,
    pub f1: Vec<[f64; 3]>,
    /// `(J02, J12, J22)` at index `i + j N1`.
    pub col2: Vec<[f64; 3]>,
}

impl TrilinearCommonTerms {
    pub fn new(v: &Vertices, basis: &SpectralBasis) -> Self {
        let n1 = basis.n1();
        let mut terms = Self {
            n1,
            e0: vec![[0.0; 3]; n1],
            e1: vec![[0.0; 3]; n1],
            f0: vec![[0.0; 3]; n1],
            f1: vec![[0.0; 3]; n1],
            col2: vec![[0.0; 3]; n1 * n1],
        };
        terms.fill(v, basis.points());
        terms
    }

    /// Recomputes the terms for new vertices without reallocating.
    pub fn fill(&mut self, v: &Vertices, xi: &[f64]) {
        let n1 = self.n1;
        for i in 0..n1 {
            let r0 = 1.0 - xi[i];
            let r1 = 1.0 + xi[i];
            for c in 0..3 {
                let tmp1 = r0 * (v[1][c] - v[0][c]) + r1 * (v[3][c] - v[2][c]);
                let tmp2 = r0 * (v[5][c] - v[4][c]) + r1 * (v[7][c] - v[6][c]);
                let tmp3 = r0 * (v[2][c] - v[0][c]) + r1 * (v[3][c] - v[1][c]);
                let tmp4 = r0 * (v[6][c] - v[4][c]) + r1 * (v[7][c] - v[5][c]);
                self.e0[i][c] = tmp1 + tmp2;
                self.e1[i][c] = tmp2 - tmp1;
                self.f0[i][c] = tmp3 + tmp4;
                self.f1[i][c] = tmp4 - tmp3;
            }
        }
        for j in 0..n1 {
            let s0 = 1.0 - xi[j];
            let s1 = 1.0 + xi[j];
            for i in 0..n1 {
                let r0 = 1.0 - xi[i];
                let r1 = 1.0 + xi[i];
                let col = &mut self.col2[i + j * n1];
                for c in 0..3 {
                    col[c] = r0 * s0 * (v[4][c] - v[0][c])
                        + r1 * s0 * (v[5][c] - v[1][c])
                        + r1 * s1 * (v[7][c] - v[3][c])
                        + r0 * s1 * (v[6][c] - v[2][c]);
                }
            }
        }
    }

    /// Unscaled Jacobian `8 J` at node `(i, j, k)` where `t = xi_k`;
    /// the first two columns cost 12 FLOPs.
    #[inline]
    pub fn jacobian(&self, i: usize, j: usize, t: f64) -> Mat3 {
        let (e0, e1, f0, f1) = (&self.e0[j], &self.e1[j], &self.f0[i], &self.f1[i]);
        let c2 = &self.col2[i + j * self.n1];
        [
            [e0[0] + t * e1[0], f0[0] + t * f1[0], c2[0]],
            [e0[1] + t * e1[1], f0[1] + t * f1[1], c2[1]],
            [e0[2] + t * e1[2], f0[2] + t * f1[2], c2[2]],
        ]
    }
}

/// Low-cost trilinear recomputation producing the unscaled factor set.
pub fn recompute_trilinear(v: &Vertices, basis: &SpectralBasis) -> Result<GeometricFactorSet> {
    let n1 = basis.n1();
    let xi = basis.points();
    let terms = TrilinearCommonTerms::new(v, basis);
    let mut out = GeometricFactorSet::with_len(basis.nodes_per_element(), FactorConvention::Unscaled);
    for j in 0..n1 {
        for i in 0..n1 {
            for k in 0..n1 {
                let node = i + j * n1 + k * n1 * n1;
                let jac = terms.jacobian(i, j, xi[k]);
                let det = det3(&jac);
                if !(det > 0.0) {
                    return Err(degenerate(node, det / 512.0));
                }
                let f = jacobi_to_geo(&jac, basis.weight3(i, j, k))?;
                for a in 0..6 {
                    out.g[a][node] = f.g[a];
                }
                out.gwj[node] = f.gwj;
                out.lambda_geo.as_mut().expect("unscaled set")[node] = f.lambda_geo;
            }
        }
    }
    Ok(out)
}

/// Weight-free factors of a parallelepiped: `h0..h5 = |J| J^-1 J^-T`
/// (`00, 01, 02, 11, 12, 22`) and `h6 = |J|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParallelepipedFactors {
    pub h: [f64; 7],
}

pub fn parallelepiped_setup(v: &Vertices) -> Result<ParallelepipedFactors> {
    let residual = parallelepiped_residual(v);
    if residual > PARALLELEPIPED_SETUP_TOL {
        return Err(HosfemError::NotParallelepiped {
            element: 0,
            residual,
        });
    }
    let j = trilinear_jacobian_analytic(v, 0.0, 0.0, 0.0);
    let det = det3(&j);
    if !(det > 0.0) {
        return Err(degenerate(0, det));
    }
    let f = weighted_factors(&j, 1.0)?;
    let mut h = [0.0; 7];
    h[..6].copy_from_slice(&f.g);
    h[6] = f.gwj;
    Ok(ParallelepipedFactors { h })
}

/// Weighted factors of a parallelepiped at node `(i, j, k)`: `W h` with
/// `W = w_i w_j w_k`.
#[inline]
pub fn recompute_parallelepiped(
    h: &ParallelepipedFactors,
    basis: &SpectralBasis,
    i: usize,
    j: usize,
    k: usize,
) -> NodeFactors {
    let w = basis.weight3(i, j, k);
    NodeFactors {
        g: [w * h.h[0], w * h.h[1], w * h.h[2], w * h.h[3], w * h.h[4], w * h.h[5]],
        gwj: w * h.h[6],
    }
}

/// Merged Helmholtz scalars: `Lambda2 = lambda_geo * lambda0` and
/// `Lambda3 = Gwj * lambda1`, where `gwj` is the weighted `Gwj` field.
pub fn merged_scalar_setup(
    lambda0: &[f64],
    lambda1: &[f64],
    lambda_geo: &[f64],
    gwj: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = lambda0.len();
    for (what, len) in [("lambda1", lambda1.len()), ("lambda_geo", lambda_geo.len()), ("gwj", gwj.len())] {
        if len != n {
            return Err(HosfemError::SizeMismatch {
                what,
                expected: n,
                actual: len,
            });
        }
    }
    let l2 = lambda_geo.iter().zip(lambda0).map(|(g, l)| g * l).collect();
    let l3 = gwj.iter().zip(lambda1).map(|(g, l)| g * l).collect();
    Ok((l2, l3))
}

/// `lambda_geo` for every node of one trilinear element, computed once so
/// the kernel can skip the determinant and division.
pub fn lambda_geo_field(v: &Vertices, basis: &SpectralBasis) -> Result<Vec<f64>> {
    Ok(recompute_trilinear(v, basis)?
        .lambda_geo
        .expect("recompute_trilinear returns the unscaled convention"))
}

/// `lambda_geo` fields for a list of trilinear elements.
pub fn partial_recompute_setup(elements: &[Vertices], basis: &SpectralBasis) -> Result<Vec<Vec<f64>>> {
    elements
        .iter()
        .enumerate()
        .map(|(e, v)| lambda_geo_field(v, basis).map_err(at_element(e)))
        .collect()
}

/// Factors from the stored-`lambda_geo` route: adjugate entries recomputed,
/// scale read from `lambda_geo`. Returned in the unscaled convention with
/// `gwj` zero (that path carries no mass term).
pub fn partial_recompute_factors(
    v: &Vertices,
    lambda_geo: &[f64],
    basis: &SpectralBasis,
) -> GeometricFactorSet {
    let n1 = basis.n1();
    let xi = basis.points();
    let terms = TrilinearCommonTerms::new(v, basis);
    let mut out = GeometricFactorSet::with_len(basis.nodes_per_element(), FactorConvention::Unscaled);
    for j in 0..n1 {
        for i in 0..n1 {
            for k in 0..n1 {
                let node = i + j * n1 + k * n1 * n1;
                let g = jacobi_to_geo_unscaled_only(&terms.jacobian(i, j, xi[k]));
                for a in 0..6 {
                    out.g[a][node] = g[a];
                }
            }
        }
    }
    out.lambda_geo = Some(lambda_geo.to_vec());
    out
}
