use super::{ElementGeometry, Equation, KernelSpec};
use crate::basis::SpectralBasis;
use crate::geometry::{
    det3, jacobi_to_geo_unscaled_only, recompute_parallelepiped, GeometricFactorSet,
    ParallelepipedFactors, TrilinearCommonTerms,
};

/// Per-thread intermediates: `r`, `s`, `t` for every column, the per-node
/// mass coefficient and the trilinear common terms.
#[derive(Debug, Clone)]
pub struct ScratchBuffers {
    work: Work,
    terms: TrilinearCommonTerms,
}

#[derive(Debug, Clone)]
struct Work {
    r: Vec<f64>,
    s: Vec<f64>,
    t: Vec<f64>,
    mass: Vec<f64>,
}

impl ScratchBuffers {
    pub fn new(basis: &SpectralBasis, n_col: usize) -> Self {
        let n = basis.nodes_per_element();
        Self {
            work: Work {
                r: vec![0.0; n * n_col],
                s: vec![0.0; n * n_col],
                t: vec![0.0; n * n_col],
                mass: vec![0.0; n],
            },
            terms: TrilinearCommonTerms::new(&crate::mesh::reference_vertices(), basis),
        }
    }
}

/// Factors the kernel consumes at one node. `g` is used as
/// `scale * (g . grad x)` when `SCALED`, otherwise unscaled.
struct Terms {
    g: [f64; 6],
    scale: f64,
    mass: f64,
}

trait FactorFetch {
    fn fetch(&self, i: usize, j: usize, k: usize, node: usize) -> Terms;
}

fn lam(l: Option<&[f64]>, node: usize) -> f64 {
    l.map_or(0.0, |l| l[node])
}

struct StoredFetch<'a> {
    set: &'a GeometricFactorSet,
    lambda0: Option<&'a [f64]>,
    lambda1: Option<&'a [f64]>,
}

impl FactorFetch for StoredFetch<'_> {
    #[inline(always)]
    fn fetch(&self, _i: usize, _j: usize, _k: usize, node: usize) -> Terms {
        let s = self.set;
        let g = [s.g[0][node], s.g[1][node], s.g[2][node], s.g[3][node], s.g[4][node], s.g[5][node]];
        match self.lambda0 {
            None => Terms { g, scale: 1.0, mass: 0.0 },
            Some(l0) => Terms {
                g,
                scale: l0[node],
                mass: lam(self.lambda1, node) * s.gwj[node],
            },
        }
    }
}

/// Full trilinear recomputation: Jacobian from the common terms, then
/// `K = J^T J`, `det J`, `lambda_geo`, `gwj` and `adj(K)` at each node.
struct TrilinearFetch<'a> {
    terms: &'a TrilinearCommonTerms,
    basis: &'a SpectralBasis,
    lambda0: Option<&'a [f64]>,
    lambda1: Option<&'a [f64]>,
}

impl FactorFetch for TrilinearFetch<'_> {
    #[inline(always)]
    fn fetch(&self, i: usize, j: usize, k: usize, node: usize) -> Terms {
        let jac = self.terms.jacobian(i, j, self.basis.points()[k]);
        let g = jacobi_to_geo_unscaled_only(&jac);
        let det = det3(&jac);
        let lambda_geo = 0.125 * self.basis.weight3(i, j, k) / det;
        match self.lambda0 {
            None => Terms { g, scale: lambda_geo, mass: 0.0 },
            Some(l0) => {
                let gwj = 0.015625 * det * det;
                Terms {
                    g,
                    scale: l0[node] * lambda_geo,
                    mass: lam(self.lambda1, node) * (lambda_geo * gwj),
                }
            }
        }
    }
}

/// Merged scalars: no determinant, no division.
struct MergedFetch<'a> {
    terms: &'a TrilinearCommonTerms,
    xi: &'a [f64],
    lambda2: &'a [f64],
    lambda3: &'a [f64],
}

impl FactorFetch for MergedFetch<'_> {
    #[inline(always)]
    fn fetch(&self, i: usize, j: usize, k: usize, node: usize) -> Terms {
        let jac = self.terms.jacobian(i, j, self.xi[k]);
        Terms {
            g: jacobi_to_geo_unscaled_only(&jac),
            scale: self.lambda2[node],
            mass: self.lambda3[node],
        }
    }
}

/// Stored `lambda_geo`, adjugate recomputed.
struct PartialFetch<'a> {
    terms: &'a TrilinearCommonTerms,
    xi: &'a [f64],
    lambda_geo: &'a [f64],
}

impl FactorFetch for PartialFetch<'_> {
    #[inline(always)]
    fn fetch(&self, i: usize, j: usize, k: usize, node: usize) -> Terms {
        let jac = self.terms.jacobian(i, j, self.xi[k]);
        Terms {
            g: jacobi_to_geo_unscaled_only(&jac),
            scale: self.lambda_geo[node],
            mass: 0.0,
        }
    }
}

struct ParallelepipedFetch<'a> {
    h: &'a ParallelepipedFactors,
    basis: &'a SpectralBasis,
    lambda0: Option<&'a [f64]>,
    lambda1: Option<&'a [f64]>,
}

impl FactorFetch for ParallelepipedFetch<'_> {
    #[inline(always)]
    fn fetch(&self, i: usize, j: usize, k: usize, node: usize) -> Terms {
        let f = recompute_parallelepiped(self.h, self.basis, i, j, k);
        match self.lambda0 {
            None => Terms { g: f.g, scale: 1.0, mass: 0.0 },
            Some(l0) => Terms {
                g: f.g,
                scale: l0[node],
                mass: lam(self.lambda1, node) * f.gwj,
            },
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn apply_element(
    spec: &KernelSpec,
    basis: &SpectralBasis,
    geometry: &ElementGeometry,
    lambda0: Option<&[f64]>,
    lambda1: Option<&[f64]>,
    x: &[f64],
    y: &mut [f64],
    scratch: &mut ScratchBuffers,
) {
    let helm = spec.equation == Equation::Helmholtz;
    let nc = spec.n_col;
    let ScratchBuffers { work, terms } = scratch;
    match geometry {
        ElementGeometry::Stored(set) => {
            let f = StoredFetch { set, lambda0, lambda1 };
            if helm {
                run::<_, true, true>(&f, basis, nc, x, y, work)
            } else {
                run::<_, false, false>(&f, basis, nc, x, y, work)
            }
        }
        ElementGeometry::Trilinear(v) => {
            terms.fill(v, basis.points());
            let f = TrilinearFetch { terms, basis, lambda0, lambda1 };
            if helm {
                run::<_, true, true>(&f, basis, nc, x, y, work)
            } else {
                run::<_, true, false>(&f, basis, nc, x, y, work)
            }
        }
        ElementGeometry::Merged { vertices, lambda2, lambda3 } => {
            terms.fill(vertices, basis.points());
            let f = MergedFetch { terms, xi: basis.points(), lambda2, lambda3 };
            run::<_, true, true>(&f, basis, nc, x, y, work)
        }
        ElementGeometry::Partial { vertices, lambda_geo } => {
            terms.fill(vertices, basis.points());
            let f = PartialFetch { terms, xi: basis.points(), lambda_geo };
            run::<_, true, false>(&f, basis, nc, x, y, work)
        }
        ElementGeometry::Parallelepiped(h) => {
            let f = ParallelepipedFetch { h, basis, lambda0, lambda1 };
            if helm {
                run::<_, true, true>(&f, basis, nc, x, y, work)
            } else {
                run::<_, false, false>(&f, basis, nc, x, y, work)
            }
        }
    }
}

/// The kernel body. Nodes are visited slice by slice (`k` outermost) with
/// factors fetched once per node and reused across all columns.
#[inline(always)]
fn run<F: FactorFetch, const SCALED: bool, const MASS: bool>(
    fetch: &F,
    basis: &SpectralBasis,
    n_col: usize,
    x: &[f64],
    y: &mut [f64],
    work: &mut Work,
) {
    let n1 = basis.n1();
    let n2 = n1 * n1;
    let n = n2 * n1;
    let d = basis.diff_matrix();

    for k in 0..n1 {
        for j in 0..n1 {
            for i in 0..n1 {
                let node = i + j * n1 + k * n2;
                let f = fetch.fetch(i, j, k, node);
                let [g00, g01, g02, g11, g12, g22] = f.g;
                if MASS {
                    work.mass[node] = f.mass;
                }
                for c in 0..n_col {
                    let xc = &x[c * n..(c + 1) * n];
                    let (mut x0, mut x1, mut x2) = (0.0, 0.0, 0.0);
                    for m in 0..n1 {
                        x0 += d[i * n1 + m] * xc[m + j * n1 + k * n2];
                        x1 += d[j * n1 + m] * xc[i + m * n1 + k * n2];
                        x2 += d[k * n1 + m] * xc[i + j * n1 + m * n2];
                    }
                    let mut r = g00 * x0 + g01 * x1 + g02 * x2;
                    let mut s = g01 * x0 + g11 * x1 + g12 * x2;
                    let mut t = g02 * x0 + g12 * x1 + g22 * x2;
                    if SCALED {
                        r *= f.scale;
                        s *= f.scale;
                        t *= f.scale;
                    }
                    work.r[c * n + node] = r;
                    work.s[c * n + node] = s;
                    work.t[c * n + node] = t;
                }
            }
        }
    }

    for c in 0..n_col {
        let (rc, sc, tc) = (
            &work.r[c * n..(c + 1) * n],
            &work.s[c * n..(c + 1) * n],
            &work.t[c * n..(c + 1) * n],
        );
        let xc = &x[c * n..(c + 1) * n];
        let yc = &mut y[c * n..(c + 1) * n];
        for k in 0..n1 {
            for j in 0..n1 {
                for i in 0..n1 {
                    let node = i + j * n1 + k * n2;
                    let (mut y0, mut y1, mut y2) = (0.0, 0.0, 0.0);
                    for m in 0..n1 {
                        y0 += d[m * n1 + i] * rc[m + j * n1 + k * n2];
                        y1 += d[m * n1 + j] * sc[i + m * n1 + k * n2];
                        y2 += d[m * n1 + k] * tc[i + j * n1 + m * n2];
                    }
                    let mut out = y0 + y1 + y2;
                    if MASS {
                        out += work.mass[node] * xc[node];
                    }
                    yc[node] = out;
                }
            }
        }
    }
}
