//! Hexahedral elements, structured box meshes and the global-to-local map.
//!
//! Reference vertex `i` sits at `(r, s, t)` with `r = -1 + 2 (i & 1)`,
//! `s = -1 + 2 ((i >> 1) & 1)` and `t = -1 + 2 ((i >> 2) & 1)`, so
//! `v0 = (-1,-1,-1)`, `v1 = (1,-1,-1)`, `v2 = (-1,1,-1)`, ... `v7 = (1,1,1)`.
//!
//! Element-local nodes use the index `[i, j, k] -> i + j N1 + k N1^2`.
//! Global vectors with several columns are stored column-blocked:
//! entry `(g, c)` lives at `c * global_node_count + g`.

mod io;

pub use io::{read_mesh, write_mesh};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::basis::SpectralBasis;
use crate::error::{HosfemError, Result};

/// Vertex coordinates of one hexahedron, row `i` is `v_i`.
pub type Vertices = [[f64; 3]; 8];

/// Relative tolerance of the parallelepiped vertex identity used when
/// classifying elements.
pub const PARALLELEPIPED_CLASSIFY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    /// Geometry known only through stored factors.
    General,
    Trilinear,
    /// Affine map, constant Jacobian.
    Parallelepiped,
}

impl ElementKind {
    pub fn name(self) -> &'static str {
        match self {
            ElementKind::General => "general",
            ElementKind::Trilinear => "trilinear",
            ElementKind::Parallelepiped => "parallelepiped",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "general" => Some(ElementKind::General),
            "trilinear" => Some(ElementKind::Trilinear),
            "parallelepiped" => Some(ElementKind::Parallelepiped),
            _ => None,
        }
    }

    /// Whether the trilinear recomputation routes may be used.
    pub fn is_trilinear(self) -> bool {
        matches!(self, ElementKind::Trilinear | ElementKind::Parallelepiped)
    }
}

/// The 8 vertices of the reference cube in the library's ordering.
pub fn reference_vertices() -> Vertices {
    let mut v = [[0.0; 3]; 8];
    for (i, row) in v.iter_mut().enumerate() {
        *row = [
            if i & 1 == 0 { -1.0 } else { 1.0 },
            if i & 2 == 0 { -1.0 } else { 1.0 },
            if i & 4 == 0 { -1.0 } else { 1.0 },
        ];
    }
    v
}

/// Largest deviation from `v3 = v1 + v2 - v0`, `v5 = v1 + v4 - v0`,
/// `v6 = v2 + v4 - v0`, `v7 = v1 + v2 + v4 - 2 v0`, divided by the largest
/// coordinate magnitude (or 1 if that is smaller).
pub fn parallelepiped_residual(v: &Vertices) -> f64 {
    let scale = v
        .iter()
        .flat_map(|r| r.iter())
        .fold(1.0_f64, |m, x| m.max(x.abs()));
    let mut res = 0.0_f64;
    for c in 0..3 {
        let d3 = v[3][c] - (v[1][c] + v[2][c] - v[0][c]);
        let d5 = v[5][c] - (v[1][c] + v[4][c] - v[0][c]);
        let d6 = v[6][c] - (v[2][c] + v[4][c] - v[0][c]);
        let d7 = v[7][c] - (v[1][c] + v[2][c] + v[4][c] - 2.0 * v[0][c]);
        for d in [d3, d5, d6, d7] {
            res = res.max(d.abs());
        }
    }
    res / scale
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub vertices: Vertices,
    pub kind: ElementKind,
}

impl Element {
    /// Builds an element with an explicit kind. A `Parallelepiped` claim is
    /// checked against the vertex identity.
    pub fn new(vertices: Vertices, kind: ElementKind) -> Result<Self> {
        if kind == ElementKind::Parallelepiped {
            let residual = parallelepiped_residual(&vertices);
            if residual > PARALLELEPIPED_CLASSIFY_TOL {
                return Err(HosfemError::NotParallelepiped {
                    element: 0,
                    residual,
                });
            }
        }
        Ok(Self { vertices, kind })
    }

    /// Trilinear element, promoted to `Parallelepiped` when the vertex
    /// identity holds.
    pub fn classify(vertices: Vertices) -> Self {
        let kind = if parallelepiped_residual(&vertices) <= PARALLELEPIPED_CLASSIFY_TOL {
            ElementKind::Parallelepiped
        } else {
            ElementKind::Trilinear
        };
        Self { vertices, kind }
    }

    pub fn map_point(&self, r: f64, s: f64, t: f64) -> [f64; 3] {
        map_point(&self.vertices, r, s, t)
    }
}

/// Trilinear shape function `sigma_i(r, s, t)`.
pub fn trilinear_shape(i: usize, r: f64, s: f64, t: f64) -> f64 {
    assert!(i < 8, "vertex index {i} out of range");
    let fr = if i & 1 == 0 { 1.0 - r } else { 1.0 + r };
    let fs = if i & 2 == 0 { 1.0 - s } else { 1.0 + s };
    let ft = if i & 4 == 0 { 1.0 - t } else { 1.0 + t };
    0.125 * fr * fs * ft
}

/// `(1/8) [(1-t, 1+t) (x) (1-s, 1+s) (x) (1-r, 1+r)] V`.
pub fn map_point(v: &Vertices, r: f64, s: f64, t: f64) -> [f64; 3] {
    let ra = [1.0 - r, 1.0 + r];
    let sa = [1.0 - s, 1.0 + s];
    let ta = [1.0 - t, 1.0 + t];
    let mut x = [0.0; 3];
    for (i, vi) in v.iter().enumerate() {
        let w = ta[i >> 2] * sa[(i >> 1) & 1] * ra[i & 1];
        for c in 0..3 {
            x[c] += w * vi[c];
        }
    }
    x.map(|xc| 0.125 * xc)
}

/// Per-element nodal data: `E x N1^3 x n_col`, stored element-major with
/// each column contiguous, entry `(e, c, node)` at
/// `(e * n_col + c) * N1^3 + node`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalField {
    elements: usize,
    order: usize,
    n_col: usize,
    data: Vec<f64>,
}

impl LocalField {
    pub fn zeros(elements: usize, order: usize, n_col: usize) -> Self {
        let n = (order + 1).pow(3);
        Self {
            elements,
            order,
            n_col,
            data: vec![0.0; elements * n * n_col],
        }
    }

    pub fn from_vec(elements: usize, order: usize, n_col: usize, data: Vec<f64>) -> Result<Self> {
        let expected = elements * (order + 1).pow(3) * n_col;
        if data.len() != expected {
            return Err(HosfemError::SizeMismatch {
                what: "local field storage",
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            elements,
            order,
            n_col,
            data,
        })
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_col(&self) -> usize {
        self.n_col
    }

    pub fn nodes_per_element(&self) -> usize {
        (self.order + 1).pow(3)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// All columns of element `e`, length `n_col * N1^3`.
    pub fn element(&self, e: usize) -> &[f64] {
        let len = self.n_col * self.nodes_per_element();
        &self.data[e * len..(e + 1) * len]
    }

    pub fn element_mut(&mut self, e: usize) -> &mut [f64] {
        let len = self.n_col * self.nodes_per_element();
        &mut self.data[e * len..(e + 1) * len]
    }

    pub fn column(&self, e: usize, c: usize) -> &[f64] {
        let n = self.nodes_per_element();
        let start = (e * self.n_col + c) * n;
        &self.data[start..start + n]
    }
}

/// Elements plus the connectivity `local_to_global[e * N1^3 + l_id] = g_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    order: usize,
    elements: Vec<Element>,
    local_to_global: Vec<usize>,
    global_node_count: usize,
}

impl Mesh {
    pub fn new(
        order: usize,
        elements: Vec<Element>,
        local_to_global: Vec<usize>,
        global_node_count: usize,
    ) -> Result<Self> {
        if order == 0 {
            return Err(HosfemError::InvalidOrder(order));
        }
        let n = (order + 1).pow(3);
        if local_to_global.len() != elements.len() * n {
            return Err(HosfemError::SizeMismatch {
                what: "local_to_global",
                expected: elements.len() * n,
                actual: local_to_global.len(),
            });
        }
        let mut seen = vec![false; global_node_count];
        for &g in &local_to_global {
            if g >= global_node_count {
                return Err(HosfemError::InvalidMesh(format!(
                    "global id {g} out of range 0..{global_node_count}"
                )));
            }
            seen[g] = true;
        }
        if let Some(g) = seen.iter().position(|s| !s) {
            return Err(HosfemError::InvalidMesh(format!(
                "global id {g} is referenced by no element"
            )));
        }
        Ok(Self {
            order,
            elements,
            local_to_global,
            global_node_count,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n1(&self) -> usize {
        self.order + 1
    }

    pub fn nodes_per_element(&self) -> usize {
        self.n1().pow(3)
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn global_node_count(&self) -> usize {
        self.global_node_count
    }

    pub fn local_to_global(&self) -> &[usize] {
        &self.local_to_global
    }

    pub fn element_connectivity(&self, e: usize) -> &[usize] {
        let n = self.nodes_per_element();
        &self.local_to_global[e * n..(e + 1) * n]
    }

    /// Whether every element admits trilinear recomputation / the
    /// parallelepiped route.
    pub fn all_trilinear(&self) -> bool {
        self.elements.iter().all(|e| e.kind.is_trilinear())
    }

    pub fn all_parallelepiped(&self) -> bool {
        self.elements
            .iter()
            .all(|e| e.kind == ElementKind::Parallelepiped)
    }

    /// Physical coordinates of every GLL node, as a 3-column local field.
    pub fn node_coordinates(&self, basis: &SpectralBasis) -> LocalField {
        let n1 = self.n1();
        let n = self.nodes_per_element();
        let xi = basis.points();
        let mut field = LocalField::zeros(self.elements.len(), self.order, 3);
        field
            .as_mut_slice()
            .par_chunks_mut(3 * n)
            .zip(self.elements.par_iter())
            .for_each(|(out, el)| {
                for k in 0..n1 {
                    for j in 0..n1 {
                        for i in 0..n1 {
                            let p = el.map_point(xi[i], xi[j], xi[k]);
                            let id = i + j * n1 + k * n1 * n1;
                            out[id] = p[0];
                            out[n + id] = p[1];
                            out[2 * n + id] = p[2];
                        }
                    }
                }
            });
        field
    }

    /// `Q X`: copies global values into element-local storage.
    pub fn gather(&self, global: &[f64], n_col: usize) -> Result<LocalField> {
        let ng = self.global_node_count;
        if global.len() != ng * n_col {
            return Err(HosfemError::SizeMismatch {
                what: "global vector",
                expected: ng * n_col,
                actual: global.len(),
            });
        }
        let n = self.nodes_per_element();
        let mut local = LocalField::zeros(self.elements.len(), self.order, n_col);
        local
            .as_mut_slice()
            .par_chunks_mut(n * n_col)
            .enumerate()
            .for_each(|(e, out)| {
                let conn = &self.local_to_global[e * n..(e + 1) * n];
                for c in 0..n_col {
                    let src = &global[c * ng..(c + 1) * ng];
                    for (dst, &g) in out[c * n..(c + 1) * n].iter_mut().zip(conn) {
                        *dst = src[g];
                    }
                }
            });
        Ok(local)
    }

    /// `Q^T Y`: sums element-local values into global storage, visiting
    /// `(e, l_id)` in ascending order so the result is bitwise reproducible.
    pub fn scatter_add(&self, local: &LocalField) -> Result<Vec<f64>> {
        if local.elements() != self.elements.len() || local.order() != self.order {
            return Err(HosfemError::SizeMismatch {
                what: "local field elements",
                expected: self.elements.len(),
                actual: local.elements(),
            });
        }
        let n = self.nodes_per_element();
        let ng = self.global_node_count;
        let n_col = local.n_col();
        let mut global = vec![0.0; ng * n_col];
        for e in 0..self.elements.len() {
            let conn = &self.local_to_global[e * n..(e + 1) * n];
            for c in 0..n_col {
                let dst = &mut global[c * ng..(c + 1) * ng];
                for (&g, &v) in conn.iter().zip(local.column(e, c)) {
                    dst[g] += v;
                }
            }
        }
        Ok(global)
    }

    /// Number of element-local copies of every global node (diagonal of
    /// `Q^T Q`).
    pub fn multiplicity(&self) -> Vec<usize> {
        let mut m = vec![0usize; self.global_node_count];
        for &g in &self.local_to_global {
            m[g] += 1;
        }
        m
    }

    /// Global nodes lying on the domain boundary: every node of an element
    /// face that no other element shares.
    pub fn boundary_nodes(&self) -> Vec<bool> {
        use std::collections::HashMap;
        let n1 = self.n1();
        let n = self.nodes_per_element();
        let id = |i: usize, j: usize, k: usize| i + j * n1 + k * n1 * n1;
        let last = n1 - 1;
        // Each face is described by a function of two in-face indices.
        let faces: [&dyn Fn(usize, usize) -> usize; 6] = [
            &|a, b| id(0, a, b),
            &|a, b| id(last, a, b),
            &|a, b| id(a, 0, b),
            &|a, b| id(a, last, b),
            &|a, b| id(a, b, 0),
            &|a, b| id(a, b, last),
        ];
        let face_key = |e: usize, f: usize| {
            let conn = &self.local_to_global[e * n..(e + 1) * n];
            let mut key = [
                conn[faces[f](0, 0)],
                conn[faces[f](last, 0)],
                conn[faces[f](0, last)],
                conn[faces[f](last, last)],
            ];
            key.sort_unstable();
            key
        };
        let mut count: HashMap<[usize; 4], usize> = HashMap::new();
        for e in 0..self.elements.len() {
            for f in 0..6 {
                *count.entry(face_key(e, f)).or_insert(0) += 1;
            }
        }
        let mut boundary = vec![false; self.global_node_count];
        for e in 0..self.elements.len() {
            let conn = &self.local_to_global[e * n..(e + 1) * n];
            for (f, face) in faces.iter().enumerate() {
                if count[&face_key(e, f)] == 1 {
                    for b in 0..n1 {
                        for a in 0..n1 {
                            boundary[conn[face(a, b)]] = true;
                        }
                    }
                }
            }
        }
        boundary
    }
}

/// Parameters of a structured box mesh on `[0, extent_x] x [0, extent_y] x [0, extent_z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxMeshParams {
    pub elements: [usize; 3],
    pub order: usize,
    pub extent: [f64; 3],
    /// Interior vertices are jittered by up to this fraction of the element
    /// size along each axis; must lie in `[0, 0.5)`.
    pub perturbation: f64,
    pub seed: u64,
}

impl BoxMeshParams {
    pub fn unit(elements: [usize; 3], order: usize) -> Self {
        Self {
            elements,
            order,
            extent: [1.0; 3],
            perturbation: 0.0,
            seed: 0,
        }
    }

    pub fn with_perturbation(mut self, perturbation: f64, seed: u64) -> Self {
        self.perturbation = perturbation;
        self.seed = seed;
        self
    }

    pub fn build(&self) -> Result<Mesh> {
        box_mesh(self)
    }
}

/// Structured box mesh with lattice-indexed connectivity, so shared faces,
/// edges and corners coalesce without floating-point comparison.
pub fn box_mesh(p: &BoxMeshParams) -> Result<Mesh> {
    let [ex, ey, ez] = p.elements;
    if ex == 0 || ey == 0 || ez == 0 {
        return Err(HosfemError::InvalidMesh(format!(
            "element counts must be >= 1, got {ex}x{ey}x{ez}"
        )));
    }
    if p.order == 0 {
        return Err(HosfemError::InvalidOrder(0));
    }
    if !(0.0..0.5).contains(&p.perturbation) {
        return Err(HosfemError::InvalidMesh(format!(
            "perturbation must be in [0, 0.5), got {}",
            p.perturbation
        )));
    }
    if p.extent.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(HosfemError::InvalidMesh("extents must be positive".into()));
    }

    let h = [
        p.extent[0] / ex as f64,
        p.extent[1] / ey as f64,
        p.extent[2] / ez as f64,
    ];
    let (vx, vy) = (ex + 1, ey + 1);
    let vertex_id = |a: usize, b: usize, c: usize| a + b * vx + c * vx * vy;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut lattice = Vec::with_capacity(vx * vy * (ez + 1));
    for c in 0..=ez {
        for b in 0..=ey {
            for a in 0..=ex {
                let idx = [a, b, c];
                let counts = [ex, ey, ez];
                let interior = (0..3).all(|d| idx[d] > 0 && idx[d] < counts[d]);
                let mut x = [0.0; 3];
                for d in 0..3 {
                    x[d] = if idx[d] == counts[d] {
                        p.extent[d]
                    } else {
                        idx[d] as f64 * h[d]
                    };
                    if interior && p.perturbation > 0.0 {
                        x[d] += rng.gen_range(-1.0..=1.0) * p.perturbation * h[d];
                    }
                }
                lattice.push(x);
            }
        }
    }

    let n = p.order;
    let n1 = n + 1;
    let (gx, gy, gz) = (ex * n + 1, ey * n + 1, ez * n + 1);
    let mut elements = Vec::with_capacity(ex * ey * ez);
    let mut l2g = Vec::with_capacity(ex * ey * ez * n1 * n1 * n1);
    for kz in 0..ez {
        for ky in 0..ey {
            for kx in 0..ex {
                let mut v = [[0.0; 3]; 8];
                for (i, row) in v.iter_mut().enumerate() {
                    *row = lattice[vertex_id(kx + (i & 1), ky + ((i >> 1) & 1), kz + (i >> 2))];
                }
                elements.push(Element::classify(v));
                for k in 0..n1 {
                    for j in 0..n1 {
                        for i in 0..n1 {
                            let (a, b, c) = (kx * n + i, ky * n + j, kz * n + k);
                            l2g.push(a + b * gx + c * gx * gy);
                        }
                    }
                }
            }
        }
    }
    Mesh::new(p.order, elements, l2g, gx * gy * gz)
}
