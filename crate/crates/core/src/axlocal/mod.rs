//! The matrix-free element-local operator `Y(e) = A(e) X(e)`.
//!
//! `A(e) = D^T diag(Lambda0, Lambda0, Lambda0) G D + Lambda1 Gwj` for the
//! Helmholtz equation; the Poisson kernel drops `Lambda0`, `Lambda1` and
//! `Gwj` entirely.

pub mod contract;
pub mod dense;
mod kernel;
pub mod workload;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::basis::SpectralBasis;
use crate::error::{HosfemError, Result};
use crate::geometry::{
    self, at_element, element_node_coordinates, GeometricFactorSet, ParallelepipedFactors,
    TrilinearCommonTerms,
};
use crate::mesh::{Element, ElementKind, LocalField, Vertices};

pub use kernel::ScratchBuffers;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equation {
    Poisson,
    Helmholtz,
}

impl Equation {
    pub const ALL: [Equation; 2] = [Equation::Poisson, Equation::Helmholtz];

    pub fn name(self) -> &'static str {
        match self {
            Equation::Poisson => "poisson",
            Equation::Helmholtz => "helmholtz",
        }
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Equation {
    type Err = HosfemError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poisson" => Ok(Equation::Poisson),
            "helmholtz" => Ok(Equation::Helmholtz),
            other => Err(HosfemError::IncompatibleSpec(format!("unknown equation '{other}'"))),
        }
    }
}

/// Where the kernel obtains geometric factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum FactorSource {
    /// Precomputed at setup, read from memory (full access).
    Stored,
    /// Recomputed from the 8 vertices on the fly.
    TrilinearRecompute,
    /// Trilinear recomputation with `Lambda2 = lambda_geo lambda0` and
    /// `Lambda3 = Gwj lambda1` precomputed (Helmholtz only).
    TrilinearMerged,
    /// Trilinear recomputation with `lambda_geo` stored (Poisson only).
    TrilinearPartial,
    /// Seven constants per element scaled by GLL weights.
    ParallelepipedRecompute,
}

impl FactorSource {
    pub const ALL: [FactorSource; 5] = [
        FactorSource::Stored,
        FactorSource::TrilinearRecompute,
        FactorSource::TrilinearMerged,
        FactorSource::TrilinearPartial,
        FactorSource::ParallelepipedRecompute,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FactorSource::Stored => "stored",
            FactorSource::TrilinearRecompute => "trilinear",
            FactorSource::TrilinearMerged => "trilinear-merged",
            FactorSource::TrilinearPartial => "trilinear-partial",
            FactorSource::ParallelepipedRecompute => "parallelepiped",
        }
    }

    /// Whether the variant is defined for `equation`.
    pub fn supports(self, equation: Equation) -> bool {
        match self {
            FactorSource::TrilinearMerged => equation == Equation::Helmholtz,
            FactorSource::TrilinearPartial => equation == Equation::Poisson,
            _ => true,
        }
    }

    /// Whether the variant can run on an element of `kind`.
    pub fn accepts(self, kind: ElementKind) -> bool {
        match self {
            FactorSource::Stored => true,
            FactorSource::ParallelepipedRecompute => kind == ElementKind::Parallelepiped,
            _ => kind.is_trilinear(),
        }
    }

    /// Variants defined for `equation`, in declaration order.
    pub fn for_equation(equation: Equation) -> Vec<FactorSource> {
        Self::ALL.into_iter().filter(|s| s.supports(equation)).collect()
    }
}

impl fmt::Display for FactorSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FactorSource {
    type Err = HosfemError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|v| v.name() == lower)
            .or(match lower.as_str() {
                "full" | "baseline" => Some(FactorSource::Stored),
                "merged" => Some(FactorSource::TrilinearMerged),
                "partial" => Some(FactorSource::TrilinearPartial),
                _ => None,
            })
            .ok_or_else(|| HosfemError::IncompatibleSpec(format!("unknown variant '{s}'")))
    }
}

/// Kernel configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KernelSpec {
    pub equation: Equation,
    pub n_col: usize,
    pub factor_source: FactorSource,
    pub order: usize,
}

impl KernelSpec {
    pub fn new(equation: Equation, n_col: usize, factor_source: FactorSource, order: usize) -> Result<Self> {
        let spec = Self {
            equation,
            n_col,
            factor_source,
            order,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(HosfemError::InvalidOrder(0));
        }
        if self.n_col != 1 && self.n_col != 3 {
            return Err(HosfemError::IncompatibleSpec(format!(
                "n_col must be 1 or 3, got {}",
                self.n_col
            )));
        }
        if !self.factor_source.supports(self.equation) {
            return Err(HosfemError::IncompatibleSpec(format!(
                "{} is not defined for the {} equation",
                self.factor_source, self.equation
            )));
        }
        Ok(())
    }

    pub fn n1(&self) -> usize {
        self.order + 1
    }
}

/// Nodal Helmholtz coefficient fields `lambda0`, `lambda1` (one column).
#[derive(Debug, Clone, PartialEq)]
pub struct HelmholtzCoefficients {
    pub lambda0: LocalField,
    pub lambda1: LocalField,
}

impl HelmholtzCoefficients {
    pub fn constant(elements: usize, order: usize, lambda0: f64, lambda1: f64) -> Self {
        let n = elements * (order + 1).pow(3);
        Self {
            lambda0: LocalField::from_vec(elements, order, 1, vec![lambda0; n]).expect("sized"),
            lambda1: LocalField::from_vec(elements, order, 1, vec![lambda1; n]).expect("sized"),
        }
    }
}

/// Setup-stage data for one element, by factor source.
#[derive(Debug, Clone, PartialEq)]
pub enum ElementGeometry {
    Stored(GeometricFactorSet),
    Trilinear(Vertices),
    Merged {
        vertices: Vertices,
        lambda2: Vec<f64>,
        lambda3: Vec<f64>,
    },
    Partial {
        vertices: Vertices,
        lambda_geo: Vec<f64>,
    },
    Parallelepiped(ParallelepipedFactors),
}

/// Everything one batch of `ax_local_apply` calls needs: the spec, the
/// basis, per-element geometry and (for Helmholtz, unmerged) coefficients.
#[derive(Debug, Clone)]
pub struct PreparedOperator {
    spec: KernelSpec,
    basis: SpectralBasis,
    geometry: Vec<ElementGeometry>,
    lambda0: Option<Vec<f64>>,
    lambda1: Option<Vec<f64>>,
}

impl PreparedOperator {
    /// Runs the setup stage for `spec` over `elements`.
    ///
    /// Helmholtz requires `coefficients`; Poisson ignores them. Every element
    /// is checked for a positive Jacobian determinant at all GLL nodes.
    pub fn new(
        spec: KernelSpec,
        elements: &[Element],
        coefficients: Option<&HelmholtzCoefficients>,
    ) -> Result<Self> {
        spec.validate()?;
        let basis = SpectralBasis::new(spec.order)?;
        let n = basis.nodes_per_element();
        let coeffs = match spec.equation {
            Equation::Poisson => None,
            Equation::Helmholtz => {
                let c = coefficients.ok_or_else(|| {
                    HosfemError::IncompatibleSpec("Helmholtz kernel needs lambda0/lambda1".into())
                })?;
                for f in [&c.lambda0, &c.lambda1] {
                    if f.elements() != elements.len() || f.order() != spec.order || f.n_col() != 1 {
                        return Err(HosfemError::SizeMismatch {
                            what: "Helmholtz coefficient field",
                            expected: elements.len() * n,
                            actual: f.as_slice().len(),
                        });
                    }
                }
                Some(c)
            }
        };

        let geometry = elements
            .par_iter()
            .enumerate()
            .map(|(e, el)| {
                if !spec.factor_source.accepts(el.kind) {
                    return Err(HosfemError::IncompatibleSpec(format!(
                        "variant {} cannot run on {} element {e}",
                        spec.factor_source,
                        el.kind.name()
                    )));
                }
                let v = &el.vertices;
                let g = match spec.factor_source {
                    FactorSource::Stored => {
                        let coords = element_node_coordinates(v, &basis);
                        ElementGeometry::Stored(geometry::discrete_factors(&coords, &basis)?)
                    }
                    FactorSource::TrilinearRecompute => {
                        geometry::recompute_trilinear(v, &basis)?;
                        ElementGeometry::Trilinear(*v)
                    }
                    FactorSource::TrilinearMerged => {
                        let c = coeffs.expect("merged is Helmholtz-only");
                        let set = geometry::recompute_trilinear(v, &basis)?;
                        let weighted_gwj = set.to_weighted().gwj;
                        let (lambda2, lambda3) = geometry::merged_scalar_setup(
                            c.lambda0.column(e, 0),
                            c.lambda1.column(e, 0),
                            set.lambda_geo.as_deref().expect("unscaled"),
                            &weighted_gwj,
                        )?;
                        ElementGeometry::Merged {
                            vertices: *v,
                            lambda2,
                            lambda3,
                        }
                    }
                    FactorSource::TrilinearPartial => ElementGeometry::Partial {
                        vertices: *v,
                        lambda_geo: geometry::lambda_geo_field(v, &basis)?,
                    },
                    FactorSource::ParallelepipedRecompute => {
                        ElementGeometry::Parallelepiped(geometry::parallelepiped_setup(v)?)
                    }
                };
                Ok(g)
            })
            .enumerate()
            .map(|(e, r)| r.map_err(at_element(e)))
            .collect::<Result<Vec<_>>>()?;

        let (lambda0, lambda1) = match (spec.factor_source, coeffs) {
            (FactorSource::TrilinearMerged, _) | (_, None) => (None, None),
            (_, Some(c)) => (
                Some(c.lambda0.as_slice().to_vec()),
                Some(c.lambda1.as_slice().to_vec()),
            ),
        };

        Ok(Self {
            spec,
            basis,
            geometry,
            lambda0,
            lambda1,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn element_count(&self) -> usize {
        self.geometry.len()
    }

    pub fn geometry(&self) -> &[ElementGeometry] {
        &self.geometry
    }

    pub fn scratch(&self) -> ScratchBuffers {
        ScratchBuffers::new(&self.basis, self.spec.n_col)
    }

    fn lambda<'a>(&self, field: &'a Option<Vec<f64>>, e: usize) -> Option<&'a [f64]> {
        let n = self.basis.nodes_per_element();
        field.as_deref().map(|l| &l[e * n..(e + 1) * n])
    }

    /// Applies the operator of element `e` to its `n_col * N1^3` slice `x`.
    pub fn apply_element(&self, e: usize, x: &[f64], y: &mut [f64], scratch: &mut ScratchBuffers) {
        let l0 = self.lambda(&self.lambda0, e);
        let l1 = self.lambda(&self.lambda1, e);
        kernel::apply_element(&self.spec, &self.basis, &self.geometry[e], l0, l1, x, y, scratch);
    }

    fn check_field(&self, x: &LocalField) -> Result<()> {
        if x.elements() != self.geometry.len() || x.order() != self.spec.order || x.n_col() != self.spec.n_col {
            return Err(HosfemError::SizeMismatch {
                what: "local field for kernel",
                expected: self.geometry.len() * self.basis.nodes_per_element() * self.spec.n_col,
                actual: x.as_slice().len(),
            });
        }
        Ok(())
    }

    /// Batched apply in element order on the calling thread.
    pub fn apply_sequential(&self, x: &LocalField, y: &mut LocalField) -> Result<()> {
        self.check_field(x)?;
        self.check_field(y)?;
        let mut scratch = self.scratch();
        for e in 0..self.geometry.len() {
            let xe = x.element(e);
            self.apply_element(e, xe, y.element_mut(e), &mut scratch);
        }
        Ok(())
    }

    /// Batched apply over the current rayon pool. Elements write disjoint
    /// outputs and each element is computed exactly as in
    /// [`apply_sequential`](Self::apply_sequential), so the result is
    /// bitwise independent of the worker count.
    pub fn apply(&self, x: &LocalField, y: &mut LocalField) -> Result<()> {
        self.check_field(x)?;
        self.check_field(y)?;
        let len = self.spec.n_col * self.basis.nodes_per_element();
        y.as_mut_slice()
            .par_chunks_mut(len)
            .enumerate()
            .for_each_init(
                || self.scratch(),
                |scratch, (e, ye)| self.apply_element(e, x.element(e), ye, scratch),
            );
        Ok(())
    }

    /// Allocating form of [`apply`](Self::apply).
    pub fn apply_new(&self, x: &LocalField) -> Result<LocalField> {
        let mut y = LocalField::zeros(x.elements(), x.order(), x.n_col());
        self.apply(x, &mut y)?;
        Ok(y)
    }

    /// Weighted factors element `e` effectively uses, reconstructed from the
    /// prepared data (for verification).
    pub fn effective_factors(&self, e: usize) -> GeometricFactorSet {
        match &self.geometry[e] {
            ElementGeometry::Stored(set) => set.clone(),
            ElementGeometry::Trilinear(v) => geometry::recompute_trilinear(v, &self.basis)
                .expect("validated at setup")
                .to_weighted(),
            ElementGeometry::Merged { vertices, .. } => geometry::recompute_trilinear(vertices, &self.basis)
                .expect("validated at setup")
                .to_weighted(),
            ElementGeometry::Partial { vertices, lambda_geo } => {
                geometry::partial_recompute_factors(vertices, lambda_geo, &self.basis).to_weighted()
            }
            ElementGeometry::Parallelepiped(h) => {
                let n1 = self.basis.n1();
                let n = self.basis.nodes_per_element();
                let mut set = GeometricFactorSet {
                    convention: geometry::FactorConvention::Weighted,
                    g: std::array::from_fn(|_| vec![0.0; n]),
                    gwj: vec![0.0; n],
                    lambda_geo: None,
                };
                for node in 0..n {
                    let f = geometry::recompute_parallelepiped(
                        h,
                        &self.basis,
                        node % n1,
                        (node / n1) % n1,
                        node / (n1 * n1),
                    );
                    for a in 0..6 {
                        set.g[a][node] = f.g[a];
                    }
                    set.gwj[node] = f.gwj;
                }
                set
            }
        }
    }
}

/// One-shot element apply: prepares `element` for `spec` and applies it.
pub fn ax_local_apply(
    spec: &KernelSpec,
    element: &Element,
    coefficients: Option<&HelmholtzCoefficients>,
    x: &[f64],
) -> Result<Vec<f64>> {
    let op = PreparedOperator::new(*spec, std::slice::from_ref(element), coefficients)?;
    let expected = spec.n_col * op.basis.nodes_per_element();
    if x.len() != expected {
        return Err(HosfemError::SizeMismatch {
            what: "element input",
            expected,
            actual: x.len(),
        });
    }
    let mut y = vec![0.0; expected];
    let mut scratch = op.scratch();
    op.apply_element(0, x, &mut y, &mut scratch);
    Ok(y)
}

#[allow(dead_code)]
fn _assert_send_sync() {
    fn is<T: Send + Sync>() {}
    is::<PreparedOperator>();
    is::<TrilinearCommonTerms>();
}
