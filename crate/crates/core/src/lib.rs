//! Matrix-free high-order spectral element operators.
//!
//! The crate builds the element-local operator `Y = A X` on hexahedral
//! elements with Gauss-Lobatto-Legendre (GLL) tensor bases, using sum
//! factorization for the derivative contractions and several interchangeable
//! sources for the per-node geometric factors:
//!
//! * factors computed once at setup and stored (full memory access),
//! * on-the-fly recomputation for trilinear elements from the 8 vertices,
//!   optionally with merged scalar coefficients (Helmholtz) or a stored
//!   scaling field (Poisson),
//! * on-the-fly recomputation for parallelepipeds from 7 constants.
//!
//! Around the kernel sit gather/scatter connectivity, a CG solver for a
//! manufactured-solution benchmark, FLOP/byte accounting for every kernel
//! variant and a time-based roofline model.

pub mod axlocal;
pub mod basis;
pub mod bench;
pub mod error;
pub mod geometry;
pub mod mesh;
pub mod roofline;
pub mod solver;
pub mod verify;

pub use axlocal::{Equation, FactorSource, KernelSpec};
pub use basis::SpectralBasis;
pub use error::{HosfemError, Result};
pub use mesh::{Element, ElementKind, LocalField, Mesh};

/// Bytes per floating-point word. All arithmetic is FP64.
pub const FP_SIZE: u64 = 8;
