//! Per-element FLOP and memory-traffic accounting for every kernel variant.
//!
//! Counts are polynomials in `N1 = N + 1`. Memory is counted in FP64 words
//! and converted to bytes with [`FP_SIZE`].

use super::{Equation, FactorSource, KernelSpec};
use crate::FP_SIZE;

/// Per-element workload of one kernel configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Workload {
    /// Effective operator FLOPs (contractions plus factor application).
    pub f_ax: u64,
    /// FLOPs spent obtaining geometric factors on the fly.
    pub f_geo: u64,
    /// Total memory traffic in bytes, factor traffic included.
    pub m_bytes: u64,
    /// Memory traffic attributable to geometric factors, in bytes.
    pub m_geo_bytes: u64,
}

/// `F_ax`: six contractions (`12 N1^4`), factor application (`15 N1^3`),
/// plus `5 N1^3` for `lambda0`, `lambda1`, `gwj` in the Helmholtz case; all
/// scaled by `n_col`.
pub fn f_ax(equation: Equation, n_col: usize, n1: u64) -> u64 {
    let per_col = 12 * n1.pow(4)
        + match equation {
            Equation::Poisson => 15 * n1.pow(3),
            Equation::Helmholtz => 20 * n1.pow(3),
        };
    n_col as u64 * per_col
}

/// Full-access memory traffic in words: input and output columns, the
/// stored factors (6 or 7 per node), two coefficient fields for Helmholtz,
/// and the `N1^2` differentiation matrix.
pub fn m_orig_words(equation: Equation, n_col: usize, n1: u64) -> u64 {
    let vectors = 2 * n_col as u64;
    let per_node = vectors
        + match equation {
            Equation::Poisson => 6,
            Equation::Helmholtz => 7 + 2,
        };
    per_node * n1.pow(3) + n1.pow(2)
}

/// Words of factor traffic under full access.
pub fn m_geo_full_words(equation: Equation, n1: u64) -> u64 {
    match equation {
        Equation::Poisson => 6 * n1.pow(3),
        Equation::Helmholtz => 7 * n1.pow(3),
    }
}

/// FLOPs of on-the-fly factor acquisition per element (independent of
/// `n_col`, the factors being computed once per node).
///
/// Trilinear: common terms `72 N1` (24 per point), third Jacobian column
/// `45 N1^2` (15 per `(i, j)`), and per node 80 = 12 (Jacobian) + 30 (`K`)
/// + 14 (`det`) + 4 (`lambda_geo`) + 2 (`gwj`) + 18 (`adj K`). The merged
/// and stored-scale variants skip `det`, `lambda_geo` and `gwj`: 60 per node.
pub fn f_geo(source: FactorSource, equation: Equation, n1: u64) -> u64 {
    let n3 = n1.pow(3);
    let common = 72 * n1 + 45 * n1.pow(2);
    match source {
        FactorSource::Stored => 0,
        FactorSource::ParallelepipedRecompute => match equation {
            Equation::Poisson => 7 * n3,
            Equation::Helmholtz => 8 * n3,
        },
        FactorSource::TrilinearRecompute => common + (12 + 30 + 14 + 4 + 2 + 18) * n3,
        FactorSource::TrilinearMerged | FactorSource::TrilinearPartial => common + (12 + 30 + 18) * n3,
    }
}

/// Words of factor traffic per element.
pub fn m_geo_words(source: FactorSource, equation: Equation, n1: u64) -> u64 {
    match source {
        FactorSource::Stored => m_geo_full_words(equation, n1),
        FactorSource::ParallelepipedRecompute => match equation {
            Equation::Poisson => 6,
            Equation::Helmholtz => 7,
        },
        FactorSource::TrilinearRecompute | FactorSource::TrilinearMerged => 24,
        FactorSource::TrilinearPartial => 24 + n1.pow(3),
    }
}

/// Workload of `spec`: full-access traffic with the factor traffic replaced
/// by that of the chosen source.
pub fn workload_count(spec: &KernelSpec) -> Workload {
    let n1 = spec.n1() as u64;
    let eq = spec.equation;
    let m_geo = m_geo_words(spec.factor_source, eq, n1);
    let words = m_orig_words(eq, spec.n_col, n1) - m_geo_full_words(eq, n1) + m_geo;
    Workload {
        f_ax: f_ax(eq, spec.n_col, n1),
        f_geo: f_geo(spec.factor_source, eq, n1),
        m_bytes: words * FP_SIZE,
        m_geo_bytes: m_geo * FP_SIZE,
    }
}

/// Setup-stage discrete Jacobian: nine contractions, `18 N1^4` FLOPs, and
/// `3 N1^3` coordinate reads.
pub fn discrete_jacobian_flops(n1: u64) -> u64 {
    9 * 2 * n1.pow(4)
}

/// Previously published factor-acquisition schemes, for comparison tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PublishedScheme {
    /// GPU spectral element solver for all-hex meshes.
    AllHexGpu,
    /// NekRS-style recomputation.
    NekRs,
    /// FPGA flow solver (discrete Jacobian in-kernel, scale stored).
    FpgaSolver,
}

impl PublishedScheme {
    pub const ALL: [PublishedScheme; 3] = [Self::AllHexGpu, Self::NekRs, Self::FpgaSolver];

    pub fn name(self) -> &'static str {
        match self {
            Self::AllHexGpu => "all-hex-gpu",
            Self::NekRs => "nekrs",
            Self::FpgaSolver => "fpga",
        }
    }

    pub fn f_geo(self, n1: u64) -> u64 {
        match self {
            Self::AllHexGpu => 242 * n1.pow(3),
            Self::NekRs => 296 * n1.pow(3),
            Self::FpgaSolver => 81 * n1.pow(3) + 18 * n1.pow(4),
        }
    }

    pub fn m_geo_words(self, n1: u64) -> u64 {
        match self {
            Self::AllHexGpu | Self::NekRs => 24,
            Self::FpgaSolver => 24 + n1.pow(3),
        }
    }
}
