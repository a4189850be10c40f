//! Explicitly assembled element matrices, used as the oracle for the
//! matrix-free kernel. The cost is `O(N1^6)` storage; keep `N <= 7`.

use nalgebra::DMatrix;

use super::Equation;
use crate::basis::SpectralBasis;
use crate::geometry::GeometricFactorSet;

/// `D_r = I (x) I (x) D`, `D_s = I (x) D (x) I`, `D_t = D (x) I (x) I` as
/// dense `N1^3 x N1^3` matrices.
pub fn gradient_blocks(basis: &SpectralBasis) -> [DMatrix<f64>; 3] {
    let n1 = basis.n1();
    let d = DMatrix::from_row_slice(n1, n1, basis.diff_matrix());
    let id = DMatrix::<f64>::identity(n1, n1);
    [
        id.kronecker(&id).kronecker(&d),
        id.kronecker(&d).kronecker(&id),
        d.kronecker(&id).kronecker(&id),
    ]
}

/// Assembles `A = D^T blockdiag(Lambda0) G D + Lambda1 Gwj` for one scalar
/// column from weighted factors. Poisson takes `lambda0 = 1` and drops the
/// mass term; the `lambda` arguments are ignored.
pub fn dense_local_matrix(
    equation: Equation,
    basis: &SpectralBasis,
    factors: &GeometricFactorSet,
    lambda0: Option<&[f64]>,
    lambda1: Option<&[f64]>,
) -> DMatrix<f64> {
    let f = factors.to_weighted();
    let n = basis.nodes_per_element();
    let blocks = gradient_blocks(basis);
    // (a, b) -> index into g00, g01, g02, g11, g12, g22
    const SYM: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];

    // Nonzeros of every row of each gradient block.
    let nonzeros: Vec<Vec<Vec<(usize, f64)>>> = blocks
        .iter()
        .map(|b| {
            (0..n)
                .map(|m| {
                    (0..n)
                        .filter_map(|p| {
                            let v = b[(m, p)];
                            (v != 0.0).then_some((p, v))
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut a_mat = DMatrix::<f64>::zeros(n, n);
    for m in 0..n {
        let l0 = match equation {
            Equation::Poisson => 1.0,
            Equation::Helmholtz => lambda0.map_or(1.0, |l| l[m]),
        };
        for a in 0..3 {
            for b in 0..3 {
                let g = l0 * f.g[SYM[a][b]][m];
                for &(p, dp) in &nonzeros[a][m] {
                    for &(q, dq) in &nonzeros[b][m] {
                        a_mat[(p, q)] += dp * g * dq;
                    }
                }
            }
        }
        if equation == Equation::Helmholtz {
            a_mat[(m, m)] += lambda1.map_or(0.0, |l| l[m]) * f.gwj[m];
        }
    }
    a_mat
}

/// `A x` for an `n_col`-column element vector (columns back to back).
pub fn dense_apply(a: &DMatrix<f64>, x: &[f64], n_col: usize) -> Vec<f64> {
    let n = a.nrows();
    let mut y = vec![0.0; n * n_col];
    for c in 0..n_col {
        let xc = nalgebra::DVector::from_column_slice(&x[c * n..(c + 1) * n]);
        let yc = a * xc;
        y[c * n..(c + 1) * n].copy_from_slice(yc.as_slice());
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axlocal::contract::{contract, Direction};

    #[test]
    fn kronecker_blocks_match_sum_factorization() {
        let b = SpectralBasis::new(3).unwrap();
        let n = b.nodes_per_element();
        let x: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) as f64).sin()).collect();
        let blocks = gradient_blocks(&b);
        for (blk, dir) in blocks.iter().zip([Direction::R, Direction::S, Direction::T]) {
            for transpose in [false, true] {
                let m = if transpose { blk.transpose() } else { blk.clone() };
                let dense = dense_apply(&m, &x, 1);
                let sf = contract(&b, dir, &x, transpose);
                for (p, q) in dense.iter().zip(&sf) {
                    assert!((p - q).abs() < 1e-12);
                }
            }
        }
    }
}
