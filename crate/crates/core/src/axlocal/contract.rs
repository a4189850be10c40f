//! Sum-factorized application of `D_r = I (x) I (x) D`, `D_s = I (x) D (x) I`
//! and `D_t = D (x) I (x) I` (and their transposes) to one `N1^3` vector.
//!
//! Each call costs `2 N1^4` FLOPs. Sums run over `n = 0..N` in index order.

use crate::basis::SpectralBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    R,
    S,
    T,
}

#[inline]
fn coeff(d: &[f64], n1: usize, row: usize, n: usize, transpose: bool) -> f64 {
    if transpose {
        d[n * n1 + row]
    } else {
        d[row * n1 + n]
    }
}

/// `out[i,j,k] = sum_n D[i][n] x[n,j,k]` (transpose: `D[n][i]`).
pub fn contract_r(x: &[f64], d: &[f64], n1: usize, transpose: bool, out: &mut [f64]) {
    for k in 0..n1 {
        for j in 0..n1 {
            let base = j * n1 + k * n1 * n1;
            for i in 0..n1 {
                let mut acc = 0.0;
                for n in 0..n1 {
                    acc += coeff(d, n1, i, n, transpose) * x[base + n];
                }
                out[base + i] = acc;
            }
        }
    }
}

/// `out[i,j,k] = sum_n D[j][n] x[i,n,k]`.
pub fn contract_s(x: &[f64], d: &[f64], n1: usize, transpose: bool, out: &mut [f64]) {
    for k in 0..n1 {
        let base = k * n1 * n1;
        for j in 0..n1 {
            for i in 0..n1 {
                let mut acc = 0.0;
                for n in 0..n1 {
                    acc += coeff(d, n1, j, n, transpose) * x[base + n * n1 + i];
                }
                out[base + j * n1 + i] = acc;
            }
        }
    }
}

/// `out[i,j,k] = sum_n D[k][n] x[i,j,n]`.
pub fn contract_t(x: &[f64], d: &[f64], n1: usize, transpose: bool, out: &mut [f64]) {
    let n2 = n1 * n1;
    for k in 0..n1 {
        for j in 0..n1 {
            for i in 0..n1 {
                let mut acc = 0.0;
                for n in 0..n1 {
                    acc += coeff(d, n1, k, n, transpose) * x[n * n2 + j * n1 + i];
                }
                out[k * n2 + j * n1 + i] = acc;
            }
        }
    }
}

/// Allocating convenience wrapper over the three contractions.
pub fn contract(basis: &SpectralBasis, dir: Direction, x: &[f64], transpose: bool) -> Vec<f64> {
    let n1 = basis.n1();
    let mut out = vec![0.0; x.len()];
    let d = basis.diff_matrix();
    match dir {
        Direction::R => contract_r(x, d, n1, transpose, &mut out),
        Direction::S => contract_s(x, d, n1, transpose, &mut out),
        Direction::T => contract_t(x, d, n1, transpose, &mut out),
    }
    out
}
