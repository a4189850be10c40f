//! Gauss-Lobatto-Legendre machinery for a fixed polynomial order.

use crate::error::{HosfemError, Result};

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// Evaluates the Legendre polynomial `L_n` and its derivative at `x` using
/// the three-term recurrence.
pub fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    let (mut dp_prev, mut dp) = (0.0, 1.0);
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        // L'_{k+1} = L'_{k-1} + (2k+1) L_k
        let dp_next = dp_prev + (2.0 * kf + 1.0) * p;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
    }
    (p, dp)
}

/// GLL points of order `n`: the zeros of `(1 - x^2) L_n'(x)`, ascending.
///
/// Interior points start from Chebyshev-Gauss-Lobatto estimates and are
/// polished by Newton iteration on `L_n'`. Only the lower half is solved for;
/// the upper half is mirrored so the set is exactly symmetric about zero.
pub fn gll_points(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(HosfemError::InvalidOrder(n));
    }
    let mut points = vec![0.0; n + 1];
    points[0] = -1.0;
    points[n] = 1.0;
    let nn1 = (n * (n + 1)) as f64;
    for i in 1..=(n - 1) / 2 {
        let mut x = -(std::f64::consts::PI * i as f64 / n as f64).cos();
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let (l, dl) = legendre_and_derivative(n, x);
            // Legendre ODE: (1 - x^2) L'' = 2x L' - n(n+1) L
            let ddl = (2.0 * x * dl - nn1 * l) / (1.0 - x * x);
            let dx = dl / ddl;
            x -= dx;
            if dx.abs() <= NEWTON_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(HosfemError::NewtonDiverged { order: n, index: i });
        }
        points[i] = x;
        points[n - i] = -x;
    }
    Ok(points)
}

/// GLL weights `w_i = 2 / (n (n+1) L_n(xi_i)^2)`.
pub fn gll_weights(n: usize, points: &[f64]) -> Vec<f64> {
    let nn1 = (n * (n + 1)) as f64;
    let mut weights: Vec<f64> = points
        .iter()
        .map(|&x| {
            let (l, _) = legendre_and_derivative(n, x);
            2.0 / (nn1 * l * l)
        })
        .collect();
    let len = weights.len();
    for i in 0..len / 2 {
        weights[len - 1 - i] = weights[i];
    }
    weights
}

/// Differentiation matrix `D[i][j] = pi_j'(xi_i)`, row-major, from the
/// closed-form GLL expression.
pub fn diff_matrix(n: usize, points: &[f64]) -> Vec<f64> {
    let n1 = n + 1;
    let l: Vec<f64> = points
        .iter()
        .map(|&x| legendre_and_derivative(n, x).0)
        .collect();
    let mut d = vec![0.0; n1 * n1];
    for i in 0..n1 {
        for j in 0..n1 {
            d[i * n1 + j] = if i != j {
                l[i] / (l[j] * (points[i] - points[j]))
            } else if i == 0 {
                -((n * (n + 1)) as f64) / 4.0
            } else if i == n {
                ((n * (n + 1)) as f64) / 4.0
            } else {
                0.0
            };
        }
    }
    d
}

/// Points, weights and differentiation matrix for one polynomial order.
///
/// Immutable after construction; share it freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    order: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    diff: Vec<f64>,
}

impl SpectralBasis {
    pub fn new(order: usize) -> Result<Self> {
        let points = gll_points(order)?;
        let weights = gll_weights(order, &points);
        let diff = diff_matrix(order, &points);
        Ok(Self {
            order,
            points,
            weights,
            diff,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Points per direction, `N + 1`.
    pub fn n1(&self) -> usize {
        self.order + 1
    }

    /// Nodes per element, `(N + 1)^3`.
    pub fn nodes_per_element(&self) -> usize {
        self.n1().pow(3)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Row-major `(N+1) x (N+1)` differentiation matrix.
    pub fn diff_matrix(&self) -> &[f64] {
        &self.diff
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.diff[i * self.n1() + j]
    }

    /// Tensor weight `w_i w_j w_k`.
    #[inline]
    pub fn weight3(&self, i: usize, j: usize, k: usize) -> f64 {
        self.weights[i] * self.weights[j] * self.weights[k]
    }
}
