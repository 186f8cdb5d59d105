//! Gauss-Legendre collocation grid in x = cos(theta).
//!
//! Circle-invariant smooth fields on the 2-sphere are exactly the smooth
//! functions of x, so a grid of interior Gauss nodes carries them without any
//! pole boundary conditions and differentiation is spectrally accurate.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::real::Real;

/// Smallest supported grid; below this the differential operators are too
/// coarse for any of the library's tolerances to be meaningful.
pub const MIN_GRID_SIZE: usize = 8;

struct GridInner<T: Real> {
    n: usize,
    /// Gauss-Legendre nodes, strictly increasing in (-1, 1).
    nodes: DVector<T>,
    /// Quadrature weights against the round area element; they sum to 4*pi.
    weights: DVector<T>,
    /// Barycentric weights of the nodes (up to a common scale).
    bary: DVector<T>,
    /// First-derivative collocation matrix d/dx.
    diff1: DMatrix<T>,
    /// Second-derivative collocation matrix.
    diff2: DMatrix<T>,
    /// Laplace-Beltrami operator of the round sphere: (1-x^2) d^2 - 2x d.
    lap_round: DMatrix<T>,
}

/// Immutable collocation grid, cheap to clone and share between threads.
#[derive(Clone)]
pub struct Grid<T: Real>(Arc<GridInner<T>>);

impl<T: Real> std::fmt::Debug for Grid<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Grid(n={})", self.n())
    }
}

impl<T: Real> Grid<T> {
    /// Builds the grid with differentiation and quadrature operators attached.
    pub fn new(n: usize) -> Result<Self> {
        if n < MIN_GRID_SIZE {
            return Err(Error::Config(format!(
                "grid size {n} below minimum {MIN_GRID_SIZE}"
            )));
        }
        let (x, w) = gauss_legendre::<T>(n);

        let two_pi = T::two_pi();
        let weights = DVector::from_fn(n, |i, _| two_pi * w[i]);

        // Barycentric weights for Gauss-Legendre nodes:
        // lambda_j proportional to (-1)^j sqrt((1 - x_j^2) w_j).
        let bary = DVector::from_fn(n, |j, _| {
            let sign = if j % 2 == 0 { T::one() } else { -T::one() };
            sign * ((T::one() - x[j] * x[j]) * w[j]).sqrt()
        });

        let mut diff1 = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut row_sum = T::zero();
            for j in 0..n {
                if i != j {
                    let v = (bary[j] / bary[i]) / (x[i] - x[j]);
                    diff1[(i, j)] = v;
                    row_sum += v;
                }
            }
            diff1[(i, i)] = -row_sum;
        }

        // Welfert's recursion for the second-derivative matrix.
        let mut diff2 = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut row_sum = T::zero();
            for j in 0..n {
                if i != j {
                    let v = T::of(2.0) * diff1[(i, j)] * (diff1[(i, i)] - T::one() / (x[i] - x[j]));
                    diff2[(i, j)] = v;
                    row_sum += v;
                }
            }
            diff2[(i, i)] = -row_sum;
        }

        let mut lap_round = DMatrix::zeros(n, n);
        for i in 0..n {
            let s2 = T::one() - x[i] * x[i];
            let tx = T::of(2.0) * x[i];
            for j in 0..n {
                lap_round[(i, j)] = s2 * diff2[(i, j)] - tx * diff1[(i, j)];
            }
        }

        Ok(Grid(Arc::new(GridInner {
            n,
            nodes: x,
            weights,
            bary,
            diff1,
            diff2,
            lap_round,
        })))
    }

    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn nodes(&self) -> &DVector<T> {
        &self.0.nodes
    }

    /// Quadrature weights against the round area element (sum 4*pi).
    pub fn quadrature_weights(&self) -> &DVector<T> {
        &self.0.weights
    }

    pub fn diff_matrix(&self) -> &DMatrix<T> {
        &self.0.diff1
    }

    pub fn diff2_matrix(&self) -> &DMatrix<T> {
        &self.0.diff2
    }

    /// Collocation matrix of the round-sphere Laplacian (1-x^2) d^2/dx^2 - 2x d/dx.
    pub fn lap_round_matrix(&self) -> &DMatrix<T> {
        &self.0.lap_round
    }

    /// d/dx of nodal values.
    pub fn diff(&self, values: &DVector<T>) -> DVector<T> {
        &self.0.diff1 * values
    }

    pub fn diff2(&self, values: &DVector<T>) -> DVector<T> {
        &self.0.diff2 * values
    }

    /// Two grids are interchangeable when they hold identical nodes.
    pub fn same_grid(&self, other: &Grid<T>) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || (self.0.n == other.0.n && self.0.nodes == other.0.nodes)
    }

    /// Barycentric evaluation of the interpolant of `values` at `y`.
    pub fn interpolate(&self, values: &DVector<T>, y: T) -> T {
        let x = &self.0.nodes;
        let lam = &self.0.bary;
        let mut num = T::zero();
        let mut den = T::zero();
        for j in 0..self.0.n {
            let d = y - x[j];
            if d.abs() < T::of(1e-300) {
                return values[j];
            }
            let c = lam[j] / d;
            num += c * values[j];
            den += c;
        }
        num / den
    }

    /// Legendre polynomial P_k sampled at the nodes.
    pub fn legendre(&self, k: usize) -> DVector<T> {
        DVector::from_fn(self.0.n, |i, _| legendre_scalar(k, self.0.nodes[i]))
    }
}

/// Evaluates P_k(x) by the three-term recurrence.
pub fn legendre_scalar<T: Real>(k: usize, x: T) -> T {
    if k == 0 {
        return T::one();
    }
    let mut pm = T::one();
    let mut p = x;
    for j in 1..k {
        let jt = T::of(j as f64);
        let next = ((T::of(2.0) * jt + T::one()) * x * p - jt * pm) / (jt + T::one());
        pm = p;
        p = next;
    }
    p
}

/// Gauss-Legendre nodes and weights on (-1, 1) by Newton iteration on P_n.
fn gauss_legendre<T: Real>(n: usize) -> (DVector<T>, DVector<T>) {
    let mut x = DVector::zeros(n);
    let mut w = DVector::zeros(n);
    let nf = n as f64;
    for i in 0..n {
        // Chebyshev-like initial guess, counted so nodes come out ascending.
        let k = n - i;
        let mut xi = T::of((std::f64::consts::PI * (k as f64 - 0.25) / (nf + 0.5)).cos());
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, xi);
            let dx = p / dp;
            xi -= dx;
            if dx.abs() < T::of(1e-15) {
                break;
            }
        }
        // One polishing step.
        let (p, dp) = legendre_with_derivative(n, xi);
        xi -= p / dp;
        let (_, dp) = legendre_with_derivative(n, xi);
        x[i] = xi;
        w[i] = T::of(2.0) / ((T::one() - xi * xi) * dp * dp);
    }
    (x, w)
}

/// (P_n(x), P_n'(x)) via the recurrence.
fn legendre_with_derivative<T: Real>(n: usize, x: T) -> (T, T) {
    let mut pm = T::one();
    let mut p = x;
    for j in 1..n {
        let jt = T::of(j as f64);
        let next = ((T::of(2.0) * jt + T::one()) * x * p - jt * pm) / (jt + T::one());
        pm = p;
        p = next;
    }
    let nf = T::of(n as f64);
    let dp = nf * (x * p - pm) / (x * x - T::one());
    (p, dp)
}
