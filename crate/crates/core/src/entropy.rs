//! The W functional, the entropy mu(g) = inf W(g, .) over the normalized
//! constraint set, its first variation and gradient, the weighted Laplacian
//! spectrum, and a finite-difference probe of the entropy Hessian.
//!
//! The minimization runs in the substituted variable u = e^{-f/2}, where W
//! becomes the log-Sobolev-type functional
//!     Wbar(g, u) = (1/2) int (4 |grad u|^2 + R u^2 - 2 u^2 log u^2) dVol
//! constrained to int u^2 dVol = 1, with Euler-Lagrange equation
//!     -4 Lap u + R u - 4 u log u - 2 mu u = 0.
//! A projected gradient descent with backtracking (which keeps u strictly
//! positive) is followed by a Newton polish on the bordered KKT system.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::error::{Error, Result};
use crate::field::{ScalarField, SymTensor2};
use crate::geometry::{self, Chart};
use crate::metric::{Metric, WarpedMetric};
use crate::real::Real;

/// Tolerance on the normalization int e^{-f} dVol = 1 accepted by the
/// functional evaluations; callers normalize f by an additive constant.
pub const CONSTRAINT_TOL: f64 = 1e-8;

/// Gradient-norm threshold below which a metric counts as a critical point
/// of mu, e.g. as the base point of a Hessian probe.
pub const CRITICAL_TOL: f64 = 1e-6;

/// Solver parameters for the entropy minimization.
#[derive(Clone, Debug)]
pub struct EntropyConfig<T: Real> {
    /// Acceptable sup-norm of the Euler-Lagrange residual of the minimizer
    /// equation in f-form.
    pub el_tol: T,
    /// Acceptable defect of int u^2 dVol = 1 in the returned minimizer.
    pub constraint_tol: T,
    pub max_descent: usize,
    pub max_newton: usize,
    /// Projected-gradient norm at which descent hands over to Newton.
    pub descent_tol: T,
    /// Number of additional random initializations; the spread of the
    /// resulting minimizers is recorded in the result.
    pub multistart: usize,
    pub seed: u64,
}

impl<T: Real> Default for EntropyConfig<T> {
    fn default() -> Self {
        EntropyConfig {
            el_tol: T::of(1e-10),
            constraint_tol: T::of(1e-10),
            max_descent: 500,
            max_newton: 20,
            descent_tol: T::of(1e-6),
            multistart: 0,
            seed: 0,
        }
    }
}

/// Outcome of one entropy minimization.
#[derive(Clone, Debug)]
pub struct EntropyResult<T: Real> {
    pub mu: T,
    pub minimizer_f: ScalarField<T>,
    /// Sup-norm of Lap f - |grad f|^2/2 + f + R/2 - mu at the minimizer.
    pub el_residual: T,
    pub iterations: usize,
    /// Max pairwise sup-distance of minimizers over restarts (0 without
    /// multistart).
    pub multistart_spread: T,
}

/// Failed entropy solve, carrying the best iterate reached.
#[derive(Debug, Error)]
#[error("entropy solve failed: {reason}")]
pub struct SolveFailure<T: Real> {
    pub reason: String,
    pub best: Option<EntropyResult<T>>,
}

impl<T: Real> From<SolveFailure<T>> for Error {
    fn from(f: SolveFailure<T>) -> Error {
        Error::Solver(f.reason)
    }
}

/// Per-metric data shared by the functional evaluations and the solver.
pub(crate) struct EntropyOps<T: Real> {
    pub chart: Chart<T>,
    /// Quadrature weights against dVol_g.
    pub m: DVector<T>,
    pub r: DVector<T>,
    /// Dirichlet stiffness matrix: u^T K u = int |grad u|^2 dVol.
    pub stiffness: DMatrix<T>,
}

impl<T: Real> EntropyOps<T> {
    pub fn new(metric: &Metric<T>) -> Result<Self> {
        let chart = Chart::new(metric);
        let m = chart.vol_weights();
        let r = geometry::scalar_curvature(metric)?.into_values();
        let stiffness = chart.stiffness_matrix(None);
        Ok(EntropyOps {
            chart,
            m,
            r,
            stiffness,
        })
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn area(&self) -> T {
        self.m.sum()
    }

    fn normalize(&self, u: &mut DVector<T>) {
        let mut s = T::zero();
        for i in 0..self.n() {
            s += self.m[i] * u[i] * u[i];
        }
        let inv = T::one() / s.sqrt();
        for i in 0..self.n() {
            u[i] *= inv;
        }
    }

    pub fn wbar(&self, u: &DVector<T>) -> T {
        let ku = &self.stiffness * u;
        let mut total = T::of(4.0) * u.dot(&ku);
        for i in 0..self.n() {
            let u2 = u[i] * u[i];
            total += self.m[i] * (self.r[i] * u2 - T::of(2.0) * u2 * (u2).ln());
        }
        T::of(0.5) * total
    }

    /// Euler-Lagrange residual in u-form: -4 Lap u + R u - 4 u log u - 2 mu u.
    fn el_residual_u(&self, u: &DVector<T>, mu: T) -> DVector<T> {
        let ku = &self.stiffness * u;
        DVector::from_fn(self.n(), |i, _| {
            T::of(4.0) * ku[i] / self.m[i] + self.r[i] * u[i]
                - T::of(4.0) * u[i] * u[i].ln()
                - T::of(2.0) * mu * u[i]
        })
    }

    /// Residual of the minimizer equation in f-form at f = -2 log u.
    fn el_residual_f(&self, u: &DVector<T>, mu: T) -> T {
        let f = u.map(|v| -T::of(2.0) * v.ln());
        let lap = self.chart.laplacian(&f);
        let gsq = self.chart.grad_norm_sq(&f);
        let mut sup = T::zero();
        for i in 0..self.n() {
            let r = lap[i] - T::of(0.5) * gsq[i] + f[i] + T::of(0.5) * self.r[i] - mu;
            sup = sup.max(r.abs());
        }
        sup
    }

    fn constraint_defect(&self, u: &DVector<T>) -> T {
        let mut s = T::zero();
        for i in 0..self.n() {
            s += self.m[i] * u[i] * u[i];
        }
        (s - T::one()).abs()
    }
}

/// W(g, f) = int [ (|grad f|^2 + R)/2 + f ] e^{-f} dVol for f satisfying the
/// normalization int e^{-f} dVol = 1.
pub fn w_functional<T: Real>(metric: &Metric<T>, f: &ScalarField<T>) -> Result<T> {
    let chart = Chart::new(metric);
    let m = chart.vol_weights();
    let mut mass = T::zero();
    for i in 0..chart.n() {
        mass += m[i] * (-f.values()[i]).exp();
    }
    if (mass - T::one()).abs() > T::of(CONSTRAINT_TOL) {
        return Err(Error::Contract(format!(
            "int e^-f dVol = {mass} violates the normalization; shift f by a constant"
        )));
    }
    Ok(w_functional_unchecked(metric, f))
}

/// W without the normalization check; the honest integrand for variational
/// formulas that move off the constraint set.
pub fn w_functional_unchecked<T: Real>(metric: &Metric<T>, f: &ScalarField<T>) -> T {
    let chart = Chart::new(metric);
    let m = chart.vol_weights();
    let r = match metric {
        Metric::Conformal(_) => geometry::scalar_curvature(metric)
            .expect("curvature of valid metric")
            .into_values(),
        Metric::Warped(_) => chart.gauss_curvature().map(|k| T::of(2.0) * k),
    };
    let gsq = chart.grad_norm_sq(f.values());
    let mut total = T::zero();
    for i in 0..chart.n() {
        let fi = f.values()[i];
        total += m[i] * (T::of(0.5) * (gsq[i] + r[i]) + fi) * (-fi).exp();
    }
    total
}

/// Wbar(g, u) for positive u with int u^2 dVol = 1; equals W(g, -2 log u).
pub fn wbar_functional<T: Real>(metric: &Metric<T>, u: &ScalarField<T>) -> Result<T> {
    if u.values().iter().any(|v| *v <= T::zero()) {
        return Err(Error::Domain("u must be strictly positive".into()));
    }
    let ops = EntropyOps::new(metric)?;
    if ops.constraint_defect(u.values()) > T::of(CONSTRAINT_TOL) {
        return Err(Error::Contract("int u^2 dVol = 1 violated".into()));
    }
    Ok(ops.wbar(u.values()))
}

struct SolveOutcome<T: Real> {
    u: DVector<T>,
    mu: T,
    el_residual: T,
    iterations: usize,
    converged: bool,
}

fn solve_from<T: Real>(
    ops: &EntropyOps<T>,
    u0: DVector<T>,
    cfg: &EntropyConfig<T>,
    warm: bool,
) -> SolveOutcome<T> {
    let n = ops.n();
    let mut u = u0;
    ops.normalize(&mut u);
    let mut iterations = 0usize;

    // Phase 1: projected gradient descent on the constraint sphere. A warm
    // start close to the Euler-Lagrange solution skips straight to Newton.
    let warm_resid = {
        let mu = ops.wbar(&u);
        ops.el_residual_u(&u, mu).amax()
    };
    if !(warm && warm_resid < T::of(1e-4)) {
        let mut step = T::of(0.1);
        for _ in 0..cfg.max_descent {
            iterations += 1;
            let w0 = ops.wbar(&u);
            let ku = &ops.stiffness * &u;
            let grad = DVector::from_fn(n, |i, _| {
                T::of(4.0) * ku[i] / ops.m[i] + ops.r[i] * u[i]
                    - T::of(4.0) * u[i] * u[i].ln()
                    - T::of(2.0) * u[i]
            });
            let mut radial = T::zero();
            for i in 0..n {
                radial += ops.m[i] * grad[i] * u[i];
            }
            let pg = DVector::from_fn(n, |i, _| grad[i] - radial * u[i]);
            let mut pgn2 = T::zero();
            for i in 0..n {
                pgn2 += ops.m[i] * pg[i] * pg[i];
            }
            if pgn2.sqrt() < cfg.descent_tol {
                break;
            }
            let mut accepted = false;
            while step > T::of(1e-14) {
                let mut trial = DVector::from_fn(n, |i, _| u[i] - step * pg[i]);
                if trial.iter().all(|v| *v > T::zero()) {
                    ops.normalize(&mut trial);
                    if ops.wbar(&trial) < w0 - T::of(1e-4) * step * pgn2 {
                        u = trial;
                        accepted = true;
                        break;
                    }
                }
                step *= T::of(0.5);
            }
            if !accepted {
                break;
            }
            step = (step * T::of(1.5)).min(T::one());
        }
    }

    // Phase 2: Newton polish on the bordered system in (u, mu).
    let mut mu = ops.wbar(&u);
    let mut resid = ops.el_residual_u(&u, mu).amax();
    for _ in 0..cfg.max_newton {
        if resid < T::of(1e-12) {
            break;
        }
        iterations += 1;
        let mut bordered = DMatrix::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                bordered[(i, j)] = T::of(4.0) * ops.stiffness[(i, j)];
            }
            bordered[(i, i)] += ops.m[i]
                * (ops.r[i] - T::of(4.0) * u[i].ln() - T::of(4.0) - T::of(2.0) * mu);
            bordered[(i, n)] = -T::of(2.0) * ops.m[i] * u[i];
            bordered[(n, i)] = T::of(2.0) * ops.m[i] * u[i];
        }
        let r_u = ops.el_residual_u(&u, mu);
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            rhs[i] = -ops.m[i] * r_u[i];
        }
        let mut c = T::zero();
        for i in 0..n {
            c += ops.m[i] * u[i] * u[i];
        }
        rhs[n] = T::one() - c;
        let Some(delta) = bordered.lu().solve(&rhs) else {
            break;
        };
        let mut t = T::one();
        loop {
            let ok = (0..n).all(|i| u[i] + t * delta[i] > T::zero());
            if ok {
                break;
            }
            t *= T::of(0.5);
            if t < T::of(1e-12) {
                break;
            }
        }
        let u_new = DVector::from_fn(n, |i, _| u[i] + t * delta[i]);
        let mu_new = mu + t * delta[n];
        let resid_new = ops.el_residual_u(&u_new, mu_new).amax();
        if !resid_new.is_finite_scalar() || resid_new > resid * T::of(10.0) {
            break;
        }
        u = u_new;
        mu = mu_new;
        resid = resid_new;
    }

    mu = ops.wbar(&u);
    let el_residual = ops.el_residual_f(&u, mu);
    let converged =
        el_residual <= cfg.el_tol && ops.constraint_defect(&u) <= cfg.constraint_tol;
    SolveOutcome {
        u,
        mu,
        el_residual,
        iterations,
        converged,
    }
}

fn result_from<T: Real>(
    metric: &Metric<T>,
    out: &SolveOutcome<T>,
    spread: T,
) -> EntropyResult<T> {
    let f = ScalarField::new(
        metric.grid().clone(),
        out.u.map(|v| -T::of(2.0) * v.ln()),
    )
    .expect("finite minimizer");
    EntropyResult {
        mu: out.mu,
        minimizer_f: f,
        el_residual: out.el_residual,
        iterations: out.iterations,
        multistart_spread: spread,
    }
}

/// Minimizes W(g, .) over the normalized constraint set.
///
/// The default initialization f = log area(g) is exact at Einstein metrics;
/// `warm_start` short-circuits the descent phase when a nearby minimizer is
/// already known (e.g. along a flow).
pub fn minimize_w<T: Real>(
    metric: &Metric<T>,
    cfg: &EntropyConfig<T>,
) -> std::result::Result<EntropyResult<T>, SolveFailure<T>> {
    minimize_w_warm(metric, cfg, None)
}

pub fn minimize_w_warm<T: Real>(
    metric: &Metric<T>,
    cfg: &EntropyConfig<T>,
    warm_start: Option<&ScalarField<T>>,
) -> std::result::Result<EntropyResult<T>, SolveFailure<T>> {
    let ops = EntropyOps::new(metric).map_err(|e| SolveFailure {
        reason: e.to_string(),
        best: None,
    })?;
    let n = ops.n();
    let (u0, warm) = match warm_start {
        Some(f) => (
            DVector::from_fn(n, |i, _| (-T::of(0.5) * f.values()[i]).exp()),
            true,
        ),
        None => {
            let area = ops.area();
            (DVector::from_element(n, T::one() / area.sqrt()), false)
        }
    };
    let main = solve_from(&ops, u0, cfg, warm);

    let mut best = main;
    let mut spread = T::zero();
    if cfg.multistart > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut minimizers: Vec<DVector<T>> = vec![best.u.map(|v| -T::of(2.0) * v.ln())];
        let area = ops.area();
        let f0 = area.ln();
        for _ in 0..cfg.multistart {
            let coeffs: Vec<T> = (1..=6)
                .map(|k| T::of(rng.random_range(-0.3..0.3) / k as f64))
                .collect();
            let u_init = DVector::from_fn(n, |i, _| {
                let x = ops.chart.grid.nodes()[i];
                let mut f = f0;
                for (k, ck) in coeffs.iter().enumerate() {
                    f += *ck * crate::grid::legendre_scalar(k + 1, x);
                }
                (-T::of(0.5) * f).exp()
            });
            let out = solve_from(&ops, u_init, cfg, false);
            if !out.converged {
                return Err(SolveFailure {
                    reason: format!(
                        "multistart run failed to converge (residual {:e})",
                        out.el_residual
                    ),
                    best: Some(result_from(metric, &best, spread)),
                });
            }
            minimizers.push(out.u.map(|v| -T::of(2.0) * v.ln()));
            if out.mu < best.mu {
                best = out;
            }
        }
        for i in 0..minimizers.len() {
            for j in (i + 1)..minimizers.len() {
                let d = minimizers[i]
                    .iter()
                    .zip(minimizers[j].iter())
                    .fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs()));
                spread = spread.max(d);
            }
        }
    }

    if !best.converged {
        return Err(SolveFailure {
            reason: format!(
                "no convergence within iteration budget (EL residual {:e}, tol {:e})",
                best.el_residual, cfg.el_tol
            ),
            best: Some(result_from(metric, &best, spread)),
        });
    }
    Ok(result_from(metric, &best, spread))
}

/// Perelman's entropy mu(g).
pub fn mu<T: Real>(
    metric: &Metric<T>,
    cfg: &EntropyConfig<T>,
) -> std::result::Result<T, SolveFailure<T>> {
    minimize_w(metric, cfg).map(|r| r.mu)
}

/// First variation of W at (g, f) along the metric direction h and the
/// function direction v:
///   delta W = int [ -(1/2) <Ric + Hess f - S g, h> - (S - 1) v ] e^{-f} dVol
/// with S = Lap f - |grad f|^2 / 2 + f + R/2.
pub fn w_first_variation<T: Real>(
    metric: &Metric<T>,
    f: &ScalarField<T>,
    h: &SymTensor2<T>,
    v: &ScalarField<T>,
) -> Result<T> {
    let chart = Chart::new(metric);
    let m = chart.vol_weights();
    let mut mass = T::zero();
    for i in 0..chart.n() {
        mass += m[i] * (-f.values()[i]).exp();
    }
    if (mass - T::one()).abs() > T::of(CONSTRAINT_TOL) {
        return Err(Error::Contract(
            "f violates the normalization int e^-f dVol = 1".into(),
        ));
    }
    let r = geometry::scalar_curvature(metric)?.into_values();
    let k = r.map(|ri| T::of(0.5) * ri);
    let (hess_th, hess_eta) = chart.hessian(f.values());
    let lap = chart.laplacian(f.values());
    let gsq = chart.grad_norm_sq(f.values());
    let eta_h = h.psipsi_ratio();
    let mut total = T::zero();
    for i in 0..chart.n() {
        let s = lap[i] - T::of(0.5) * gsq[i] + f.values()[i] + T::of(0.5) * r[i];
        // tensor T = Ric + Hess f - S g in chart components
        let t_th = k[i] * chart.a[i] + hess_th[i] - s * chart.a[i];
        let t_eta = k[i] * chart.c[i] + hess_eta[i] - s * chart.c[i];
        let inner = t_th * h.thth()[i] / (chart.a[i] * chart.a[i])
            + t_eta * eta_h[i] / (chart.c[i] * chart.c[i]);
        let w = (-f.values()[i]).exp();
        total += m[i] * w * (-T::of(0.5) * inner - (s - T::one()) * v.values()[i]);
    }
    Ok(total)
}

/// Entropy gradient -(Ric + Hess f - g) at a precomputed minimizer.
pub fn mu_gradient_from<T: Real>(
    metric: &Metric<T>,
    minimizer: &EntropyResult<T>,
) -> Result<SymTensor2<T>> {
    let chart = Chart::new(metric);
    let k = match metric {
        Metric::Conformal(_) => geometry::scalar_curvature(metric)?
            .into_values()
            .map(|r| T::of(0.5) * r),
        Metric::Warped(_) => chart.gauss_curvature(),
    };
    let (hess_th, hess_eta) = chart.hessian(minimizer.minimizer_f.values());
    let x = metric.grid().nodes();
    let thth = DVector::from_fn(chart.n(), |i, _| {
        -(k[i] * chart.a[i] + hess_th[i] - chart.a[i])
    });
    let psipsi = DVector::from_fn(chart.n(), |i, _| {
        -(T::one() - x[i] * x[i]) * (k[i] * chart.c[i] + hess_eta[i] - chart.c[i])
    });
    SymTensor2::new(metric.grid().clone(), thth, psipsi)
}

pub fn mu_gradient<T: Real>(
    metric: &Metric<T>,
    cfg: &EntropyConfig<T>,
) -> std::result::Result<SymTensor2<T>, SolveFailure<T>> {
    let res = minimize_w(metric, cfg)?;
    mu_gradient_from(metric, &res).map_err(|e| SolveFailure {
        reason: e.to_string(),
        best: Some(res),
    })
}

/// Norm of the entropy gradient in the weighted metric on metric space.
pub fn mu_gradient_norm_from<T: Real>(
    metric: &Metric<T>,
    minimizer: &EntropyResult<T>,
) -> Result<T> {
    let grad = mu_gradient_from(metric, minimizer)?;
    geometry::tensor_norm_weighted(metric, &minimizer.minimizer_f, &grad)
}

pub fn mu_gradient_norm<T: Real>(
    metric: &Metric<T>,
    cfg: &EntropyConfig<T>,
) -> std::result::Result<T, SolveFailure<T>> {
    let res = minimize_w(metric, cfg)?;
    mu_gradient_norm_from(metric, &res).map_err(|e| SolveFailure {
        reason: e.to_string(),
        best: Some(res),
    })
}

/// Spectrum of the weighted Laplacian -Lap^f = -Lap + grad f . grad on
/// circle-invariant functions.
#[derive(Clone, Debug)]
pub struct SpectrumResult<T: Real> {
    /// Ascending eigenvalues; the first is 0 with constant eigenfunction.
    pub eigenvalues: Vec<T>,
    /// Eigenfunctions orthonormal in the e^{-f} dVol inner product.
    pub eigenfunctions: Vec<ScalarField<T>>,
}

pub fn weighted_laplacian_spectrum<T: Real>(
    metric: &Metric<T>,
    f: &ScalarField<T>,
    count: usize,
) -> Result<SpectrumResult<T>> {
    let n = metric.grid().n();
    if count > n {
        return Err(Error::Config(format!(
            "requested {count} eigenvalues from a grid of {n} nodes"
        )));
    }
    let chart = Chart::new(metric);
    let weight = f.values().map(|v| (-v).exp());
    // K_f v = lambda M_f v with M_f the weighted mass; both sides are
    // symmetric against the e^{-f} dVol quadrature.
    let k_f = chart.stiffness_matrix(Some(&weight));
    let m = chart.vol_weights();
    let m_f = DVector::from_fn(n, |i, _| m[i] * weight[i]);
    let inv_sqrt = m_f.map(|v| T::one() / v.sqrt());
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = inv_sqrt[i] * k_f[(i, j)] * inv_sqrt[j];
        }
    }
    // enforce exact symmetry before the eigensolve
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = T::of(0.5) * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = avg;
            s[(j, i)] = avg;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .expect("finite eigenvalues")
    });
    let mut eigenvalues = Vec::with_capacity(count);
    let mut eigenfunctions = Vec::with_capacity(count);
    for &idx in order.iter().take(count) {
        eigenvalues.push(eig.eigenvalues[idx]);
        let col = eig.eigenvectors.column(idx);
        let mut func = DVector::from_fn(n, |i, _| col[i] * inv_sqrt[i]);
        // deterministic sign: largest-magnitude entry positive
        let mut dominant = T::zero();
        let mut sign = T::one();
        for i in 0..n {
            if func[i].abs() > dominant {
                dominant = func[i].abs();
                sign = if func[i] < T::zero() { -T::one() } else { T::one() };
            }
        }
        func *= sign;
        eigenfunctions.push(ScalarField::new(metric.grid().clone(), func)?);
    }
    Ok(SpectrumResult {
        eigenvalues,
        eigenfunctions,
    })
}

/// Second-order central differences of mu along a list of area-neutral
/// directions at a critical point, Richardson-extrapolated in the step.
/// Returns the symmetric Hessian matrix restricted to the span.
pub fn mu_hessian_probe<T: Real>(
    base: &Metric<T>,
    directions: &[SymTensor2<T>],
    cfg: &EntropyConfig<T>,
    eps: T,
) -> Result<DMatrix<T>> {
    let base_res = minimize_w(base, cfg).map_err(Error::from)?;
    let grad_norm = mu_gradient_norm_from(base, &base_res)?;
    if grad_norm >= T::of(CRITICAL_TOL) {
        return Err(Error::Contract(format!(
            "Hessian probe requires a critical point; |grad mu| = {grad_norm:e}"
        )));
    }
    let warped = match base {
        Metric::Conformal(m) => m.to_warped(),
        Metric::Warped(m) => m.clone(),
    };
    // area-neutrality of each direction to first order
    let chart = Chart::new(base);
    let m = chart.vol_weights();
    for (idx, h) in directions.iter().enumerate() {
        let eta = h.psipsi_ratio();
        let mut darea = T::zero();
        for i in 0..chart.n() {
            let tr = h.thth()[i] / chart.a[i] + eta[i] / chart.c[i];
            darea += m[i] * T::of(0.5) * tr;
        }
        let scale = h.sup_norm().max(T::of(1e-30)) * chart.area();
        if darea.abs() > T::of(1e-8) * scale {
            return Err(Error::Contract(format!(
                "direction {idx} changes area at first order (dA = {darea:e})"
            )));
        }
    }

    let warm = base_res.minimizer_f.clone();
    let mu_at = |coef: &[(usize, T)], step: T| -> std::result::Result<T, SolveFailure<T>> {
        let mut a = warped.a_sq().values().clone();
        let mut b = warped.b_sq().values().clone();
        for &(idx, c) in coef {
            let h = &directions[idx];
            for i in 0..a.len() {
                a[i] += step * c * h.thth()[i];
                b[i] += step * c * h.psipsi()[i];
            }
        }
        let grid = warped.grid().clone();
        let metric = WarpedMetric::new(
            ScalarField::new(grid.clone(), a).map_err(|e| SolveFailure {
                reason: e.to_string(),
                best: None,
            })?,
            ScalarField::new(grid, b).map_err(|e| SolveFailure {
                reason: e.to_string(),
                best: None,
            })?,
        )
        .map_err(|e| SolveFailure {
            reason: e.to_string(),
            best: None,
        })?;
        let (projected, _) = metric.area_projected();
        let res = minimize_w_warm(&Metric::Warped(projected), cfg, Some(&warm))?;
        Ok(res.mu)
    };

    let k = directions.len();
    let hessian_at = |step: T| -> std::result::Result<DMatrix<T>, SolveFailure<T>> {
        let mu0 = base_res.mu;
        let mut h = DMatrix::zeros(k, k);
        for a in 0..k {
            let plus = mu_at(&[(a, T::one())], step)?;
            let minus = mu_at(&[(a, -T::one())], step)?;
            h[(a, a)] = (plus - T::of(2.0) * mu0 + minus) / (step * step);
            for b in (a + 1)..k {
                let pp = mu_at(&[(a, T::one()), (b, T::one())], step)?;
                let pm = mu_at(&[(a, T::one()), (b, -T::one())], step)?;
                let mp = mu_at(&[(a, -T::one()), (b, T::one())], step)?;
                let mm = mu_at(&[(a, -T::one()), (b, -T::one())], step)?;
                let v = (pp - pm - mp + mm) / (T::of(4.0) * step * step);
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
        Ok(h)
    };

    let coarse = hessian_at(eps).map_err(Error::from)?;
    let fine = hessian_at(eps * T::of(0.5)).map_err(Error::from)?;
    // Richardson extrapolation removes the O(eps^2) truncation term.
    let mut out = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            out[(i, j)] = (T::of(4.0) * fine[(i, j)] - coarse[(i, j)]) / T::of(3.0);
        }
    }
    Ok(out)
}

/// Conformal probe direction 2 P_k g, the tangent of phi -> phi + eps P_k.
pub fn conformal_mode_direction<T: Real>(metric: &Metric<T>, k: usize) -> Result<SymTensor2<T>> {
    let (a, b) = metric.components();
    let grid = metric.grid().clone();
    let pk = grid.legendre(k);
    let thth = DVector::from_fn(grid.n(), |i, _| T::of(2.0) * pk[i] * a.values()[i]);
    let psipsi = DVector::from_fn(grid.n(), |i, _| T::of(2.0) * pk[i] * b.values()[i]);
    SymTensor2::new(grid, thth, psipsi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::metric::ConformalMetric;
    use crate::mu_round;

    fn round(n: usize) -> Metric<f64> {
        Metric::round(&Grid::new(n).unwrap())
    }

    fn log_4pi() -> f64 {
        (4.0 * std::f64::consts::PI).ln()
    }

    #[test]
    fn w_at_round_constant_minimizer() {
        let m = round(64);
        let f = ScalarField::constant(m.grid(), log_4pi());
        let w = w_functional(&m, &f).unwrap();
        assert!((w - mu_round::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn w_rejects_unnormalized_input() {
        let m = round(32);
        let f = ScalarField::constant(m.grid(), 0.0);
        assert!(matches!(w_functional(&m, &f), Err(Error::Contract(_))));
    }

    #[test]
    fn wbar_constant_matches_round_entropy() {
        let m = round(48);
        let u = ScalarField::constant(m.grid(), 1.0 / (4.0 * std::f64::consts::PI).sqrt());
        let w = wbar_functional(&m, &u).unwrap();
        assert!((w - mu_round::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn wbar_rejects_nonpositive_u() {
        let m = round(32);
        let u = ScalarField::constant(m.grid(), -0.2);
        assert!(matches!(wbar_functional(&m, &u), Err(Error::Domain(_))));
    }

    #[test]
    fn substitution_identity_w_equals_wbar() {
        let g = Grid::<f64>::new(48).unwrap();
        let phi = ScalarField::legendre(&g, 2).scale(0.1);
        let m: Metric<f64> = ConformalMetric::new(phi).into();
        let ops = EntropyOps::new(&m).unwrap();
        // admissible u proportional to exp of a smooth series
        let mut u = DVector::from_fn(g.n(), |i, _| {
            let x = g.nodes()[i];
            (0.3 * x - 0.1 * x * x).exp()
        });
        ops.normalize(&mut u);
        let uf = ScalarField::new(g.clone(), u.clone()).unwrap();
        let f = ScalarField::new(g, u.map(|v| -2.0 * v.ln())).unwrap();
        let wb = wbar_functional(&m, &uf).unwrap();
        let w = w_functional(&m, &f).unwrap();
        assert!((wb - w).abs() < 1e-10, "defect {}", wb - w);
    }

    #[test]
    fn round_minimizer_is_constant_log_area() {
        let m = round(64);
        let res = minimize_w(&m, &EntropyConfig::default()).unwrap();
        assert!((res.mu - mu_round::<f64>()).abs() < 1e-9);
        let defect = res
            .minimizer_f
            .values()
            .iter()
            .map(|v| (v - log_4pi()).abs())
            .fold(0.0f64, f64::max);
        assert!(defect < 1e-8, "minimizer defect {defect}");
        assert!(res.el_residual < 1e-10);
        // normalization of the returned minimizer
        let mass = geometry::integrate(&m, &res.minimizer_f.map(|v| (-v).exp())).unwrap();
        assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rescaled_round_projects_back_to_round() {
        let g = Grid::<f64>::new(48).unwrap();
        let scaled = ConformalMetric::new(ScalarField::constant(&g, 0.4));
        let (projected, _) = scaled.area_projected();
        let res = minimize_w(&Metric::Conformal(projected), &EntropyConfig::default()).unwrap();
        assert!((res.mu - mu_round::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn perturbed_metric_has_smaller_entropy() {
        let g = Grid::<f64>::new(64).unwrap();
        let phi = ScalarField::legendre(&g, 2).scale(0.1);
        let (m, _) = ConformalMetric::new(phi).area_projected();
        let res = minimize_w(&Metric::Conformal(m), &EntropyConfig::default()).unwrap();
        let gap = mu_round::<f64>() - res.mu;
        assert!(gap > 1e-4, "gap {gap}");
        // frozen from an independent run of the same optimization problem at
        // doubled resolution
        assert!((gap - 3.1195e-3).abs() < 1e-6, "gap {gap}");
    }

    #[test]
    fn entropy_gradient_vanishes_at_round() {
        let m = round(48);
        let cfg = EntropyConfig::default();
        let res = minimize_w(&m, &cfg).unwrap();
        let grad = mu_gradient_from(&m, &res).unwrap();
        assert!(grad.sup_norm() < 1e-8);
        let norm = mu_gradient_norm_from(&m, &res).unwrap();
        assert!(norm < 1e-8);
        // the zero tensor is trivially weighted-divergence-free
        let resid =
            geometry::weighted_divergence_free_check(&m, &res.minimizer_f, &grad).unwrap();
        assert!(resid < 1e-8);
    }

    #[test]
    fn spectrum_of_round_laplacian_is_k_k_plus_one() {
        let m = round(64);
        let f = ScalarField::constant(m.grid(), log_4pi());
        let spec = weighted_laplacian_spectrum(&m, &f, 6).unwrap();
        for (k, lam) in spec.eigenvalues.iter().enumerate() {
            let expect = (k * (k + 1)) as f64;
            assert!((lam - expect).abs() < 1e-7, "k={k} lambda={lam}");
        }
        // zero mode is constant
        let ef0 = &spec.eigenfunctions[0];
        let dev = ef0.values().iter().map(|v| (v - ef0.values()[0]).abs()).fold(0.0f64, f64::max);
        assert!(dev < 1e-8 * ef0.sup_norm());
        // orthonormality in the weighted inner product
        let chart = Chart::new(&m);
        let mw = chart.vol_weights();
        for i in 0..6 {
            for j in i..6 {
                let mut dot = 0.0;
                for l in 0..m.grid().n() {
                    dot += mw[l]
                        * (-f.values()[l]).exp()
                        * spec.eigenfunctions[i].values()[l]
                        * spec.eigenfunctions[j].values()[l];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-8, "({i},{j}) dot {dot}");
            }
        }
    }

    #[test]
    fn spectrum_rejects_oversized_requests() {
        let m = round(16);
        let f = ScalarField::constant(m.grid(), log_4pi());
        assert!(matches!(
            weighted_laplacian_spectrum(&m, &f, 17),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn hessian_probe_demands_critical_point() {
        let g = Grid::<f64>::new(48).unwrap();
        let phi = ScalarField::legendre(&g, 2).scale(0.1);
        let (m, _) = ConformalMetric::new(phi).area_projected();
        let m: Metric<f64> = m.into();
        let dir = conformal_mode_direction(&m, 2).unwrap();
        let out = mu_hessian_probe(&m, &[dir], &EntropyConfig::default(), 0.02);
        assert!(matches!(out, Err(Error::Contract(_))));
    }

    #[test]
    fn multistart_agrees_near_round() {
        let g = Grid::<f64>::new(48).unwrap();
        let phi = ScalarField::legendre(&g, 2).scale(0.15);
        let (m, _) = ConformalMetric::new(phi).area_projected();
        let cfg = EntropyConfig {
            multistart: 4,
            seed: 3,
            ..EntropyConfig::default()
        };
        let res = minimize_w(&Metric::Conformal(m), &cfg).unwrap();
        assert!(res.multistart_spread < 1e-7, "spread {}", res.multistart_spread);
    }
}
