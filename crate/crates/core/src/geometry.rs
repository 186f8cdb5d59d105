//! Differential operators for circle-invariant metrics: curvature, Laplacian,
//! gradient, Hessian, integration and tensor algebra.
//!
//! Everything is expressed through the chart profiles A = g_thth and
//! C = g_psipsi / (1-x^2), which are smooth positive functions of x even at
//! the poles, so no formula below ever divides by sin(theta).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::{ScalarField, SymTensor2, VectorProfile};
use crate::grid::Grid;
use crate::metric::Metric;
use crate::real::Real;

/// Precomputed chart data for one metric.
pub(crate) struct Chart<T: Real> {
    pub grid: Grid<T>,
    /// g_thth.
    pub a: DVector<T>,
    /// g_psipsi / (1 - x^2).
    pub c: DVector<T>,
    pub a_prime: DVector<T>,
    pub c_prime: DVector<T>,
    /// Volume density against the round area element: sqrt(A C).
    pub vol_density: DVector<T>,
}

impl<T: Real> Chart<T> {
    pub fn new(metric: &Metric<T>) -> Self {
        let grid = metric.grid().clone();
        let (a, c) = match metric {
            Metric::Conformal(m) => {
                let e2phi = m.phi().values().map(|p| (T::of(2.0) * p).exp());
                (e2phi.clone(), e2phi)
            }
            Metric::Warped(m) => (m.a_sq().values().clone(), m.c_ratio()),
        };
        Chart::from_profiles(grid, a, c)
    }

    pub fn from_profiles(grid: Grid<T>, a: DVector<T>, c: DVector<T>) -> Self {
        let a_prime = grid.diff(&a);
        let c_prime = grid.diff(&c);
        let vol_density = a.zip_map(&c, |ai, ci| (ai * ci).sqrt());
        Chart {
            grid,
            a,
            c,
            a_prime,
            c_prime,
            vol_density,
        }
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// Quadrature weights against dVol_g.
    pub fn vol_weights(&self) -> DVector<T> {
        let qw = self.grid.quadrature_weights();
        DVector::from_fn(self.n(), |i, _| qw[i] * self.vol_density[i])
    }

    pub fn area(&self) -> T {
        self.vol_weights().sum()
    }

    /// Gauss curvature from the regular rational formula in (A, C).
    pub fn gauss_curvature(&self) -> DVector<T> {
        let cpp = self.grid.diff(&self.c_prime);
        let x = self.grid.nodes();
        DVector::from_fn(self.n(), |i, _| {
            let (a, c, ap, cp) = (self.a[i], self.c[i], self.a_prime[i], self.c_prime[i]);
            let s2 = T::one() - x[i] * x[i];
            let num = T::of(4.0) * a * c * c - T::of(2.0) * s2 * a * c * cpp[i]
                + s2 * (a * cp * cp + c * ap * cp)
                + T::of(6.0) * x[i] * a * c * cp
                - T::of(2.0) * x[i] * c * c * ap;
            num / (T::of(4.0) * a * a * c * c)
        })
    }

    /// Covariant Hessian of f: the theta-theta component and the regular
    /// psi-psi ratio (Hess f)_psipsi / (1 - x^2).
    pub fn hessian(&self, f: &DVector<T>) -> (DVector<T>, DVector<T>) {
        let fp = self.grid.diff(f);
        let fpp = self.grid.diff(&fp);
        let x = self.grid.nodes();
        let mut hth = DVector::zeros(self.n());
        let mut eta = DVector::zeros(self.n());
        for i in 0..self.n() {
            let s2 = T::one() - x[i] * x[i];
            hth[i] = s2 * fpp[i]
                - x[i] * fp[i]
                - s2 * self.a_prime[i] * fp[i] / (T::of(2.0) * self.a[i]);
            eta[i] = (-T::of(2.0) * x[i] * self.c[i] + s2 * self.c_prime[i]) * fp[i]
                / (T::of(2.0) * self.a[i]);
        }
        (hth, eta)
    }

    /// Laplace-Beltrami operator as the trace of the Hessian.
    pub fn laplacian(&self, f: &DVector<T>) -> DVector<T> {
        let (hth, eta) = self.hessian(f);
        DVector::from_fn(self.n(), |i, _| hth[i] / self.a[i] + eta[i] / self.c[i])
    }

    /// |grad f|^2 = (1 - x^2) f'(x)^2 / A.
    pub fn grad_norm_sq(&self, f: &DVector<T>) -> DVector<T> {
        let fp = self.grid.diff(f);
        let x = self.grid.nodes();
        DVector::from_fn(self.n(), |i, _| {
            (T::one() - x[i] * x[i]) * fp[i] * fp[i] / self.a[i]
        })
    }

    /// Weighted stiffness matrix K = D^T diag(m (1-x^2) w / A) D, the discrete
    /// Dirichlet form of the weight-w volume element. With w = 1 this is the
    /// quadratic form of -Laplace, self-adjoint against the dVol quadrature.
    pub fn stiffness_matrix(&self, weight: Option<&DVector<T>>) -> DMatrix<T> {
        let m = self.vol_weights();
        let x = self.grid.nodes();
        let coeff = DVector::from_fn(self.n(), |i, _| {
            let s2 = T::one() - x[i] * x[i];
            let w = weight.map_or(T::one(), |w| w[i]);
            m[i] * s2 * w / self.a[i]
        });
        let d = self.grid.diff_matrix();
        let n = self.n();
        let mut cd = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                cd[(i, j)] = coeff[i] * d[(i, j)];
            }
        }
        d.transpose() * cd
    }

    /// Smooth profile q of the 1-form (nabla^{*f} h) = sin(theta) q dtheta,
    /// the adjoint of the symmetrized covariant derivative against the
    /// e^{-f} dVol pairing.
    pub fn weighted_divergence_profile(
        &self,
        f: &DVector<T>,
        hth: &DVector<T>,
        eta: &DVector<T>,
    ) -> DVector<T> {
        let hthp = self.grid.diff(hth);
        let fp = self.grid.diff(f);
        let x = self.grid.nodes();
        DVector::from_fn(self.n(), |i, _| {
            let s2 = T::one() - x[i] * x[i];
            let delta = hth[i] / self.a[i] - eta[i] / self.c[i];
            let q_div = -hthp[i] / self.a[i]
                + self.a_prime[i] * hth[i] / (self.a[i] * self.a[i])
                + (x[i] / s2 - self.c_prime[i] / (T::of(2.0) * self.c[i])) * delta;
            -q_div - hth[i] * fp[i] / self.a[i]
        })
    }

    /// Components of the symmetrized covariant derivative of the 1-form
    /// xi = sin(theta) p dtheta: returns ((grad^s xi)_thth, psi-psi ratio).
    pub fn symmetrized_derivative(&self, p: &DVector<T>) -> (DVector<T>, DVector<T>) {
        let pp = self.grid.diff(p);
        let x = self.grid.nodes();
        let mut thth = DVector::zeros(self.n());
        let mut eta = DVector::zeros(self.n());
        for i in 0..self.n() {
            let s2 = T::one() - x[i] * x[i];
            thth[i] = x[i] * p[i] - s2 * pp[i]
                + s2 * self.a_prime[i] * p[i] / (T::of(2.0) * self.a[i]);
            eta[i] = (T::of(2.0) * x[i] * self.c[i] - s2 * self.c_prime[i]) * p[i]
                / (T::of(2.0) * self.a[i]);
        }
        (thth, eta)
    }
}

fn check_field_grid<T: Real>(metric: &Metric<T>, f: &ScalarField<T>) -> Result<()> {
    if !metric.grid().same_grid(f.grid()) {
        return Err(Error::Usage("field and metric live on different grids".into()));
    }
    Ok(())
}

fn check_tensor_grid<T: Real>(metric: &Metric<T>, h: &SymTensor2<T>) -> Result<()> {
    if !metric.grid().same_grid(h.grid()) {
        return Err(Error::Usage("tensor and metric live on different grids".into()));
    }
    Ok(())
}

/// Scalar curvature R(g). The conformal representation uses the exact
/// conformal transformation law; the warped one goes through the chart
/// curvature formula.
pub fn scalar_curvature<T: Real>(metric: &Metric<T>) -> Result<ScalarField<T>> {
    let grid = metric.grid().clone();
    let values = match metric {
        Metric::Conformal(m) => {
            let lap_phi = grid.lap_round_matrix() * m.phi().values();
            DVector::from_fn(grid.n(), |i, _| {
                (-T::of(2.0) * m.phi().values()[i]).exp() * (T::of(2.0) - T::of(2.0) * lap_phi[i])
            })
        }
        Metric::Warped(_) => {
            let chart = Chart::new(metric);
            chart.gauss_curvature().map(|k| T::of(2.0) * k)
        }
    };
    ScalarField::new(grid, values)
}

/// Ricci tensor; on a surface Ric = (R/2) g componentwise.
pub fn ricci<T: Real>(metric: &Metric<T>) -> Result<SymTensor2<T>> {
    let chart = Chart::new(metric);
    let k = match metric {
        // Reuse the conformal fast path so Ric and R agree to roundoff.
        Metric::Conformal(_) => scalar_curvature(metric)?
            .into_values()
            .map(|r| r * T::of(0.5)),
        Metric::Warped(_) => chart.gauss_curvature(),
    };
    let x = metric.grid().nodes();
    let thth = DVector::from_fn(chart.n(), |i, _| k[i] * chart.a[i]);
    let psipsi = DVector::from_fn(chart.n(), |i, _| {
        k[i] * chart.c[i] * (T::one() - x[i] * x[i])
    });
    SymTensor2::new(metric.grid().clone(), thth, psipsi)
}

/// Laplace-Beltrami operator applied to f.
pub fn laplacian<T: Real>(metric: &Metric<T>, f: &ScalarField<T>) -> Result<ScalarField<T>> {
    check_field_grid(metric, f)?;
    let chart = Chart::new(metric);
    ScalarField::new(metric.grid().clone(), chart.laplacian(f.values()))
}

/// Gradient vector field of f.
pub fn gradient<T: Real>(metric: &Metric<T>, f: &ScalarField<T>) -> Result<VectorProfile<T>> {
    check_field_grid(metric, f)?;
    let chart = Chart::new(metric);
    let fp = metric.grid().diff(f.values());
    let x = metric.grid().nodes();
    let v = DVector::from_fn(chart.n(), |i, _| {
        -(T::one() - x[i] * x[i]).sqrt() * fp[i] / chart.a[i]
    });
    VectorProfile::new(metric.grid().clone(), v)
}

/// |grad f|^2 as a field.
pub fn grad_norm_sq<T: Real>(metric: &Metric<T>, f: &ScalarField<T>) -> Result<ScalarField<T>> {
    check_field_grid(metric, f)?;
    let chart = Chart::new(metric);
    ScalarField::new(metric.grid().clone(), chart.grad_norm_sq(f.values()))
}

/// Covariant Hessian of f as a symmetric 2-tensor.
pub fn hessian<T: Real>(metric: &Metric<T>, f: &ScalarField<T>) -> Result<SymTensor2<T>> {
    check_field_grid(metric, f)?;
    let chart = Chart::new(metric);
    let (hth, eta) = chart.hessian(f.values());
    let x = metric.grid().nodes();
    let psipsi = DVector::from_fn(chart.n(), |i, _| (T::one() - x[i] * x[i]) * eta[i]);
    SymTensor2::new(metric.grid().clone(), hth, psipsi)
}

/// Integral of a scalar field against dVol_g.
pub fn integrate<T: Real>(metric: &Metric<T>, f: &ScalarField<T>) -> Result<T> {
    check_field_grid(metric, f)?;
    let chart = Chart::new(metric);
    Ok(chart.vol_weights().dot(f.values()))
}

/// Total area of the metric.
pub fn area<T: Real>(metric: &Metric<T>) -> T {
    metric.area()
}

/// Pointwise tensor inner product <h1, h2>_g.
pub fn tensor_inner<T: Real>(
    metric: &Metric<T>,
    h1: &SymTensor2<T>,
    h2: &SymTensor2<T>,
) -> Result<ScalarField<T>> {
    check_tensor_grid(metric, h1)?;
    check_tensor_grid(metric, h2)?;
    let chart = Chart::new(metric);
    let (e1, e2) = (h1.psipsi_ratio(), h2.psipsi_ratio());
    let values = DVector::from_fn(chart.n(), |i, _| {
        h1.thth()[i] * h2.thth()[i] / (chart.a[i] * chart.a[i])
            + e1[i] * e2[i] / (chart.c[i] * chart.c[i])
    });
    ScalarField::new(metric.grid().clone(), values)
}

/// Norm sqrt( (1/2) int <h, h>_g e^{-f} dVol ), the length of h in the
/// weighted metric on the space of metrics.
pub fn tensor_norm_weighted<T: Real>(
    metric: &Metric<T>,
    f: &ScalarField<T>,
    h: &SymTensor2<T>,
) -> Result<T> {
    check_field_grid(metric, f)?;
    let inner = tensor_inner(metric, h, h)?;
    let chart = Chart::new(metric);
    let m = chart.vol_weights();
    let mut total = T::zero();
    for i in 0..chart.n() {
        total += m[i] * inner.values()[i] * (-f.values()[i]).exp();
    }
    Ok((T::of(0.5) * total).sqrt())
}

/// Weighted L^2 norm of nabla^{*f} h, the divergence of h against the
/// e^{-f} dVol measure; zero exactly on weighted-divergence-free tensors.
pub fn weighted_divergence_free_check<T: Real>(
    metric: &Metric<T>,
    f: &ScalarField<T>,
    h: &SymTensor2<T>,
) -> Result<T> {
    check_field_grid(metric, f)?;
    check_tensor_grid(metric, h)?;
    let chart = Chart::new(metric);
    let q = chart.weighted_divergence_profile(f.values(), h.thth(), &h.psipsi_ratio());
    let m = chart.vol_weights();
    let x = metric.grid().nodes();
    let mut total = T::zero();
    for i in 0..chart.n() {
        let s2 = T::one() - x[i] * x[i];
        total += m[i] * s2 * q[i] * q[i] * (-f.values()[i]).exp() / chart.a[i];
    }
    Ok(total.sqrt())
}

/// Pairing int <h, grad^s xi>_g e^{-f} dVol for the 1-form xi with smooth
/// profile p (xi_theta = sin(theta) p). Test harness for the adjoint identity
/// defining the weighted divergence.
pub fn pair_with_symmetrized_derivative<T: Real>(
    metric: &Metric<T>,
    f: &ScalarField<T>,
    h: &SymTensor2<T>,
    p: &ScalarField<T>,
) -> Result<T> {
    check_field_grid(metric, f)?;
    check_tensor_grid(metric, h)?;
    let chart = Chart::new(metric);
    let (sth, seta) = chart.symmetrized_derivative(p.values());
    let eta = h.psipsi_ratio();
    let m = chart.vol_weights();
    let mut total = T::zero();
    for i in 0..chart.n() {
        let inner = h.thth()[i] * sth[i] / (chart.a[i] * chart.a[i])
            + eta[i] * seta[i] / (chart.c[i] * chart.c[i]);
        total += m[i] * inner * (-f.values()[i]).exp();
    }
    Ok(total)
}

/// Pairing int <nabla^{*f} h, xi>_g e^{-f} dVol against the same profile
/// convention as [`pair_with_symmetrized_derivative`].
pub fn pair_with_weighted_divergence<T: Real>(
    metric: &Metric<T>,
    f: &ScalarField<T>,
    h: &SymTensor2<T>,
    p: &ScalarField<T>,
) -> Result<T> {
    check_field_grid(metric, f)?;
    check_tensor_grid(metric, h)?;
    let chart = Chart::new(metric);
    let q = chart.weighted_divergence_profile(f.values(), h.thth(), &h.psipsi_ratio());
    let m = chart.vol_weights();
    let x = metric.grid().nodes();
    let mut total = T::zero();
    for i in 0..chart.n() {
        let s2 = T::one() - x[i] * x[i];
        total += m[i] * s2 * q[i] * p.values()[i] * (-f.values()[i]).exp() / chart.a[i];
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{ConformalMetric, WarpedMetric};

    fn round(n: usize) -> Metric<f64> {
        Metric::round(&Grid::new(n).unwrap())
    }

    #[test]
    fn round_curvature_is_two() {
        let m = round(64);
        let r = scalar_curvature(&m).unwrap();
        for v in r.values().iter() {
            assert!((v - 2.0).abs() < 1e-10);
        }
        // warped representation of the same metric
        let w: Metric<f64> = match &m {
            Metric::Conformal(c) => c.to_warped().into(),
            _ => unreachable!(),
        };
        let rw = scalar_curvature(&w).unwrap();
        for v in rw.values().iter() {
            assert!((v - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_conformal_shift_rescales_curvature() {
        let g = Grid::<f64>::new(48).unwrap();
        let c = 0.23;
        let m: Metric<f64> =
            ConformalMetric::new(ScalarField::constant(&g, c)).into();
        let r = scalar_curvature(&m).unwrap();
        let expect = 2.0 * (-2.0 * c).exp();
        for v in r.values().iter() {
            assert!((v - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn gauss_bonnet_for_perturbed_metric() {
        let g = Grid::<f64>::new(64).unwrap();
        let phi = ScalarField::legendre(&g, 2).scale(0.1);
        let m: Metric<f64> = ConformalMetric::new(phi).into();
        let r = scalar_curvature(&m).unwrap();
        let total = integrate(&m, &r).unwrap();
        assert!((total - 8.0 * std::f64::consts::PI).abs() < 1e-8);
    }

    #[test]
    fn ricci_is_half_scalar_curvature_times_metric() {
        let g = Grid::<f64>::new(48).unwrap();
        let phi = ScalarField::legendre(&g, 2).scale(0.1);
        let m: Metric<f64> = ConformalMetric::new(phi).into();
        let ric = ricci(&m).unwrap();
        let r = scalar_curvature(&m).unwrap();
        let (gth, gps) = m.components();
        for i in 0..g.n() {
            assert!((ric.thth()[i] - 0.5 * r.values()[i] * gth.values()[i]).abs() < 1e-10);
            assert!((ric.psipsi()[i] - 0.5 * r.values()[i] * gps.values()[i]).abs() < 1e-10);
        }
        // trace identity tr_g Ric = R
        let tr = tensor_inner(&m, &ric, &ricci_metric_tensor(&m)).unwrap();
        for i in 0..g.n() {
            assert!((tr.values()[i] - r.values()[i]).abs() < 1e-10);
        }
    }

    fn ricci_metric_tensor(m: &Metric<f64>) -> SymTensor2<f64> {
        let (a, b) = m.components();
        SymTensor2::new(m.grid().clone(), a.into_values(), b.into_values()).unwrap()
    }

    #[test]
    fn round_ricci_equals_metric() {
        let m = round(48);
        let ric = ricci(&m).unwrap();
        let (a, b) = m.components();
        for i in 0..48 {
            assert!((ric.thth()[i] - a.values()[i]).abs() < 1e-10);
            assert!((ric.psipsi()[i] - b.values()[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn laplacian_of_legendre_modes_on_round() {
        let m = round(64);
        let g = m.grid().clone();
        for k in 1..=6 {
            let f = ScalarField::legendre(&g, k);
            let lap = laplacian(&m, &f).unwrap();
            let lam = -((k * (k + 1)) as f64);
            for i in 0..g.n() {
                assert!(
                    (lap.values()[i] - lam * f.values()[i]).abs() < 1e-8,
                    "k={k} node {i}"
                );
            }
        }
    }

    #[test]
    fn constant_fields_have_zero_derivatives() {
        let g = Grid::<f64>::new(32).unwrap();
        let m: Metric<f64> =
            ConformalMetric::new(ScalarField::legendre(&g, 3).scale(0.05)).into();
        let f = ScalarField::constant(&g, 2.5);
        assert!(laplacian(&m, &f).unwrap().sup_norm() < 1e-10);
        assert!(hessian(&m, &f).unwrap().sup_norm() < 1e-10);
        assert!(grad_norm_sq(&m, &f).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn trace_of_hessian_equals_laplacian() {
        let g = Grid::<f64>::new(48).unwrap();
        let phi = ScalarField::legendre(&g, 2).scale(0.1);
        let m: Metric<f64> = ConformalMetric::new(phi).to_warped().into();
        let f = ScalarField::from_fn(&g, |x| 0.3 * x + 0.2 * x * x);
        let h = hessian(&m, &f).unwrap();
        let lap = laplacian(&m, &f).unwrap();
        let gt = ricci_metric_tensor(&m);
        // trace via tensor inner product with g
        let tr = tensor_inner(&m, &h, &gt).unwrap();
        for i in 0..g.n() {
            assert!((tr.values()[i] - lap.values()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn integration_by_parts_on_random_smooth_fields() {
        let g = Grid::<f64>::new(64).unwrap();
        let phi = ScalarField::legendre(&g, 2)
            .scale(0.1)
            .add(&ScalarField::legendre(&g, 3).scale(-0.05))
            .unwrap();
        let m: Metric<f64> = ConformalMetric::new(phi).into();
        let f = ScalarField::from_fn(&g, |x| (1.3 * x).sin());
        let h = ScalarField::from_fn(&g, |x| x * x - 0.4 * x);
        let lap_f = laplacian(&m, &f).unwrap();
        let int_lap = integrate(&m, &lap_f.zip_map(&h, |a, b| a * b).unwrap()).unwrap();
        // <grad f, grad h> = (1-x^2) f' h' / A
        let chart = Chart::new(&m);
        let fp = g.diff(f.values());
        let hp = g.diff(h.values());
        let x = g.nodes();
        let mut pairing = 0.0;
        let mw = chart.vol_weights();
        for i in 0..g.n() {
            pairing += mw[i] * (1.0 - x[i] * x[i]) * fp[i] * hp[i] / chart.a[i];
        }
        assert!(
            (int_lap + pairing).abs() < 1e-9,
            "IBP defect {}",
            int_lap + pairing
        );
    }

    #[test]
    fn metric_is_weighted_divergence_free() {
        let g = Grid::<f64>::new(48).unwrap();
        let m: Metric<f64> =
            ConformalMetric::new(ScalarField::legendre(&g, 2).scale(0.12)).into();
        let f = ScalarField::constant(&g, (4.0 * std::f64::consts::PI).ln());
        let gt = ricci_metric_tensor(&m);
        let resid = weighted_divergence_free_check(&m, &f, &gt).unwrap();
        assert!(resid < 1e-9, "residual {resid}");
    }

    #[test]
    fn divergence_of_hessian_matches_bianchi_route() {
        // div(Hess f) = grad(Lap f) + Ric(grad f) on a closed surface;
        // nabla^{*0} = -div, so the two profiles must agree.
        let g = Grid::<f64>::new(64).unwrap();
        let m = round(64);
        let chart = Chart::new(&m);
        let f = ScalarField::legendre(&g, 2).scale(0.05);
        let (hth, eta) = chart.hessian(f.values());
        let q_star = chart.weighted_divergence_profile(&DVector::zeros(64), &hth, &eta);
        let lap_f = chart.laplacian(f.values());
        let k = chart.gauss_curvature();
        let dlap = g.diff(&lap_f);
        let fp = g.diff(f.values());
        for i in 0..g.n() {
            let bianchi = dlap[i] + k[i] * fp[i];
            assert!(
                (q_star[i] - bianchi).abs() < 1e-9,
                "node {i}: {} vs {}",
                q_star[i],
                bianchi
            );
        }
    }

    #[test]
    fn weighted_divergence_satisfies_adjoint_identity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let g = Grid::<f64>::new(48).unwrap();
        let m: Metric<f64> =
            ConformalMetric::new(ScalarField::legendre(&g, 2).scale(0.1)).into();
        let f = ScalarField::from_fn(&g, |x| (4.0 * std::f64::consts::PI).ln() + 0.1 * x);
        // random regular tensor: h_thth = zeta, eta = zeta + (1-x^2) xi
        let mut series = |decay: f64| {
            let coeffs: Vec<f64> = (1..6)
                .map(|k| rng.random_range(-1.0..1.0) / (k as f64).powf(decay))
                .collect();
            move |x: f64| {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c * crate::grid::legendre_scalar(i + 1, x))
                    .sum::<f64>()
            }
        };
        for _ in 0..5 {
            let zeta = series(2.0);
            let xi = series(2.0);
            let p = series(2.0);
            let hth = DVector::from_fn(g.n(), |i, _| zeta(g.nodes()[i]));
            let psipsi = DVector::from_fn(g.n(), |i, _| {
                let x = g.nodes()[i];
                (1.0 - x * x) * (zeta(x) + (1.0 - x * x) * xi(x))
            });
            let h = SymTensor2::new(g.clone(), hth, psipsi).unwrap();
            let pf = ScalarField::from_fn(&g, &p);
            let lhs = pair_with_symmetrized_derivative(&m, &f, &h, &pf).unwrap();
            let rhs = pair_with_weighted_divergence(&m, &f, &h, &pf).unwrap();
            assert!((lhs - rhs).abs() < 1e-8, "adjoint defect {}", lhs - rhs);
        }
    }

    #[test]
    fn curvature_converges_spectrally() {
        // Error against a 4x finer reference drops faster than any fixed
        // polynomial order: a three-resolution ratio test.
        let reference = Grid::<f64>::new(128).unwrap();
        let phi_fn = |x: f64| 0.3 * crate::grid::legendre_scalar(3, x);
        let mref: Metric<f64> =
            ConformalMetric::new(ScalarField::from_fn(&reference, phi_fn)).into();
        let rref = scalar_curvature(&mref).unwrap();
        let err_at = |n: usize| -> f64 {
            let g = Grid::<f64>::new(n).unwrap();
            let m: Metric<f64> =
                ConformalMetric::new(ScalarField::from_fn(&g, phi_fn)).to_warped().into();
            let r = scalar_curvature(&m).unwrap();
            let mut err = 0.0f64;
            for (i, &y) in g.nodes().iter().enumerate() {
                let exact = reference.interpolate(rref.values(), y);
                err = err.max((r.values()[i] - exact).abs());
            }
            err
        };
        let e16 = err_at(16);
        let e24 = err_at(24);
        let e32 = err_at(32);
        assert!(e24 < e16 * (16.0f64 / 24.0).powi(8), "e16={e16} e24={e24}");
        assert!(e32 < e16 * (16.0f64 / 32.0).powi(10), "e16={e16} e32={e32}");
    }

    #[test]
    fn warped_round_trip_preserves_invariants() {
        let g = Grid::<f64>::new(48).unwrap();
        let phi = ScalarField::legendre(&g, 2).scale(0.1);
        let conf = ConformalMetric::new(phi);
        let warped = conf.to_warped();
        assert!((conf.area() - warped.area()).abs() < 1e-12);
        let rep = ScalarField::from_fn(&g, |x| x + 0.1 * (1.0 - x * x));
        let pulled = warped.pullback_by_profile_diffeo(&rep).unwrap();
        assert!((pulled.area() - warped.area()).abs() < 1e-9);
        let mp: Metric<f64> = pulled.into();
        let r = scalar_curvature(&mp).unwrap();
        let total = integrate(&mp, &r).unwrap();
        assert!((total - 8.0 * std::f64::consts::PI).abs() < 1e-8);
    }

    #[test]
    fn orthogonal_tensors_have_zero_inner_product() {
        let g = Grid::<f64>::new(32).unwrap();
        let m = round(32);
        // thth-only versus psipsi-only supported on disjoint half-spheres
        let h1 = SymTensor2::new(
            g.clone(),
            DVector::from_fn(32, |i, _| if g.nodes()[i] < 0.0 { 1.0 } else { 0.0 }),
            DVector::zeros(32),
        )
        .unwrap();
        let h2 = SymTensor2::new(
            g.clone(),
            DVector::zeros(32),
            DVector::from_fn(32, |i, _| {
                let x = g.nodes()[i];
                if x > 0.0 {
                    1.0 - x * x
                } else {
                    0.0
                }
            }),
        )
        .unwrap();
        let inner = tensor_inner(&m, &h1, &h2).unwrap();
        assert!(inner.sup_norm() == 0.0);
    }

    #[test]
    fn weighted_norm_of_metric_is_one_on_round() {
        // <g, g> = 2 on a surface, so (1/2) * 2 * Vol * (1/4pi) = 1.
        let m = round(48);
        let f = ScalarField::constant(m.grid(), (4.0 * std::f64::consts::PI).ln());
        let gt = ricci_metric_tensor(&m);
        let norm = tensor_norm_weighted(&m, &f, &gt).unwrap();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_warped_metric_is_rejected() {
        let g = Grid::<f64>::new(16).unwrap();
        let zero = ScalarField::constant(&g, 0.0);
        let b = WarpedMetric::round(&g).b_sq().clone();
        assert!(matches!(
            WarpedMetric::new(zero, b),
            Err(Error::Domain(_))
        ));
    }
}
