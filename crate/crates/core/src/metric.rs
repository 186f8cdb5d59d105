//! Metric representations.
//!
//! `ConformalMetric` carries g = e^{2 phi} g_round, the gauge in which the
//! normalized Ricci flow is a strictly parabolic scalar equation.
//! `WarpedMetric` carries g = a^2 dtheta^2 + b^2 dpsi^2, the gauge in which
//! Hessians and the modified flow act componentwise.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::real::Real;

/// Admissible relative defect of b^2 / ((1-x^2) a^2) near the poles before a
/// warped metric is rejected as having a cone angle.
const POLE_RATIO_TOL: f64 = 0.05;

/// g = e^{2 phi} g_round; positive definite for any finite phi.
#[derive(Clone, Debug)]
pub struct ConformalMetric<T: Real> {
    phi: ScalarField<T>,
}

impl<T: Real> ConformalMetric<T> {
    pub fn new(phi: ScalarField<T>) -> Self {
        ConformalMetric { phi }
    }

    /// The unit round sphere: phi = 0.
    pub fn round(grid: &Grid<T>) -> Self {
        ConformalMetric {
            phi: ScalarField::zeros(grid),
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        self.phi.grid()
    }

    pub fn phi(&self) -> &ScalarField<T> {
        &self.phi
    }

    pub fn area(&self) -> T {
        let g = self.grid();
        let mut a = T::zero();
        for i in 0..g.n() {
            a += g.quadrature_weights()[i] * (T::of(2.0) * self.phi.values()[i]).exp();
        }
        a
    }

    /// Uniform rescale to area 4*pi; returns the projected metric and the
    /// pre-projection area drift |area - 4*pi|.
    pub fn area_projected(&self) -> (ConformalMetric<T>, T) {
        let area = self.area();
        let four_pi = T::of(4.0) * T::pi();
        let shift = T::of(0.5) * (four_pi / area).ln();
        (
            ConformalMetric {
                phi: self.phi.map(|v| v + shift),
            },
            (area - four_pi).abs(),
        )
    }

    pub fn to_warped(&self) -> WarpedMetric<T> {
        let g = self.grid();
        let e2phi = self.phi.values().map(|p| (T::of(2.0) * p).exp());
        let b_sq = DVector::from_fn(g.n(), |i, _| {
            let x = g.nodes()[i];
            (T::one() - x * x) * e2phi[i]
        });
        WarpedMetric {
            a_sq: ScalarField::new(g.clone(), e2phi).expect("finite conformal factor"),
            b_sq: ScalarField::new(g.clone(), b_sq).expect("finite conformal factor"),
        }
    }
}

/// g = a^2 dtheta^2 + b^2 dpsi^2 with positive profiles and no cone angle at
/// the poles.
#[derive(Clone, Debug)]
pub struct WarpedMetric<T: Real> {
    a_sq: ScalarField<T>,
    b_sq: ScalarField<T>,
}

impl<T: Real> WarpedMetric<T> {
    pub fn new(a_sq: ScalarField<T>, b_sq: ScalarField<T>) -> Result<Self> {
        a_sq.check_same_grid(&b_sq)?;
        if a_sq.values().iter().any(|v| *v <= T::zero())
            || b_sq.values().iter().any(|v| *v <= T::zero())
        {
            return Err(Error::Domain("warped metric components must be positive".into()));
        }
        let m = WarpedMetric { a_sq, b_sq };
        m.check_pole_regularity()?;
        Ok(m)
    }

    /// Builds from the theta-theta component and the smooth ratio
    /// c = b^2/(1-x^2); this is the representation the flow evolves.
    pub fn from_components(grid: &Grid<T>, a: DVector<T>, c: DVector<T>) -> Result<Self> {
        let b_sq = DVector::from_fn(grid.n(), |i, _| {
            let x = grid.nodes()[i];
            (T::one() - x * x) * c[i]
        });
        WarpedMetric::new(ScalarField::new(grid.clone(), a)?, ScalarField::new(grid.clone(), b_sq)?)
    }

    pub fn round(grid: &Grid<T>) -> Self {
        ConformalMetric::round(grid).to_warped()
    }

    pub fn grid(&self) -> &Grid<T> {
        self.a_sq.grid()
    }

    pub fn a_sq(&self) -> &ScalarField<T> {
        &self.a_sq
    }

    pub fn b_sq(&self) -> &ScalarField<T> {
        &self.b_sq
    }

    /// Smooth profile c = b^2 / (1 - x^2); equals a^2 at the poles for a
    /// regular metric.
    pub fn c_ratio(&self) -> DVector<T> {
        let g = self.grid();
        DVector::from_fn(g.n(), |i, _| {
            let x = g.nodes()[i];
            self.b_sq.values()[i] / (T::one() - x * x)
        })
    }

    fn check_pole_regularity(&self) -> Result<()> {
        let g = self.grid();
        let n = g.n();
        let c = self.c_ratio();
        for i in [0usize, n - 1] {
            let ratio = c[i] / self.a_sq.values()[i];
            if (ratio - T::one()).abs() > T::of(POLE_RATIO_TOL) {
                return Err(Error::Domain(format!(
                    "cone angle at pole: b^2/((1-x^2) a^2) = {ratio} at node {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn area(&self) -> T {
        let g = self.grid();
        let c = self.c_ratio();
        let mut a = T::zero();
        for i in 0..g.n() {
            a += g.quadrature_weights()[i] * (self.a_sq.values()[i] * c[i]).sqrt();
        }
        a
    }

    pub fn area_projected(&self) -> (WarpedMetric<T>, T) {
        let area = self.area();
        let four_pi = T::of(4.0) * T::pi();
        let factor = four_pi / area;
        (
            WarpedMetric {
                a_sq: self.a_sq.scale(factor),
                b_sq: self.b_sq.scale(factor),
            },
            (area - four_pi).abs(),
        )
    }

    /// Pulls the metric back along the profile diffeomorphism x -> reparam(x),
    /// a strictly monotone map of (-1, 1) fixing both poles. `reparam` holds
    /// the image coordinates of the grid nodes.
    pub fn pullback_by_profile_diffeo(&self, reparam: &ScalarField<T>) -> Result<WarpedMetric<T>> {
        let g = self.grid();
        if !g.same_grid(reparam.grid()) {
            return Err(Error::Usage("reparametrization lives on a different grid".into()));
        }
        let y = reparam.values();
        let one = T::one();
        for i in 0..g.n() {
            if y[i] <= -one || y[i] >= one {
                return Err(Error::Domain("reparametrization must map into (-1, 1)".into()));
            }
            if i > 0 && y[i] <= y[i - 1] {
                return Err(Error::Domain("reparametrization must be strictly monotone".into()));
            }
        }
        let yp = g.diff(y);
        if yp.iter().any(|v| *v <= T::zero()) {
            return Err(Error::Domain("reparametrization derivative must stay positive".into()));
        }
        let c = self.c_ratio();
        let mut a_new = DVector::zeros(g.n());
        let mut c_new = DVector::zeros(g.n());
        for i in 0..g.n() {
            let x = g.nodes()[i];
            let s2x = one - x * x;
            let s2y = one - y[i] * y[i];
            let a_at = g.interpolate(self.a_sq.values(), y[i]);
            let c_at = g.interpolate(&c, y[i]);
            a_new[i] = a_at * yp[i] * yp[i] * s2x / s2y;
            c_new[i] = c_at * s2y / s2x;
        }
        WarpedMetric::from_components(g, a_new, c_new)
    }
}

/// Either representation; the operand type of the geometry and entropy
/// operators.
#[derive(Clone, Debug)]
pub enum Metric<T: Real> {
    Conformal(ConformalMetric<T>),
    Warped(WarpedMetric<T>),
}

impl<T: Real> Metric<T> {
    pub fn round(grid: &Grid<T>) -> Self {
        Metric::Conformal(ConformalMetric::round(grid))
    }

    pub fn grid(&self) -> &Grid<T> {
        match self {
            Metric::Conformal(m) => m.grid(),
            Metric::Warped(m) => m.grid(),
        }
    }

    pub fn area(&self) -> T {
        match self {
            Metric::Conformal(m) => m.area(),
            Metric::Warped(m) => m.area(),
        }
    }

    pub fn area_projected(&self) -> (Metric<T>, T) {
        match self {
            Metric::Conformal(m) => {
                let (p, d) = m.area_projected();
                (Metric::Conformal(p), d)
            }
            Metric::Warped(m) => {
                let (p, d) = m.area_projected();
                (Metric::Warped(p), d)
            }
        }
    }

    /// Metric components (g_thth, g_psipsi) in the polar chart.
    pub fn components(&self) -> (ScalarField<T>, ScalarField<T>) {
        match self {
            Metric::Conformal(m) => {
                let w = m.to_warped();
                (w.a_sq.clone(), w.b_sq.clone())
            }
            Metric::Warped(m) => (m.a_sq.clone(), m.b_sq.clone()),
        }
    }
}

impl<T: Real> From<ConformalMetric<T>> for Metric<T> {
    fn from(m: ConformalMetric<T>) -> Self {
        Metric::Conformal(m)
    }
}

impl<T: Real> From<WarpedMetric<T>> for Metric<T> {
    fn from(m: WarpedMetric<T>) -> Self {
        Metric::Warped(m)
    }
}
