//! Nodal carriers for circle-invariant scalars, symmetric 2-tensors and
//! vector fields on the sphere.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::real::Real;

/// Circle-invariant function on S^2 sampled at the collocation nodes.
#[derive(Clone, Debug)]
pub struct ScalarField<T: Real> {
    grid: Grid<T>,
    values: DVector<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn new(grid: Grid<T>, values: DVector<T>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::Usage(format!(
                "field length {} does not match grid size {}",
                values.len(),
                grid.n()
            )));
        }
        if values.iter().any(|v| !v.is_finite_scalar()) {
            return Err(Error::Domain("field contains non-finite entries".into()));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: &Grid<T>, v: T) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: DVector::from_element(grid.n(), v),
        }
    }

    pub fn zeros(grid: &Grid<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    /// Samples `f(x)` at the nodes.
    pub fn from_fn(grid: &Grid<T>, f: impl Fn(T) -> T) -> Self {
        let values = DVector::from_fn(grid.n(), |i, _| f(grid.nodes()[i]));
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    /// Legendre mode P_k as a field.
    pub fn legendre(grid: &Grid<T>, k: usize) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: grid.legendre(k),
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &DVector<T> {
        &self.values
    }

    pub fn into_values(self) -> DVector<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }

    /// d/dx as a nodal field.
    pub fn derivative(&self) -> ScalarField<T> {
        ScalarField {
            grid: self.grid.clone(),
            values: self.grid.diff(&self.values),
        }
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> ScalarField<T> {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.map(f),
        }
    }

    pub fn zip_map(&self, other: &ScalarField<T>, f: impl Fn(T, T) -> T) -> Result<ScalarField<T>> {
        self.check_same_grid(other)?;
        Ok(ScalarField {
            grid: self.grid.clone(),
            values: self.values.zip_map(&other.values, f),
        })
    }

    pub fn scale(&self, c: T) -> ScalarField<T> {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &ScalarField<T>) -> Result<ScalarField<T>> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField<T>) -> Result<ScalarField<T>> {
        self.zip_map(other, |a, b| a - b)
    }

    /// Sup distance to another field on the same grid.
    pub fn sup_distance(&self, other: &ScalarField<T>) -> Result<T> {
        self.check_same_grid(other)?;
        let mut m = T::zero();
        for i in 0..self.len() {
            m = m.max((self.values[i] - other.values[i]).abs());
        }
        Ok(m)
    }

    pub fn check_same_grid(&self, other: &ScalarField<T>) -> Result<()> {
        if !self.grid.same_grid(&other.grid) {
            return Err(Error::Usage("fields live on different grids".into()));
        }
        Ok(())
    }
}

/// Circle-invariant symmetric 2-tensor, carried by its diagonal coordinate
/// components in the (theta, psi) chart; the off-diagonal component vanishes
/// identically by symmetry.
#[derive(Clone, Debug)]
pub struct SymTensor2<T: Real> {
    grid: Grid<T>,
    thth: DVector<T>,
    psipsi: DVector<T>,
}

impl<T: Real> SymTensor2<T> {
    pub fn new(grid: Grid<T>, thth: DVector<T>, psipsi: DVector<T>) -> Result<Self> {
        if thth.len() != grid.n() || psipsi.len() != grid.n() {
            return Err(Error::Usage("tensor component length mismatch".into()));
        }
        if thth.iter().chain(psipsi.iter()).any(|v| !v.is_finite_scalar()) {
            return Err(Error::Domain("tensor contains non-finite entries".into()));
        }
        Ok(SymTensor2 { grid, thth, psipsi })
    }

    pub fn zeros(grid: &Grid<T>) -> Self {
        SymTensor2 {
            grid: grid.clone(),
            thth: DVector::zeros(grid.n()),
            psipsi: DVector::zeros(grid.n()),
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    /// theta-theta component.
    pub fn thth(&self) -> &DVector<T> {
        &self.thth
    }

    /// psi-psi component.
    pub fn psipsi(&self) -> &DVector<T> {
        &self.psipsi
    }

    /// psi-psi component divided by (1 - x^2); smooth for a regular tensor.
    pub(crate) fn psipsi_ratio(&self) -> DVector<T> {
        DVector::from_fn(self.grid.n(), |i, _| {
            let x = self.grid.nodes()[i];
            self.psipsi[i] / (T::one() - x * x)
        })
    }

    pub fn scale(&self, c: T) -> SymTensor2<T> {
        SymTensor2 {
            grid: self.grid.clone(),
            thth: &self.thth * c,
            psipsi: &self.psipsi * c,
        }
    }

    pub fn add(&self, other: &SymTensor2<T>) -> Result<SymTensor2<T>> {
        self.check_same_grid(other)?;
        Ok(SymTensor2 {
            grid: self.grid.clone(),
            thth: &self.thth + &other.thth,
            psipsi: &self.psipsi + &other.psipsi,
        })
    }

    pub fn sub(&self, other: &SymTensor2<T>) -> Result<SymTensor2<T>> {
        self.check_same_grid(other)?;
        Ok(SymTensor2 {
            grid: self.grid.clone(),
            thth: &self.thth - &other.thth,
            psipsi: &self.psipsi - &other.psipsi,
        })
    }

    /// Componentwise sup norm, with the psi-psi part measured through its
    /// regular ratio so both components carry comparable scales.
    pub fn sup_norm(&self) -> T {
        let ratio = self.psipsi_ratio();
        let mut m = T::zero();
        for i in 0..self.grid.n() {
            m = m.max(self.thth[i].abs()).max(ratio[i].abs());
        }
        m
    }

    pub fn check_same_grid(&self, other: &SymTensor2<T>) -> Result<()> {
        if !self.grid.same_grid(&other.grid) {
            return Err(Error::Usage("tensors live on different grids".into()));
        }
        Ok(())
    }
}

/// Circle-invariant vector field X = v_theta * d/d(theta).
#[derive(Clone, Debug)]
pub struct VectorProfile<T: Real> {
    grid: Grid<T>,
    v_theta: DVector<T>,
}

impl<T: Real> VectorProfile<T> {
    pub fn new(grid: Grid<T>, v_theta: DVector<T>) -> Result<Self> {
        if v_theta.len() != grid.n() {
            return Err(Error::Usage("vector profile length mismatch".into()));
        }
        if v_theta.iter().any(|v| !v.is_finite_scalar()) {
            return Err(Error::Domain("vector profile contains non-finite entries".into()));
        }
        Ok(VectorProfile { grid, v_theta })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn v_theta(&self) -> &DVector<T> {
        &self.v_theta
    }

    /// Velocity of the node coordinate x under the flow of the field:
    /// dx/dt = -sin(theta) v_theta.
    pub fn x_velocity(&self) -> DVector<T> {
        DVector::from_fn(self.grid.n(), |i, _| {
            let x = self.grid.nodes()[i];
            -((T::one() - x * x).sqrt()) * self.v_theta[i]
        })
    }
}
