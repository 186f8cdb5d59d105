//! Numerical laboratory for Perelman's entropy functionals and the
//! normalized/modified Ricci flow on rotationally symmetric metrics on S^2.
//!
//! The unit round sphere is the Einstein metric with constant 1 in this
//! class; the library measures how the flow and the entropy mu behave near
//! it: monotonicity, the Lojasiewicz inequality, gauge equivalence of the
//! two flows, and the convergence rate back to the round metric.

pub mod entropy;
pub mod error;
pub mod field;
pub mod flows;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod metric;
pub mod real;
pub mod stability;
pub mod verification;

pub use entropy::{EntropyConfig, EntropyResult, SpectrumResult};
pub use error::{Error, Result};
pub use field::{ScalarField, SymTensor2, VectorProfile};
pub use flows::{FlowKind, FlowState, StepperConfig, Termination, Trajectory};
pub use grid::Grid;
pub use metric::{ConformalMetric, Metric, WarpedMetric};
pub use real::Real;
pub use stability::{
    DecayFit, ExperimentConfig, LojasiewiczFit, Perturbation, PerturbationKind, Report,
};

/// Entropy of the round unit sphere: 1 + log(4*pi), the maximum of mu over
/// area-normalized metrics in this class.
pub fn mu_round<T: Real>() -> T {
    T::one() + (T::of(4.0) * T::pi()).ln()
}

// Concrete double-precision aliases; the CLI and the experiment layer work
// in f64 throughout.
pub type Grid64 = Grid<f64>;
pub type ScalarField64 = ScalarField<f64>;
pub type SymTensor264 = SymTensor2<f64>;
pub type ConformalMetric64 = ConformalMetric<f64>;
pub type WarpedMetric64 = WarpedMetric<f64>;
pub type Metric64 = Metric<f64>;
pub type EntropyResult64 = EntropyResult<f64>;
pub type Trajectory64 = Trajectory<f64>;
