//! Time integration of the normalized Ricci flow (conformal gauge, strictly
//! parabolic) and of the modified Ricci flow, the gradient flow of mu
//! (warped gauge), plus the gauge transfer realizing their equivalence.
//!
//! On a surface the normalized flow is conformal, d(phi)/dt = 1/2 - R/4.
//! The modified flow adds -Hess f with f the entropy minimizer and is
//! integrated componentwise in (g_thth, g_psipsi/(1-x^2)). The gauge
//! transfer pulls a normalized trajectory back along the isotopy generated
//! by -(1/2) grad f(t), which in the x coordinate moves each node by
//!   dy/dt = -(1 - y^2) f'(t, y) / (2 A(t, y)).

use nalgebra::DVector;

use crate::entropy::{self, EntropyConfig, EntropyResult};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{self, Chart};
use crate::grid::Grid;
use crate::metric::{ConformalMetric, Metric, WarpedMetric};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowKind {
    Normalized,
    Modified,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepMethod {
    /// Embedded step-doubling error control around classical RK4.
    ExplicitAdaptive,
    /// First-order splitting with the stiff round-Laplacian term implicit;
    /// available for the conformal flow in stiff regimes.
    SemiImplicit,
}

/// Time-stepping parameters.
#[derive(Clone, Debug)]
pub struct StepperConfig<T: Real> {
    pub dt_init: T,
    pub dt_max: T,
    /// Floor below which a rejection cascade aborts the run.
    pub dt_min: T,
    pub safety: T,
    /// Absolute per-step error target on the evolved profiles.
    pub step_tol: T,
    pub snapshot_cadence: T,
    pub horizon: T,
    /// Convergence threshold on sup |R - 2|.
    pub conv_sup_r_dev: T,
    /// Convergence threshold on |grad mu|.
    pub conv_grad_mu_norm: T,
    /// Rescale to area 4*pi after every accepted step.
    pub area_projection: bool,
    pub method: StepMethod,
    /// Disables error control and steps with exactly this dt (convergence
    /// studies).
    pub fixed_dt: Option<T>,
    pub entropy: EntropyConfig<T>,
}

impl<T: Real> Default for StepperConfig<T> {
    fn default() -> Self {
        StepperConfig {
            dt_init: T::of(1e-4),
            dt_max: T::of(0.05),
            dt_min: T::of(1e-12),
            safety: T::of(0.9),
            step_tol: T::of(1e-9),
            snapshot_cadence: T::of(0.05),
            horizon: T::of(60.0),
            conv_sup_r_dev: T::of(1e-6),
            conv_grad_mu_norm: T::of(1e-7),
            area_projection: true,
            method: StepMethod::ExplicitAdaptive,
            fixed_dt: None,
            entropy: EntropyConfig::default(),
        }
    }
}

impl<T: Real> StepperConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("dt_init", self.dt_init),
            ("dt_max", self.dt_max),
            ("dt_min", self.dt_min),
            ("safety", self.safety),
            ("step_tol", self.step_tol),
            ("snapshot_cadence", self.snapshot_cadence),
            ("horizon", self.horizon),
            ("conv_sup_r_dev", self.conv_sup_r_dev),
            ("conv_grad_mu_norm", self.conv_grad_mu_norm),
        ];
        for (name, v) in pos {
            if v <= T::zero() || !v.is_finite_scalar() {
                return Err(Error::Config(format!("{name} must be positive and finite")));
            }
        }
        if self.step_tol < T::of(1e-15) {
            return Err(Error::Config("step_tol below machine-precision floor".into()));
        }
        if self.dt_min > self.dt_max {
            return Err(Error::Config("dt_min exceeds dt_max".into()));
        }
        if self.safety >= T::one() {
            return Err(Error::Config("safety factor must be below 1".into()));
        }
        Ok(())
    }
}

/// Snapshot diagnostics recorded along a trajectory.
#[derive(Clone, Copy, Debug)]
pub struct Diagnostics<T: Real> {
    pub area: T,
    pub mu: T,
    pub grad_mu_norm: T,
    pub sup_r_dev: T,
    pub dt_used: T,
}

#[derive(Clone, Debug)]
pub struct FlowState<T: Real> {
    pub time: T,
    pub metric: Metric<T>,
    pub minimizer: Option<EntropyResult<T>>,
    pub diagnostics: Diagnostics<T>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    HorizonReached,
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct Trajectory<T: Real> {
    pub kind: FlowKind,
    pub states: Vec<FlowState<T>>,
    pub termination: Termination,
    /// Largest pre-projection area drift |area - 4 pi| over accepted steps.
    pub max_area_drift: T,
}

impl<T: Real> Trajectory<T> {
    pub fn last(&self) -> &FlowState<T> {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn times(&self) -> Vec<T> {
        self.states.iter().map(|s| s.time).collect()
    }
}

/// sup |R - 2| for either representation.
pub fn sup_r_dev<T: Real>(metric: &Metric<T>) -> Result<T> {
    let r = geometry::scalar_curvature(metric)?;
    Ok(r.values()
        .iter()
        .fold(T::zero(), |m, v| m.max((*v - T::of(2.0)).abs())))
}

fn diagnose<T: Real>(
    metric: &Metric<T>,
    entropy_cfg: &EntropyConfig<T>,
    warm: Option<&ScalarField<T>>,
    dt_used: T,
) -> Result<(Diagnostics<T>, EntropyResult<T>)> {
    let res = entropy::minimize_w_warm(metric, entropy_cfg, warm).map_err(Error::from)?;
    let grad_norm = entropy::mu_gradient_norm_from(metric, &res)?;
    let diag = Diagnostics {
        area: metric.area(),
        mu: res.mu,
        grad_mu_norm: grad_norm,
        sup_r_dev: sup_r_dev(metric)?,
        dt_used,
    };
    Ok((diag, res))
}

// ---------------------------------------------------------------------------
// steppers

/// One integration method advancing a profile vector by a single trial step.
trait OneStep<T: Real> {
    fn try_step(&mut self, y: &DVector<T>, dt: T) -> Result<DVector<T>>;
    /// Classical order; the step-doubling controller uses it for the error
    /// exponent and the extrapolation weight.
    fn order(&self) -> i32;
}

/// Normalized Ricci flow in conformal gauge: y = phi.
struct ConformalRhs<T: Real> {
    grid: Grid<T>,
}

impl<T: Real> ConformalRhs<T> {
    fn rhs(&self, phi: &DVector<T>) -> DVector<T> {
        let lap = self.grid.lap_round_matrix() * phi;
        DVector::from_fn(phi.len(), |i, _| {
            let r = (-T::of(2.0) * phi[i]).exp() * (T::of(2.0) - T::of(2.0) * lap[i]);
            T::of(0.5) - T::of(0.25) * r
        })
    }
}

struct ConformalRk4<T: Real>(ConformalRhs<T>);

impl<T: Real> OneStep<T> for ConformalRk4<T> {
    fn try_step(&mut self, phi: &DVector<T>, dt: T) -> Result<DVector<T>> {
        let half = T::of(0.5);
        let k1 = self.0.rhs(phi);
        let k2 = self.0.rhs(&(phi + &k1 * (half * dt)));
        let k3 = self.0.rhs(&(phi + &k2 * (half * dt)));
        let k4 = self.0.rhs(&(phi + &k3 * dt));
        let sixth = dt / T::of(6.0);
        Ok(phi + (k1 + k2 * T::of(2.0) + k3 * T::of(2.0) + k4) * sixth)
    }

    fn order(&self) -> i32 {
        4
    }
}

/// Backward-Euler treatment of the (1/2) e^{-2 phi} Lap_round phi term with
/// frozen coefficient, explicit for the rest.
struct ConformalSemiImplicit<T: Real>(ConformalRhs<T>);

impl<T: Real> OneStep<T> for ConformalSemiImplicit<T> {
    fn try_step(&mut self, phi: &DVector<T>, dt: T) -> Result<DVector<T>> {
        let n = phi.len();
        let lap = self.0.grid.lap_round_matrix();
        let coeff = phi.map(|p| T::of(0.5) * (-T::of(2.0) * p).exp());
        let mut sys = nalgebra::DMatrix::identity(n, n);
        for i in 0..n {
            for j in 0..n {
                sys[(i, j)] -= dt * coeff[i] * lap[(i, j)];
            }
        }
        let rhs = DVector::from_fn(n, |i, _| {
            phi[i] + dt * (T::of(0.5) - coeff[i])
        });
        sys.lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Stepper("semi-implicit system is singular".into()))
    }

    fn order(&self) -> i32 {
        1
    }
}

/// Modified Ricci flow on stacked profiles y = (A, C); every RHS evaluation
/// re-solves the entropy minimizer at the stage metric, warm-started.
struct ModifiedRhs<T: Real> {
    grid: Grid<T>,
    entropy: EntropyConfig<T>,
    warm: Option<ScalarField<T>>,
}

impl<T: Real> ModifiedRhs<T> {
    fn rhs(&mut self, y: &DVector<T>) -> Result<DVector<T>> {
        let n = self.grid.n();
        let a = DVector::from_fn(n, |i, _| y[i]);
        let c = DVector::from_fn(n, |i, _| y[n + i]);
        let metric = Metric::Warped(WarpedMetric::from_components(&self.grid, a.clone(), c.clone())?);
        let res = entropy::minimize_w_warm(&metric, &self.entropy, self.warm.as_ref())
            .map_err(Error::from)?;
        let chart = Chart::from_profiles(self.grid.clone(), a, c);
        let k = chart.gauss_curvature();
        let (hth, eta) = chart.hessian(res.minimizer_f.values());
        let mut out = DVector::zeros(2 * n);
        for i in 0..n {
            out[i] = -k[i] * chart.a[i] + chart.a[i] - hth[i];
            out[n + i] = -k[i] * chart.c[i] + chart.c[i] - eta[i];
        }
        self.warm = Some(res.minimizer_f);
        Ok(out)
    }
}

struct ModifiedRk4<T: Real>(ModifiedRhs<T>);

impl<T: Real> OneStep<T> for ModifiedRk4<T> {
    fn try_step(&mut self, y: &DVector<T>, dt: T) -> Result<DVector<T>> {
        let half = T::of(0.5);
        let k1 = self.0.rhs(y)?;
        let k2 = self.0.rhs(&(y + &k1 * (half * dt)))?;
        let k3 = self.0.rhs(&(y + &k2 * (half * dt)))?;
        let k4 = self.0.rhs(&(y + &k3 * dt))?;
        let sixth = dt / T::of(6.0);
        Ok(y + (k1 + k2 * T::of(2.0) + k3 * T::of(2.0) + k4) * sixth)
    }

    fn order(&self) -> i32 {
        4
    }
}

/// Adaptive driver: advances `y` by exactly `span` using step-doubling error
/// control, applying `project` after every accepted step. Returns the largest
/// projection drift seen.
fn advance<T: Real, S: OneStep<T>>(
    stepper: &mut S,
    y: &mut DVector<T>,
    span: T,
    dt_state: &mut T,
    cfg: &StepperConfig<T>,
    project: impl Fn(&mut DVector<T>) -> T,
) -> Result<T> {
    let mut remaining = span;
    let mut max_drift = T::zero();
    let p = stepper.order();
    let exponent = T::one() / T::of((p + 1) as f64);
    let extrap = T::one() / (T::of(2.0).powi(p) - T::one());

    if let Some(dt_fixed) = cfg.fixed_dt {
        // convergence-study mode: plain stepping, no error control
        while remaining > T::of(1e-14) {
            let dt = dt_fixed.min(remaining);
            let next = stepper.try_step(y, dt)?;
            *y = next;
            max_drift = max_drift.max(project(y));
            remaining -= dt;
        }
        *dt_state = dt_fixed;
        return Ok(max_drift);
    }

    let mut just_rejected = false;
    while remaining > T::of(1e-14) {
        let dt = (*dt_state).min(remaining).min(cfg.dt_max);
        let full = stepper.try_step(y, dt)?;
        let half_dt = T::of(0.5) * dt;
        let mid = stepper.try_step(y, half_dt)?;
        let fine = stepper.try_step(&mid, half_dt)?;
        let mut err = T::zero();
        for i in 0..y.len() {
            err = err.max((full[i] - fine[i]).abs());
        }
        err *= extrap;
        if !err.is_finite_scalar() {
            // trial step left the stable region entirely
            *dt_state = dt * T::of(0.2);
            just_rejected = true;
            if *dt_state < cfg.dt_min {
                return Err(Error::Stepper(format!(
                    "step rejection cascade: dt {:e} fell below the floor {:e}",
                    (*dt_state).as_f64(),
                    cfg.dt_min.as_f64()
                )));
            }
            continue;
        }
        if err <= cfg.step_tol {
            // accept, with local extrapolation
            *y = DVector::from_fn(y.len(), |i, _| fine[i] + extrap * (fine[i] - full[i]));
            max_drift = max_drift.max(project(y));
            remaining -= dt;
            let growth_cap = if just_rejected { T::one() } else { T::of(5.0) };
            let factor = if err == T::zero() {
                growth_cap
            } else {
                (cfg.safety * (cfg.step_tol / err).powf(exponent)).clamp(T::of(0.2), growth_cap)
            };
            *dt_state = (dt * factor).min(cfg.dt_max);
            just_rejected = false;
        } else {
            let factor = (cfg.safety * (cfg.step_tol / err).powf(exponent)).clamp(T::of(0.05), T::of(0.9));
            *dt_state = dt * factor;
            just_rejected = true;
            if *dt_state < cfg.dt_min {
                return Err(Error::Stepper(format!(
                    "step rejection cascade: dt {:e} fell below the floor {:e}",
                    (*dt_state).as_f64(),
                    cfg.dt_min.as_f64()
                )));
            }
        }
    }
    Ok(max_drift)
}

fn project_conformal<T: Real>(grid: &Grid<T>, phi: &mut DVector<T>, enabled: bool) -> T {
    if !enabled {
        return T::zero();
    }
    let qw = grid.quadrature_weights();
    let mut area = T::zero();
    for i in 0..grid.n() {
        area += qw[i] * (T::of(2.0) * phi[i]).exp();
    }
    let four_pi = T::of(4.0) * T::pi();
    let shift = T::of(0.5) * (four_pi / area).ln();
    for i in 0..grid.n() {
        phi[i] += shift;
    }
    (area - four_pi).abs()
}

fn project_warped<T: Real>(grid: &Grid<T>, y: &mut DVector<T>, enabled: bool) -> T {
    if !enabled {
        return T::zero();
    }
    let n = grid.n();
    let qw = grid.quadrature_weights();
    let mut area = T::zero();
    for i in 0..n {
        area += qw[i] * (y[i] * y[n + i]).sqrt();
    }
    let four_pi = T::of(4.0) * T::pi();
    let factor = four_pi / area;
    for i in 0..2 * n {
        y[i] *= factor;
    }
    (area - four_pi).abs()
}

/// Advances a normalized-flow state by `dt` (with internal error-controlled
/// substeps) and refreshes its diagnostics.
pub fn ricci_step<T: Real>(
    state: &FlowState<T>,
    dt: T,
    cfg: &StepperConfig<T>,
) -> Result<FlowState<T>> {
    cfg.validate()?;
    let Metric::Conformal(m) = &state.metric else {
        return Err(Error::Usage(
            "normalized flow steps the conformal representation".into(),
        ));
    };
    let grid = m.grid().clone();
    let mut phi = m.phi().values().clone();
    let mut stepper = ConformalRk4(ConformalRhs { grid: grid.clone() });
    let mut dt_state = cfg.dt_init.min(dt);
    let g2 = grid.clone();
    match cfg.method {
        StepMethod::ExplicitAdaptive => advance(
            &mut stepper,
            &mut phi,
            dt,
            &mut dt_state,
            cfg,
            |y: &mut DVector<T>| project_conformal(&g2, y, cfg.area_projection),
        )?,
        StepMethod::SemiImplicit => {
            let mut st = ConformalSemiImplicit(ConformalRhs { grid: grid.clone() });
            advance(&mut st, &mut phi, dt, &mut dt_state, cfg, |y: &mut DVector<T>| {
                project_conformal(&g2, y, cfg.area_projection)
            })?
        }
    };
    let metric = Metric::Conformal(ConformalMetric::new(ScalarField::new(grid, phi)?));
    let warm = state.minimizer.as_ref().map(|r| r.minimizer_f.clone());
    let (diag, res) = diagnose(&metric, &cfg.entropy, warm.as_ref(), dt_state)?;
    Ok(FlowState {
        time: state.time + dt,
        metric,
        minimizer: Some(res),
        diagnostics: diag,
    })
}

/// Advances a modified-flow state by `dt`; the state must carry (or convert
/// to) the warped representation, and the entropy minimizer is re-solved at
/// every stage (warm-started).
pub fn modified_ricci_step<T: Real>(
    state: &FlowState<T>,
    dt: T,
    cfg: &StepperConfig<T>,
) -> Result<FlowState<T>> {
    cfg.validate()?;
    let warped = match &state.metric {
        Metric::Warped(m) => m.clone(),
        Metric::Conformal(m) => m.to_warped(),
    };
    let grid = warped.grid().clone();
    let n = grid.n();
    let c = warped.c_ratio();
    let mut y = DVector::zeros(2 * n);
    for i in 0..n {
        y[i] = warped.a_sq().values()[i];
        y[n + i] = c[i];
    }
    let warm = state.minimizer.as_ref().map(|r| r.minimizer_f.clone());
    let mut stepper = ModifiedRk4(ModifiedRhs {
        grid: grid.clone(),
        entropy: cfg.entropy.clone(),
        warm: warm.clone(),
    });
    let mut dt_state = cfg.dt_init.min(dt);
    let g2 = grid.clone();
    advance(&mut stepper, &mut y, dt, &mut dt_state, cfg, |y: &mut DVector<T>| {
        project_warped(&g2, y, cfg.area_projection)
    })?;
    let a = DVector::from_fn(n, |i, _| y[i]);
    let cc = DVector::from_fn(n, |i, _| y[n + i]);
    let metric = Metric::Warped(WarpedMetric::from_components(&grid, a, cc)?);
    let (diag, res) = diagnose(&metric, &cfg.entropy, stepper.0.warm.as_ref(), dt_state)?;
    Ok(FlowState {
        time: state.time + dt,
        metric,
        minimizer: Some(res),
        diagnostics: diag,
    })
}

/// Runs a flow until convergence, the horizon, or an error; snapshots with
/// full diagnostics are recorded at the configured cadence. Integration
/// failures terminate the trajectory with `Termination::Failed` and the
/// states gathered so far.
pub fn run_flow<T: Real>(
    initial: &Metric<T>,
    cfg: &StepperConfig<T>,
    kind: FlowKind,
) -> Result<Trajectory<T>> {
    cfg.validate()?;
    if kind == FlowKind::Normalized && !matches!(initial, Metric::Conformal(_)) {
        return Err(Error::Usage(
            "normalized flow requires the conformal representation".into(),
        ));
    }

    let start = if cfg.area_projection {
        initial.area_projected().0
    } else {
        initial.clone()
    };
    let (diag, res) = diagnose(&start, &cfg.entropy, None, T::zero())?;
    let mut states = vec![FlowState {
        time: T::zero(),
        metric: start,
        minimizer: Some(res),
        diagnostics: diag,
    }];
    let mut max_drift = T::zero();

    let converged = |d: &Diagnostics<T>| {
        d.sup_r_dev < cfg.conv_sup_r_dev && d.grad_mu_norm < cfg.conv_grad_mu_norm
    };
    if converged(&states[0].diagnostics) {
        return Ok(Trajectory {
            kind,
            states,
            termination: Termination::Converged,
            max_area_drift: max_drift,
        });
    }

    let mut t = T::zero();
    let step_fn = |state: &FlowState<T>, span: T| match kind {
        FlowKind::Normalized => ricci_step(state, span, cfg),
        FlowKind::Modified => modified_ricci_step(state, span, cfg),
    };
    let mut termination = Termination::HorizonReached;
    while t < cfg.horizon - T::of(1e-12) {
        let span = cfg.snapshot_cadence.min(cfg.horizon - t);
        let prev = states.last().expect("nonempty");
        match step_fn(prev, span) {
            Ok(next) => {
                t = next.time;
                max_drift = max_drift.max(next_area_drift(&next));
                let done = converged(&next.diagnostics);
                states.push(next);
                if done {
                    termination = Termination::Converged;
                    break;
                }
            }
            Err(e) => {
                termination = Termination::Failed(e.to_string());
                break;
            }
        }
    }
    Ok(Trajectory {
        kind,
        states,
        termination,
        max_area_drift: max_drift,
    })
}

fn next_area_drift<T: Real>(state: &FlowState<T>) -> T {
    let four_pi = T::of(4.0) * T::pi();
    (state.diagnostics.area - four_pi).abs()
}

/// Pulls a normalized-flow trajectory back to the modified flow along the
/// isotopy generated by -(1/2) grad f(t). Every snapshot must carry its
/// entropy minimizer. `substeps` RK4 steps integrate the node transport
/// across each snapshot interval, with the velocity field interpolated
/// linearly in time.
pub fn gauge_transfer<T: Real>(traj: &Trajectory<T>, substeps: usize) -> Result<Trajectory<T>> {
    if traj.kind != FlowKind::Normalized {
        return Err(Error::Usage("gauge transfer consumes a normalized trajectory".into()));
    }
    if traj.states.len() < 2 {
        return Err(Error::Usage("gauge transfer needs at least two snapshots".into()));
    }
    if substeps == 0 {
        return Err(Error::Config("substeps must be positive".into()));
    }
    let grid = traj.states[0].metric.grid().clone();
    let n = grid.n();

    // per-snapshot conformal factor and minimizer derivative
    let mut factors = Vec::with_capacity(traj.states.len());
    for state in &traj.states {
        let Metric::Conformal(m) = &state.metric else {
            return Err(Error::Usage("gauge transfer expects conformal snapshots".into()));
        };
        let f = state
            .minimizer
            .as_ref()
            .ok_or_else(|| Error::Usage("snapshot without entropy minimizer".into()))?;
        let a = m.phi().values().map(|p| (T::of(2.0) * p).exp());
        let fprime = grid.diff(f.minimizer_f.values());
        factors.push((state.time, a, fprime));
    }

    let vel = |w: T, i0: usize, i1: usize, y: T| -> T {
        let (_, a0, fp0) = &factors[i0];
        let (_, a1, fp1) = &factors[i1];
        let a = (T::one() - w) * grid.interpolate(a0, y) + w * grid.interpolate(a1, y);
        let fp = (T::one() - w) * grid.interpolate(fp0, y) + w * grid.interpolate(fp1, y);
        -(T::one() - y * y) * fp / (T::of(2.0) * a)
    };

    let mut y = DVector::from_fn(n, |i, _| grid.nodes()[i]);
    let mut out_states: Vec<FlowState<T>> = Vec::with_capacity(traj.states.len());
    let mut warm: Option<ScalarField<T>> = None;

    for (idx, state) in traj.states.iter().enumerate() {
        if idx > 0 {
            let t0 = factors[idx - 1].0;
            let t1 = factors[idx].0;
            let h = (t1 - t0) / T::of(substeps as f64);
            for s in 0..substeps {
                let tau = t0 + T::of(s as f64) * h;
                let wt = |tt: T| (tt - t0) / (t1 - t0);
                let y0 = y.clone();
                let k1 = DVector::from_fn(n, |i, _| vel(wt(tau), idx - 1, idx, y0[i]));
                let half = T::of(0.5);
                let y1 = DVector::from_fn(n, |i, _| y0[i] + half * h * k1[i]);
                let k2 = DVector::from_fn(n, |i, _| vel(wt(tau + half * h), idx - 1, idx, y1[i]));
                let y2 = DVector::from_fn(n, |i, _| y0[i] + half * h * k2[i]);
                let k3 = DVector::from_fn(n, |i, _| vel(wt(tau + half * h), idx - 1, idx, y2[i]));
                let y3 = DVector::from_fn(n, |i, _| y0[i] + h * k3[i]);
                let k4 = DVector::from_fn(n, |i, _| vel(wt(tau + h), idx - 1, idx, y3[i]));
                let sixth = h / T::of(6.0);
                y = DVector::from_fn(n, |i, _| {
                    y0[i] + sixth * (k1[i] + T::of(2.0) * k2[i] + T::of(2.0) * k3[i] + k4[i])
                });
            }
            for i in 0..n {
                if !(y[i] > -T::one() && y[i] < T::one()) || (i > 0 && y[i] <= y[i - 1]) {
                    return Err(Error::Transfer(
                        "transported chart map lost monotonicity; refine the stepping".into(),
                    ));
                }
            }
        }

        let Metric::Conformal(m) = &state.metric else { unreachable!() };
        let source = m.to_warped();
        let map = ScalarField::new(grid.clone(), y.clone())?;
        let pulled = source
            .pullback_by_profile_diffeo(&map)
            .map_err(|e| Error::Transfer(format!("pullback failed: {e}")))?;
        let metric = Metric::Warped(pulled);
        // warm start from the pulled-back minimizer
        let f_src = state.minimizer.as_ref().expect("checked above");
        let f_warm = ScalarField::new(
            grid.clone(),
            DVector::from_fn(n, |i, _| grid.interpolate(f_src.minimizer_f.values(), y[i])),
        )?;
        let warm_ref = warm.take();
        let _ = warm_ref; // the pulled-back minimizer is the better start
        let (diag, res) = diagnose(&metric, &traj_entropy_cfg(), Some(&f_warm), state.diagnostics.dt_used)?;
        warm = Some(res.minimizer_f.clone());
        out_states.push(FlowState {
            time: state.time,
            metric,
            minimizer: Some(res),
            diagnostics: diag,
        });
    }

    Ok(Trajectory {
        kind: FlowKind::Modified,
        states: out_states,
        termination: traj.termination.clone(),
        max_area_drift: traj.max_area_drift,
    })
}

fn traj_entropy_cfg<T: Real>() -> EntropyConfig<T> {
    EntropyConfig::default()
}

/// Uniform rescale restoring area 4*pi.
pub fn area_projection<T: Real>(metric: &Metric<T>) -> (Metric<T>, T) {
    metric.area_projected()
}
