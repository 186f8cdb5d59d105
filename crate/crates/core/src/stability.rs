//! Experiment layer: perturbation families around the round metric, flow
//! sweeps, Lojasiewicz-exponent and decay-rate fits, the basin-of-stability
//! experiment, and report assembly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::entropy::{self, EntropyConfig};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::flows::{self, FlowKind, StepperConfig, Termination, Trajectory};
use crate::geometry;
use crate::grid::Grid;
use crate::io::{trajectory_rows, TrajectoryRow};
use crate::metric::{ConformalMetric, Metric, WarpedMetric};
use crate::mu_round;
use crate::real::Real;

/// Entropy gap below which trajectory points sit in the solver noise floor
/// and are excluded from fits (10x the default Euler-Lagrange tolerance).
pub const GAP_FLOOR: f64 = 1e-9;

/// Fraction of the run excluded from fit windows as pre-asymptotic transient.
pub const TRANSIENT_FRACTION: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbationKind {
    ConformalMode,
    WarpedMode,
    RandomSmooth,
}

/// A sampled element of the perturbation neighborhood of the round metric.
#[derive(Clone, Copy, Debug)]
pub struct Perturbation<T: Real> {
    pub kind: PerturbationKind,
    /// Legendre mode index (ignored for random perturbations).
    pub mode: usize,
    pub amplitude: T,
    /// Seed for the random-smooth family.
    pub seed: u64,
}

/// Builds the perturbed, area-projected metric.
pub fn perturb_round<T: Real>(p: &Perturbation<T>, grid: &Grid<T>) -> Result<Metric<T>> {
    if !p.amplitude.is_finite_scalar() {
        return Err(Error::Domain("perturbation amplitude must be finite".into()));
    }
    match p.kind {
        PerturbationKind::ConformalMode => {
            let phi = ScalarField::legendre(grid, p.mode).scale(p.amplitude);
            let (m, _) = ConformalMetric::new(phi).area_projected();
            Ok(Metric::Conformal(m))
        }
        PerturbationKind::WarpedMode => {
            if p.amplitude.abs() > T::of(0.5) {
                return Err(Error::Domain(
                    "warped-mode amplitude beyond the positivity bound".into(),
                ));
            }
            let pk = grid.legendre(p.mode);
            let n = grid.n();
            let bump = nalgebra::DVector::from_fn(n, |i, _| {
                let x = grid.nodes()[i];
                (T::one() - x * x) * pk[i] * p.amplitude
            });
            let a = nalgebra::DVector::from_fn(n, |i, _| T::one() + bump[i]);
            let c = nalgebra::DVector::from_fn(n, |i, _| T::one() - bump[i]);
            let (m, _) = WarpedMetric::from_components(grid, a, c)?.area_projected();
            Ok(Metric::Warped(m))
        }
        PerturbationKind::RandomSmooth => {
            let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
            let coeffs: Vec<T> = (1..=8)
                .map(|k| T::of(rng.random_range(-1.0..1.0) / ((k * k) as f64)))
                .collect();
            let phi = ScalarField::from_fn(grid, |x| {
                let mut v = T::zero();
                for (k, c) in coeffs.iter().enumerate() {
                    v += *c * crate::grid::legendre_scalar(k + 1, x);
                }
                v * p.amplitude
            });
            let (m, _) = ConformalMetric::new(phi).area_projected();
            Ok(Metric::Conformal(m))
        }
    }
}

/// Gauge-invariant proximity to the round metric: max(sup|R-2|, |grad mu|).
/// Both vanish exactly on metrics isometric to round in this class.
pub fn distance_to_einstein<T: Real>(metric: &Metric<T>, cfg: &EntropyConfig<T>) -> Result<T> {
    let res = entropy::minimize_w(metric, cfg).map_err(Error::from)?;
    let grad = entropy::mu_gradient_norm_from(metric, &res)?;
    let sup = flows::sup_r_dev(metric)?;
    Ok(sup.max(grad))
}

fn least_squares<T: Real>(x: &[T], y: &[T]) -> (T, T, T) {
    let n = T::of(x.len() as f64);
    let mut sx = T::zero();
    let mut sy = T::zero();
    for i in 0..x.len() {
        sx += x[i];
        sy += y[i];
    }
    let mx = sx / n;
    let my = sy / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut syy = T::zero();
    for i in 0..x.len() {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == T::zero() {
        T::one()
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    (slope, intercept, r2)
}

/// Fitted Lojasiewicz relation |grad mu| ~ C * gap^alpha.
#[derive(Clone, Copy, Debug)]
pub struct LojasiewiczFit<T: Real> {
    pub alpha: T,
    /// Least-squares intercept log C.
    pub log_c: T,
    /// Largest constant for which |grad mu| >= c_lower * gap^alpha holds at
    /// every point of the fit window.
    pub c_lower: T,
    pub r_squared: T,
    /// Time range of the usable points.
    pub window: (T, T),
    pub n_points: usize,
}

fn usable_window<T: Real>(rows: &[TrajectoryRow<T>]) -> Vec<&TrajectoryRow<T>> {
    let t_end = rows.last().map(|r| r.t).unwrap_or_else(T::zero);
    let t_min = T::of(TRANSIENT_FRACTION) * t_end;
    let mu_max = mu_round::<T>();
    rows.iter()
        .filter(|r| {
            let gap = mu_max - r.mu;
            r.t >= t_min && gap > T::of(GAP_FLOOR) && r.grad_mu_norm > T::zero()
        })
        .collect()
}

/// Fits log |grad mu| against log(mu_round - mu) over the usable window.
pub fn lojasiewicz_probe<T: Real>(rows: &[TrajectoryRow<T>]) -> Result<LojasiewiczFit<T>> {
    if rows.len() < 20 {
        return Err(Error::Fit(format!(
            "need at least 20 snapshots, got {}",
            rows.len()
        )));
    }
    let mu_max = mu_round::<T>();
    let usable = usable_window(rows);
    if usable.len() < 5 {
        return Err(Error::Fit(format!(
            "only {} usable points above the gap floor",
            usable.len()
        )));
    }
    let xs: Vec<T> = usable.iter().map(|r| (mu_max - r.mu).ln()).collect();
    let ys: Vec<T> = usable.iter().map(|r| r.grad_mu_norm.ln()).collect();
    let (alpha, log_c, r2) = least_squares(&xs, &ys);
    let mut min_resid = T::of(f64::INFINITY);
    for i in 0..xs.len() {
        min_resid = min_resid.min(ys[i] - alpha * xs[i]);
    }
    Ok(LojasiewiczFit {
        alpha,
        log_c,
        c_lower: min_resid.exp(),
        r_squared: r2,
        window: (usable[0].t, usable[usable.len() - 1].t),
        n_points: usable.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecayModel {
    Exponential,
    Polynomial,
}

impl DecayModel {
    pub fn name(self) -> &'static str {
        match self {
            DecayModel::Exponential => "exponential",
            DecayModel::Polynomial => "polynomial",
        }
    }
}

/// One decay-law fit: exponential gap ~ a e^{-rate t} or polynomial
/// gap ~ a (t+1)^{-rate}.
#[derive(Clone, Copy, Debug)]
pub struct DecayModelFit<T: Real> {
    pub model: DecayModel,
    pub rate: T,
    pub log_amplitude: T,
    pub r_squared: T,
}

/// Both decay models fitted to the entropy gap and to sup|R-2|.
#[derive(Clone, Debug)]
pub struct DecayFit<T: Real> {
    pub mu_gap: [DecayModelFit<T>; 2],
    pub sup_r_dev: [DecayModelFit<T>; 2],
    /// Model with better goodness on the entropy gap.
    pub preferred: DecayModel,
    pub window: (T, T),
    pub n_points: usize,
}

fn fit_decay_pair<T: Real>(ts: &[T], logv: &[T]) -> [DecayModelFit<T>; 2] {
    let (s_exp, a_exp, r2_exp) = least_squares(ts, logv);
    let log_t1: Vec<T> = ts.iter().map(|t| (*t + T::one()).ln()).collect();
    let (s_pol, a_pol, r2_pol) = least_squares(&log_t1, logv);
    [
        DecayModelFit {
            model: DecayModel::Exponential,
            rate: -s_exp,
            log_amplitude: a_exp,
            r_squared: r2_exp,
        },
        DecayModelFit {
            model: DecayModel::Polynomial,
            rate: -s_pol,
            log_amplitude: a_pol,
            r_squared: r2_pol,
        },
    ]
}

/// Fits exponential and polynomial decay to the trajectory and reports both.
pub fn decay_fit<T: Real>(rows: &[TrajectoryRow<T>]) -> Result<DecayFit<T>> {
    let mu_max = mu_round::<T>();
    // the gap must be nonincreasing up to solver noise
    for w in rows.windows(2) {
        let g0 = mu_max - w[0].mu;
        let g1 = mu_max - w[1].mu;
        if g1 > g0 + T::of(1e-10) {
            return Err(Error::Data(format!(
                "entropy gap increased from {:e} to {:e} at t = {}",
                g0.as_f64(),
                g1.as_f64(),
                w[1].t
            )));
        }
    }
    let usable = usable_window(rows);
    if usable.len() < 5 {
        return Err(Error::Fit(format!(
            "only {} usable points above the gap floor",
            usable.len()
        )));
    }
    let ts: Vec<T> = usable.iter().map(|r| r.t).collect();
    let log_gap: Vec<T> = usable.iter().map(|r| (mu_max - r.mu).ln()).collect();
    let mu_gap = fit_decay_pair(&ts, &log_gap);

    let sup_usable: Vec<&&TrajectoryRow<T>> = usable
        .iter()
        .filter(|r| r.sup_r_dev > T::of(1e-12))
        .collect();
    let sup_r_dev = if sup_usable.len() >= 5 {
        let ts2: Vec<T> = sup_usable.iter().map(|r| r.t).collect();
        let log_sup: Vec<T> = sup_usable.iter().map(|r| r.sup_r_dev.ln()).collect();
        fit_decay_pair(&ts2, &log_sup)
    } else {
        mu_gap
    };

    let preferred = if mu_gap[0].r_squared >= mu_gap[1].r_squared {
        DecayModel::Exponential
    } else {
        DecayModel::Polynomial
    };
    Ok(DecayFit {
        mu_gap,
        sup_r_dev,
        preferred,
        window: (usable[0].t, usable[usable.len() - 1].t),
        n_points: usable.len(),
    })
}

/// Pointwise check of the bound gap <= C (t+1)^{-exponent}: the envelope
/// constant is calibrated on the first 60% of the usable window and the
/// inequality is then verified on every usable point, so the tail is
/// out-of-sample.
#[derive(Clone, Copy, Debug)]
pub struct PolynomialBound<T: Real> {
    pub exponent: T,
    pub constant: T,
    pub holds: bool,
    pub n_checked: usize,
}

pub fn polynomial_bound_check<T: Real>(
    rows: &[TrajectoryRow<T>],
    exponent: T,
) -> Result<PolynomialBound<T>> {
    let mu_max = mu_round::<T>();
    let usable = usable_window(rows);
    if usable.len() < 5 {
        return Err(Error::Fit("too few usable points for the bound check".into()));
    }
    let split = (usable.len() * 3) / 5;
    let mut c = T::zero();
    for r in usable.iter().take(split.max(1)) {
        let gap = mu_max - r.mu;
        c = c.max(gap * (r.t + T::one()).powf(exponent));
    }
    let slack = T::one() + T::of(1e-9);
    let mut holds = true;
    for r in &usable {
        let gap = mu_max - r.mu;
        if gap > slack * c * (r.t + T::one()).powf(-exponent) {
            holds = false;
        }
    }
    Ok(PolynomialBound {
        exponent,
        constant: c,
        holds,
        n_checked: usable.len(),
    })
}

// ---------------------------------------------------------------------------
// experiment driver

/// Configuration of one experiment sweep.
#[derive(Clone, Debug)]
pub struct ExperimentConfig<T: Real> {
    pub grid_n: usize,
    pub kind: PerturbationKind,
    pub modes: Vec<usize>,
    pub amplitudes: Vec<T>,
    /// Mode used by the basin sweep; empty `basin_amplitudes` disables it.
    pub basin_mode: usize,
    pub basin_amplitudes: Vec<T>,
    pub stepper: StepperConfig<T>,
    pub seed: u64,
}

impl<T: Real> Default for ExperimentConfig<T> {
    fn default() -> Self {
        ExperimentConfig {
            grid_n: 128,
            kind: PerturbationKind::ConformalMode,
            modes: vec![2, 3, 4],
            amplitudes: vec![T::of(0.05), T::of(0.1)],
            basin_mode: 2,
            basin_amplitudes: vec![T::of(0.025), T::of(0.05), T::of(0.075), T::of(0.1)],
            stepper: StepperConfig::default(),
            seed: 42,
        }
    }
}

/// Summary of one flow run inside an experiment.
#[derive(Clone, Debug)]
pub struct CellSummary<T: Real> {
    pub label: String,
    pub mode: usize,
    pub amplitude: T,
    pub termination: String,
    pub n_snapshots: usize,
    pub final_time: T,
    pub final_mu_gap: T,
    pub final_sup_r_dev: T,
    /// Max over snapshots of the distance-to-round diagnostic.
    pub max_excursion: T,
    /// Largest per-snapshot decrease of mu (0 for a monotone run).
    pub mu_violation: T,
    /// Largest deviation of int R dVol from 8 pi over snapshots.
    pub gauss_bonnet_dev: T,
    pub max_area_drift: T,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct CheckRow {
    pub name: String,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct FitSummary<T: Real> {
    pub label: String,
    pub lojasiewicz: Option<LojasiewiczFit<T>>,
    pub decay: Option<DecayFit<T>>,
}

/// Assembled experiment report; every number is reproducible from the
/// returned trajectories.
#[derive(Clone, Debug)]
pub struct Report<T: Real> {
    pub cells: Vec<CellSummary<T>>,
    pub fits: Vec<FitSummary<T>>,
    pub checks: Vec<CheckRow>,
}

pub struct ExperimentOutcome<T: Real> {
    pub report: Report<T>,
    /// (label, trajectory) pairs matching the report cells.
    pub trajectories: Vec<(String, Trajectory<T>)>,
}

fn summarize_cell<T: Real>(
    label: &str,
    mode: usize,
    amplitude: T,
    traj: &Trajectory<T>,
) -> CellSummary<T> {
    let mu_max = mu_round::<T>();
    let termination = match &traj.termination {
        Termination::Converged => "converged".to_string(),
        Termination::HorizonReached => "horizon".to_string(),
        Termination::Failed(e) => format!("failed: {e}"),
    };
    let mut max_excursion = T::zero();
    let mut mu_violation = T::zero();
    let mut gb_dev = T::zero();
    let eight_pi = T::of(8.0) * T::pi();
    let mut prev_mu: Option<T> = None;
    for s in &traj.states {
        let d = s.diagnostics;
        max_excursion = max_excursion.max(d.sup_r_dev.max(d.grad_mu_norm));
        if let Some(p) = prev_mu {
            mu_violation = mu_violation.max(p - d.mu);
        }
        prev_mu = Some(d.mu);
        if let Ok(r) = geometry::scalar_curvature(&s.metric) {
            if let Ok(total) = geometry::integrate(&s.metric, &r) {
                gb_dev = gb_dev.max((total - eight_pi).abs());
            }
        }
    }
    let last = traj.last();
    CellSummary {
        label: label.to_string(),
        mode,
        amplitude,
        termination,
        n_snapshots: traj.states.len(),
        final_time: last.time,
        final_mu_gap: mu_max - last.diagnostics.mu,
        final_sup_r_dev: last.diagnostics.sup_r_dev,
        max_excursion,
        mu_violation,
        gauss_bonnet_dev: gb_dev,
        max_area_drift: traj.max_area_drift,
        error: None,
    }
}

fn error_cell<T: Real>(label: &str, mode: usize, amplitude: T, err: &Error) -> CellSummary<T> {
    CellSummary {
        label: label.to_string(),
        mode,
        amplitude,
        termination: "error".into(),
        n_snapshots: 0,
        final_time: T::zero(),
        final_mu_gap: T::zero(),
        final_sup_r_dev: T::zero(),
        max_excursion: T::zero(),
        mu_violation: T::zero(),
        gauss_bonnet_dev: T::zero(),
        max_area_drift: T::zero(),
        error: Some(err.to_string()),
    }
}

fn fmt_e(v: f64) -> String {
    format!("{v:.3e}")
}

/// Runs the full perturb -> flow -> fit -> check pipeline. Deterministic for
/// a fixed config and seed; cell failures are recorded, never dropped.
pub fn run_experiment<T: Real>(cfg: &ExperimentConfig<T>) -> Result<ExperimentOutcome<T>> {
    let grid = Grid::<T>::new(cfg.grid_n)?;
    let mu_max = mu_round::<T>();
    let mut cells = Vec::new();
    let mut fits = Vec::new();
    let mut checks = Vec::new();
    let mut trajectories = Vec::new();

    for &mode in &cfg.modes {
        for &amplitude in &cfg.amplitudes {
            let label = format!("mode{mode}_eps{:.4}", amplitude.as_f64());
            let p = Perturbation {
                kind: cfg.kind,
                mode,
                amplitude,
                seed: cfg.seed ^ (mode as u64),
            };
            let metric = match perturb_round(&p, &grid) {
                Ok(m) => m,
                Err(e) => {
                    cells.push(error_cell(&label, mode, amplitude, &e));
                    continue;
                }
            };
            match flows::run_flow(&metric, &cfg.stepper, FlowKind::Normalized) {
                Ok(traj) => {
                    cells.push(summarize_cell(&label, mode, amplitude, &traj));
                    let rows = trajectory_rows(&traj);
                    let lo = lojasiewicz_probe(&rows).ok();
                    let de = decay_fit(&rows).ok();
                    if lo.is_some() || de.is_some() {
                        fits.push(FitSummary {
                            label: label.clone(),
                            lojasiewicz: lo,
                            decay: de,
                        });
                    }
                    trajectories.push((label, traj));
                }
                Err(e) => cells.push(error_cell(&label, mode, amplitude, &e)),
            }
        }
    }

    // aggregate checks over the sweep cells
    if !cells.is_empty() {
        let ran: Vec<&CellSummary<T>> = cells.iter().filter(|c| c.error.is_none()).collect();
        let all_converged = ran.iter().all(|c| c.termination == "converged") && !ran.is_empty();
        checks.push(CheckRow {
            name: "flows_converged".into(),
            expected: "all runs converged".into(),
            actual: format!(
                "{}/{} converged",
                ran.iter().filter(|c| c.termination == "converged").count(),
                cells.len()
            ),
            pass: all_converged && ran.len() == cells.len(),
        });
        let worst_viol = ran
            .iter()
            .map(|c| c.mu_violation.as_f64())
            .fold(0.0, f64::max);
        checks.push(CheckRow {
            name: "mu_monotone".into(),
            expected: "per-step decrease < 1e-10".into(),
            actual: fmt_e(worst_viol),
            pass: worst_viol < 1e-10,
        });
        let worst_gb = ran
            .iter()
            .map(|c| c.gauss_bonnet_dev.as_f64())
            .fold(0.0, f64::max);
        checks.push(CheckRow {
            name: "gauss_bonnet".into(),
            expected: "|int R dVol - 8 pi| < 1e-7 at every snapshot".into(),
            actual: fmt_e(worst_gb),
            pass: worst_gb < 1e-7,
        });
        let worst_gap = ran
            .iter()
            .map(|c| c.final_mu_gap.as_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(CheckRow {
            name: "mu_upper_bound".into(),
            expected: "mu <= 1 + log 4 pi + 1e-9 throughout".into(),
            actual: fmt_e(-worst_gap.min(0.0)),
            pass: ran.iter().all(|c| c.final_mu_gap.as_f64() > -1e-9),
        });
        // mu <= bound along whole runs is implied by monotonicity + final gap
        for f in &fits {
            if let Some(lo) = &f.lojasiewicz {
                if f.label.starts_with("mode2") {
                    checks.push(CheckRow {
                        name: format!("lojasiewicz_alpha[{}]", f.label),
                        expected: "alpha in [0.45, 0.6], r^2 > 0.99".into(),
                        actual: format!(
                            "alpha = {:.4}, r^2 = {:.5}",
                            lo.alpha.as_f64(),
                            lo.r_squared.as_f64()
                        ),
                        pass: lo.alpha.as_f64() >= 0.45
                            && lo.alpha.as_f64() <= 0.6
                            && lo.r_squared.as_f64() > 0.99,
                    });
                }
            }
            if let Some(de) = &f.decay {
                if f.label.starts_with("mode2") {
                    checks.push(CheckRow {
                        name: format!("decay_exponential_preferred[{}]", f.label),
                        expected: "exponential goodness >= polynomial".into(),
                        actual: format!(
                            "exp r^2 = {:.5}, poly r^2 = {:.5}",
                            de.mu_gap[0].r_squared.as_f64(),
                            de.mu_gap[1].r_squared.as_f64()
                        ),
                        pass: de.preferred == DecayModel::Exponential,
                    });
                }
            }
        }
    }

    // basin sweep: excursion should be monotone in the initial amplitude and
    // mu must stay below the round bound along every run
    if !cfg.basin_amplitudes.is_empty() {
        let mut excursions: Vec<(T, Option<T>)> = Vec::new();
        for &amplitude in &cfg.basin_amplitudes {
            let label = format!("basin_mode{}_eps{:.4}", cfg.basin_mode, amplitude.as_f64());
            if amplitude == T::zero() {
                // zero row: round metric, zero excursion by construction
                let metric = Metric::round(&grid);
                match flows::run_flow(&metric, &cfg.stepper, FlowKind::Normalized) {
                    Ok(traj) => {
                        let cell = summarize_cell(&label, cfg.basin_mode, amplitude, &traj);
                        excursions.push((amplitude, Some(cell.max_excursion)));
                        cells.push(cell);
                        trajectories.push((label, traj));
                    }
                    Err(e) => {
                        cells.push(error_cell(&label, cfg.basin_mode, amplitude, &e));
                        excursions.push((amplitude, None));
                    }
                }
                continue;
            }
            let p = Perturbation {
                kind: cfg.kind,
                mode: cfg.basin_mode,
                amplitude,
                seed: cfg.seed,
            };
            let outcome = perturb_round(&p, &grid)
                .and_then(|m| flows::run_flow(&m, &cfg.stepper, FlowKind::Normalized));
            match outcome {
                Ok(traj) => {
                    let cell = summarize_cell(&label, cfg.basin_mode, amplitude, &traj);
                    excursions.push((amplitude, Some(cell.max_excursion)));
                    cells.push(cell);
                    trajectories.push((label, traj));
                }
                Err(e) => {
                    cells.push(error_cell(&label, cfg.basin_mode, amplitude, &e));
                    excursions.push((amplitude, None));
                }
            }
        }
        let mut monotone = true;
        let mut prev: Option<T> = None;
        for (_, exc) in &excursions {
            match exc {
                Some(e) => {
                    if let Some(p) = prev {
                        if *e < p - T::of(1e-12) {
                            monotone = false;
                        }
                    }
                    prev = Some(*e);
                }
                None => monotone = false,
            }
        }
        checks.push(CheckRow {
            name: "basin_excursion_monotone".into(),
            expected: "max excursion nondecreasing in amplitude".into(),
            actual: format!(
                "[{}]",
                excursions
                    .iter()
                    .map(|(a, e)| format!(
                        "{:.3}:{}",
                        a.as_f64(),
                        e.map_or("err".into(), |v| fmt_e(v.as_f64()))
                    ))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            pass: monotone,
        });
        let _ = mu_max;
    }

    Ok(ExperimentOutcome {
        report: Report {
            cells,
            fits,
            checks,
        },
        trajectories,
    })
}

/// Basin-of-stability sweep on its own: for each amplitude, run the flow and
/// record the largest excursion of the distance-to-round diagnostic.
pub fn basin_experiment<T: Real>(
    amplitudes: &[T],
    cfg: &ExperimentConfig<T>,
) -> Result<ExperimentOutcome<T>> {
    let mut basin_cfg = cfg.clone();
    basin_cfg.modes = Vec::new();
    basin_cfg.amplitudes = Vec::new();
    basin_cfg.basin_amplitudes = amplitudes.to_vec();
    run_experiment(&basin_cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_rows(
        n: usize,
        t_end: f64,
        gap: impl Fn(f64) -> f64,
        grad: impl Fn(f64) -> f64,
    ) -> Vec<TrajectoryRow<f64>> {
        let mu_max = mu_round::<f64>();
        (0..n)
            .map(|i| {
                let t = t_end * i as f64 / (n - 1) as f64;
                TrajectoryRow {
                    t,
                    mu: mu_max - gap(t),
                    grad_mu_norm: grad(t),
                    area: 4.0 * std::f64::consts::PI,
                    sup_r_dev: gap(t).sqrt(),
                    dt: 1e-3,
                }
            })
            .collect()
    }

    #[test]
    fn lojasiewicz_recovers_planted_exponent() {
        let rows = synthetic_rows(40, 8.0, |t| (-2.0 * t).exp(), |t| (-t).exp());
        let fit = lojasiewicz_probe(&rows).unwrap();
        assert!((fit.alpha - 0.5).abs() < 1e-3, "alpha {}", fit.alpha);
        assert!(fit.r_squared > 0.9999);
        assert!(fit.c_lower > 0.0);
    }

    #[test]
    fn lojasiewicz_rejects_degenerate_input() {
        // stationary trajectory: no usable gap
        let rows = synthetic_rows(40, 8.0, |_| 0.0, |_| 0.0);
        assert!(matches!(lojasiewicz_probe(&rows), Err(Error::Fit(_))));
        // too few snapshots
        let rows = synthetic_rows(10, 8.0, |t| (-t).exp(), |t| (-t).exp());
        assert!(matches!(lojasiewicz_probe(&rows), Err(Error::Fit(_))));
    }

    #[test]
    fn decay_fit_identifies_polynomial_law() {
        let rows = synthetic_rows(60, 30.0, |t| (t + 1.0).powi(-3), |t| (t + 1.0).powi(-2));
        let fit = decay_fit(&rows).unwrap();
        assert_eq!(fit.preferred, DecayModel::Polynomial);
        let poly = &fit.mu_gap[1];
        assert!((poly.rate - 3.0).abs() / 3.0 < 0.02, "rate {}", poly.rate);
    }

    #[test]
    fn decay_fit_identifies_exponential_law() {
        let rows = synthetic_rows(60, 12.0, |t| (-t).exp(), |t| (-0.5 * t).exp());
        let fit = decay_fit(&rows).unwrap();
        assert_eq!(fit.preferred, DecayModel::Exponential);
        let exp = &fit.mu_gap[0];
        assert!((exp.rate - 1.0).abs() < 0.02, "rate {}", exp.rate);
    }

    #[test]
    fn decay_fit_rejects_non_monotone_gap() {
        let mut rows = synthetic_rows(30, 10.0, |t| (-t).exp(), |t| (-t).exp());
        rows[25].mu -= 1e-3; // gap jumps upward in the flat tail
        assert!(matches!(decay_fit(&rows), Err(Error::Data(_))));
    }

    #[test]
    fn polynomial_bound_envelope_covers_exponential_decay() {
        let rows = synthetic_rows(60, 10.0, |t| 0.01 * (-2.0 * t).exp(), |t| (-t).exp());
        let b = polynomial_bound_check(&rows, 3.0).unwrap();
        assert!(b.holds, "C = {}", b.constant);
    }

    #[test]
    fn perturbation_of_zero_amplitude_is_round() {
        let grid = Grid::<f64>::new(32).unwrap();
        for kind in [
            PerturbationKind::ConformalMode,
            PerturbationKind::WarpedMode,
            PerturbationKind::RandomSmooth,
        ] {
            let p = Perturbation {
                kind,
                mode: 2,
                amplitude: 0.0,
                seed: 1,
            };
            let m = perturb_round(&p, &grid).unwrap();
            let dev = flows::sup_r_dev(&m).unwrap();
            assert!(dev < 1e-9, "{kind:?} dev {dev}");
        }
    }

    #[test]
    fn perturbation_is_area_projected_and_curved() {
        let grid = Grid::<f64>::new(48).unwrap();
        let p = Perturbation {
            kind: PerturbationKind::ConformalMode,
            mode: 2,
            amplitude: 0.1,
            seed: 0,
        };
        let m = perturb_round(&p, &grid).unwrap();
        assert!((m.area() - 4.0 * std::f64::consts::PI).abs() < 1e-10);
        assert!(flows::sup_r_dev(&m).unwrap() > 0.1);
    }

    #[test]
    fn warped_mode_rejects_oversized_amplitude() {
        let grid = Grid::<f64>::new(32).unwrap();
        let p = Perturbation {
            kind: PerturbationKind::WarpedMode,
            mode: 2,
            amplitude: 0.8,
            seed: 0,
        };
        assert!(matches!(perturb_round(&p, &grid), Err(Error::Domain(_))));
    }

    #[test]
    fn distance_to_einstein_vanishes_on_round_and_its_pullbacks() {
        let grid = Grid::<f64>::new(48).unwrap();
        let cfg = EntropyConfig::default();
        let d0 = distance_to_einstein(&Metric::round(&grid), &cfg).unwrap();
        assert!(d0 < 1e-8, "round distance {d0}");
        let rep = ScalarField::from_fn(&grid, |x| x + 0.1 * (1.0 - x * x));
        let pulled = WarpedMetric::round(&grid)
            .pullback_by_profile_diffeo(&rep)
            .unwrap();
        let d1 = distance_to_einstein(&Metric::Warped(pulled), &cfg).unwrap();
        assert!(d1 < 1e-7, "pullback distance {d1}");
    }

    #[test]
    fn empty_experiment_yields_empty_report() {
        let cfg = ExperimentConfig::<f64> {
            grid_n: 16,
            modes: vec![],
            amplitudes: vec![],
            basin_amplitudes: vec![],
            ..ExperimentConfig::default()
        };
        let out = run_experiment(&cfg).unwrap();
        assert!(out.report.cells.is_empty());
        assert!(out.report.checks.is_empty());
        assert!(out.trajectories.is_empty());
    }
}
