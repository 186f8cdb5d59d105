//! Self-verification suite: the invariant checks behind the `verify`
//! command. Each check returns a pass/fail row; the fast subset keeps the
//! whole table under a few seconds.

use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::entropy::{self, EntropyConfig};
use crate::field::{ScalarField, SymTensor2};
use crate::flows::{self, FlowKind, StepperConfig, Termination};
use crate::geometry;
use crate::grid::Grid;
use crate::metric::{ConformalMetric, Metric, WarpedMetric};
use crate::mu_round;

#[derive(Clone, Debug)]
pub struct VerifyRow {
    pub name: String,
    pub detail: String,
    pub pass: bool,
    pub seconds: f64,
}

fn row(name: &str, started: Instant, pass: bool, detail: String) -> VerifyRow {
    VerifyRow {
        name: name.to_string(),
        detail,
        pass,
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// Gauss-Bonnet row against a supplied curvature field; exposed so a test
/// fixture can inject a corrupted curvature and watch the row fail.
pub fn gauss_bonnet_row(metric: &Metric<f64>, r: &ScalarField<f64>) -> VerifyRow {
    let started = Instant::now();
    let eight_pi = 8.0 * std::f64::consts::PI;
    match geometry::integrate(metric, r) {
        Ok(total) => {
            let dev = (total - eight_pi).abs();
            row(
                "gauss_bonnet",
                started,
                dev < 1e-7,
                format!("|int R dVol - 8 pi| = {dev:.3e}"),
            )
        }
        Err(e) => row("gauss_bonnet", started, false, e.to_string()),
    }
}

fn sample_metrics(grid: &Grid<f64>) -> Vec<(String, Metric<f64>)> {
    let mut out: Vec<(String, Metric<f64>)> = vec![
        ("round".into(), Metric::round(grid)),
        (
            "conformal_p2".into(),
            Metric::Conformal(
                ConformalMetric::new(ScalarField::legendre(grid, 2).scale(0.1))
                    .area_projected()
                    .0,
            ),
        ),
        (
            "conformal_p3".into(),
            Metric::Conformal(
                ConformalMetric::new(ScalarField::legendre(grid, 3).scale(-0.07))
                    .area_projected()
                    .0,
            ),
        ),
    ];
    let rep = ScalarField::from_fn(grid, |x| x + 0.12 * (1.0 - x * x));
    let pulled = WarpedMetric::round(grid)
        .pullback_by_profile_diffeo(&rep)
        .expect("monotone reparametrization");
    out.push(("pullback_round".into(), Metric::Warped(pulled)));
    out
}

fn random_series(rng: &mut ChaCha8Rng, grid: &Grid<f64>, scale: f64) -> ScalarField<f64> {
    let coeffs: Vec<f64> = (1..=6)
        .map(|k| rng.random_range(-1.0..1.0) * scale / (k * k) as f64)
        .collect();
    ScalarField::from_fn(grid, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * crate::grid::legendre_scalar(i + 1, x))
            .sum()
    })
}

/// Regular random tensor direction: h_psipsi/(1-x^2) matches h_thth at the
/// poles.
fn random_tensor(rng: &mut ChaCha8Rng, grid: &Grid<f64>, scale: f64) -> SymTensor2<f64> {
    let zeta = random_series(rng, grid, scale);
    let xi = random_series(rng, grid, scale);
    let thth = zeta.values().clone();
    let psipsi = DVector::from_fn(grid.n(), |i, _| {
        let x = grid.nodes()[i];
        let s2 = 1.0 - x * x;
        s2 * (zeta.values()[i] + s2 * xi.values()[i])
    });
    SymTensor2::new(grid.clone(), thth, psipsi).expect("finite tensor")
}

fn check_quadrature(grid: &Grid<f64>) -> VerifyRow {
    let started = Instant::now();
    let four_pi = 4.0 * std::f64::consts::PI;
    let sum: f64 = grid.quadrature_weights().sum();
    let p2 = grid.legendre(2);
    let int_p2: f64 = grid.quadrature_weights().dot(&p2);
    let pass = (sum - four_pi).abs() < 1e-12 && int_p2.abs() < 1e-12;
    row(
        "quadrature",
        started,
        pass,
        format!(
            "|sum w - 4 pi| = {:.3e}, |int P2 dA| = {:.3e}",
            (sum - four_pi).abs(),
            int_p2.abs()
        ),
    )
}

fn check_gauss_bonnet(grid: &Grid<f64>) -> VerifyRow {
    let started = Instant::now();
    let eight_pi = 8.0 * std::f64::consts::PI;
    let mut worst = 0.0f64;
    let mut failed = None;
    for (name, m) in sample_metrics(grid) {
        match geometry::scalar_curvature(&m).and_then(|r| geometry::integrate(&m, &r)) {
            Ok(total) => {
                let dev = (total - eight_pi).abs();
                if dev > worst {
                    worst = dev;
                }
            }
            Err(e) => failed = Some(format!("{name}: {e}")),
        }
    }
    match failed {
        Some(msg) => row("gauss_bonnet", started, false, msg),
        None => row(
            "gauss_bonnet",
            started,
            worst < 1e-7,
            format!("worst |int R dVol - 8 pi| = {worst:.3e}"),
        ),
    }
}

fn check_round_spectrum(grid: &Grid<f64>) -> VerifyRow {
    let started = Instant::now();
    let m = Metric::round(grid);
    let f = ScalarField::constant(grid, (4.0 * std::f64::consts::PI).ln());
    match entropy::weighted_laplacian_spectrum(&m, &f, 6) {
        Ok(spec) => {
            let mut worst = 0.0f64;
            for (k, lam) in spec.eigenvalues.iter().enumerate() {
                worst = worst.max((lam - (k * (k + 1)) as f64).abs());
            }
            let lambda1 = spec.eigenvalues[1];
            row(
                "weighted_spectrum",
                started,
                worst < 1e-6 && lambda1 > 1.0,
                format!("max |lambda_k - k(k+1)| = {worst:.3e}, lambda_1 = {lambda1:.9}"),
            )
        }
        Err(e) => row("weighted_spectrum", started, false, e.to_string()),
    }
}

fn check_wbar_identity(grid: &Grid<f64>, samples: usize) -> VerifyRow {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let phi = random_series(&mut rng, grid, 0.15);
        let m = Metric::Conformal(ConformalMetric::new(phi));
        let raw = random_series(&mut rng, grid, 0.4);
        let mut u = raw.values().map(f64::exp);
        let chart_m = geometry::scalar_curvature(&m).unwrap(); // metric validity probe
        let _ = chart_m;
        // normalize int u^2 dVol = 1
        let (a, b) = m.components();
        let _ = (a, b);
        let qw = grid.quadrature_weights();
        let phi_v = match &m {
            Metric::Conformal(c) => c.phi().values().clone(),
            _ => unreachable!(),
        };
        let mut mass = 0.0;
        for i in 0..grid.n() {
            mass += qw[i] * (2.0 * phi_v[i]).exp() * u[i] * u[i];
        }
        u /= mass.sqrt();
        let uf = ScalarField::new(grid.clone(), u.clone()).unwrap();
        let ff = ScalarField::new(grid.clone(), u.map(|v| -2.0 * v.ln())).unwrap();
        let wb = entropy::wbar_functional(&m, &uf).unwrap();
        let w = entropy::w_functional(&m, &ff).unwrap();
        worst = worst.max((wb - w).abs());
    }
    row(
        "wbar_identity",
        started,
        worst < 1e-10,
        format!("max |W(g, -2 log u) - Wbar(g, u)| = {worst:.3e} over {samples} samples"),
    )
}

fn check_round_baseline(grid: &Grid<f64>) -> VerifyRow {
    let started = Instant::now();
    let m = Metric::round(grid);
    match entropy::minimize_w(&m, &EntropyConfig::default()) {
        Ok(res) => {
            let gap = (res.mu - mu_round::<f64>()).abs();
            let fdev = res
                .minimizer_f
                .values()
                .iter()
                .map(|v| (v - (4.0 * std::f64::consts::PI).ln()).abs())
                .fold(0.0f64, f64::max);
            row(
                "round_baseline",
                started,
                gap < 1e-9 && fdev < 1e-8,
                format!("|mu - (1 + log 4 pi)| = {gap:.3e}, |f - log 4 pi| = {fdev:.3e}"),
            )
        }
        Err(e) => row("round_baseline", started, false, e.to_string()),
    }
}

fn check_first_variation(grid: &Grid<f64>, samples: usize) -> VerifyRow {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let phi = random_series(&mut rng, grid, 0.12);
        let m = Metric::Conformal(ConformalMetric::new(phi));
        let warped = match &m {
            Metric::Conformal(c) => c.to_warped(),
            _ => unreachable!(),
        };
        // normalized f
        let raw = random_series(&mut rng, grid, 0.2);
        let chart_mass: f64 = {
            let mut s = 0.0;
            let qw = grid.quadrature_weights();
            let Metric::Conformal(c) = &m else { unreachable!() };
            for i in 0..grid.n() {
                s += qw[i] * (2.0 * c.phi().values()[i]).exp() * (-raw.values()[i]).exp();
            }
            s
        };
        let f = raw.map(|v| v + chart_mass.ln());
        let h = random_tensor(&mut rng, grid, 0.3);
        let v = random_series(&mut rng, grid, 0.25);
        let analytic = entropy::w_first_variation(&m, &f, &h, &v).unwrap();
        let w_at = |eps: f64| {
            let a = DVector::from_fn(grid.n(), |i, _| {
                warped.a_sq().values()[i] + eps * h.thth()[i]
            });
            let b = DVector::from_fn(grid.n(), |i, _| {
                warped.b_sq().values()[i] + eps * h.psipsi()[i]
            });
            let wm = WarpedMetric::new(
                ScalarField::new(grid.clone(), a).unwrap(),
                ScalarField::new(grid.clone(), b).unwrap(),
            )
            .unwrap();
            let fe = f.zip_map(&v, move |fi, vi| fi + eps * vi).unwrap();
            entropy::w_functional_unchecked(&Metric::Warped(wm), &fe)
        };
        let eps = 1e-4;
        let d1 = (w_at(eps) - w_at(-eps)) / (2.0 * eps);
        let d2 = (w_at(eps / 2.0) - w_at(-eps / 2.0)) / eps;
        let fd = (4.0 * d2 - d1) / 3.0;
        let rel = (fd - analytic).abs() / analytic.abs().max(1e-12);
        worst = worst.max(rel);
    }
    row(
        "w_first_variation_fd",
        started,
        worst < 1e-6,
        format!("worst relative FD defect = {worst:.3e} over {samples} samples"),
    )
}

fn check_mu_gradient_fd(grid: &Grid<f64>) -> VerifyRow {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let phi = random_series(&mut rng, grid, 0.08);
    let (mc, _) = ConformalMetric::new(phi).area_projected();
    let warped = mc.to_warped();
    let m = Metric::Warped(warped.clone());
    let cfg = EntropyConfig::default();
    let res = match entropy::minimize_w(&m, &cfg) {
        Ok(r) => r,
        Err(e) => return row("mu_gradient_fd", started, false, e.to_string()),
    };
    let grad = entropy::mu_gradient_from(&m, &res).unwrap();
    let h = random_tensor(&mut rng, grid, 0.3);
    // (grad mu, h)_g = (1/2) int <grad mu, h> e^{-f} dVol
    let inner = geometry::tensor_inner(&m, &grad, &h).unwrap();
    let chart_weights = {
        let mut s = vec![0.0; grid.n()];
        let qw = grid.quadrature_weights();
        let c = warped.c_ratio();
        for i in 0..grid.n() {
            s[i] = qw[i] * (warped.a_sq().values()[i] * c[i]).sqrt();
        }
        s
    };
    let mut pairing = 0.0;
    for (i, w) in chart_weights.iter().enumerate() {
        pairing += 0.5 * w * inner.values()[i] * (-res.minimizer_f.values()[i]).exp();
    }
    let mu_at = |eps: f64| {
        let a = DVector::from_fn(grid.n(), |i, _| warped.a_sq().values()[i] + eps * h.thth()[i]);
        let b = DVector::from_fn(grid.n(), |i, _| {
            warped.b_sq().values()[i] + eps * h.psipsi()[i]
        });
        let wm = WarpedMetric::new(
            ScalarField::new(grid.clone(), a).unwrap(),
            ScalarField::new(grid.clone(), b).unwrap(),
        )
        .unwrap();
        entropy::minimize_w_warm(&Metric::Warped(wm), &cfg, Some(&res.minimizer_f))
            .unwrap()
            .mu
    };
    let eps = 1e-4;
    let d1 = (mu_at(eps) - mu_at(-eps)) / (2.0 * eps);
    let d2 = (mu_at(eps / 2.0) - mu_at(-eps / 2.0)) / eps;
    let fd = (4.0 * d2 - d1) / 3.0;
    let rel = (fd - pairing).abs() / pairing.abs().max(1e-12);
    row(
        "mu_gradient_fd",
        started,
        rel < 1e-5,
        format!("relative defect dmu vs (grad mu, h) = {rel:.3e}"),
    )
}

fn check_fixed_points(grid: &Grid<f64>) -> VerifyRow {
    let started = Instant::now();
    let cfg = StepperConfig::default();
    let traj = match flows::run_flow(&Metric::round(grid), &cfg, FlowKind::Normalized) {
        Ok(t) => t,
        Err(e) => return row("fixed_points", started, false, e.to_string()),
    };
    let immediate = traj.termination == Termination::Converged && traj.states.len() == 1;
    // one explicit normalized step away from round stays at round
    let state = traj.states[0].clone();
    let stepped = flows::ricci_step(&state, 0.5, &cfg);
    let stays = match stepped {
        Ok(s) => {
            let Metric::Conformal(c) = &s.metric else {
                return row("fixed_points", started, false, "wrong representation".into());
            };
            c.phi().sup_norm() < 1e-10
        }
        Err(e) => return row("fixed_points", started, false, e.to_string()),
    };
    row(
        "fixed_points",
        started,
        immediate && stays,
        format!("immediate convergence: {immediate}, |phi| after step < 1e-10: {stays}"),
    )
}

fn check_flow_monotonicity(grid: &Grid<f64>, horizon: f64) -> VerifyRow {
    let started = Instant::now();
    let phi = ScalarField::legendre(grid, 2).scale(0.1);
    let (m, _) = ConformalMetric::new(phi).area_projected();
    let cfg = StepperConfig {
        snapshot_cadence: 0.1,
        horizon,
        ..StepperConfig::default()
    };
    match flows::run_flow(&Metric::Conformal(m), &cfg, FlowKind::Normalized) {
        Ok(traj) => {
            let mut worst: f64 = 0.0;
            let mus: Vec<f64> = traj.states.iter().map(|s| s.diagnostics.mu).collect();
            for w in mus.windows(2) {
                worst = worst.max(w[0] - w[1]);
            }
            let bound_ok = mus.iter().all(|&v| v <= mu_round::<f64>() + 1e-9);
            row(
                "mu_monotonicity",
                started,
                worst < 1e-10 && bound_ok,
                format!("worst per-snapshot decrease = {worst:.3e}"),
            )
        }
        Err(e) => row("mu_monotonicity", started, false, e.to_string()),
    }
}

fn check_gauge_transfer(grid: &Grid<f64>) -> VerifyRow {
    let started = Instant::now();
    let phi = ScalarField::legendre(grid, 2).scale(0.1);
    let (m0, _) = ConformalMetric::new(phi).area_projected();
    let cfg = StepperConfig {
        snapshot_cadence: 0.05,
        horizon: 0.4,
        conv_sup_r_dev: 1e-14,
        conv_grad_mu_norm: 1e-16,
        ..StepperConfig::default()
    };
    let src = match flows::run_flow(&Metric::Conformal(m0.clone()), &cfg, FlowKind::Normalized) {
        Ok(t) => t,
        Err(e) => return row("gauge_transfer", started, false, e.to_string()),
    };
    let transferred = match flows::gauge_transfer(&src, 4) {
        Ok(t) => t,
        Err(e) => return row("gauge_transfer", started, false, e.to_string()),
    };
    let direct_cfg = StepperConfig {
        fixed_dt: Some(5e-4),
        snapshot_cadence: 0.05,
        horizon: 0.4,
        conv_sup_r_dev: 1e-14,
        conv_grad_mu_norm: 1e-16,
        ..StepperConfig::default()
    };
    let direct = match flows::run_flow(&Metric::Warped(m0.to_warped()), &direct_cfg, FlowKind::Modified)
    {
        Ok(t) => t,
        Err(e) => return row("gauge_transfer", started, false, e.to_string()),
    };
    let n = transferred.states.len().min(direct.states.len());
    let mut dist = 0.0f64;
    for i in 0..n {
        let Metric::Warped(a) = &transferred.states[i].metric else {
            return row("gauge_transfer", started, false, "wrong representation".into());
        };
        let Metric::Warped(b) = &direct.states[i].metric else {
            return row("gauge_transfer", started, false, "wrong representation".into());
        };
        dist = dist.max(a.a_sq().sup_distance(b.a_sq()).unwrap());
        dist = dist.max(a.b_sq().sup_distance(b.b_sq()).unwrap());
    }
    // mu is invariant under the transfer
    let mut mu_dev = 0.0f64;
    for i in 0..n {
        mu_dev = mu_dev.max(
            (transferred.states[i].diagnostics.mu - src.states[i].diagnostics.mu).abs(),
        );
    }
    row(
        "gauge_transfer",
        started,
        dist < 5e-4 && mu_dev < 1e-8,
        format!("sup metric distance = {dist:.3e}, mu invariance defect = {mu_dev:.3e}"),
    )
}

/// Runs the verification suite. `fast` confines the table to the cheap rows
/// on a coarser grid.
pub fn run_suite(fast: bool) -> Vec<VerifyRow> {
    let n = if fast { 32 } else { 64 };
    let grid = Grid::<f64>::new(n).expect("valid verification grid");
    let mut rows = vec![
        check_quadrature(&grid),
        check_gauss_bonnet(&grid),
        check_round_spectrum(&grid),
        check_wbar_identity(&grid, if fast { 5 } else { 20 }),
        check_round_baseline(&grid),
        check_first_variation(&grid, if fast { 2 } else { 5 }),
        check_fixed_points(&grid),
        check_flow_monotonicity(&grid, if fast { 0.5 } else { 1.5 }),
    ];
    if !fast {
        rows.push(check_mu_gradient_fd(&grid));
        rows.push(check_gauge_transfer(&grid));
    }
    rows
}
