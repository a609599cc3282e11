// SPDX-License-Identifier: Apache-2.0

//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tidedune::homogenize::cell_problem;
use tidedune::solver::{solve_fine, FineClock, FrozenField};
use tidedune::verify::random_zero_mean;
use tidedune::{
    closeness, contraction_ratio, derive_regime, distance_l2, norm_l2, run_sweep, sweep_against,
    Amplitude, CellProblem, Forcing, Grid, Model, PeriodicProfile, PhysicalParams, ProfileFamily,
    Reference, RegimeKind, RegimeSpec, ScalarField, SolverConfig, SweepSetup,
};

struct Gate {
    results: Vec<(String, bool)>,
    zero_means: Vec<(String, f64)>,
}

impl Gate {
    fn record(&mut self, id: &str, pass: bool, detail: String) {
        println!("{} [{id}] {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((id.to_string(), pass));
    }

    fn error(&mut self, id: &str, e: impl std::fmt::Display) {
        self.record(id, false, format!("error: {e}"));
    }

    fn profile(&mut self, label: &str, p: &PeriodicProfile) {
        self.zero_means.push((label.to_string(), p.max_abs_mean()));
    }
}

fn rotating() -> Forcing {
    Forcing::rotating(Amplitude::default())
}

fn short_small() -> RegimeSpec {
    RegimeSpec::snapped(RegimeKind::ShortSmall)
}

fn grid(n: usize) -> Grid {
    Grid::new(n).unwrap()
}

/// Root mean square over θ-samples of the L² distance between two orbits.
fn orbit_distance(a: &[ScalarField], b: &[ScalarField]) -> f64 {
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| distance_l2(x, y).unwrap().powi(2))
        .sum();
    (sum / a.len() as f64).sqrt()
}

fn orbit_norm(a: &[ScalarField]) -> f64 {
    (a.iter().map(|x| norm_l2(x).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

fn scaling(gate: &mut Gate) {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in RegimeKind::ALL {
        match derive_regime(&PhysicalParams::defaults(kind), kind) {
            Ok(d) => {
                for c in &d.checks {
                    let ok = c.within(1.5);
                    pass &= ok;
                    parts.push(format!(
                        "{kind}.{}={:.4e}/{:.4e} (x{:.3}){}",
                        c.name,
                        c.computed,
                        c.quoted,
                        c.ratio(),
                        if ok { "" } else { " OUT" }
                    ));
                }
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{kind}: {e}"));
            }
        }
    }
    gate.record("1 scaling magnitudes within x1.5", pass, parts.join("; "));
}

fn mass_conservation(gate: &mut Gate) {
    let id = "2 mass drift <= 1e-9";
    let g = grid(64);
    let regime = short_small().with_epsilon(1.0 / 50.0).unwrap();
    let cfg = SolverConfig {
        dt_per_period: 64,
        ..Default::default()
    };
    let z0 = ScalarField::from_fn(g, |[x, y]| {
        1.0 + 0.1 * (2.0 * PI * x).sin() * (2.0 * PI * y).cos()
    });
    match solve_fine(&z0, &regime, &rotating(), &cfg, 0.5) {
        Ok(traj) => {
            let drift = tidedune::mass_drift(&traj);
            gate.record(
                id,
                drift <= 1e-9,
                format!("drift={drift:.3e} steps={}", traj.steps()),
            );
        }
        Err(e) => gate.error(id, e),
    }
}

fn contraction(gate: &mut Gate) {
    let id = "3 period-map contraction <= e^-mu + 1e-6";
    let g = grid(64);
    let cfg = SolverConfig::default();
    let cell = match cell_problem(0.0, &short_small().law, &rotating(), g, &cfg) {
        Ok(c) => c,
        Err(e) => return gate.error(id, e),
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, mu) in [0.25, 0.5, 1.0].into_iter().enumerate() {
        match contraction_ratio(&cell, mu, 1e-3, 8, 100 + i as u64, &cfg) {
            Ok(r) => {
                let ok = r.max_ratio() <= r.bound() + 1e-6;
                pass &= ok;
                parts.push(format!(
                    "mu={mu}: max={:.6} bound={:.6}",
                    r.max_ratio(),
                    r.bound()
                ));
            }
            Err(e) => return gate.error(id, e),
        }
    }
    gate.record(id, pass, parts.join("; "));
}

/// `Ã ≡ 1`, `C̃ = (sin 2πx₁ cos 2πθ, 0)`.
fn oracle_field(_t: f64, _tau: f64, theta: f64, x: [f64; 2]) -> (f64, [f64; 2]) {
    (
        1.0,
        [(2.0 * PI * x[0]).sin() * (2.0 * PI * theta).cos(), 0.0],
    )
}

/// Periodic amplitudes `û_k` of `cos 2πx₁` under backward Euler with `N` steps:
/// `(1 + dθ s) û_k = û_{k-1} + dθ κ cos 2πθ_k`, where `κ` and `s` are the
/// staggered-difference symbols of divergence and Laplacian.
fn oracle_amplitudes(n: usize, steps: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let kappa = 2.0 * (PI * h).sin() / h;
    let s = 4.0 * (PI * h).sin().powi(2) / (h * h);
    let dt = 1.0 / steps as f64;
    let r = 1.0 / (1.0 + dt * s);
    let run = |u0: f64| {
        let mut u = vec![u0];
        for k in 1..=steps {
            let prev = *u.last().unwrap();
            u.push(r * (prev + dt * kappa * (2.0 * PI * k as f64 * dt).cos()));
        }
        u
    };
    let from_zero = run(0.0)[steps];
    let u0 = from_zero / (1.0 - r.powi(steps as i32));
    let mut u = run(u0);
    u.truncate(steps);
    u
}

/// Continuous-in-θ periodic solution of `û' + s û = κ cos 2πθ`.
fn oracle_continuous(n: usize, theta: f64) -> f64 {
    let h = 1.0 / n as f64;
    let kappa = 2.0 * (PI * h).sin() / h;
    let s = 4.0 * (PI * h).sin().powi(2) / (h * h);
    let w = 2.0 * PI;
    kappa * (s * (w * theta).cos() + w * (w * theta).sin()) / (s * s + w * w)
}

fn oracle_profile(gate: &mut Gate) {
    let id = "4 periodic profile vs per-mode oracle, rel L2 <= 1e-6";
    let n = 32;
    let steps = 256;
    let g = grid(n);
    let cfg = SolverConfig {
        dt_per_period: steps,
        linear_tol: 1e-13,
        ..Default::default()
    };
    let src = FrozenField {
        field: &oracle_field,
        grid: g,
        t: 0.0,
        tau: 0.0,
    };
    let p = match CellProblem::new(&src, steps).and_then(|c| c.find_periodic(&cfg, None)) {
        Ok(p) => p,
        Err(e) => return gate.error(id, e),
    };
    gate.profile("oracle", &p);
    let amps = oracle_amplitudes(n, steps);
    let mode = ScalarField::from_fn(g, |[x, _]| (2.0 * PI * x).cos());
    let exact: Vec<ScalarField> = amps.iter().map(|a| mode.scaled(*a)).collect();
    let rel = orbit_distance(p.fields(), &exact) / orbit_norm(&exact);
    let continuous: Vec<ScalarField> = (0..steps)
        .map(|k| mode.scaled(oracle_continuous(n, k as f64 / steps as f64)))
        .collect();
    let rel_cont = orbit_distance(p.fields(), &continuous) / orbit_norm(&continuous);
    gate.record(
        id,
        rel <= 1e-6,
        format!("rel={rel:.3e} (time-continuous mode solution differs by {rel_cont:.3e}, the O(dθ) time error)"),
    );
}

fn uniqueness(gate: &mut Gate) {
    let id = "6 uniqueness from random initial guesses within 10x tol";
    let g = grid(64);
    let cfg = SolverConfig::default();
    let cell = match cell_problem(0.0, &short_small().law, &rotating(), g, &cfg) {
        Ok(c) => c,
        Err(e) => return gate.error(id, e),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = random_zero_mean(g, &mut rng).scaled(5.0);
    let b = random_zero_mean(g, &mut rng).scaled(5.0);
    let (pa, pb) = match (
        cell.find_periodic(&cfg, Some(&a)),
        cell.find_periodic(&cfg, Some(&b)),
    ) {
        (Ok(pa), Ok(pb)) => (pa, pb),
        (Err(e), _) | (_, Err(e)) => return gate.error(id, e),
    };
    gate.profile("uniqueness a", &pa);
    gate.profile("uniqueness b", &pb);
    let d = pa
        .fields()
        .iter()
        .zip(pb.fields())
        .map(|(x, y)| distance_l2(x, y).unwrap())
        .fold(0.0, f64::max);
    let start = distance_l2(&a, &b).unwrap();
    gate.record(
        id,
        d <= 10.0 * cfg.fixed_point_tol,
        format!("initial distance={start:.3e} final max_theta distance={d:.3e}"),
    );
}

fn two_scale(gate: &mut Gate) {
    let t0 = Instant::now();
    let ids = [
        "7 two-scale errors decreasing, fitted order >= 0.8",
        "8 corrector: max ||(z-U)/eps|| finite, ratio <= 2, refined remainder decreasing",
    ];
    let setup = SweepSetup::new(
        short_small(),
        rotating(),
        grid(64),
        SolverConfig::default(),
        0.4,
    );
    let eps = [1.0 / 25.0, 1.0 / 50.0, 1.0 / 100.0, 1.0 / 200.0];
    let dir = tempfile::tempdir().unwrap();
    let out = match run_sweep(&setup, &eps, Some(dir.path())) {
        Ok(o) => o,
        Err(e) => {
            gate.error(ids[0], &e);
            return gate.error(ids[1], e);
        }
    };
    for p in out.profiles.profiles() {
        gate.profile(&format!("sweep t={}", p.t()), p);
    }
    let rep = &out.two_scale;
    let errors: Vec<String> = rep
        .rows
        .iter()
        .map(|r| format!("{:.4e}", r.error))
        .collect();
    let order = rep.fitted_order;
    gate.record(
        ids[0],
        rep.all_succeeded() && rep.strictly_decreasing() && order.is_some_and(|p| p >= 0.8),
        format!(
            "errors=[{}] order={} ({:.0}s)",
            errors.join(", "),
            order.map_or("undefined".into(), |p| format!("{p:.3}")),
            t0.elapsed().as_secs_f64()
        ),
    );
    let (max_scaled, ratio) = rep.scaled_summary();
    let rem: Vec<String> = rep
        .rows
        .iter()
        .map(|r| r.remainder.map_or("-".into(), |v| format!("{v:.4e}")))
        .collect();
    let solv = out
        .corrector_solution
        .as_ref()
        .map(|c| c.solvable())
        .unwrap_or(false);
    gate.record(
        ids[1],
        max_scaled.is_finite() && ratio <= 2.0 && rep.remainders_decreasing(),
        format!(
            "max={max_scaled:.4e} ratio={ratio:.3} remainders=[{}] corrector solvable={solv}",
            rem.join(", ")
        ),
    );
}

fn quasi_periodic(gate: &mut Gate) {
    let id = "9 closeness grows at most linearly, slope stable within x2 (eps 1/25 vs 1/50)";
    let g = grid(64);
    let cfg = SolverConfig::default();
    let mut slopes = Vec::new();
    let mut parts = Vec::new();
    let mut linear = true;
    for eps in [1.0 / 25.0, 1.0 / 50.0] {
        let regime = short_small().with_epsilon(eps).unwrap();
        match closeness(&regime, &rotating(), g, &cfg, 0.4, 9, None) {
            Ok(r) => {
                linear &= r.slope.is_finite() && r.excess <= 1e-9;
                slopes.push(r.slope);
                parts.push(format!(
                    "eps={eps}: e0={:.2e} slope={:.4e} secant={:.4e} excess={:.2e}",
                    r.e0, r.slope, r.secant_bound, r.excess
                ));
            }
            Err(e) => return gate.error(id, e),
        }
    }
    let ratio = slopes[1] / slopes[0];
    gate.record(
        id,
        linear && (0.5..=2.0).contains(&ratio),
        format!("{}; slope ratio={ratio:.3}", parts.join("; ")),
    );
}

fn degenerate(gate: &mut Gate) {
    let id = "10 unidirectional preset with nu down to 1e-4";
    let g = grid(64);
    let forcing = Forcing::unidirectional(Amplitude::default(), 0.0);
    let regime = short_small();
    let cfg = SolverConfig {
        continuation: vec![(1.0, 1e-2), (0.25, 1e-3), (0.0, 1e-4)],
        nu: 1e-4,
        ..Default::default()
    };
    let lattice: Vec<f64> = (0..9).map(|i| 0.5 * i as f64 / 8.0).collect();
    let family = match ProfileFamily::build(lattice, 1, |t, _| {
        tidedune::cell_solve(t, &regime.law, &forcing, g, &cfg)
    }) {
        Ok(f) => f,
        Err(e) => return gate.error(id, e),
    };
    let converged = family.profiles().iter().all(|p| {
        p.report()
            .entries
            .last()
            .is_some_and(|e| e.converged && e.nu == 1e-4)
            && !p.report().fallback
    });
    for p in family.profiles() {
        gate.profile(&format!("unidirectional t={}", p.t()), p);
    }
    let z0 = family.evaluate(0.0, 0.0, 0.0).unwrap();
    let fine = regime.with_epsilon(1.0 / 50.0).unwrap();
    match solve_fine(&z0, &fine, &forcing, &cfg, 0.5) {
        Ok(traj) => {
            let drift = tidedune::mass_drift(&traj);
            let max_norm = traj
                .diagnostics
                .iter()
                .map(|r| r.l2_norm)
                .fold(0.0, f64::max);
            let bound = norm_l2(&z0) + 2.0 * family.max_norm() + family.max_secant() * 0.5;
            let finite = traj.diagnostics.iter().all(|r| r.l2_norm.is_finite());
            gate.record(
                id,
                converged && drift <= 1e-9 && finite && max_norm <= bound,
                format!(
                    "fixed points converged at nu=1e-4: {converged}; drift={drift:.3e}; max ||z||={max_norm:.4e} <= bound {bound:.4e}"
                ),
            );
        }
        Err(e) => gate.error(id, e),
    }
}

fn zero_mean(gate: &mut Gate) {
    let worst = gate
        .zero_means
        .iter()
        .cloned()
        .fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let count = gate.zero_means.len();
    gate.record(
        "5 converged profiles have |mean| <= 1e-10",
        count > 0 && worst.1 <= 1e-10,
        format!("{count} profiles, worst {:.3e} ({})", worst.1, worst.0),
    );
}

fn nu_consistency(gate: &mut Gate) {
    let id = "inv profiles at nu and nu/2 differ by O(nu): ratio in [0.3, 0.7]";
    let g = grid(32);
    let base = SolverConfig::default();
    let cell = match cell_problem(0.0, &short_small().law, &rotating(), g, &base) {
        Ok(c) => c,
        Err(e) => return gate.error(id, e),
    };
    let mut profiles = Vec::new();
    for nu in [4e-2, 2e-2, 1e-2] {
        let cfg = SolverConfig {
            continuation: vec![(1.0, nu), (0.0, nu)],
            fixed_point_tol: 1e-11,
            linear_tol: 1e-12,
            ..base.clone()
        };
        match cell.find_periodic(&cfg, None) {
            Ok(p) => profiles.push(p),
            Err(e) => return gate.error(id, e),
        }
    }
    let d1 = orbit_distance(profiles[0].fields(), profiles[1].fields());
    let d2 = orbit_distance(profiles[1].fields(), profiles[2].fields());
    let ratio = d2 / d1;
    gate.record(
        id,
        (0.3..=0.7).contains(&ratio),
        format!("d1={d1:.4e} d2={d2:.4e} ratio={ratio:.4}"),
    );
}

fn oracle_sweep(gate: &mut Gate) {
    let id = "inv sweep on the constant-coefficient oracle matches the analytic error within 10%";
    let n = 32;
    let steps = 32;
    let g = grid(n);
    let cfg = SolverConfig {
        dt_per_period: steps,
        linear_tol: 1e-14,
        fixed_point_tol: 1e-13,
        ..Default::default()
    };
    let t_end = 0.025;
    let lattice = vec![0.0, t_end];
    let family = match ProfileFamily::build(lattice, 1, |t, tau| {
        let src = FrozenField {
            field: &oracle_field,
            grid: g,
            t,
            tau,
        };
        CellProblem::new(&src, steps)?.find_periodic(&cfg, None)
    }) {
        Ok(f) => f,
        Err(e) => return gate.error(id, e),
    };
    let fine = |eps: f64| -> tidedune::Result<(Box<dyn tidedune::CoefficientField>, FineClock)> {
        Ok((
            Box::new(oracle_field),
            FineClock {
                epsilon: eps,
                model: Model::ShortTerm,
                steps_per_period: steps,
            },
        ))
    };
    let eps = [1.0 / 10.0, 1.0 / 20.0, 1.0 / 40.0];
    let z0 = ScalarField::zeros(g);
    let reference = Reference {
        profiles: &family,
        corrector: None,
    };
    let rows = match sweep_against(reference, &z0, t_end, &cfg, &eps, None, &fine) {
        Ok(r) => r,
        Err(e) => return gate.error(id, e),
    };
    // z - S decays like r^m per step on the single mode
    let h = 1.0 / n as f64;
    let s = 4.0 * (PI * h).sin().powi(2) / (h * h);
    let r = 1.0 / (1.0 + s / steps as f64);
    let s0 = norm_l2(family.profile(0, 0).field(0));
    let mut pass = true;
    let mut parts = Vec::new();
    for row in &rows {
        let m = (t_end / row.epsilon * steps as f64).round() as i32;
        let analytic = r.powi(m) * s0;
        let rel = (row.error - analytic).abs() / analytic;
        pass &= rel <= 0.1;
        parts.push(format!(
            "eps={}: {:.4e} vs {:.4e} (rel {:.1e})",
            row.epsilon, row.error, analytic, rel
        ));
    }
    gate.record(id, pass, parts.join("; "));
}

fn main() -> ExitCode {
    let mut gate = Gate {
        results: Vec::new(),
        zero_means: Vec::new(),
    };
    let start = Instant::now();
    let criteria: [fn(&mut Gate); 10] = [
        scaling,
        mass_conservation,
        contraction,
        oracle_profile,
        uniqueness,
        two_scale,
        quasi_periodic,
        degenerate,
        nu_consistency,
        oracle_sweep,
    ];
    for run in criteria {
        run(&mut gate);
    }
    zero_mean(&mut gate);
    let failed: Vec<&str> = gate
        .results
        .iter()
        .filter(|r| !r.1)
        .map(|r| r.0.as_str())
        .collect();
    println!(
        "acceptance: {} passed, {} failed in {:.0}s",
        gate.results.len() - failed.len(),
        failed.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
