// SPDX-License-Identifier: Apache-2.0

//! Verification harness: conservation, period-map contraction, two-scale
//! error sweeps with convergence-order fits, and quasi-periodic closeness.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{distance_l2, norm_l2, Grid, ScalarField};
use crate::homogenize::{
    cell_solve, slow_time_derivative_at, solve_corrector, CorrectorSolution, ProfileFamily,
};
use crate::physics::Forcing;
use crate::scaling::{Model, RegimeSpec};
use crate::solver::{
    solve_fine_observed, CellProblem, CoefficientField, FineClock, FrozenField, RegimeField,
    SolverConfig, Trajectory,
};

/// Largest `|mass(z_k) - mass(z_0)|` over the recorded steps.
pub fn mass_drift(traj: &Trajectory) -> f64 {
    let Some(first) = traj.diagnostics.first() else {
        return 0.0;
    };
    traj.diagnostics
        .iter()
        .fold(0.0, |m, r| m.max((r.mass - first.mass).abs()))
}

/// Least-squares slope of `log error` against `log ε`.
pub fn fit_order(epsilons: &[f64], errors: &[f64]) -> Result<f64> {
    if epsilons.len() != errors.len() || epsilons.len() < 3 {
        return Err(Error::Config(
            "order fit needs at least three (epsilon, error) pairs".into(),
        ));
    }
    if epsilons
        .iter()
        .chain(errors)
        .any(|v| !(*v > 0.0) || !v.is_finite())
    {
        return Err(Error::Degenerate(
            "order fit needs positive finite epsilons and errors".into(),
        ));
    }
    let xs: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate(
            "order fit needs distinct epsilons".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Unit-norm zero-mean Gaussian field.
pub fn random_zero_mean(grid: Grid, rng: &mut ChaCha8Rng) -> ScalarField {
    loop {
        let v: Vec<f64> = (0..grid.len())
            .map(|_| StandardNormal.sample(rng))
            .collect();
        let mut f = ScalarField::from_values(grid, v).expect("gaussian samples are finite");
        f.project_zero_mean();
        let norm = norm_l2(&f);
        if norm > 0.0 {
            return f.scaled(1.0 / norm);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionReport {
    pub mu: f64,
    pub nu: f64,
    pub seed: u64,
    pub ratios: Vec<f64>,
}

impl ContractionReport {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }

    /// `e^{-μ}`.
    pub fn bound(&self) -> f64 {
        (-self.mu).exp()
    }
}

/// `‖Φ(ξ) - Φ(ξ̃)‖₂ / ‖ξ - ξ̃‖₂` over `trials` random zero-mean pairs.
pub fn contraction_ratio(
    cell: &CellProblem,
    mu: f64,
    nu: f64,
    trials: usize,
    seed: u64,
    config: &SolverConfig,
) -> Result<ContractionReport> {
    if trials < 2 {
        return Err(Error::Config(format!(
            "contraction needs at least 2 trials, got {trials}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(ScalarField, ScalarField)> = (0..trials)
        .map(|_| {
            (
                random_zero_mean(cell.grid(), &mut rng),
                random_zero_mean(cell.grid(), &mut rng),
            )
        })
        .collect();
    let ratios = pairs
        .par_iter()
        .map(|(a, b)| {
            let fa = cell.period_map(a, mu, nu, config)?;
            let fb = cell.period_map(b, mu, nu, config)?;
            Ok(distance_l2(&fa, &fb)? / distance_l2(a, b)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContractionReport {
        mu,
        nu,
        seed,
        ratios,
    })
}

/// One sweep member.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub epsilon: f64,
    /// `‖z^ε(T) - U(T, T/ε)‖₂`.
    pub error: f64,
    /// `‖(z^ε(T) - U(T, T/ε)) / ε - U¹(T, T/ε)‖₂` when a corrector was computed.
    pub remainder: Option<f64>,
    pub mass_drift: f64,
    /// Largest error over the slow-time lattice points reached by the run.
    pub checkpoint_error: f64,
    pub runtime_s: f64,
    pub failure: Option<String>,
}

impl ErrorRow {
    /// `error / ε`.
    pub fn scaled_error(&self) -> f64 {
        self.error / self.epsilon
    }

    fn failed(epsilon: f64, msg: String) -> Self {
        ErrorRow {
            epsilon,
            error: f64::NAN,
            remainder: None,
            mass_drift: f64::NAN,
            checkpoint_error: f64::NAN,
            runtime_s: 0.0,
            failure: Some(msg),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub label: String,
    pub rows: Vec<ErrorRow>,
    /// Least-squares order over the successful rows, if at least three.
    pub fitted_order: Option<f64>,
}

impl ErrorReport {
    pub fn new(label: impl Into<String>, rows: Vec<ErrorRow>) -> Self {
        let ok: Vec<&ErrorRow> = rows.iter().filter(|r| r.failure.is_none()).collect();
        let eps: Vec<f64> = ok.iter().map(|r| r.epsilon).collect();
        let err: Vec<f64> = ok.iter().map(|r| r.error).collect();
        let fitted_order = fit_order(&eps, &err).ok();
        ErrorReport {
            label: label.into(),
            rows,
            fitted_order,
        }
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.epsilon).collect()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    pub fn all_succeeded(&self) -> bool {
        self.rows.iter().all(|r| r.failure.is_none())
    }

    /// Errors strictly decrease along the sweep.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error < w[0].error)
    }

    /// `max_ε error/ε` and the ratio between the smallest-ε and largest-ε values.
    pub fn scaled_summary(&self) -> (f64, f64) {
        let scaled: Vec<f64> = self.rows.iter().map(ErrorRow::scaled_error).collect();
        let max = scaled.iter().copied().fold(f64::NAN, f64::max);
        let ratio = match (scaled.first(), scaled.last()) {
            (Some(a), Some(b)) => b / a,
            _ => f64::NAN,
        };
        (max, ratio)
    }

    pub fn remainders_decreasing(&self) -> bool {
        let r: Option<Vec<f64>> = self.rows.iter().map(|r| r.remainder).collect();
        r.is_some_and(|r| r.windows(2).all(|w| w[1] < w[0]))
    }

    /// CSV with columns `epsilon,error,remainder,mass_drift,runtime_s,checkpoint_error`.
    /// Runtimes are written as zero unless `timings` is set, so that
    /// repeated runs produce identical files.
    pub fn to_csv(&self, timings: bool) -> String {
        let mut s = String::from("epsilon,error,remainder,mass_drift,runtime_s,checkpoint_error\n");
        for r in &self.rows {
            let rem = r
                .remainder
                .map_or_else(|| "nan".to_string(), |v| format!("{v:e}"));
            let rt = if timings { r.runtime_s } else { 0.0 };
            let _ = writeln!(
                s,
                "{:e},{:e},{},{:e},{:e},{:e}",
                r.epsilon, r.error, rem, r.mass_drift, rt, r.checkpoint_error
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.label);
        let _ = writeln!(
            s,
            "{:>12} {:>14} {:>14} {:>14} {:>12}",
            "epsilon", "error", "error/eps", "remainder", "mass_drift"
        );
        for r in &self.rows {
            match &r.failure {
                Some(msg) => {
                    let _ = writeln!(s, "{:>12.6e} failed: {msg}", r.epsilon);
                }
                None => {
                    let rem = r
                        .remainder
                        .map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
                    let _ = writeln!(
                        s,
                        "{:>12.6e} {:>14.6e} {:>14.6e} {:>14} {:>12.3e}",
                        r.epsilon,
                        r.error,
                        r.scaled_error(),
                        rem,
                        r.mass_drift
                    );
                }
            }
        }
        match self.fitted_order {
            Some(p) => {
                let _ = writeln!(s, "fitted order: {p:.4}");
            }
            None => {
                let _ = writeln!(s, "fitted order: undefined");
            }
        }
        s
    }

    /// Gnuplot script plotting `csv_name` on log axes with a slope-1 guide.
    pub fn gnuplot_script(&self, csv_name: &str) -> String {
        let anchor = self
            .rows
            .iter()
            .find(|r| r.failure.is_none() && r.error > 0.0);
        let (x0, e0) = anchor.map_or((1.0, 1.0), |r| (r.epsilon, r.error));
        format!(
            "set datafile separator ','\n\
             set logscale xy\n\
             set xlabel 'epsilon'\n\
             set ylabel 'L2 error'\n\
             set key left top\n\
             ref(x) = {e0:e} * x / {x0:e}\n\
             plot '{csv_name}' using 1:2 skip 1 with linespoints title '{}', \\\n     ref(x) with lines dashtype 2 title 'slope 1'\n",
            self.label
        )
    }

    /// Writes `<stem>.csv`, `<stem>.txt` and `<stem>.gp` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str, timings: bool) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = format!("{stem}.csv");
        for (name, body) in [
            (csv.clone(), self.to_csv(timings)),
            (format!("{stem}.txt"), self.summary()),
            (format!("{stem}.gp"), self.gnuplot_script(&csv)),
        ] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// How the fine runs of a sweep are started.
#[derive(Clone, Debug)]
pub enum InitialCondition {
    /// `z0 = U(0, 0, ·)`, which removes the initial layer.
    Profile,
    Field(ScalarField),
}

#[derive(Clone, Debug)]
pub struct SweepSetup {
    /// Law and regime kind; ε is replaced per member.
    pub regime: RegimeSpec,
    pub forcing: Forcing,
    pub grid: Grid,
    pub config: SolverConfig,
    pub t_end: f64,
    /// Number of points of the uniform slow-time lattice on `[0, T]`.
    pub slow_samples: usize,
    pub corrector: bool,
    /// Half-width of the centered difference for `∂U/∂t`.
    pub derivative_delta: f64,
    pub initial: InitialCondition,
}

impl SweepSetup {
    pub fn new(
        regime: RegimeSpec,
        forcing: Forcing,
        grid: Grid,
        config: SolverConfig,
        t_end: f64,
    ) -> Self {
        SweepSetup {
            regime,
            forcing,
            grid,
            config,
            t_end,
            slow_samples: 9,
            corrector: true,
            derivative_delta: 1e-3,
            initial: InitialCondition::Profile,
        }
    }

    fn lattice(&self) -> Vec<f64> {
        let m = self.slow_samples.max(2);
        (0..m)
            .map(|i| self.t_end * i as f64 / (m - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub two_scale: ErrorReport,
    pub corrector: Option<ErrorReport>,
    pub profiles: ProfileFamily,
    pub corrector_solution: Option<CorrectorSolution>,
}

struct MemberFields {
    fine: ScalarField,
    profile: ScalarField,
    corrector: Option<ScalarField>,
}

fn row_from_fields(
    epsilon: f64,
    f: &MemberFields,
    mass_drift: f64,
    checkpoint_error: f64,
    runtime_s: f64,
) -> Result<ErrorRow> {
    let error = distance_l2(&f.fine, &f.profile)?;
    let remainder = match &f.corrector {
        Some(c) => {
            let mut r = f.fine.sub(&f.profile)?.scaled(1.0 / epsilon);
            r.axpy(-1.0, c)?;
            Some(norm_l2(&r))
        }
        None => None,
    };
    Ok(ErrorRow {
        epsilon,
        error,
        remainder,
        mass_drift,
        checkpoint_error,
        runtime_s,
        failure: None,
    })
}

fn persist_member(dir: &Path, row: &ErrorRow, f: &MemberFields) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    f.fine.write_binary(&dir.join("fine_final.bin"))?;
    f.profile.write_binary(&dir.join("profile_final.bin"))?;
    if let Some(c) = &f.corrector {
        c.write_binary(&dir.join("corrector_final.bin"))?;
    }
    let meta = format!(
        "epsilon={:?}\nmass_drift={:?}\ncheckpoint_error={:?}\nruntime_s={:?}\n",
        row.epsilon, row.mass_drift, row.checkpoint_error, row.runtime_s
    );
    let p = dir.join("member.txt");
    fs::write(&p, meta).map_err(|e| Error::io(&p, e))
}

fn member_dir(root: &Path, index: usize) -> std::path::PathBuf {
    root.join(format!("member_{index:02}"))
}

/// Rebuilds the sweep rows from the fields persisted by [`run_sweep`].
pub fn rows_from_disk(root: &Path) -> Result<Vec<ErrorRow>> {
    let mut rows = Vec::new();
    for index in 0.. {
        let dir = member_dir(root, index);
        let meta = dir.join("member.txt");
        if !meta.exists() {
            let failed = dir.join("failed.txt");
            if failed.exists() {
                let text = fs::read_to_string(&failed).map_err(|e| Error::io(&failed, e))?;
                let (eps, msg) = text.split_once('\n').unwrap_or((&text, ""));
                let eps = eps
                    .trim_start_matches("epsilon=")
                    .parse::<f64>()
                    .map_err(|e| Error::format(&failed, e.to_string()))?;
                rows.push(ErrorRow::failed(eps, msg.trim().to_string()));
                continue;
            }
            break;
        }
        let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        let get = |k: &str| -> Result<f64> {
            text.lines()
                .find_map(|l| l.strip_prefix(k).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| Error::format(&meta, format!("missing {k}")))?
                .parse::<f64>()
                .map_err(|e| Error::format(&meta, e.to_string()))
        };
        let corrector_path = dir.join("corrector_final.bin");
        let fields = MemberFields {
            fine: ScalarField::read_binary(&dir.join("fine_final.bin"))?,
            profile: ScalarField::read_binary(&dir.join("profile_final.bin"))?,
            corrector: if corrector_path.exists() {
                Some(ScalarField::read_binary(&corrector_path)?)
            } else {
                None
            },
        };
        rows.push(row_from_fields(
            get("epsilon")?,
            &fields,
            get("mass_drift")?,
            get("checkpoint_error")?,
            get("runtime_s")?,
        )?);
    }
    Ok(rows)
}

/// Reference profiles a sweep is measured against.
#[derive(Clone, Copy)]
pub struct Reference<'a> {
    pub profiles: &'a ProfileFamily,
    pub corrector: Option<&'a CorrectorSolution>,
}

/// Fine coefficient field and clock for one ε.
pub type FineFactory<'a> =
    dyn Fn(f64) -> Result<(Box<dyn CoefficientField + 'a>, FineClock)> + Sync + 'a;

fn run_member(
    reference: Reference<'_>,
    z0: &ScalarField,
    t_end: f64,
    config: &SolverConfig,
    fine: &FineFactory<'_>,
    epsilon: f64,
) -> Result<(ErrorRow, MemberFields)> {
    let start = Instant::now();
    let (field, clock) = fine(epsilon)?;
    let family = reference.profiles;
    let lattice = family.times().to_vec();
    let mut checkpoint_error = 0.0f64;
    let traj = solve_fine_observed(z0, field.as_ref(), clock, config, t_end, &mut |k, state| {
        let t = clock.time(k);
        let hit = lattice.iter().any(|&s| (s - t).abs() <= 1e-9 * (1.0 + s));
        if hit {
            let u = family.evaluate(t, 0.0, clock.theta(k))?;
            checkpoint_error = checkpoint_error.max(distance_l2(&state.z, &u)?);
        }
        Ok(())
    })?;
    let steps = traj.steps();
    let theta = clock.theta(steps);
    let fields = MemberFields {
        fine: traj.final_field().clone(),
        profile: family.evaluate(traj.final_time().min(t_end), 0.0, theta)?,
        corrector: reference.corrector.map(|c| c.profile.sample(theta)),
    };
    let row = row_from_fields(
        epsilon,
        &fields,
        mass_drift(&traj),
        checkpoint_error,
        start.elapsed().as_secs_f64(),
    )?;
    Ok((row, fields))
}

fn check_sweep(epsilons: &[f64], t_end: f64) -> Result<()> {
    if epsilons.is_empty() {
        return Err(Error::Config("epsilon list is empty".into()));
    }
    if epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::Config("epsilons must lie in (0, 1)".into()));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config("epsilons must be strictly decreasing".into()));
    }
    if !(t_end > 0.0) {
        return Err(Error::Config(format!(
            "final time must be positive, got {t_end}"
        )));
    }
    Ok(())
}

/// Runs `fine(ε)` from `z0` to `t_end` for every ε and compares with the
/// reference at `θ = (steps mod N) / N`.
///
/// Failed members become rows carrying the error message. With `persist`,
/// each member's final fields are written to `member_XX/` below it and the
/// returned rows are recomputed from those files.
pub fn sweep_against(
    reference: Reference<'_>,
    z0: &ScalarField,
    t_end: f64,
    config: &SolverConfig,
    epsilons: &[f64],
    persist: Option<&Path>,
    fine: &FineFactory<'_>,
) -> Result<Vec<ErrorRow>> {
    check_sweep(epsilons, t_end)?;
    config.validate()?;
    let results: Vec<Result<(ErrorRow, MemberFields)>> = epsilons
        .par_iter()
        .map(|&eps| run_member(reference, z0, t_end, config, fine, eps))
        .collect();

    let mut rows = Vec::with_capacity(epsilons.len());
    for (i, (res, &eps)) in results.into_iter().zip(epsilons).enumerate() {
        let dir = persist.map(|root| member_dir(root, i));
        match res {
            Ok((row, fields)) => {
                if let Some(dir) = &dir {
                    let _ = fs::remove_file(dir.join("failed.txt"));
                    persist_member(dir, &row, &fields)?;
                }
                rows.push(row);
            }
            Err(e) => {
                if let Some(dir) = &dir {
                    fs::create_dir_all(dir).map_err(|err| Error::io(dir, err))?;
                    let _ = fs::remove_file(dir.join("member.txt"));
                    let p = dir.join("failed.txt");
                    fs::write(&p, format!("epsilon={eps:?}\n{e}\n"))
                        .map_err(|err| Error::io(&p, err))?;
                }
                rows.push(ErrorRow::failed(eps, e.to_string()));
            }
        }
    }
    if let Some(root) = persist {
        rows = rows_from_disk(root)?;
        rows.truncate(epsilons.len());
    }
    Ok(rows)
}

/// Fine runs of the regime for each ε against the homogenized profile (and
/// corrector, if requested).
pub fn run_sweep(
    setup: &SweepSetup,
    epsilons: &[f64],
    persist: Option<&Path>,
) -> Result<SweepOutcome> {
    check_sweep(epsilons, setup.t_end)?;
    setup.config.validate()?;
    let law = &setup.regime.law;
    let grid = setup.grid;
    let family = ProfileFamily::build(setup.lattice(), 1, |t, _| {
        cell_solve(t, law, &setup.forcing, grid, &setup.config)
    })?;

    let corrector = if setup.corrector {
        let u_t = family.profile(family.times().len() - 1, 0);
        let du = slow_time_derivative_at(
            setup.t_end,
            setup.derivative_delta,
            law,
            &setup.forcing,
            grid,
            &setup.config,
        )?;
        Some(solve_corrector(
            u_t,
            &du,
            law,
            &setup.forcing,
            &setup.config,
        )?)
    } else {
        None
    };

    let z0 = match &setup.initial {
        InitialCondition::Profile => family.evaluate(0.0, 0.0, 0.0)?,
        InitialCondition::Field(f) => f.clone(),
    };
    let fine = |eps: f64| -> Result<(Box<dyn CoefficientField>, FineClock)> {
        let regime = setup.regime.with_epsilon(eps)?;
        let clock = FineClock::new(&regime, &setup.config);
        Ok((
            Box::new(RegimeField::new(regime, setup.forcing.clone())),
            clock,
        ))
    };
    let reference = Reference {
        profiles: &family,
        corrector: corrector.as_ref(),
    };
    let rows = sweep_against(
        reference,
        &z0,
        setup.t_end,
        &setup.config,
        epsilons,
        persist,
        &fine,
    )?;

    let two_scale = ErrorReport::new("rate (strong norm)", rows.clone());
    let corrector_report = corrector
        .as_ref()
        .map(|_| ErrorReport::new("corrector remainder", rows));
    Ok(SweepOutcome {
        two_scale,
        corrector: corrector_report,
        profiles: family,
        corrector_solution: corrector,
    })
}

/// Error sweep of `‖z^ε(T) - U(T, T/ε)‖₂`.
pub fn two_scale_error(
    setup: &SweepSetup,
    epsilons: &[f64],
    persist: Option<&Path>,
) -> Result<ErrorReport> {
    let setup = SweepSetup {
        corrector: false,
        ..setup.clone()
    };
    Ok(run_sweep(&setup, epsilons, persist)?.two_scale)
}

/// Error sweep with the corrector: rows carry the refined remainder.
pub fn corrector_error(
    setup: &SweepSetup,
    epsilons: &[f64],
    persist: Option<&Path>,
) -> Result<ErrorReport> {
    let setup = SweepSetup {
        corrector: true,
        ..setup.clone()
    };
    let out = run_sweep(&setup, epsilons, persist)?;
    Ok(out.corrector.expect("corrector requested"))
}

#[derive(Clone, Debug)]
pub struct ClosenessReport {
    pub epsilon: f64,
    /// `‖z0 - S(0, 0, 0)‖₂`.
    pub e0: f64,
    /// `(t_k, ‖z^ε(t_k) - Z^ε(t_k)‖₂)` at every fine step.
    pub samples: Vec<(f64, f64)>,
    /// `max_k (e_k - e_0) / t_k`.
    pub slope: f64,
    /// Largest slow-time secant of the profile family.
    pub secant_bound: f64,
    /// `max_k (e_k - e_0 - secant_bound t_k)`; nonpositive when the secant bound holds.
    pub excess: f64,
    pub profile_bound: f64,
}

/// Distance between a fine run and the quasi-periodic reconstruction built
/// from the ε-dependent cell family `S(t, τ, θ)` of the same regime.
pub fn closeness(
    regime: &RegimeSpec,
    forcing: &Forcing,
    grid: Grid,
    config: &SolverConfig,
    t_end: f64,
    slow_samples: usize,
    z0: Option<&ScalarField>,
) -> Result<ClosenessReport> {
    config.validate()?;
    let m = slow_samples.max(2);
    let times: Vec<f64> = (0..m).map(|i| t_end * i as f64 / (m - 1) as f64).collect();
    let tau_samples = if regime.kind.model() == Model::MeanTerm {
        8
    } else {
        1
    };
    let field = RegimeField::new(regime.clone(), forcing.clone());
    let family = ProfileFamily::build(times, tau_samples, |t, tau| {
        let frozen = FrozenField {
            field: &field,
            grid,
            t,
            tau,
        };
        CellProblem::new(&frozen, config.dt_per_period)?.find_periodic(config, None)
    })?;
    let start = match z0 {
        Some(z) => z.clone(),
        None => family.evaluate(0.0, 0.0, 0.0)?,
    };
    let clock = FineClock::new(regime, config);
    let mut samples = Vec::new();
    solve_fine_observed(&start, &field, clock, config, t_end, &mut |k, state| {
        let z = family.evaluate(clock.time(k).min(t_end), clock.tau(k), clock.theta(k))?;
        samples.push((clock.time(k), distance_l2(&state.z, &z)?));
        Ok(())
    })?;
    let e0 = samples[0].1;
    let secant_bound = family.max_secant();
    let (mut slope, mut excess) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(t, e) in &samples[1..] {
        slope = slope.max((e - e0) / t);
        excess = excess.max(e - e0 - secant_bound * t);
    }
    Ok(ClosenessReport {
        epsilon: regime.epsilon,
        e0,
        samples,
        slope,
        secant_bound,
        excess,
        profile_bound: family.max_norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::Amplitude;
    use crate::scaling::RegimeKind;
    use crate::solver::{DiagnosticRow, FineClock};
    use proptest::prelude::*;

    #[test]
    fn fit_order_examples() {
        let eps = [0.1, 0.05, 0.025, 0.0125];
        let lin: Vec<f64> = eps.iter().map(|e| 3.0 * e).collect();
        assert!((fit_order(&eps, &lin).unwrap() - 1.0).abs() < 1e-12);
        let quad: Vec<f64> = eps.iter().map(|e| 0.5 * e * e).collect();
        assert!((fit_order(&eps, &quad).unwrap() - 2.0).abs() < 1e-12);
        assert!(fit_order(&eps, &[2.0; 4]).unwrap().abs() < 1e-12);
        assert!(fit_order(&eps[..2], &lin[..2]).is_err());
        assert!(fit_order(&eps, &[1.0, 0.0, 1.0, 1.0]).is_err());
    }

    fn traj(masses: &[f64]) -> Trajectory {
        let g = Grid::new(4).unwrap();
        Trajectory {
            clock: FineClock {
                epsilon: 0.1,
                model: Model::ShortTerm,
                steps_per_period: 16,
            },
            snapshot_steps: vec![0],
            times: vec![0.0],
            snapshots: vec![ScalarField::zeros(g)],
            diagnostics: masses
                .iter()
                .enumerate()
                .map(|(k, &m)| DiagnosticRow {
                    step: k,
                    t: k as f64,
                    theta: 0.0,
                    mass: m,
                    l2_norm: 0.0,
                    linear_iters: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn mass_drift_examples() {
        assert_eq!(mass_drift(&traj(&[2.0, 2.0, 2.0])), 0.0);
        assert!(mass_drift(&traj(&[0.5, 0.5, 1.5, 0.5])) >= 1.0);
    }

    #[test]
    fn contraction_bound_and_reproducibility() {
        let g = Grid::new(8).unwrap();
        let field = RegimeField::new(
            RegimeSpec::snapped(RegimeKind::ShortSmall),
            Forcing::rotating(Amplitude::default()),
        );
        let frozen = FrozenField {
            field: &field,
            grid: g,
            t: 0.0,
            tau: 0.0,
        };
        let cfg = SolverConfig::default();
        let cell = CellProblem::new(&frozen, cfg.dt_per_period).unwrap();
        let r = contraction_ratio(&cell, 0.5, 0.0, 4, 3, &cfg).unwrap();
        assert!(r.max_ratio() <= r.bound() + 1e-6);
        assert_eq!(r, contraction_ratio(&cell, 0.5, 0.0, 4, 3, &cfg).unwrap());
        let r0 = contraction_ratio(&cell, 0.0, 1.0, 2, 3, &cfg).unwrap();
        assert!(r0.max_ratio() < 1.0);
        assert!(contraction_ratio(&cell, 0.5, 0.0, 1, 3, &cfg).is_err());
    }

    #[test]
    fn trivial_sweep_has_zero_errors() {
        let g = Grid::new(8).unwrap();
        let mut regime = RegimeSpec::snapped(RegimeKind::ShortSmall);
        regime.law.c = 0.0;
        let setup = SweepSetup::new(
            regime,
            Forcing::rotating(Amplitude::default()),
            g,
            SolverConfig::default(),
            0.2,
        );
        let out = run_sweep(&setup, &[0.1, 0.05, 0.025], None).unwrap();
        assert!(out
            .two_scale
            .rows
            .iter()
            .all(|r| r.error == 0.0 && r.remainder == Some(0.0)));
        assert_eq!(out.two_scale.fitted_order, None);
        assert!(out.two_scale.summary().contains("undefined"));
    }

    #[test]
    fn sweep_rejects_bad_epsilon_lists() {
        let g = Grid::new(8).unwrap();
        let setup = SweepSetup::new(
            RegimeSpec::snapped(RegimeKind::ShortSmall),
            Forcing::rotating(Amplitude::default()),
            g,
            SolverConfig::default(),
            0.2,
        );
        assert!(run_sweep(&setup, &[], None).is_err());
        assert!(run_sweep(&setup, &[0.05, 0.1], None).is_err());
    }

    #[test]
    fn persisted_sweep_recomputes_identically() {
        let g = Grid::new(8).unwrap();
        let setup = SweepSetup {
            slow_samples: 3,
            ..SweepSetup::new(
                RegimeSpec::snapped(RegimeKind::ShortSmall),
                Forcing::rotating(Amplitude::default()),
                g,
                SolverConfig::default(),
                0.2,
            )
        };
        let eps = [0.1, 0.05];
        let mem = run_sweep(&setup, &eps, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let disk = run_sweep(&setup, &eps, Some(dir.path())).unwrap();
        for (a, b) in mem.two_scale.rows.iter().zip(&disk.two_scale.rows) {
            assert_eq!(a.error, b.error);
            assert_eq!(a.remainder, b.remainder);
        }
        let again = rows_from_disk(dir.path()).unwrap();
        assert_eq!(again.len(), 2);
        assert_eq!(mem.two_scale.to_csv(false), disk.two_scale.to_csv(false));
        disk.two_scale.write(dir.path(), "report", false).unwrap();
        let gp = fs::read_to_string(dir.path().join("report.gp")).unwrap();
        assert!(gp.contains("report.csv") && gp.contains("slope 1"));
    }

    proptest! {
        #[test]
        fn fit_recovers_power_laws(c in 1e-3f64..1e3, p in -3.0f64..3.0) {
            let eps = [0.2f64, 0.1, 0.05, 0.02];
            let errs: Vec<f64> = eps.iter().map(|e| c * e.powf(p)).collect();
            prop_assert!((fit_order(&eps, &errs).unwrap() - p).abs() < 1e-9);
        }
    }
}
