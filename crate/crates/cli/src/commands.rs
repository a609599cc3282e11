// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use tidedune::homogenize::cell_problem;
use tidedune::solver::FrozenField;
use tidedune::{
    closeness, contraction_ratio, derive_regime, mass_drift, norm_l2, run_sweep, solve_fine,
    CellProblem, Error, InitialCondition, LawKind, PeriodicProfile, RegimeField, RegimeSpec,
    Result, ScalarField, SweepSetup, TransportLaw,
};

use crate::config::{InitialKind, RunConfig};
use crate::{Failure, VerifyKind};

/// Mass drift above this is reported as a failed check.
const MASS_TOL: f64 = 1e-9;

/// The output directory, checked before any computation starts.
fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg
        .out
        .clone()
        .ok_or_else(|| Error::Config("an output directory is required (--out)".into()))?;
    if !dir.is_dir() {
        return Err(Error::Io {
            path: dir,
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "output directory does not exist",
            ),
        });
    }
    Ok(dir)
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn law_line(law: &TransportLaw) -> String {
    let kind = match law.kind {
        LawKind::Power3 => "power3",
        LawKind::Vanrijn => "vanrijn",
    };
    let mut s = format!("law={kind} a={:e} b={:e} c={:e}", law.a, law.b, law.c);
    if law.kind == LawKind::Vanrijn {
        let _ = write!(s, " u_c={:e}", law.u_c);
    }
    s
}

fn regime_line(r: &RegimeSpec) -> String {
    format!(
        "regime={} epsilon={:e} {}",
        r.kind,
        r.epsilon,
        law_line(&r.law)
    )
}

pub fn regime(cfg: &RunConfig) -> std::result::Result<(), Failure> {
    let params = cfg.physical_params()?;
    let d = derive_regime(&params, cfg.regime.kind)?;
    let mut s = String::new();
    let _ = writeln!(s, "regime {} ({:?} model)", d.kind, d.kind.model());
    let _ = writeln!(s, "epsilon   {:.6e}  (1/{:.1})", d.epsilon, 1.0 / d.epsilon);
    let _ = writeln!(s, "F_diff    {:.6e}", d.f_diff);
    let _ = writeln!(s, "F_src     {:.6e}", d.f_src);
    let _ = writeln!(s, "F_height  {:.6e}", d.f_height);
    let _ = writeln!(s, "exact     {}", law_line(&d.exact.law));
    let _ = writeln!(
        s,
        "snapped   epsilon=1/{:.0} {}",
        1.0 / d.snapped.epsilon,
        law_line(&d.snapped.law)
    );
    for c in &d.checks {
        let _ = writeln!(
            s,
            "check     {:<12} computed {:.4e}  quoted {:.4e}  ratio {:.3}{}",
            c.name,
            c.computed,
            c.quoted,
            c.ratio(),
            if c.within(1.5) {
                ""
            } else {
                "  (outside x1.5)"
            }
        );
    }
    if !d.defaulted.is_empty() {
        let _ = writeln!(s, "defaulted {}", d.defaulted.join(", "));
    }
    print!("{s}");
    if let Some(dir) = &cfg.out {
        if !dir.is_dir() {
            return Err(Error::Config(format!(
                "output directory {} does not exist",
                dir.display()
            ))
            .into());
        }
        write(&dir.join("regime.txt"), &s)?;
    }
    Ok(())
}

fn frozen_profile(
    regime: &RegimeSpec,
    cfg: &RunConfig,
    t: f64,
    tau: f64,
) -> Result<PeriodicProfile> {
    let field = RegimeField::new(regime.clone(), cfg.forcing()?);
    let src = FrozenField {
        field: &field,
        grid: cfg.grid()?,
        t,
        tau,
    };
    CellProblem::new(&src, cfg.solver.dt_per_period)?.find_periodic(&cfg.solver, None)
}

pub fn run(cfg: &RunConfig) -> std::result::Result<(), Failure> {
    let dir = out_dir(cfg)?;
    cfg.validate()?;
    let regime = cfg.regime()?;
    let forcing = cfg.forcing()?;
    let grid = cfg.grid()?;
    let z0 = match cfg.run.initial {
        InitialKind::Zero => ScalarField::zeros(grid),
        InitialKind::Profile => frozen_profile(&regime, cfg, 0.0, 0.0)?.field(0).clone(),
        InitialKind::Mode => {
            let a = cfg.run.amplitude;
            ScalarField::from_fn(grid, |[x, y]| {
                a * (2.0 * std::f64::consts::PI * x).sin() * (2.0 * std::f64::consts::PI * y).cos()
            })
        }
    };
    let traj = solve_fine(&z0, &regime, &forcing, &cfg.solver, cfg.run.t_end)?;
    let extra = vec![
        ("regime".to_string(), regime.kind.to_string()),
        ("epsilon".to_string(), format!("{:e}", regime.epsilon)),
        ("law".to_string(), law_line(&regime.law)),
        ("grid".to_string(), grid.n().to_string()),
    ];
    traj.write_dir(&dir, &extra)?;
    let drift = mass_drift(&traj);
    println!("{}", regime_line(&regime));
    println!(
        "steps={} t={:e} final_l2={:e} mass_drift={drift:e}",
        traj.steps(),
        traj.final_time(),
        norm_l2(traj.final_field())
    );
    if drift > MASS_TOL {
        return Err(Failure::Check(format!(
            "mass drift {drift:e} exceeds {MASS_TOL:e}"
        )));
    }
    Ok(())
}

pub fn cell(cfg: &RunConfig) -> std::result::Result<(), Failure> {
    let dir = out_dir(cfg)?;
    cfg.validate()?;
    let regime = cfg.regime()?;
    let (t, tau) = (cfg.cell.t, cfg.cell.tau);
    let result = if cfg.cell.frozen {
        frozen_profile(&regime, cfg, t, tau)
    } else {
        tidedune::cell_solve(t, &regime.law, &cfg.forcing()?, cfg.grid()?, &cfg.solver)
    };
    match result {
        Ok(p) => {
            p.write_dir(&dir)?;
            for line in p.report().to_lines() {
                println!("{line}");
            }
            println!("max_abs_mean={:e}", p.max_abs_mean());
            if p.max_abs_mean() > 1e-10 {
                return Err(Failure::Check(format!(
                    "profile mean {:e} exceeds 1e-10",
                    p.max_abs_mean()
                )));
            }
            Ok(())
        }
        Err(e) => {
            write(
                &dir.join("convergence.txt"),
                &format!("t={t:e}\ntau={tau:e}\nfailed: {e}\n"),
            )?;
            Err(e.into())
        }
    }
}

pub fn verify(
    cfg: &RunConfig,
    kind: VerifyKind,
    timings: bool,
) -> std::result::Result<(), Failure> {
    let dir = out_dir(cfg)?;
    cfg.validate()?;
    if matches!(kind, VerifyKind::Sweep | VerifyKind::Closeness) && cfg.sweep.epsilons.is_empty() {
        return Err(Error::Config("epsilon list is empty".into()).into());
    }
    match kind {
        VerifyKind::Sweep => sweep(cfg, &dir, timings),
        VerifyKind::Contraction => contraction(cfg, &dir),
        VerifyKind::Closeness => quasi_periodic(cfg, &dir),
    }
}

fn sweep(cfg: &RunConfig, dir: &Path, timings: bool) -> std::result::Result<(), Failure> {
    let regime = cfg.regime()?;
    let corrector = cfg.sweep.corrector && regime.law.u_thr() == 0.0;
    if cfg.sweep.corrector && !corrector {
        eprintln!("note: corrector skipped, it needs a law without a velocity threshold");
    }
    let setup = SweepSetup {
        slow_samples: cfg.sweep.slow_samples,
        corrector,
        derivative_delta: cfg.sweep.derivative_delta,
        initial: InitialCondition::Profile,
        ..SweepSetup::new(
            regime,
            cfg.forcing()?,
            cfg.grid()?,
            cfg.solver.clone(),
            cfg.sweep.t_end,
        )
    };
    let out = run_sweep(&setup, &cfg.sweep.epsilons, Some(&dir.join("members")))?;
    out.two_scale.write(dir, "two_scale", timings)?;
    print!("{}", out.two_scale.summary());
    if let Some(rep) = &out.corrector {
        rep.write(dir, "corrector", timings)?;
        let (max, ratio) = rep.scaled_summary();
        println!("max error/eps={max:.6e} ratio(smallest/largest eps)={ratio:.4}");
    }
    if let Some(c) = &out.corrector_solution {
        c.profile.write_dir(&dir.join("corrector_profile"))?;
        println!(
            "corrector solvability: divergence mean {:.3e}, derivative mean {:.3e}",
            c.divergence_mean, c.derivative_mean
        );
    }
    let failed: Vec<String> = out
        .two_scale
        .rows
        .iter()
        .filter_map(|r| {
            r.failure
                .as_ref()
                .map(|f| format!("eps={:e}: {f}", r.epsilon))
        })
        .collect();
    if !failed.is_empty() {
        return Err(Failure::Check(failed.join("; ")));
    }
    if let Some(r) = out.two_scale.rows.iter().find(|r| r.mass_drift > MASS_TOL) {
        return Err(Failure::Check(format!(
            "mass drift {:e} at eps={:e}",
            r.mass_drift, r.epsilon
        )));
    }
    Ok(())
}

fn contraction(cfg: &RunConfig, dir: &Path) -> std::result::Result<(), Failure> {
    let regime = cfg.regime()?;
    let grid = cfg.grid()?;
    let c = &cfg.contraction;
    let cell = if cfg.cell.frozen {
        let field = RegimeField::new(regime.clone(), cfg.forcing()?);
        let src = FrozenField {
            field: &field,
            grid,
            t: cfg.cell.t,
            tau: cfg.cell.tau,
        };
        CellProblem::new(&src, cfg.solver.dt_per_period)?
    } else {
        cell_problem(cfg.cell.t, &regime.law, &cfg.forcing()?, grid, &cfg.solver)?
    };
    let mut csv = String::from("mu,nu,seed,trial,ratio\n");
    let mut violations = Vec::new();
    for &mu in &c.mu {
        let r = contraction_ratio(&cell, mu, c.nu, c.trials, cfg.seed, &cfg.solver)?;
        for (i, v) in r.ratios.iter().enumerate() {
            let _ = writeln!(csv, "{mu:e},{:e},{},{i},{v:e}", c.nu, cfg.seed);
        }
        println!(
            "mu={mu} nu={} trials={} seed={} max_ratio={:.6e} bound={:.6}",
            c.nu,
            c.trials,
            cfg.seed,
            r.max_ratio(),
            r.bound()
        );
        if mu > 0.0 && r.max_ratio() > r.bound() + 1e-6 {
            violations.push(format!("mu={mu}: {:.6} > {:.6}", r.max_ratio(), r.bound()));
        }
    }
    write(&dir.join("contraction.csv"), &csv)?;
    if !violations.is_empty() {
        return Err(Failure::Check(violations.join("; ")));
    }
    Ok(())
}

fn quasi_periodic(cfg: &RunConfig, dir: &Path) -> std::result::Result<(), Failure> {
    let regime = cfg.regime()?;
    let forcing = cfg.forcing()?;
    let grid = cfg.grid()?;
    let mut csv = String::from("epsilon,e0,slope,secant_bound,excess\n");
    for (i, &eps) in cfg.sweep.epsilons.iter().enumerate() {
        let r = closeness(
            &regime.with_epsilon(eps)?,
            &forcing,
            grid,
            &cfg.solver,
            cfg.sweep.t_end,
            cfg.sweep.slow_samples,
            None,
        )?;
        let _ = writeln!(
            csv,
            "{eps:e},{:e},{:e},{:e},{:e}",
            r.e0, r.slope, r.secant_bound, r.excess
        );
        let mut samples = String::from("t,distance\n");
        for (t, e) in &r.samples {
            let _ = writeln!(samples, "{t:e},{e:e}");
        }
        write(&dir.join(format!("closeness_{i:02}.csv")), &samples)?;
        println!(
            "eps={eps:e} e0={:.3e} slope={:.4e} secant_bound={:.4e} excess={:.3e}",
            r.e0, r.slope, r.secant_bound, r.excess
        );
    }
    write(&dir.join("closeness.csv"), &csv)?;
    Ok(())
}
