// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{mass, norm_l2, ScalarField};
use crate::physics::Forcing;
use crate::scaling::{Model, RegimeSpec};

use super::{implicit_solve, CoefficientField, RegimeField, SolverConfig, State, StepCoefficients};

/// Maps the fine step index to `(t, τ, θ)`. The step is `dt = ε / N`, so θ
/// advances by exactly `1/N` per step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FineClock {
    pub epsilon: f64,
    pub model: Model,
    pub steps_per_period: usize,
}

impl FineClock {
    pub fn new(regime: &RegimeSpec, config: &SolverConfig) -> Self {
        FineClock {
            epsilon: regime.epsilon,
            model: regime.kind.model(),
            steps_per_period: config.dt_per_period,
        }
    }

    pub fn dt(&self) -> f64 {
        self.epsilon / self.steps_per_period as f64
    }

    pub fn stiffness(&self) -> f64 {
        match self.model {
            Model::LongTerm => 1.0 / (self.epsilon * self.epsilon),
            _ => 1.0 / self.epsilon,
        }
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.epsilon / self.steps_per_period as f64
    }

    /// θ mod 1 at `step`, exact on the lattice.
    pub fn theta(&self, step: usize) -> f64 {
        (step % self.steps_per_period) as f64 / self.steps_per_period as f64
    }

    pub fn tau(&self, step: usize) -> f64 {
        match self.model {
            Model::MeanTerm => self.time(step) / self.epsilon.sqrt(),
            _ => 0.0,
        }
    }

    /// Number of steps to reach `t_end`, rounded to the step lattice.
    pub fn steps_to(&self, t_end: f64) -> usize {
        (t_end / self.dt()).round() as usize
    }

    fn model_name(&self) -> &'static str {
        match self.model {
            Model::ShortTerm => "short_term",
            Model::MeanTerm => "mean_term",
            Model::LongTerm => "long_term",
        }
    }

    fn model_from_name(s: &str) -> Option<Model> {
        match s {
            "short_term" => Some(Model::ShortTerm),
            "mean_term" => Some(Model::MeanTerm),
            "long_term" => Some(Model::LongTerm),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticRow {
    pub step: usize,
    pub t: f64,
    pub theta: f64,
    pub mass: f64,
    pub l2_norm: f64,
    pub linear_iters: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub clock: FineClock,
    /// Step index of each stored snapshot; always contains 0 and the last step.
    pub snapshot_steps: Vec<usize>,
    pub times: Vec<f64>,
    pub snapshots: Vec<ScalarField>,
    /// One row per step including the initial state.
    pub diagnostics: Vec<DiagnosticRow>,
}

impl Trajectory {
    pub fn final_field(&self) -> &ScalarField {
        self.snapshots
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn steps(&self) -> usize {
        self.diagnostics.last().map_or(0, |r| r.step)
    }

    pub fn diagnostics_csv(&self) -> String {
        let mut s = String::from("step,t,theta,mass,l2_norm,linear_iters\n");
        for r in &self.diagnostics {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{}",
                r.step, r.t, r.theta, r.mass, r.l2_norm, r.linear_iters
            );
        }
        s
    }

    /// Writes `manifest.txt`, `diagnostics.csv` and one binary field file
    /// per snapshot. `extra` lines are appended to the manifest verbatim.
    pub fn write_dir(&self, dir: &Path, extra: &[(String, String)]) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut m = String::new();
        let _ = writeln!(m, "kind=trajectory");
        let _ = writeln!(m, "epsilon={:?}", self.clock.epsilon);
        let _ = writeln!(m, "model={}", self.clock.model_name());
        let _ = writeln!(m, "steps_per_period={}", self.clock.steps_per_period);
        let _ = writeln!(m, "steps={}", self.steps());
        for (step, (t, field)) in self
            .snapshot_steps
            .iter()
            .zip(self.times.iter().zip(&self.snapshots))
        {
            let file = format!("snap_{step:08}.bin");
            field.write_binary(&dir.join(&file))?;
            let _ = writeln!(m, "snapshot={step} {t:?} {file}");
        }
        for (k, v) in extra {
            let _ = writeln!(m, "{k}={v}");
        }
        let path = dir.join("manifest.txt");
        fs::write(&path, m).map_err(|e| Error::io(&path, e))?;
        let path = dir.join("diagnostics.csv");
        fs::write(&path, self.diagnostics_csv()).map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.txt");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let bad = |r: &str| Error::format(&path, r.to_string());
        let (mut epsilon, mut model, mut spp) = (None, None, None);
        let (mut steps, mut times, mut snaps) = (Vec::new(), Vec::new(), Vec::new());
        for line in text.lines() {
            let Some((k, v)) = line.split_once('=') else {
                continue;
            };
            match k {
                "epsilon" => epsilon = v.parse::<f64>().ok(),
                "model" => model = FineClock::model_from_name(v),
                "steps_per_period" => spp = v.parse::<usize>().ok(),
                "snapshot" => {
                    let parts: Vec<&str> = v.split_whitespace().collect();
                    if parts.len() != 3 {
                        return Err(bad("snapshot line needs step, t, file"));
                    }
                    steps.push(parts[0].parse::<usize>().map_err(|e| bad(&e.to_string()))?);
                    times.push(parts[1].parse::<f64>().map_err(|e| bad(&e.to_string()))?);
                    snaps.push(ScalarField::read_binary(&dir.join(parts[2]))?);
                }
                _ => {}
            }
        }
        let clock = FineClock {
            epsilon: epsilon.ok_or_else(|| bad("missing epsilon"))?,
            model: model.ok_or_else(|| bad("missing model"))?,
            steps_per_period: spp.ok_or_else(|| bad("missing steps_per_period"))?,
        };
        if snaps.is_empty() {
            return Err(bad("no snapshots"));
        }
        let path = dir.join("diagnostics.csv");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let bad = |r: String| Error::format(&path, r);
        let mut diagnostics = Vec::new();
        for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(format!("expected 6 columns in {line:?}")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
            let int = |s: &str| s.parse::<usize>().map_err(|e| bad(e.to_string()));
            diagnostics.push(DiagnosticRow {
                step: int(f[0])?,
                t: num(f[1])?,
                theta: num(f[2])?,
                mass: num(f[3])?,
                l2_norm: num(f[4])?,
                linear_iters: int(f[5])?,
            });
        }
        Ok(Trajectory {
            clock,
            snapshot_steps: steps,
            times,
            snapshots: snaps,
            diagnostics,
        })
    }
}

/// Fine run of a regime from `z0` to `t_end`.
pub fn solve_fine(
    z0: &ScalarField,
    regime: &RegimeSpec,
    forcing: &Forcing,
    config: &SolverConfig,
    t_end: f64,
) -> Result<Trajectory> {
    let field = RegimeField::new(regime.clone(), forcing.clone());
    solve_fine_observed(
        z0,
        &field,
        FineClock::new(regime, config),
        config,
        t_end,
        &mut |_, _| Ok(()),
    )
}

/// Fine run with arbitrary coefficients; `observer` sees every accepted
/// state, including the initial one, with its step index.
pub fn solve_fine_observed(
    z0: &ScalarField,
    field: &dyn CoefficientField,
    clock: FineClock,
    config: &SolverConfig,
    t_end: f64,
    observer: &mut dyn FnMut(usize, &State) -> Result<()>,
) -> Result<Trajectory> {
    config.validate()?;
    if !(t_end > 0.0) {
        return Err(Error::Config(format!(
            "final time must be positive, got {t_end}"
        )));
    }
    if !z0.is_finite() {
        return Err(Error::Degenerate("initial field is not finite".into()));
    }
    let grid = z0.grid();
    let steps = clock.steps_to(t_end).max(1);
    let kappa = clock.dt() * clock.stiffness();
    let every = config.snapshot_every;

    let mut state = State {
        t: 0.0,
        z: z0.clone(),
    };
    let mut traj = Trajectory {
        clock,
        snapshot_steps: vec![0],
        times: vec![0.0],
        snapshots: vec![z0.clone()],
        diagnostics: vec![DiagnosticRow {
            step: 0,
            t: 0.0,
            theta: 0.0,
            mass: mass(z0),
            l2_norm: norm_l2(z0),
            linear_iters: 0,
        }],
    };
    observer(0, &state)?;
    for k in 1..=steps {
        let t = clock.time(k);
        let coeffs = StepCoefficients::assemble(grid, field, t, clock.tau(k), clock.theta(k));
        let (z, stats) =
            implicit_solve(&state.z, &coeffs, kappa, 1.0, config.nu, config).map_err(|e| {
                Error::Step {
                    step: k,
                    source: Box::new(e),
                }
            })?;
        state = State { t, z };
        observer(k, &state).map_err(|e| Error::Step {
            step: k,
            source: Box::new(e),
        })?;
        traj.diagnostics.push(DiagnosticRow {
            step: k,
            t,
            theta: clock.theta(k),
            mass: mass(&state.z),
            l2_norm: norm_l2(&state.z),
            linear_iters: stats.iterations,
        });
        if k == steps || (every > 0 && k % every == 0) {
            traj.snapshot_steps.push(k);
            traj.times.push(t);
            traj.snapshots.push(state.z.clone());
        }
    }
    Ok(traj)
}
