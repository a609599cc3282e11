// SPDX-License-Identifier: Apache-2.0

//! Implicit time stepping of the fine models and the period-map fixed point
//! that produces θ-periodic cell solutions.

mod fine;
mod linear;
mod periodic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{divergence, Grid, ScalarField, VectorField};
use crate::physics::{assemble_coefficients, Forcing};
use crate::scaling::RegimeSpec;

pub use fine::{solve_fine, solve_fine_observed, DiagnosticRow, FineClock, Trajectory};
pub use linear::{implicit_solve, LinearStats};
pub use periodic::{
    find_periodic, period_map, quasi_periodic_reconstruction, CellProblem, ConvergenceReport,
    EntryLog, FrozenField, PeriodicSource, QuasiPeriodic,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Backward-Euler steps per unit of θ.
    pub dt_per_period: usize,
    /// Relative residual target for each linear solve.
    pub linear_tol: f64,
    pub linear_maxiter: usize,
    /// Jacobi preconditioning of the linear solves.
    pub precondition: bool,
    /// Regularizing diffusivity added in fine runs.
    pub nu: f64,
    /// Penalization used by single period-map evaluations.
    pub mu: f64,
    /// L² distance between successive period images that ends an entry.
    pub fixed_point_tol: f64,
    pub fixed_point_maxiter: usize,
    /// `(μ, ν)` pairs visited in order by [`find_periodic`].
    pub continuation: Vec<(f64, f64)>,
    /// On failure of a `ν = 0` entry keep the last converged entry instead.
    pub degenerate_fallback: bool,
    /// Keep every k-th fine snapshot (0: first and last only).
    pub snapshot_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt_per_period: 32,
            linear_tol: 1e-10,
            linear_maxiter: 2000,
            precondition: false,
            nu: 0.0,
            mu: 0.0,
            fixed_point_tol: 1e-9,
            fixed_point_maxiter: 200,
            continuation: vec![(1.0, 1e-2), (0.25, 1e-3), (0.0, 1e-4), (0.0, 0.0)],
            degenerate_fallback: true,
            snapshot_every: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dt_per_period < 16 {
            return Err(Error::Config(format!(
                "dt_per_period must be >= 16, got {}",
                self.dt_per_period
            )));
        }
        if !(self.linear_tol > 0.0 && self.linear_tol <= 1e-6) {
            return Err(Error::Config(format!(
                "linear_tol must lie in (0, 1e-6], got {}",
                self.linear_tol
            )));
        }
        if self.linear_maxiter == 0 || self.fixed_point_maxiter == 0 {
            return Err(Error::Config("iteration caps must be positive".into()));
        }
        if !(self.fixed_point_tol > 0.0) {
            return Err(Error::Config(format!(
                "fixed_point_tol must be positive, got {}",
                self.fixed_point_tol
            )));
        }
        if !(self.nu >= 0.0) || !(self.mu >= 0.0) {
            return Err(Error::Config("mu and nu must be >= 0".into()));
        }
        if self.continuation.is_empty() {
            return Err(Error::Config("continuation schedule is empty".into()));
        }
        if self
            .continuation
            .iter()
            .any(|&(mu, nu)| !(mu >= 0.0 && nu >= 0.0 && mu.is_finite() && nu.is_finite()))
        {
            return Err(Error::Config(
                "continuation entries need finite mu, nu >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    pub z: ScalarField,
}

/// Pointwise diffusivity and source vector as functions of `(t, τ, θ, x)`.
pub trait CoefficientField: Sync {
    fn sample(&self, t: f64, tau: f64, theta: f64, x: [f64; 2]) -> (f64, [f64; 2]);
}

impl<F> CoefficientField for F
where
    F: Fn(f64, f64, f64, [f64; 2]) -> (f64, [f64; 2]) + Sync,
{
    fn sample(&self, t: f64, tau: f64, theta: f64, x: [f64; 2]) -> (f64, [f64; 2]) {
        self(t, tau, theta, x)
    }
}

/// Fine-scale coefficients `(A^ε, C^ε)` of a regime.
#[derive(Clone, Debug)]
pub struct RegimeField {
    pub regime: RegimeSpec,
    pub forcing: Forcing,
}

impl RegimeField {
    pub fn new(regime: RegimeSpec, forcing: Forcing) -> Self {
        RegimeField { regime, forcing }
    }
}

impl CoefficientField for RegimeField {
    fn sample(&self, t: f64, tau: f64, theta: f64, x: [f64; 2]) -> (f64, [f64; 2]) {
        let s = assemble_coefficients(&self.regime, &self.forcing, t, tau, theta, x);
        (s.a, s.c)
    }
}

/// Coefficients frozen over one implicit step: diffusivity on x- and
/// y-faces and the source `div C` at nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCoefficients {
    grid: Grid,
    ax: Vec<f64>,
    ay: Vec<f64>,
    source: ScalarField,
}

impl StepCoefficients {
    pub fn new(grid: Grid, ax: Vec<f64>, ay: Vec<f64>, source: ScalarField) -> Result<Self> {
        if ax.len() != grid.len() || ay.len() != grid.len() || source.grid() != grid {
            return Err(Error::GridMismatch("step coefficient arrays".into()));
        }
        if ax.iter().chain(&ay).any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::Degenerate(
                "diffusivity must be finite and >= 0".into(),
            ));
        }
        Ok(StepCoefficients {
            grid,
            ax,
            ay,
            source,
        })
    }

    /// Samples `field` at face positions and takes the divergence of `C`.
    pub fn assemble(
        grid: Grid,
        field: &dyn CoefficientField,
        t: f64,
        tau: f64,
        theta: f64,
    ) -> Self {
        let n = grid.n();
        let mut ax = vec![0.0; grid.len()];
        let mut ay = vec![0.0; grid.len()];
        let mut cx = vec![0.0; grid.len()];
        let mut cy = vec![0.0; grid.len()];
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                let (a, c) = field.sample(t, tau, theta, grid.x_face(i, j));
                ax[k] = a;
                cx[k] = c[0];
                let (a, c) = field.sample(t, tau, theta, grid.y_face(i, j));
                ay[k] = a;
                cy[k] = c[1];
            }
        }
        let source =
            divergence(&VectorField::from_components(grid, cx, cy).expect("lengths match"));
        StepCoefficients {
            grid,
            ax,
            ay,
            source,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn ax(&self) -> &[f64] {
        &self.ax
    }

    pub fn ay(&self) -> &[f64] {
        &self.ay
    }

    pub fn source(&self) -> &ScalarField {
        &self.source
    }

    /// Same diffusivities with a different source.
    pub fn with_source(&self, source: ScalarField) -> Result<Self> {
        if source.grid() != self.grid {
            return Err(Error::GridMismatch("replacement source".into()));
        }
        Ok(StepCoefficients {
            grid: self.grid,
            ax: self.ax.clone(),
            ay: self.ay.clone(),
            source,
        })
    }

    pub fn max_diffusivity(&self) -> f64 {
        self.ax.iter().chain(&self.ay).fold(0.0, |m, a| m.max(*a))
    }

    /// `div((A + ν) grad u)` with the face diffusivities.
    pub fn diffusion(&self, u: &ScalarField, nu: f64) -> Result<ScalarField> {
        if u.grid() != self.grid {
            return Err(Error::GridMismatch("diffusion operand".into()));
        }
        let mut out = vec![0.0; self.grid.len()];
        linear::apply_diffusion(self.grid, &self.ax, &self.ay, nu, u.values(), &mut out);
        ScalarField::from_values(self.grid, out)
    }
}

/// `div(a grad u)` for face diffusivities `ax`, `ay` of either sign.
pub fn face_diffusion(grid: Grid, ax: &[f64], ay: &[f64], u: &ScalarField) -> Result<ScalarField> {
    if ax.len() != grid.len() || ay.len() != grid.len() || u.grid() != grid {
        return Err(Error::GridMismatch("face diffusion operands".into()));
    }
    let mut out = vec![0.0; grid.len()];
    linear::apply_diffusion(grid, ax, ay, 0.0, u.values(), &mut out);
    ScalarField::from_values(grid, out)
}

/// One backward-Euler step of `∂z/∂t = s div((A + ν) grad z) + s div C`
/// with `s = stiffness`.
pub fn step_implicit(
    state: &State,
    dt: f64,
    coeffs: &StepCoefficients,
    stiffness: f64,
    config: &SolverConfig,
) -> Result<(State, LinearStats)> {
    if !(dt > 0.0) || !(stiffness > 0.0) {
        return Err(Error::Config(format!(
            "step needs dt > 0 and stiffness > 0, got {dt}, {stiffness}"
        )));
    }
    let (z, stats) = implicit_solve(&state.z, coeffs, dt * stiffness, 1.0, config.nu, config)?;
    Ok((State { t: state.t + dt, z }, stats))
}
