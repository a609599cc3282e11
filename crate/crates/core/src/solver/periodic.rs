// SPDX-License-Identifier: Apache-2.0

//! θ-periodic solutions of `μ ξ + ∂ξ/∂θ - div((Ã + ν) grad ξ) = div C̃` with
//! the slow variables frozen, found as fixed points of the period map.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{distance_l2, Grid, ScalarField};
use crate::homogenize::{PeriodicProfile, ProfileFamily};
use crate::scaling::Model;

use super::{implicit_solve, CoefficientField, SolverConfig, StepCoefficients};

/// Coefficients of a cell problem on the θ-lattice `k / steps`.
pub trait PeriodicSource: Sync {
    fn grid(&self) -> Grid;

    /// Frozen slow variables `(t, τ)`.
    fn slow(&self) -> (f64, f64);

    /// Coefficients of the step ending at `θ = k / steps`, `1 <= k <= steps`.
    fn step_coefficients(&self, k: usize, steps: usize) -> Result<StepCoefficients>;
}

/// A [`CoefficientField`] with `(t, τ)` held fixed.
pub struct FrozenField<'a> {
    pub field: &'a dyn CoefficientField,
    pub grid: Grid,
    pub t: f64,
    pub tau: f64,
}

impl PeriodicSource for FrozenField<'_> {
    fn grid(&self) -> Grid {
        self.grid
    }

    fn slow(&self) -> (f64, f64) {
        (self.t, self.tau)
    }

    fn step_coefficients(&self, k: usize, steps: usize) -> Result<StepCoefficients> {
        let theta = (k % steps) as f64 / steps as f64;
        Ok(StepCoefficients::assemble(
            self.grid, self.field, self.t, self.tau, theta,
        ))
    }
}

/// Outcome of one continuation entry.
#[derive(Clone, Debug, PartialEq)]
pub struct EntryLog {
    pub mu: f64,
    pub nu: f64,
    pub iterations: usize,
    /// Last L² distance between successive period images.
    pub distance: f64,
    /// Last ratio of successive distances.
    pub ratio: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceReport {
    pub entries: Vec<EntryLog>,
    /// `‖Φ(S(0)) - S(0)‖₂` for the returned profile.
    pub residual: f64,
    /// Set when a failing `ν = 0` entry was replaced by the last converged one.
    pub fallback: bool,
}

impl ConvergenceReport {
    pub fn to_lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .entries
            .iter()
            .map(|e| {
                format!(
                    "mu={:?} nu={:?} iterations={} distance={:e} ratio={:e} converged={}",
                    e.mu, e.nu, e.iterations, e.distance, e.ratio, e.converged
                )
            })
            .collect();
        out.push(format!(
            "residual={:e} fallback={}",
            self.residual, self.fallback
        ));
        out
    }
}

/// Cell problem with the step coefficients of one period assembled once.
pub struct CellProblem {
    grid: Grid,
    slow: (f64, f64),
    steps: Vec<StepCoefficients>,
}

impl CellProblem {
    pub fn new(source: &dyn PeriodicSource, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("cell problem needs at least one step".into()));
        }
        let coeffs = (1..=steps)
            .into_par_iter()
            .map(|k| source.step_coefficients(k, steps))
            .collect::<Result<Vec<_>>>()?;
        Self::from_steps(source.grid(), source.slow(), coeffs)
    }

    pub fn from_steps(grid: Grid, slow: (f64, f64), steps: Vec<StepCoefficients>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Config("cell problem needs at least one step".into()));
        }
        if steps.iter().any(|c| c.grid() != grid) {
            return Err(Error::GridMismatch("cell step coefficients".into()));
        }
        Ok(CellProblem { grid, slow, steps })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn steps(&self) -> usize {
        self.steps.len()
    }

    pub fn slow(&self) -> (f64, f64) {
        self.slow
    }

    pub fn step(&self, k: usize) -> &StepCoefficients {
        &self.steps[k - 1]
    }

    fn sweep(
        &self,
        xi: &ScalarField,
        mu: f64,
        nu: f64,
        config: &SolverConfig,
        keep: bool,
    ) -> Result<(ScalarField, Vec<ScalarField>)> {
        if xi.grid() != self.grid {
            return Err(Error::GridMismatch("period map start".into()));
        }
        if !(mu >= 0.0) || !(nu >= 0.0) {
            return Err(Error::Config(format!(
                "period map needs mu, nu >= 0, got {mu}, {nu}"
            )));
        }
        let dtheta = 1.0 / self.steps.len() as f64;
        let sigma = 1.0 + dtheta * mu;
        let mut states = Vec::with_capacity(if keep { self.steps.len() } else { 0 });
        let mut z = xi.clone();
        for (k, coeffs) in self.steps.iter().enumerate() {
            if keep {
                states.push(z.clone());
            }
            z = implicit_solve(&z, coeffs, dtheta, sigma, nu, config)
                .map_err(|e| Error::Step {
                    step: k + 1,
                    source: Box::new(e),
                })?
                .0;
        }
        Ok((z, states))
    }

    /// Image of `xi` after one unit of θ.
    pub fn period_map(
        &self,
        xi: &ScalarField,
        mu: f64,
        nu: f64,
        config: &SolverConfig,
    ) -> Result<ScalarField> {
        Ok(self.sweep(xi, mu, nu, config, false)?.0)
    }

    /// States at `θ = 0, 1/N, …, (N-1)/N` followed by the image at `θ = 1`.
    pub fn period_orbit(
        &self,
        xi: &ScalarField,
        mu: f64,
        nu: f64,
        config: &SolverConfig,
    ) -> Result<(Vec<ScalarField>, ScalarField)> {
        let (end, states) = self.sweep(xi, mu, nu, config, true)?;
        Ok((states, end))
    }

    /// Iterates the continuation schedule from `initial` (zero if absent).
    pub fn find_periodic(
        &self,
        config: &SolverConfig,
        initial: Option<&ScalarField>,
    ) -> Result<PeriodicProfile> {
        config.validate()?;
        let mut xi = match initial {
            Some(f) if f.grid() != self.grid => {
                return Err(Error::GridMismatch("initial guess".into()))
            }
            Some(f) => f.clone(),
            None => ScalarField::zeros(self.grid),
        };
        xi.project_zero_mean();
        let mut report = ConvergenceReport::default();
        let mut accepted: Option<(f64, f64, ScalarField)> = None;

        for (entry, &(mu, nu)) in config.continuation.iter().enumerate() {
            let mut prev: Option<f64> = None;
            let mut log = EntryLog {
                mu,
                nu,
                iterations: 0,
                distance: f64::INFINITY,
                ratio: f64::NAN,
                converged: false,
            };
            let mut current = xi.clone();
            for it in 1..=config.fixed_point_maxiter {
                let mut next = self.period_map(&current, mu, nu, config)?;
                if mu == 0.0 {
                    next.project_zero_mean();
                }
                let d = distance_l2(&next, &current)?;
                log.iterations = it;
                log.distance = d;
                if let Some(p) = prev {
                    log.ratio = if p > 0.0 { d / p } else { 0.0 };
                }
                prev = Some(d);
                current = next;
                if d < config.fixed_point_tol {
                    log.converged = true;
                    break;
                }
                if !d.is_finite() {
                    break;
                }
            }
            let converged = log.converged;
            report.entries.push(log.clone());
            if converged {
                xi = current.clone();
                accepted = Some((mu, nu, current));
                continue;
            }
            if nu == 0.0 && config.degenerate_fallback && accepted.is_some() {
                report.fallback = true;
                break;
            }
            return Err(Error::FixedPoint {
                entry,
                mu,
                nu,
                iterations: log.iterations,
                distance: log.distance,
                ratio: log.ratio,
            });
        }

        let (mu, nu, start) = accepted.expect("a converged entry or an early error");
        let (mut states, mut end) = self.period_orbit(&start, mu, nu, config)?;
        if mu == 0.0 {
            end.project_zero_mean();
            states.iter_mut().for_each(ScalarField::project_zero_mean);
        }
        report.residual = distance_l2(&end, &start)?;
        let (t, tau) = self.slow;
        PeriodicProfile::new(t, tau, states, mu, nu, report)
    }
}

/// `ξ(1)` for `μ ξ + ∂ξ/∂θ - div((Ã + ν) grad ξ) = div C̃`, `ξ(0) = xi`.
pub fn period_map(
    xi: &ScalarField,
    source: &dyn PeriodicSource,
    mu: f64,
    nu: f64,
    config: &SolverConfig,
) -> Result<ScalarField> {
    CellProblem::new(source, config.dt_per_period)?.period_map(xi, mu, nu, config)
}

/// θ-periodic zero-mean solution for the frozen slow variables of `source`.
pub fn find_periodic(
    source: &dyn PeriodicSource,
    config: &SolverConfig,
    initial: Option<&ScalarField>,
) -> Result<PeriodicProfile> {
    config.validate()?;
    CellProblem::new(source, config.dt_per_period)?.find_periodic(config, initial)
}

/// `Z^ε(t, x) = S(t, t/√ε, t/ε, x)` from a family of periodic profiles.
#[derive(Clone, Debug)]
pub struct QuasiPeriodic<'a> {
    pub family: &'a ProfileFamily,
    pub epsilon: f64,
    pub model: Model,
}

impl QuasiPeriodic<'_> {
    pub fn eval(&self, t: f64) -> Result<ScalarField> {
        let tau = match self.model {
            Model::MeanTerm => t / self.epsilon.sqrt(),
            _ => 0.0,
        };
        self.eval_at(t, tau, (t / self.epsilon).rem_euclid(1.0))
    }

    /// Evaluation with an explicitly supplied `θ`, for lattice-exact callers.
    pub fn eval_at(&self, t: f64, tau: f64, theta: f64) -> Result<ScalarField> {
        self.family.evaluate(t, tau, theta)
    }
}

pub fn quasi_periodic_reconstruction(
    family: &ProfileFamily,
    epsilon: f64,
    model: Model,
) -> QuasiPeriodic<'_> {
    QuasiPeriodic {
        family,
        epsilon,
        model,
    }
}
