// SPDX-License-Identifier: Apache-2.0

//! Limit profile `U(t, θ, x)`, its first-order corrector `U¹` and the
//! two-scale reconstruction `U + ε U¹` at `θ = t/ε`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::physics::{first_order_coefficients, homogenized_coefficients, Forcing, TransportLaw};
use crate::solver::{
    face_diffusion, CellProblem, CoefficientField, ConvergenceReport, EntryLog, FrozenField,
    SolverConfig, StepCoefficients,
};

/// A θ-periodic field sampled at `θ = k / N`, `k = 0..N`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicProfile {
    t: f64,
    tau: f64,
    fields: Vec<ScalarField>,
    mu: f64,
    nu: f64,
    report: ConvergenceReport,
}

impl PeriodicProfile {
    pub fn new(
        t: f64,
        tau: f64,
        fields: Vec<ScalarField>,
        mu: f64,
        nu: f64,
        report: ConvergenceReport,
    ) -> Result<Self> {
        let Some(first) = fields.first() else {
            return Err(Error::Config("profile needs at least one θ-sample".into()));
        };
        let grid = first.grid();
        if fields.iter().any(|f| f.grid() != grid) {
            return Err(Error::GridMismatch("profile samples".into()));
        }
        Ok(PeriodicProfile {
            t,
            tau,
            fields,
            mu,
            nu,
            report,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn grid(&self) -> Grid {
        self.fields[0].grid()
    }

    pub fn steps(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }

    pub fn report(&self) -> &ConvergenceReport {
        &self.report
    }

    /// Sample `k` with periodic wrap.
    pub fn field(&self, k: usize) -> &ScalarField {
        &self.fields[k % self.fields.len()]
    }

    /// Linear interpolation in θ with periodic wrap.
    pub fn sample(&self, theta: f64) -> ScalarField {
        let n = self.fields.len();
        let s = theta.rem_euclid(1.0) * n as f64;
        let k = (s.floor() as usize).min(n - 1);
        let w = s - k as f64;
        if w == 0.0 {
            return self.fields[k].clone();
        }
        self.fields[k]
            .lerp(&self.fields[(k + 1) % n], w)
            .expect("profile samples share a grid")
    }

    pub fn max_abs_mean(&self) -> f64 {
        self.fields.iter().fold(0.0, |m, f| m.max(f.mean().abs()))
    }

    fn check_compatible(&self, other: &PeriodicProfile) -> Result<()> {
        if self.steps() != other.steps() {
            return Err(Error::GridMismatch(format!(
                "θ-lattices differ: {} vs {} samples",
                self.steps(),
                other.steps()
            )));
        }
        if self.grid() != other.grid() {
            return Err(Error::GridMismatch("profile grids differ".into()));
        }
        Ok(())
    }

    /// Writes `manifest.txt` and one binary file per θ-sample.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut m = String::new();
        let _ = writeln!(m, "kind=periodic_profile");
        let _ = writeln!(m, "t={:?}", self.t);
        let _ = writeln!(m, "tau={:?}", self.tau);
        let _ = writeln!(m, "n={}", self.grid().n());
        let _ = writeln!(m, "theta_samples={}", self.steps());
        let _ = writeln!(m, "mu={:?}", self.mu);
        let _ = writeln!(m, "nu={:?}", self.nu);
        for line in self.report.to_lines() {
            let _ = writeln!(m, "report={line}");
        }
        for (k, f) in self.fields.iter().enumerate() {
            f.write_binary(&dir.join(format!("theta_{k:05}.bin")))?;
        }
        let path = dir.join("manifest.txt");
        fs::write(&path, m).map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.txt");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let bad = |r: String| Error::format(&path, r);
        let mut kv = std::collections::HashMap::new();
        let mut report_lines = Vec::new();
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                if k == "report" {
                    report_lines.push(v.to_string());
                } else {
                    kv.insert(k.to_string(), v.to_string());
                }
            }
        }
        let num = |k: &str| -> Result<f64> {
            kv.get(k)
                .ok_or_else(|| bad(format!("missing {k}")))?
                .parse::<f64>()
                .map_err(|e| bad(format!("{k}: {e}")))
        };
        let steps = num("theta_samples")? as usize;
        let fields = (0..steps)
            .map(|k| ScalarField::read_binary(&dir.join(format!("theta_{k:05}.bin"))))
            .collect::<Result<Vec<_>>>()?;
        let report = parse_report(&report_lines).map_err(bad)?;
        PeriodicProfile::new(
            num("t")?,
            num("tau")?,
            fields,
            num("mu")?,
            num("nu")?,
            report,
        )
    }
}

fn parse_report(lines: &[String]) -> std::result::Result<ConvergenceReport, String> {
    let mut report = ConvergenceReport::default();
    for line in lines {
        let kv: std::collections::HashMap<&str, &str> = line
            .split_whitespace()
            .filter_map(|t| t.split_once('='))
            .collect();
        let f = |k: &str| -> std::result::Result<f64, String> {
            kv.get(k)
                .ok_or(format!("report lacks {k}"))?
                .parse::<f64>()
                .map_err(|e| e.to_string())
        };
        let b = |k: &str| kv.get(k).map(|v| *v == "true").unwrap_or(false);
        if kv.contains_key("residual") {
            report.residual = f("residual")?;
            report.fallback = b("fallback");
        } else {
            report.entries.push(EntryLog {
                mu: f("mu")?,
                nu: f("nu")?,
                iterations: f("iterations")? as usize,
                distance: f("distance")?,
                ratio: f("ratio")?,
                converged: b("converged"),
            });
        }
    }
    Ok(report)
}

/// Profiles on a slow-time lattice, and optionally a uniform τ-lattice on
/// `[0, 1)`; `profiles[i * tau_samples + j]` sits at `(times[i], j / tau_samples)`.
#[derive(Clone, Debug)]
pub struct ProfileFamily {
    times: Vec<f64>,
    tau_samples: usize,
    profiles: Vec<PeriodicProfile>,
}

impl ProfileFamily {
    pub fn new(
        times: Vec<f64>,
        tau_samples: usize,
        profiles: Vec<PeriodicProfile>,
    ) -> Result<Self> {
        if times.is_empty() || tau_samples == 0 || profiles.len() != times.len() * tau_samples {
            return Err(Error::Config(
                "profile family needs one profile per lattice point".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(
                "slow-time lattice must increase strictly".into(),
            ));
        }
        let first = &profiles[0];
        for p in &profiles[1..] {
            first.check_compatible(p)?;
        }
        Ok(ProfileFamily {
            times,
            tau_samples,
            profiles,
        })
    }

    /// Solves `solve(t, τ)` over the lattice in parallel.
    pub fn build<F>(times: Vec<f64>, tau_samples: usize, solve: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Result<PeriodicProfile> + Sync,
    {
        let points: Vec<(f64, f64)> = times
            .iter()
            .flat_map(|&t| {
                (0..tau_samples.max(1)).map(move |j| (t, j as f64 / tau_samples.max(1) as f64))
            })
            .collect();
        let profiles = points
            .into_par_iter()
            .map(|(t, tau)| solve(t, tau))
            .collect::<Result<Vec<_>>>()?;
        Self::new(times, tau_samples, profiles)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn tau_samples(&self) -> usize {
        self.tau_samples
    }

    pub fn profiles(&self) -> &[PeriodicProfile] {
        &self.profiles
    }

    pub fn profile(&self, i_t: usize, j_tau: usize) -> &PeriodicProfile {
        &self.profiles[i_t * self.tau_samples + j_tau]
    }

    pub fn grid(&self) -> Grid {
        self.profiles[0].grid()
    }

    fn bracket_t(&self, t: f64) -> Result<(usize, usize, f64)> {
        let (lo, hi) = (self.times[0], *self.times.last().expect("nonempty"));
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if t < lo - slack || t > hi + slack {
            return Err(Error::OutOfRange { t, lo, hi });
        }
        if self.times.len() == 1 {
            return Ok((0, 0, 0.0));
        }
        let t = t.clamp(lo, hi);
        let k = self
            .times
            .partition_point(|&s| s <= t)
            .clamp(1, self.times.len() - 1);
        let (a, b) = (self.times[k - 1], self.times[k]);
        let w = (t - a) / (b - a);
        if w >= 1.0 {
            Ok((k, k, 0.0))
        } else {
            Ok((k - 1, k, w))
        }
    }

    /// `S(t, τ, θ)` with linear interpolation in `t` and `τ` and periodic
    /// linear interpolation in θ.
    pub fn evaluate(&self, t: f64, tau: f64, theta: f64) -> Result<ScalarField> {
        let (i0, i1, wt) = self.bracket_t(t)?;
        let m = self.tau_samples;
        let (j0, j1, wtau) = if m == 1 {
            (0, 0, 0.0)
        } else {
            let s = tau.rem_euclid(1.0) * m as f64;
            let j = (s.floor() as usize).min(m - 1);
            (j, (j + 1) % m, s - j as f64)
        };
        let at_t = |i: usize| -> Result<ScalarField> {
            let a = self.profile(i, j0).sample(theta);
            if wtau == 0.0 {
                Ok(a)
            } else {
                a.lerp(&self.profile(i, j1).sample(theta), wtau)
            }
        };
        let a = at_t(i0)?;
        if wt == 0.0 {
            Ok(a)
        } else {
            a.lerp(&at_t(i1)?, wt)
        }
    }

    /// Largest `max_θ ‖S(t_{i+1}, θ) - S(t_i, θ)‖₂ / (t_{i+1} - t_i)` over the lattice.
    pub fn max_secant(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 1..self.times.len() {
            let dt = self.times[i] - self.times[i - 1];
            for j in 0..self.tau_samples {
                let (a, b) = (self.profile(i - 1, j), self.profile(i, j));
                for (x, y) in a.fields().iter().zip(b.fields()) {
                    let d = crate::grid::distance_l2(x, y).expect("family shares a grid");
                    best = best.max(d / dt);
                }
            }
        }
        best
    }

    /// `max_{t, τ, θ} ‖S‖₂` over the lattice.
    pub fn max_norm(&self) -> f64 {
        self.profiles
            .iter()
            .flat_map(|p| p.fields().iter())
            .map(crate::grid::norm_l2)
            .fold(0.0, f64::max)
    }
}

/// Homogenized coefficients `(Ã, C̃)`: no ε, no height variation.
#[derive(Clone, Debug)]
pub struct HomogenizedField {
    pub law: TransportLaw,
    pub forcing: Forcing,
}

impl CoefficientField for HomogenizedField {
    fn sample(&self, t: f64, _tau: f64, theta: f64, x: [f64; 2]) -> (f64, [f64; 2]) {
        homogenized_coefficients(&self.law, &self.forcing, t, theta, x)
    }
}

/// First-order coefficient corrections `(Ã₁, C̃₁)`; `Ã₁` may be negative.
#[derive(Clone, Debug)]
pub struct FirstOrderField {
    pub law: TransportLaw,
    pub forcing: Forcing,
}

impl CoefficientField for FirstOrderField {
    fn sample(&self, t: f64, _tau: f64, theta: f64, x: [f64; 2]) -> (f64, [f64; 2]) {
        first_order_coefficients(&self.law, &self.forcing, t, theta, x)
    }
}

/// Homogenized cell problem at slow time `t`.
pub fn cell_problem(
    t: f64,
    law: &TransportLaw,
    forcing: &Forcing,
    grid: Grid,
    config: &SolverConfig,
) -> Result<CellProblem> {
    let field = HomogenizedField {
        law: law.clone(),
        forcing: forcing.clone(),
    };
    let frozen = FrozenField {
        field: &field,
        grid,
        t,
        tau: 0.0,
    };
    CellProblem::new(&frozen, config.dt_per_period)
}

/// Periodic zero-mean solution `U(t, ·, ·)` of the homogenized cell problem.
pub fn cell_solve(
    t: f64,
    law: &TransportLaw,
    forcing: &Forcing,
    grid: Grid,
    config: &SolverConfig,
) -> Result<PeriodicProfile> {
    config.validate()?;
    cell_problem(t, law, forcing, grid, config)?.find_periodic(config, None)
}

/// Difference quotient `(after - before) / (t_after - t_before)` labelled
/// with the midpoint time.
pub fn slow_time_derivative(
    before: &PeriodicProfile,
    after: &PeriodicProfile,
) -> Result<PeriodicProfile> {
    before.check_compatible(after)?;
    let dt = after.t - before.t;
    if !(dt > 0.0) {
        return Err(Error::Config(format!(
            "slow-time step must be positive, got {dt}"
        )));
    }
    let fields = before
        .fields
        .iter()
        .zip(&after.fields)
        .map(|(a, b)| Ok(b.sub(a)?.scaled(1.0 / dt)))
        .collect::<Result<Vec<_>>>()?;
    PeriodicProfile::new(
        0.5 * (before.t + after.t),
        before.tau,
        fields,
        after.mu,
        after.nu,
        ConvergenceReport::default(),
    )
}

/// Centered difference of cell solutions at `t ± delta`.
pub fn slow_time_derivative_at(
    t: f64,
    delta: f64,
    law: &TransportLaw,
    forcing: &Forcing,
    grid: Grid,
    config: &SolverConfig,
) -> Result<PeriodicProfile> {
    let (a, b) = rayon::join(
        || cell_solve(t - delta, law, forcing, grid, config),
        || cell_solve(t + delta, law, forcing, grid, config),
    );
    slow_time_derivative(&a?, &b?)
}

/// `∂U/∂t` from the t-differentiated cell equation
/// `∂V/∂θ - div(Ã grad V) = ∂/∂t div C̃ + div(∂Ã/∂t grad U)`, with the
/// coefficient derivatives taken by centered differences of width `delta`.
pub fn slow_time_derivative_direct(
    u: &PeriodicProfile,
    law: &TransportLaw,
    forcing: &Forcing,
    delta: f64,
    config: &SolverConfig,
) -> Result<PeriodicProfile> {
    let grid = u.grid();
    let steps = u.steps();
    let t = u.t();
    let base = cell_problem(
        t,
        law,
        forcing,
        grid,
        &SolverConfig {
            dt_per_period: steps,
            ..config.clone()
        },
    )?;
    let field = HomogenizedField {
        law: law.clone(),
        forcing: forcing.clone(),
    };
    let coeffs = (1..=steps)
        .into_par_iter()
        .map(|k| {
            let theta = (k % steps) as f64 / steps as f64;
            let plus = StepCoefficients::assemble(grid, &field, t + delta, 0.0, theta);
            let minus = StepCoefficients::assemble(grid, &field, t - delta, 0.0, theta);
            let s = 0.5 / delta;
            let dax: Vec<f64> = plus
                .ax()
                .iter()
                .zip(minus.ax())
                .map(|(a, b)| (a - b) * s)
                .collect();
            let day: Vec<f64> = plus
                .ay()
                .iter()
                .zip(minus.ay())
                .map(|(a, b)| (a - b) * s)
                .collect();
            let mut src = plus.source().sub(minus.source())?.scaled(s);
            src.axpy(1.0, &face_diffusion(grid, &dax, &day, u.field(k))?)?;
            base.step(k).with_source(src)
        })
        .collect::<Result<Vec<_>>>()?;
    let cell = CellProblem::from_steps(grid, (t, 0.0), coeffs)?;
    cell.find_periodic(config, None)
}

/// Corrector profile together with the solvability diagnostics of its
/// right-hand side.
#[derive(Clone, Debug)]
pub struct CorrectorSolution {
    pub profile: PeriodicProfile,
    /// `max_θ |mean(div C̃₁ + div(Ã₁ grad U))|`.
    pub divergence_mean: f64,
    /// `max_θ |mean(∂U/∂t)|`.
    pub derivative_mean: f64,
}

impl CorrectorSolution {
    pub fn solvable(&self) -> bool {
        self.divergence_mean <= 1e-8 && self.derivative_mean <= 1e-8
    }
}

/// Periodic zero-mean `U¹` solving
/// `∂U¹/∂θ - div(Ã grad U¹) = div C̃₁ + div(Ã₁ grad U) - ∂U/∂t`.
///
/// On the θ-lattice the step ending at `θ_k` uses `∂U/∂t` at `θ_{k-1}`,
/// which is the lag produced by differencing the fine scheme.
pub fn solve_corrector(
    u: &PeriodicProfile,
    du_dt: &PeriodicProfile,
    law: &TransportLaw,
    forcing: &Forcing,
    config: &SolverConfig,
) -> Result<CorrectorSolution> {
    u.check_compatible(du_dt)?;
    if law.u_thr() > 0.0 {
        return Err(Error::Config(
            "the corrector is defined for laws without a velocity threshold (power3)".into(),
        ));
    }
    let grid = u.grid();
    let steps = u.steps();
    let t = u.t();
    let cfg = SolverConfig {
        dt_per_period: steps,
        ..config.clone()
    };
    let base = cell_problem(t, law, forcing, grid, &cfg)?;
    let first = FirstOrderField {
        law: law.clone(),
        forcing: forcing.clone(),
    };
    let parts = (1..=steps)
        .into_par_iter()
        .map(|k| {
            let theta = (k % steps) as f64 / steps as f64;
            let c1 = StepCoefficients::assemble(grid, &first, t, 0.0, theta);
            let mut div_part = c1.source().clone();
            div_part.axpy(1.0, &face_diffusion(grid, c1.ax(), c1.ay(), u.field(k))?)?;
            let dmean = div_part.mean().abs();
            let lagged = du_dt.field(k - 1);
            let mut src = div_part;
            src.axpy(-1.0, lagged)?;
            Ok((base.step(k).with_source(src)?, dmean, lagged.mean().abs()))
        })
        .collect::<Result<Vec<_>>>()?;
    let divergence_mean = parts.iter().fold(0.0f64, |m, p| m.max(p.1));
    let derivative_mean = parts.iter().fold(0.0f64, |m, p| m.max(p.2));
    let cell = CellProblem::from_steps(grid, (t, 0.0), parts.into_iter().map(|p| p.0).collect())?;
    let profile = cell.find_periodic(&cfg, None)?;
    Ok(CorrectorSolution {
        profile,
        divergence_mean,
        derivative_mean,
    })
}

/// `U(t, θ) + ε U¹(t, θ)` (order 1) or `U(t, θ)` (order 0) at an explicit θ.
pub fn reconstruct_at(
    u: &ProfileFamily,
    u1: Option<&ProfileFamily>,
    epsilon: f64,
    t: f64,
    theta: f64,
    order: u8,
) -> Result<ScalarField> {
    let mut out = u.evaluate(t, 0.0, theta)?;
    match (order, u1) {
        (0, _) => Ok(out),
        (1, Some(c)) => {
            out.axpy(epsilon, &c.evaluate(t, 0.0, theta)?)?;
            Ok(out)
        }
        (1, None) => Err(Error::Config(
            "first-order reconstruction needs a corrector family".into(),
        )),
        (o, _) => Err(Error::Config(format!(
            "reconstruction order must be 0 or 1, got {o}"
        ))),
    }
}

/// Reconstruction at `θ = t/ε mod 1`.
pub fn reconstruct(
    u: &ProfileFamily,
    u1: Option<&ProfileFamily>,
    epsilon: f64,
    t: f64,
    order: u8,
) -> Result<ScalarField> {
    reconstruct_at(u, u1, epsilon, t, (t / epsilon).rem_euclid(1.0), order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{distance_l2, norm_l2};
    use crate::physics::{Amplitude, Forcing, Secondary};
    use crate::scaling::{RegimeKind, RegimeSpec};
    use std::f64::consts::PI;

    fn law() -> TransportLaw {
        RegimeSpec::snapped(RegimeKind::ShortSmall).law
    }

    fn frozen_amp() -> Amplitude {
        Amplitude {
            slow: 0.0,
            ..Amplitude::default()
        }
    }

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn profile_sampling_wraps() {
        let g = Grid::new(4).unwrap();
        let fields: Vec<_> = (0..4).map(|k| ScalarField::constant(g, k as f64)).collect();
        let p =
            PeriodicProfile::new(0.0, 0.0, fields, 0.0, 0.0, ConvergenceReport::default()).unwrap();
        assert_eq!(p.sample(0.25).values()[0], 1.0);
        assert_eq!(p.sample(1.25).values()[0], 1.0);
        assert!((p.sample(0.875).values()[0] - 1.5).abs() < 1e-15);
        assert_eq!(p.field(5).values()[0], 1.0);
    }

    #[test]
    fn zero_source_gives_zero_cell_solution() {
        let g = Grid::new(8).unwrap();
        let mut l = law();
        l.c = 0.0;
        let p = cell_solve(0.2, &l, &Forcing::rotating(Amplitude::default()), g, &cfg()).unwrap();
        assert!(p.fields().iter().all(|f| f.max_abs() == 0.0));
    }

    #[test]
    fn homogenized_coefficients_ignore_epsilon() {
        let f = Forcing::rotating(Amplitude::default());
        let a = RegimeSpec::snapped(RegimeKind::ShortSmall);
        let b = a.with_epsilon(0.3).unwrap();
        let g = Grid::new(8).unwrap();
        let fa = HomogenizedField {
            law: a.law.clone(),
            forcing: f.clone(),
        };
        let fb = HomogenizedField {
            law: b.law.clone(),
            forcing: f,
        };
        for k in 0..8 {
            let th = k as f64 / 8.0;
            assert_eq!(
                StepCoefficients::assemble(g, &fa, 0.4, 0.0, th),
                StepCoefficients::assemble(g, &fb, 0.4, 0.0, th)
            );
        }
    }

    #[test]
    fn cell_solution_is_linear_in_the_source() {
        let g = Grid::new(16).unwrap();
        let f = Forcing::rotating(Amplitude::default());
        let p1 = cell_solve(0.1, &law(), &f, g, &cfg()).unwrap();
        let mut l2 = law();
        l2.c *= 2.0;
        let p2 = cell_solve(0.1, &l2, &f, g, &cfg()).unwrap();
        for (a, b) in p1.fields().iter().zip(p2.fields()) {
            let d = distance_l2(&a.scaled(2.0), b).unwrap();
            assert!(d <= 1e-9 * norm_l2(b).max(1e-300), "{d}");
        }
        assert!(p1.max_abs_mean() <= 1e-10);
    }

    #[test]
    fn derivative_of_identical_profiles_is_zero() {
        let g = Grid::new(8).unwrap();
        let fields = vec![ScalarField::from_fn(g, |x| x[0]); 4];
        let a = PeriodicProfile::new(
            0.0,
            0.0,
            fields.clone(),
            0.0,
            0.0,
            ConvergenceReport::default(),
        )
        .unwrap();
        let b =
            PeriodicProfile::new(0.5, 0.0, fields, 0.0, 0.0, ConvergenceReport::default()).unwrap();
        let d = slow_time_derivative(&a, &b).unwrap();
        assert!(d.fields().iter().all(|f| f.max_abs() == 0.0));
        assert_eq!(d.t(), 0.25);
        assert!(slow_time_derivative(&b, &a).is_err());
    }

    #[test]
    fn derivative_of_linear_scaling() {
        let g = Grid::new(8).unwrap();
        let base: Vec<_> = (0..4)
            .map(|k| ScalarField::from_fn(g, |x| (2.0 * PI * (x[0] + k as f64 / 4.0)).sin()))
            .collect();
        let s = 3.0;
        let at = |t: f64| {
            PeriodicProfile::new(
                t,
                0.0,
                base.iter().map(|f| f.scaled(1.0 + s * t)).collect(),
                0.0,
                0.0,
                ConvergenceReport::default(),
            )
            .unwrap()
        };
        let d = slow_time_derivative(&at(0.2), &at(0.3)).unwrap();
        for (df, b) in d.fields().iter().zip(&base) {
            assert!(distance_l2(df, &b.scaled(s)).unwrap() < 1e-12);
        }
    }

    #[test]
    fn mismatched_lattices_rejected() {
        let g = Grid::new(8).unwrap();
        let a = PeriodicProfile::new(
            0.0,
            0.0,
            vec![ScalarField::zeros(g); 4],
            0.0,
            0.0,
            ConvergenceReport::default(),
        )
        .unwrap();
        let b = PeriodicProfile::new(
            1.0,
            0.0,
            vec![ScalarField::zeros(g); 8],
            0.0,
            0.0,
            ConvergenceReport::default(),
        )
        .unwrap();
        assert!(matches!(
            slow_time_derivative(&a, &b),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn frozen_forcing_has_no_slow_derivative() {
        let g = Grid::new(16).unwrap();
        let f = Forcing::rotating(frozen_amp());
        let d = slow_time_derivative_at(0.3, 1e-3, &law(), &f, g, &cfg()).unwrap();
        assert!(
            d.fields().iter().all(|x| x.max_abs() <= 1e-8),
            "{}",
            d.fields()[0].max_abs()
        );
    }

    #[test]
    fn direct_derivative_matches_differencing() {
        let g = Grid::new(16).unwrap();
        let f = Forcing::rotating(Amplitude::default());
        let c = cfg();
        let u = cell_solve(0.3, &law(), &f, g, &c).unwrap();
        let fd = slow_time_derivative_at(0.3, 1e-3, &law(), &f, g, &c).unwrap();
        let direct = slow_time_derivative_direct(&u, &law(), &f, 1e-4, &c).unwrap();
        let scale = fd.fields().iter().map(norm_l2).fold(0.0, f64::max);
        assert!(scale > 1e-3);
        for (a, b) in fd.fields().iter().zip(direct.fields()) {
            assert!(distance_l2(a, b).unwrap() <= 1e-4 * scale);
        }
    }

    #[test]
    fn corrector_vanishes_without_height_and_slow_variation() {
        let g = Grid::new(8).unwrap();
        let f = Forcing::rotating(frozen_amp());
        let c = cfg();
        let u = cell_solve(0.0, &law(), &f, g, &c).unwrap();
        let du = slow_time_derivative_at(0.0, 1e-3, &law(), &f, g, &c).unwrap();
        let mut nob = law();
        nob.b = 0.0;
        let s = solve_corrector(&u, &du, &nob, &f, &c).unwrap();
        assert!(s.profile.fields().iter().all(|x| x.max_abs() <= 1e-6));
        let flat = f.clone().with_secondary(Secondary {
            m_amp: 0.0,
            ..Secondary::default()
        });
        let s = solve_corrector(&u, &du, &law(), &flat, &c).unwrap();
        assert!(s.profile.fields().iter().all(|x| x.max_abs() <= 1e-6));
        assert!(s.solvable());
    }

    #[test]
    fn corrector_generic_case() {
        let g = Grid::new(16).unwrap();
        let f = Forcing::rotating(Amplitude::default());
        let c = cfg();
        let u = cell_solve(0.2, &law(), &f, g, &c).unwrap();
        let du = slow_time_derivative_at(0.2, 1e-3, &law(), &f, g, &c).unwrap();
        let s = solve_corrector(&u, &du, &law(), &f, &c).unwrap();
        assert!(s.solvable(), "{} {}", s.divergence_mean, s.derivative_mean);
        assert!(s.profile.max_abs_mean() <= 1e-10);
        assert!(s.profile.report().residual <= c.fixed_point_tol);
        assert!(s.profile.fields().iter().any(|x| x.max_abs() > 1e-3));
        let vr = TransportLaw::vanrijn(0.5, 3.0, 5.0, 0.5);
        assert!(solve_corrector(&u, &du, &vr, &f, &c).is_err());
    }

    #[test]
    fn family_evaluation_and_reconstruction() {
        let g = Grid::new(4).unwrap();
        let mk = |t: f64, v: f64| {
            let fields = (0..4)
                .map(|k| ScalarField::constant(g, v + k as f64))
                .collect();
            PeriodicProfile::new(t, 0.0, fields, 0.0, 0.0, ConvergenceReport::default()).unwrap()
        };
        let fam = ProfileFamily::new(vec![0.0, 1.0], 1, vec![mk(0.0, 0.0), mk(1.0, 10.0)]).unwrap();
        assert_eq!(fam.evaluate(0.0, 0.0, 0.5).unwrap().values()[0], 2.0);
        assert!((fam.evaluate(0.5, 0.0, 0.5).unwrap().values()[0] - 7.0).abs() < 1e-14);
        assert!(matches!(
            fam.evaluate(1.5, 0.0, 0.0),
            Err(Error::OutOfRange { .. })
        ));
        assert!((fam.max_secant() - 10.0).abs() < 1e-12);

        // ε halved moves only θ
        let eps = 0.1;
        let r0 = reconstruct(&fam, None, eps, 0.025, 0).unwrap();
        assert!((r0.values()[0] - (0.25 + 1.0)).abs() < 1e-12);
        let r_half = reconstruct_at(&fam, None, eps / 2.0, 0.025, 0.5, 0).unwrap();
        assert!((r_half.values()[0] - (0.25 + 2.0)).abs() < 1e-12);

        let flat = |t: f64| {
            PeriodicProfile::new(
                t,
                0.0,
                vec![ScalarField::zeros(g); 4],
                0.0,
                0.0,
                ConvergenceReport::default(),
            )
            .unwrap()
        };
        let zero = ProfileFamily::new(vec![0.0, 1.0], 1, vec![flat(0.0), flat(1.0)]).unwrap();
        let r1 = reconstruct(&fam, Some(&zero), eps, 0.3, 1).unwrap();
        assert_eq!(r1, reconstruct(&fam, None, eps, 0.3, 0).unwrap());
        assert!(reconstruct(&fam, None, eps, 0.3, 1).is_err());
    }

    #[test]
    fn tau_dependent_family_wraps_in_tau() {
        let g = Grid::new(4).unwrap();
        let mk = |v: f64| {
            PeriodicProfile::new(
                0.0,
                0.0,
                vec![ScalarField::constant(g, v); 2],
                0.0,
                0.0,
                ConvergenceReport::default(),
            )
            .unwrap()
        };
        let fam = ProfileFamily::new(vec![0.0], 2, vec![mk(0.0), mk(4.0)]).unwrap();
        assert_eq!(fam.evaluate(0.0, 0.5, 0.0).unwrap().values()[0], 4.0);
        assert_eq!(fam.evaluate(0.0, 0.75, 0.0).unwrap().values()[0], 2.0);
        assert_eq!(fam.evaluate(0.0, 1.25, 0.0).unwrap().values()[0], 2.0);
    }

    #[test]
    fn profile_round_trips_through_disk() {
        let g = Grid::new(8).unwrap();
        let p = cell_solve(
            0.0,
            &law(),
            &Forcing::rotating(Amplitude::default()),
            g,
            &cfg(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        p.write_dir(dir.path()).unwrap();
        let back = PeriodicProfile::read_dir(dir.path()).unwrap();
        assert_eq!(back.fields(), p.fields());
        assert_eq!(back.report().entries.len(), p.report().entries.len());
        assert_eq!(back.report().residual, p.report().residual);
        assert_eq!((back.t(), back.mu(), back.nu()), (p.t(), p.mu(), p.nu()));
    }
}
