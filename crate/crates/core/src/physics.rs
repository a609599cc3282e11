// SPDX-License-Identifier: Apache-2.0

//! Sediment flux laws, tidal forcing presets and assembly of the diffusion
//! and source coefficients of the dimensionless Exner equation.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::scaling::{Model, RegimeSpec};

/// Below this speed the flow direction `u / |u|` is replaced by zero.
pub const U_FLOOR: f64 = 1e-12;

/// Van Rijn threshold function: zero for negative arguments, `σ^{3/2}` above.
#[inline]
pub fn chi(sigma: f64) -> f64 {
    if sigma < 0.0 {
        0.0
    } else {
        sigma * sigma.sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    /// `g_a(u) = g_c(u) = u³`
    Power3,
    /// `g_a(u) = g_c(u) = χ(u² - u_c²)`
    Vanrijn,
}

/// Which of the two flux-law functions to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Diffusion,
    Source,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportLaw {
    pub kind: LawKind,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Dimensionless critical velocity (Van Rijn only).
    #[serde(default)]
    pub u_c: f64,
    /// Floor of `g_a` above the velocity threshold.
    #[serde(default = "default_g_thr")]
    pub g_thr: f64,
}

fn default_g_thr() -> f64 {
    1e-3
}

impl TransportLaw {
    pub fn power3(a: f64, b: f64, c: f64) -> Self {
        TransportLaw {
            kind: LawKind::Power3,
            a,
            b,
            c,
            u_c: 0.0,
            g_thr: default_g_thr(),
        }
    }

    pub fn vanrijn(a: f64, b: f64, c: f64, u_c: f64) -> Self {
        TransportLaw {
            kind: LawKind::Vanrijn,
            a,
            b,
            c,
            u_c,
            g_thr: default_g_thr(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::Config(format!("law needs a > 0, got {}", self.a)));
        }
        if !self.b.is_finite() || !self.c.is_finite() {
            return Err(Error::Config("law constants b, c must be finite".into()));
        }
        if !(self.u_c >= 0.0) {
            return Err(Error::Config(format!("u_c must be >= 0, got {}", self.u_c)));
        }
        if !(self.g_thr > 0.0) {
            return Err(Error::Config(format!(
                "g_thr must be > 0, got {}",
                self.g_thr
            )));
        }
        Ok(())
    }

    /// Velocity threshold above which `g_a >= g_thr`.
    ///
    /// For Van Rijn this inverts `χ`; power3 has no threshold.
    pub fn u_thr(&self) -> f64 {
        match self.kind {
            LawKind::Power3 => 0.0,
            LawKind::Vanrijn => (self.u_c * self.u_c + self.g_thr.powf(2.0 / 3.0)).sqrt(),
        }
    }

    /// `g_a` or `g_c` at speed `u >= 0`.
    pub fn eval_g(&self, side: Side, u: f64) -> Result<f64> {
        if !(u >= 0.0) {
            return Err(Error::Config(format!(
                "flux law evaluated at negative speed {u}"
            )));
        }
        Ok(self.g(side, u))
    }

    #[inline]
    pub(crate) fn g(&self, _side: Side, u: f64) -> f64 {
        // both presets share the same function on the two sides
        match self.kind {
            LawKind::Power3 => u * u * u,
            LawKind::Vanrijn => chi(u * u - self.u_c * self.u_c),
        }
    }

    #[inline]
    fn g_prime(&self, u: f64) -> f64 {
        match self.kind {
            LawKind::Power3 => 3.0 * u * u,
            LawKind::Vanrijn => {
                let s = u * u - self.u_c * self.u_c;
                if s <= 0.0 {
                    0.0
                } else {
                    1.5 * s.sqrt() * 2.0 * u
                }
            }
        }
    }

    /// `sup |g| + sup |g'|` over `[0, u_max]`, sampled.
    pub fn bound_d(&self, u_max: f64) -> f64 {
        let samples = 2001;
        let (mut sg, mut sdg) = (0.0f64, 0.0f64);
        for k in 0..samples {
            let u = u_max * k as f64 / (samples - 1) as f64;
            sg = sg.max(self.g(Side::Diffusion, u).abs());
            sdg = sdg.max(self.g_prime(u).abs());
        }
        sg + sdg
    }

    /// Constant `γ` with `|C|² <= γ A` for coefficients built from this law
    /// with speeds up to `u_max`: `|C|² = c² g_c² <= c² d g_a = (c² d / a) A`.
    pub fn gamma_bound(&self, u_max: f64) -> f64 {
        self.c * self.c * self.bound_d(u_max) / self.a
    }

    /// Checks the structural hypotheses on `g_a`, `g_c` over speeds in
    /// `[u_lo, u_hi]`, returning a description of the first violation.
    pub fn check_assumptions(&self, u_lo: f64, u_hi: f64) -> std::result::Result<(), String> {
        let samples = 1001;
        for k in 0..samples {
            let u = 10.0 * k as f64 / (samples - 1) as f64;
            let ga = self.g(Side::Diffusion, u);
            let gc = self.g(Side::Source, u);
            if !(ga >= gc && gc >= 0.0) {
                return Err(format!("g_a >= g_c >= 0 fails at u={u}"));
            }
        }
        if self.g(Side::Source, 0.0) != 0.0 {
            return Err("g_c(0) != 0".into());
        }
        let du = 1e-6;
        let slope = (self.g(Side::Source, du) - self.g(Side::Source, 0.0)) / du;
        if slope.abs() > 1e-6 {
            return Err(format!("g_c'(0) ~ {slope} != 0"));
        }
        let lo = u_lo.max(self.u_thr());
        if lo <= u_hi {
            for k in 0..samples {
                let u = lo + (u_hi - lo) * k as f64 / (samples - 1) as f64;
                if self.g(Side::Diffusion, u) < self.g_thr {
                    return Err(format!("g_a({u}) below g_thr={}", self.g_thr));
                }
            }
        }
        Ok(())
    }
}

/// Spatial and slow-time modulation of the tidal speed:
/// `amp(t, x) = base (1 + spatial sin(2π x1) cos(2π x2)) (1 + slow sin(2π t))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Amplitude {
    pub base: f64,
    pub spatial: f64,
    pub slow: f64,
}

impl Default for Amplitude {
    fn default() -> Self {
        Amplitude {
            base: 1.0,
            spatial: 0.3,
            slow: 0.2,
        }
    }
}

impl Amplitude {
    #[inline]
    pub fn eval(&self, t: f64, x: [f64; 2]) -> f64 {
        let space = 1.0 + self.spatial * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos();
        let slow = 1.0 + self.slow * (2.0 * PI * t).sin();
        self.base * space * slow
    }

    pub fn min(&self) -> f64 {
        self.base * (1.0 - self.spatial.abs()) * (1.0 - self.slow.abs())
    }

    pub fn max(&self) -> f64 {
        self.base * (1.0 + self.spatial.abs()) * (1.0 + self.slow.abs())
    }
}

/// Mean-term, long-term and height-variation parameters. `ℳ = m_amp cos(2πθ)
/// (1 + m_tau cos(2πτ))`; the secondary velocity fields are
/// `𝒰₁ = u1_amp (cos 2πτ, sin 2πτ)`, `𝒰₂ = u2_amp (cos 2πθ, sin 2πθ)` and
/// `ℳ₂ = m2_amp cos(2πθ)`. All default to the zero perturbation except `ℳ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Secondary {
    pub m_amp: f64,
    pub m_tau: f64,
    pub u1_amp: f64,
    pub u2_amp: f64,
    pub m2_amp: f64,
}

impl Default for Secondary {
    fn default() -> Self {
        Secondary {
            m_amp: 1.0,
            m_tau: 0.0,
            u1_amp: 0.0,
            u2_amp: 0.0,
            m2_amp: 0.0,
        }
    }
}

/// Velocity and height samples on a θ-lattice, interpolated linearly in θ
/// and bilinearly in space.
#[derive(Clone, Debug)]
pub struct TabulatedForcing {
    thetas: Vec<f64>,
    velocity: Vec<VectorField>,
    height: Vec<ScalarField>,
}

impl TabulatedForcing {
    pub fn new(
        thetas: Vec<f64>,
        velocity: Vec<VectorField>,
        height: Vec<ScalarField>,
    ) -> Result<Self> {
        if thetas.is_empty() || thetas.len() != velocity.len() || thetas.len() != height.len() {
            return Err(Error::Config(
                "tabulated forcing needs matching, nonempty samples".into(),
            ));
        }
        if thetas.windows(2).any(|w| !(w[0] < w[1]))
            || thetas[0] < 0.0
            || thetas[thetas.len() - 1] >= 1.0
        {
            return Err(Error::Config(
                "tabulated θ values must increase within [0, 1)".into(),
            ));
        }
        let grid = velocity[0].grid();
        if velocity.iter().any(|v| v.grid() != grid) || height.iter().any(|m| m.grid() != grid) {
            return Err(Error::GridMismatch("tabulated forcing samples".into()));
        }
        Ok(TabulatedForcing {
            thetas,
            velocity,
            height,
        })
    }

    /// Reads `forcing.manifest` in `dir`: one line per sample,
    /// `theta=<v> velocity=<file> [height=<file>]`, paths relative to `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = dir.join("forcing.manifest");
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let mut rows = Vec::new();
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let (mut theta, mut vel, mut height) = (None, None, None);
            for tok in line.split_whitespace() {
                match tok.split_once('=') {
                    Some(("theta", v)) => {
                        theta = Some(
                            v.parse::<f64>()
                                .map_err(|e| Error::format(&manifest, e.to_string()))?,
                        )
                    }
                    Some(("velocity", v)) => vel = Some(dir.join(v)),
                    Some(("height", v)) => height = Some(dir.join(v)),
                    _ => return Err(Error::format(&manifest, format!("unknown token {tok:?}"))),
                }
            }
            let theta = theta.ok_or_else(|| Error::format(&manifest, "missing theta"))?;
            let vel = vel.ok_or_else(|| Error::format(&manifest, "missing velocity"))?;
            rows.push((theta, vel, height));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut thetas = Vec::new();
        let mut velocity = Vec::new();
        let mut heights = Vec::new();
        for (theta, vel, height) in rows {
            let v = VectorField::read(&vel)?;
            let m = match height {
                Some(p) => ScalarField::read(&p)?,
                None => ScalarField::zeros(v.grid()),
            };
            thetas.push(theta);
            velocity.push(v);
            heights.push(m);
        }
        Self::new(thetas, velocity, heights)
    }

    fn bracket(&self, theta: f64) -> (usize, usize, f64) {
        let th = theta.rem_euclid(1.0);
        let m = self.thetas.len();
        // first sample strictly above th
        let hi = self.thetas.partition_point(|&s| s <= th);
        let (lo, hi, lo_t, hi_t) = if hi == 0 {
            (m - 1, 0, self.thetas[m - 1] - 1.0, self.thetas[0])
        } else if hi == m {
            (m - 1, 0, self.thetas[m - 1], self.thetas[0] + 1.0)
        } else {
            (hi - 1, hi, self.thetas[hi - 1], self.thetas[hi])
        };
        let w = if hi_t > lo_t {
            (th - lo_t) / (hi_t - lo_t)
        } else {
            0.0
        };
        (lo, hi, w)
    }

    fn eval(&self, theta: f64, x: [f64; 2]) -> ([f64; 2], f64) {
        let (lo, hi, w) = self.bracket(theta);
        let sample = |k: usize| {
            let v = &self.velocity[k];
            let g = v.grid();
            (
                [
                    bilinear(g, v.x(), x, [0.5, 0.0]),
                    bilinear(g, v.y(), x, [0.0, 0.5]),
                ],
                bilinear(g, self.height[k].values(), x, [0.0, 0.0]),
            )
        };
        let (u0, m0) = sample(lo);
        let (u1, m1) = sample(hi);
        (
            [(1.0 - w) * u0[0] + w * u1[0], (1.0 - w) * u0[1] + w * u1[1]],
            (1.0 - w) * m0 + w * m1,
        )
    }

    fn speed_max(&self) -> f64 {
        self.velocity
            .iter()
            .flat_map(|v| v.x().iter().zip(v.y()).map(|(a, b)| a.hypot(*b)))
            .fold(0.0, f64::max)
    }
}

/// Periodic bilinear interpolation of node data offset by `offset` cells.
fn bilinear(grid: Grid, data: &[f64], x: [f64; 2], offset: [f64; 2]) -> f64 {
    let n = grid.n() as isize;
    let s = x[0] * n as f64 - offset[0];
    let r = x[1] * n as f64 - offset[1];
    let (i0, j0) = (s.floor(), r.floor());
    let (wi, wj) = (s - i0, r - j0);
    let (i0, j0) = (i0 as isize, j0 as isize);
    let at = |i: isize, j: isize| data[grid.index(i, j)];
    (1.0 - wi) * ((1.0 - wj) * at(i0, j0) + wj * at(i0, j0 + 1))
        + wi * ((1.0 - wj) * at(i0 + 1, j0) + wj * at(i0 + 1, j0 + 1))
}

#[derive(Clone, Debug)]
pub enum Preset {
    /// `𝒰 = amp (cos 2πθ, sin 2πθ)`: speed never drops below `amp_min`.
    Rotating,
    /// `𝒰 = amp sin(2πθ) ê`: the flow stops at θ ∈ {0, 1/2}.
    Unidirectional {
        direction: [f64; 2],
    },
    Tabulated(Arc<TabulatedForcing>),
}

#[derive(Clone, Debug)]
pub struct Forcing {
    pub preset: Preset,
    pub amplitude: Amplitude,
    pub secondary: Secondary,
}

impl Forcing {
    pub fn rotating(amplitude: Amplitude) -> Self {
        Forcing {
            preset: Preset::Rotating,
            amplitude,
            secondary: Secondary::default(),
        }
    }

    pub fn unidirectional(amplitude: Amplitude, angle: f64) -> Self {
        Forcing {
            preset: Preset::Unidirectional {
                direction: [angle.cos(), angle.sin()],
            },
            amplitude,
            secondary: Secondary::default(),
        }
    }

    pub fn tabulated(table: TabulatedForcing) -> Self {
        Forcing {
            preset: Preset::Tabulated(Arc::new(table)),
            amplitude: Amplitude::default(),
            secondary: Secondary {
                m_amp: 0.0,
                ..Secondary::default()
            },
        }
    }

    pub fn with_secondary(mut self, secondary: Secondary) -> Self {
        self.secondary = secondary;
        self
    }

    /// Base fields `(𝒰, ℳ)` at `(t, τ, θ, x)`.
    #[inline]
    pub fn eval(&self, t: f64, tau: f64, theta: f64, x: [f64; 2]) -> ([f64; 2], f64) {
        let phase = 2.0 * PI * theta;
        let m = self.secondary.m_amp
            * phase.cos()
            * (1.0 + self.secondary.m_tau * (2.0 * PI * tau).cos());
        match &self.preset {
            Preset::Rotating => {
                let amp = self.amplitude.eval(t, x);
                let (s, c) = phase.sin_cos();
                ([amp * c, amp * s], m)
            }
            Preset::Unidirectional { direction } => {
                let amp = self.amplitude.eval(t, x) * phase.sin();
                ([amp * direction[0], amp * direction[1]], m)
            }
            Preset::Tabulated(table) => {
                let (u, mt) = table.eval(theta, x);
                (u, mt + m)
            }
        }
    }

    /// Secondary fields `(𝒰₁, 𝒰₂, ℳ₂)`.
    #[inline]
    pub fn eval_secondary(&self, _t: f64, tau: f64, theta: f64) -> ([f64; 2], [f64; 2], f64) {
        let s = &self.secondary;
        let (st, ct) = (2.0 * PI * tau).sin_cos();
        let (sh, ch) = (2.0 * PI * theta).sin_cos();
        (
            [s.u1_amp * ct, s.u1_amp * st],
            [s.u2_amp * ch, s.u2_amp * sh],
            s.m2_amp * ch,
        )
    }

    /// Interval `[θ_α, θ_ω]` on which the speed stays at or above
    /// [`Forcing::speed_floor`].
    pub fn theta_window(&self) -> (f64, f64) {
        match self.preset {
            Preset::Rotating | Preset::Tabulated(_) => (0.0, 1.0),
            Preset::Unidirectional { .. } => (0.125, 0.375),
        }
    }

    /// Lower bound of `|𝒰|` on the θ-window.
    pub fn speed_floor(&self) -> f64 {
        match self.preset {
            Preset::Rotating => self.amplitude.min(),
            Preset::Unidirectional { .. } => self.amplitude.min() * (PI / 4.0).sin(),
            Preset::Tabulated(_) => 0.0,
        }
    }

    pub fn speed_max(&self) -> f64 {
        match &self.preset {
            Preset::Rotating | Preset::Unidirectional { .. } => self.amplitude.max(),
            Preset::Tabulated(t) => t.speed_max(),
        }
    }

    /// Whether the preset's θ-mean of `𝒰` vanishes identically.
    pub fn zero_theta_mean(&self) -> bool {
        !matches!(self.preset, Preset::Tabulated(_))
    }

    /// Whether the speed can vanish somewhere, making the diffusion degenerate.
    pub fn is_degenerate(&self) -> bool {
        !matches!(self.preset, Preset::Rotating) || self.amplitude.min() <= 0.0
    }
}

/// Coefficients at one point: the full fine-scale pair, the ε-free pair and
/// the first-order split `A = Ã + δ Ã₁`, `C = C̃ + δ C̃₁`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CoefficientSample {
    pub a: f64,
    pub c: [f64; 2],
    pub a_hom: f64,
    pub c_hom: [f64; 2],
    pub a1: f64,
    pub c1: [f64; 2],
}

#[inline]
fn direction(u: [f64; 2]) -> ([f64; 2], f64) {
    let s = u[0].hypot(u[1]);
    if s <= U_FLOOR {
        ([0.0, 0.0], s)
    } else {
        ([u[0] / s, u[1] / s], s)
    }
}

/// Homogenized pair `(Ã, C̃)` at `(t, θ, x)`: no ε and no height variation.
#[inline]
pub fn homogenized_coefficients(
    law: &TransportLaw,
    forcing: &Forcing,
    t: f64,
    theta: f64,
    x: [f64; 2],
) -> (f64, [f64; 2]) {
    let (u, _) = forcing.eval(t, 0.0, theta, x);
    let (dir, s) = direction(u);
    let gc = law.g(Side::Source, s);
    (
        law.a * law.g(Side::Diffusion, s),
        [law.c * gc * dir[0], law.c * gc * dir[1]],
    )
}

/// First-order corrections `(Ã₁, C̃₁)` at `(t, θ, x)`.
#[inline]
pub fn first_order_coefficients(
    law: &TransportLaw,
    forcing: &Forcing,
    t: f64,
    theta: f64,
    x: [f64; 2],
) -> (f64, [f64; 2]) {
    let (u, m) = forcing.eval(t, 0.0, theta, x);
    let (dir, s) = direction(u);
    let k = -law.b * m;
    let gc = law.c * k * law.g(Side::Source, s);
    (
        law.a * k * law.g(Side::Diffusion, s),
        [gc * dir[0], gc * dir[1]],
    )
}

pub fn assemble_coefficients(
    regime: &RegimeSpec,
    forcing: &Forcing,
    t: f64,
    tau: f64,
    theta: f64,
    x: [f64; 2],
) -> CoefficientSample {
    let law = &regime.law;
    let eps = regime.epsilon;
    let (u0, m0) = forcing.eval(t, tau, theta, x);
    let (u, m, delta) = match regime.kind.model() {
        Model::ShortTerm => (u0, m0, eps),
        Model::MeanTerm => {
            let (u1, _, _) = forcing.eval_secondary(t, tau, theta);
            let r = eps.sqrt();
            ([u0[0] + r * u1[0], u0[1] + r * u1[1]], m0, r)
        }
        Model::LongTerm => {
            let (_, u2, m2) = forcing.eval_secondary(t, tau, theta);
            let e2 = eps * eps;
            ([u0[0] + e2 * u2[0], u0[1] + e2 * u2[1]], m0 + e2 * m2, eps)
        }
    };
    let (dir, s) = direction(u);
    let factor = 1.0 - law.b * delta * m;
    let gc = law.c * factor * law.g(Side::Source, s);

    let (dir0, s0) = direction(u0);
    let ga0 = law.g(Side::Diffusion, s0);
    let gc0 = law.g(Side::Source, s0);
    CoefficientSample {
        a: law.a * factor * law.g(Side::Diffusion, s),
        c: [gc * dir[0], gc * dir[1]],
        a_hom: law.a * ga0,
        c_hom: [law.c * gc0 * dir0[0], law.c * gc0 * dir0[1]],
        a1: -law.a * law.b * m0 * ga0,
        c1: [
            -law.c * law.b * m0 * gc0 * dir0[0],
            -law.c * law.b * m0 * gc0 * dir0[1],
        ],
    }
}
