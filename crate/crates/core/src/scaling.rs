// SPDX-License-Identifier: Apache-2.0

//! Dimensional analysis: from physical constants to ε and the dimensionless
//! coefficients `a`, `b`, `c` of each regime.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::TransportLaw;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    ShortSmall,
    ShortBig,
    MeanSmall,
    LongSmall,
}

/// Time-scale structure of a regime's fine model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    /// θ = t/ε, stiffness 1/ε.
    ShortTerm,
    /// τ = t/√ε and θ = t/ε, stiffness 1/ε.
    MeanTerm,
    /// θ = t/ε, stiffness 1/ε².
    LongTerm,
}

impl RegimeKind {
    pub const ALL: [RegimeKind; 4] = [
        RegimeKind::ShortSmall,
        RegimeKind::ShortBig,
        RegimeKind::MeanSmall,
        RegimeKind::LongSmall,
    ];

    pub fn model(self) -> Model {
        match self {
            RegimeKind::ShortSmall | RegimeKind::ShortBig => Model::ShortTerm,
            RegimeKind::MeanSmall => Model::MeanTerm,
            RegimeKind::LongSmall => Model::LongTerm,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RegimeKind::ShortSmall => "short_small",
            RegimeKind::ShortBig => "short_big",
            RegimeKind::MeanSmall => "mean_small",
            RegimeKind::LongSmall => "long_small",
        }
    }
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegimeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegimeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown regime {s:?}")))
    }
}

/// Physical inputs in SI units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    pub u_bar: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "M_bar")]
    pub m_bar: f64,
    #[serde(rename = "D_G")]
    pub d_g: f64,
    pub rho: f64,
    pub p: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub u_c: f64,
    pub t_bar: f64,
    pub omega_bar_inv: f64,
    pub omega_c_bar_inv: f64,
    pub z_bar: f64,
    pub l_bar: f64,
}

impl PhysicalParams {
    pub fn defaults(kind: RegimeKind) -> Self {
        let base = PhysicalParams {
            u_bar: 1.0,
            h: 50.0,
            m_bar: 5.0,
            d_g: 1e-4,
            rho: 1000.0,
            p: 0.5,
            lambda: 0.5,
            alpha: 100.0,
            u_c: 0.0,
            t_bar: 8.6e6,
            omega_bar_inv: 4.7e4,
            omega_c_bar_inv: 2.6e6,
            z_bar: 1.0,
            l_bar: 10.0,
        };
        match kind {
            RegimeKind::ShortSmall => base,
            RegimeKind::ShortBig => PhysicalParams {
                d_g: 5e-3,
                z_bar: 50.0,
                l_bar: 300.0,
                u_c: 0.5,
                ..base
            },
            RegimeKind::MeanSmall => PhysicalParams {
                t_bar: 1.4e8,
                d_g: 5e-5,
                ..base
            },
            // 16 years ~ 1.4e5 hours is 5.04e8 s, the value consistent with ε ~ 1/192
            RegimeKind::LongSmall => PhysicalParams {
                t_bar: 5.04e8,
                d_g: 7e-5,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("u_bar", self.u_bar),
            ("H", self.h),
            ("M_bar", self.m_bar),
            ("D_G", self.d_g),
            ("rho", self.rho),
            ("lambda", self.lambda),
            ("alpha", self.alpha),
            ("t_bar", self.t_bar),
            ("omega_bar_inv", self.omega_bar_inv),
            ("omega_c_bar_inv", self.omega_c_bar_inv),
            ("z_bar", self.z_bar),
            ("L_bar", self.l_bar),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.p) {
            return Err(Error::Config(format!(
                "porosity p must lie in [0, 1), got {}",
                self.p
            )));
        }
        if !(self.u_c >= 0.0) {
            return Err(Error::Config(format!("u_c must be >= 0, got {}", self.u_c)));
        }
        if self.d_g >= 4.0 * self.h {
            return Err(Error::Config(format!(
                "D_G = {} m makes ln(4H/D_G) nonpositive (H = {} m)",
                self.d_g, self.h
            )));
        }
        if self.d_g >= self.h {
            return Err(Error::Config(format!(
                "grain size D_G = {} m must be below H = {} m",
                self.d_g, self.h
            )));
        }
        Ok(())
    }

    fn log_term(&self) -> f64 {
        (4.0 * self.h / self.d_g).ln()
    }

    fn flux_scale(&self) -> f64 {
        self.alpha * self.t_bar * self.u_bar.powi(3) * (self.rho * self.d_g).powf(1.5)
            / self.log_term().powi(3)
    }

    /// Diffusion factor of the dimensionless Exner equation.
    pub fn f_diff(&self) -> f64 {
        self.lambda / (1.0 - self.p) * self.flux_scale() / (self.l_bar * self.l_bar)
    }

    /// Source factor of the dimensionless Exner equation.
    pub fn f_src(&self) -> f64 {
        self.flux_scale() / ((1.0 - self.p) * self.l_bar * self.z_bar)
    }

    /// Height-variation factor of the dimensionless Exner equation.
    pub fn f_height(&self) -> f64 {
        3.0 * self.m_bar / (self.h * self.log_term())
    }
}

/// A regime with its small parameter and flux law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub kind: RegimeKind,
    pub epsilon: f64,
    pub law: TransportLaw,
}

impl RegimeSpec {
    pub fn new(kind: RegimeKind, epsilon: f64, law: TransportLaw) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Config(format!(
                "epsilon must lie in (0, 1), got {epsilon}"
            )));
        }
        law.validate()?;
        Ok(RegimeSpec { kind, epsilon, law })
    }

    /// Rounded constants used in the model statements.
    pub fn snapped(kind: RegimeKind) -> Self {
        let (epsilon, law) = match kind {
            RegimeKind::ShortSmall => (1.0 / 200.0, TransportLaw::power3(0.5, 4.0, 10.0)),
            RegimeKind::ShortBig => (
                1.0 / 200.0,
                TransportLaw::vanrijn(0.5, 3.0, 5.0, 0.5f64.sqrt()),
            ),
            RegimeKind::MeanSmall => (1.0 / 3000.0, TransportLaw::power3(1.0, 1.0, 20.0)),
            RegimeKind::LongSmall => (1.0 / 192.0, TransportLaw::power3(1.0, 4.0, 20.0)),
        };
        RegimeSpec { kind, epsilon, law }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        RegimeSpec::new(self.kind, epsilon, self.law.clone())
    }

    /// Prefactor of the diffusion and source terms in the fine model.
    pub fn stiffness(&self) -> f64 {
        match self.kind.model() {
            Model::LongTerm => 1.0 / (self.epsilon * self.epsilon),
            _ => 1.0 / self.epsilon,
        }
    }

    /// The parameter multiplying `b ℳ` in the coefficients.
    pub fn height_parameter(&self) -> f64 {
        match self.kind.model() {
            Model::MeanTerm => self.epsilon.sqrt(),
            _ => self.epsilon,
        }
    }
}

/// One computed quantity against the magnitude quoted for it.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeCheck {
    pub name: &'static str,
    pub computed: f64,
    pub quoted: f64,
}

impl MagnitudeCheck {
    /// `computed / quoted`.
    pub fn ratio(&self) -> f64 {
        self.computed / self.quoted
    }

    /// Agreement within a multiplicative factor.
    pub fn within(&self, factor: f64) -> bool {
        let r = self.ratio();
        r <= factor && r >= 1.0 / factor
    }
}

#[derive(Clone, Debug)]
pub struct RegimeDerivation {
    pub kind: RegimeKind,
    pub params: PhysicalParams,
    pub epsilon: f64,
    pub f_diff: f64,
    pub f_src: f64,
    pub f_height: f64,
    /// Coefficients computed from the inputs without rounding.
    pub exact: RegimeSpec,
    pub snapped: RegimeSpec,
    pub checks: Vec<MagnitudeCheck>,
    /// Inputs left at the values chosen when the source leaves them open.
    pub defaulted: Vec<&'static str>,
}

impl RegimeDerivation {
    pub fn all_within(&self, factor: f64) -> bool {
        self.checks.iter().all(|c| c.within(factor))
    }
}

fn quoted(kind: RegimeKind) -> Vec<(&'static str, f64)> {
    match kind {
        RegimeKind::ShortSmall => vec![
            ("epsilon", 1.0 / 200.0),
            ("f_diff", 90.0),
            ("f_src", 1800.0),
            ("f_height", 2e-2),
        ],
        RegimeKind::ShortBig => vec![
            ("epsilon", 1.0 / 200.0),
            ("f_diff", 90.0),
            ("f_src", 1000.0),
            ("f_height", 1.3e-2),
        ],
        RegimeKind::MeanSmall => vec![("epsilon", 1.0 / 3000.0), ("month_ratio", 1.0 / 54.0)],
        RegimeKind::LongSmall => vec![("epsilon", 1.0 / 192.0)],
    }
}

pub fn derive_regime(params: &PhysicalParams, kind: RegimeKind) -> Result<RegimeDerivation> {
    params.validate()?;
    let model = kind.model();
    let epsilon = match model {
        Model::LongTerm => params.omega_c_bar_inv / params.t_bar,
        _ => params.omega_bar_inv / params.t_bar,
    };
    if epsilon >= 1.0 {
        return Err(Error::Config(format!(
            "observation time t_bar = {} s is not long compared with the tide period (epsilon = {epsilon})",
            params.t_bar
        )));
    }
    let (f_diff, f_src, f_height) = (params.f_diff(), params.f_src(), params.f_height());
    let (a, c, b) = match model {
        Model::ShortTerm => (f_diff * epsilon, f_src * epsilon, f_height / epsilon),
        Model::MeanTerm => (f_diff * epsilon, f_src * epsilon, f_height / epsilon.sqrt()),
        Model::LongTerm => (
            f_diff * epsilon * epsilon,
            f_src * epsilon * epsilon,
            f_height / epsilon,
        ),
    };
    let u_c = params.u_c / params.u_bar;
    let law = if u_c > 0.0 {
        TransportLaw::vanrijn(a, b, c, u_c)
    } else {
        TransportLaw::power3(a, b, c)
    };
    let exact = RegimeSpec::new(kind, epsilon, law)?;

    let month_ratio = params.omega_c_bar_inv / params.t_bar;
    let checks = quoted(kind)
        .into_iter()
        .map(|(name, quoted)| {
            let computed = match name {
                "epsilon" => epsilon,
                "f_diff" => f_diff,
                "f_src" => f_src,
                "f_height" => f_height,
                "month_ratio" => month_ratio,
                _ => unreachable!("no such quoted quantity"),
            };
            MagnitudeCheck {
                name,
                computed,
                quoted,
            }
        })
        .collect();

    let reference = PhysicalParams::defaults(kind);
    let mut defaulted = Vec::new();
    if params.rho == reference.rho {
        defaulted.push("rho");
    }
    if params.alpha == reference.alpha {
        defaulted.push("alpha");
    }
    if params.lambda == reference.lambda {
        defaulted.push("lambda");
    }
    if params.p == reference.p {
        defaulted.push("p");
    }

    Ok(RegimeDerivation {
        kind,
        params: params.clone(),
        epsilon,
        f_diff,
        f_src,
        f_height,
        exact,
        snapped: RegimeSpec::snapped(kind),
        checks,
        defaulted,
    })
}
