// SPDX-License-Identifier: Apache-2.0

//! Run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tidedune::physics::TabulatedForcing;
use tidedune::{
    derive_regime, Amplitude, Error, Forcing, Grid, LawKind, PhysicalParams, RegimeKind,
    RegimeSpec, Result, Secondary, SolverConfig,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficients {
    /// Rounded constants.
    #[default]
    Snapped,
    /// Computed from the physical inputs.
    Exact,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeSection {
    pub kind: RegimeKind,
    pub coefficients: Coefficients,
    pub epsilon: Option<f64>,
    pub law: Option<LawKind>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub u_c: Option<f64>,
}

impl Default for RegimeSection {
    fn default() -> Self {
        RegimeSection {
            kind: RegimeKind::ShortSmall,
            coefficients: Coefficients::Snapped,
            epsilon: None,
            law: None,
            a: None,
            b: None,
            c: None,
            u_c: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    #[default]
    Rotating,
    Unidirectional,
    Tabulated,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForcingSection {
    pub preset: PresetName,
    /// Flow direction of the unidirectional preset, radians.
    pub angle: f64,
    /// Directory holding `forcing.manifest` for the tabulated preset.
    pub table: Option<PathBuf>,
    pub base: f64,
    pub spatial: f64,
    pub slow: f64,
    pub secondary: Option<Secondary>,
}

impl Default for ForcingSection {
    fn default() -> Self {
        let amp = Amplitude::default();
        ForcingSection {
            preset: PresetName::Rotating,
            angle: 0.0,
            table: None,
            base: amp.base,
            spatial: amp.spatial,
            slow: amp.slow,
            secondary: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    #[default]
    Zero,
    /// Cell solution of the regime at `t = 0, τ = 0, θ = 0`.
    Profile,
    /// `amplitude · sin 2πx₁ cos 2πx₂`.
    Mode,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub t_end: f64,
    pub initial: InitialKind,
    pub amplitude: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            t_end: 0.5,
            initial: InitialKind::Zero,
            amplitude: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellSection {
    pub t: f64,
    pub tau: f64,
    /// Use the ε-dependent regime coefficients instead of the limit ones.
    pub frozen: bool,
}

impl Default for CellSection {
    fn default() -> Self {
        CellSection {
            t: 0.0,
            tau: 0.0,
            frozen: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub epsilons: Vec<f64>,
    pub t_end: f64,
    pub slow_samples: usize,
    pub corrector: bool,
    pub derivative_delta: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            epsilons: vec![1.0 / 25.0, 1.0 / 50.0, 1.0 / 100.0, 1.0 / 200.0],
            t_end: 0.4,
            slow_samples: 9,
            corrector: true,
            derivative_delta: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractionSection {
    pub mu: Vec<f64>,
    pub nu: f64,
    pub trials: usize,
}

impl Default for ContractionSection {
    fn default() -> Self {
        ContractionSection {
            mu: vec![0.25, 0.5, 1.0],
            nu: 1e-3,
            trials: 8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub grid: usize,
    pub regime: RegimeSection,
    /// Overrides of the physical inputs, keyed by parameter name.
    pub physical: toml::Table,
    pub forcing: ForcingSection,
    pub solver: SolverConfig,
    pub run: RunSection,
    pub cell: CellSection,
    pub sweep: SweepSection,
    pub contraction: ContractionSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out: None,
            seed: 1,
            grid: 32,
            regime: RegimeSection::default(),
            physical: toml::Table::new(),
            forcing: ForcingSection::default(),
            solver: SolverConfig::default(),
            run: RunSection::default(),
            cell: CellSection::default(),
            sweep: SweepSection::default(),
            contraction: ContractionSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // relative table paths are taken from the config's directory
        if let (Some(table), Some(dir)) = (&cfg.forcing.table, path.parent()) {
            if table.is_relative() {
                cfg.forcing.table = Some(dir.join(table));
            }
        }
        Ok(cfg)
    }

    /// Applies a `NAME=VALUE` physical override.
    pub fn set_physical(&mut self, assignment: &str) -> Result<()> {
        let (name, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected NAME=VALUE, got {assignment:?}")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{name}: not a number: {value:?}")))?;
        self.physical
            .insert(name.trim().to_string(), toml::Value::Float(value));
        Ok(())
    }

    pub fn physical_params(&self) -> Result<PhysicalParams> {
        let mut table = toml::Table::try_from(PhysicalParams::defaults(self.regime.kind))
            .map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in &self.physical {
            let v = match v {
                toml::Value::Integer(i) => toml::Value::Float(*i as f64),
                other => other.clone(),
            };
            table.insert(k.clone(), v);
        }
        let params: PhysicalParams = table.try_into().map_err(|e: toml::de::Error| {
            Error::Config(format!("physical parameters: {}", e.message()))
        })?;
        params.validate()?;
        Ok(params)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid)
    }

    pub fn regime(&self) -> Result<RegimeSpec> {
        let r = &self.regime;
        let base = match r.coefficients {
            Coefficients::Snapped => RegimeSpec::snapped(r.kind),
            Coefficients::Exact => derive_regime(&self.physical_params()?, r.kind)?.exact,
        };
        let mut law = base.law.clone();
        if let Some(kind) = r.law {
            law.kind = kind;
        }
        for (slot, value) in [
            (&mut law.a, r.a),
            (&mut law.b, r.b),
            (&mut law.c, r.c),
            (&mut law.u_c, r.u_c),
        ] {
            if let Some(v) = value {
                *slot = v;
            }
        }
        RegimeSpec::new(r.kind, r.epsilon.unwrap_or(base.epsilon), law)
    }

    pub fn forcing(&self) -> Result<Forcing> {
        let f = &self.forcing;
        let amplitude = Amplitude {
            base: f.base,
            spatial: f.spatial,
            slow: f.slow,
        };
        if amplitude.min().is_nan() || amplitude.min() <= 0.0 {
            return Err(Error::Config("forcing amplitude must stay positive".into()));
        }
        let forcing = match f.preset {
            PresetName::Rotating => Forcing::rotating(amplitude),
            PresetName::Unidirectional => Forcing::unidirectional(amplitude, f.angle),
            PresetName::Tabulated => {
                let dir = f
                    .table
                    .as_ref()
                    .ok_or_else(|| Error::Config("tabulated forcing needs forcing.table".into()))?;
                Forcing::tabulated(TabulatedForcing::load(dir)?)
            }
        };
        Ok(match &f.secondary {
            Some(s) => forcing.with_secondary(s.clone()),
            None => forcing,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.regime()?;
        self.forcing()?;
        self.solver.validate()
    }
}

/// Parses a comma-separated list; fractions like `1/50` are accepted.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let bad = || Error::Config(format!("not a number: {t:?}"));
            match t.split_once('/') {
                Some((n, d)) => {
                    let n: f64 = n.trim().parse().map_err(|_| bad())?;
                    let d: f64 = d.trim().parse().map_err(|_| bad())?;
                    Ok(n / d)
                }
                None => t.parse().map_err(|_| bad()),
            }
        })
        .collect()
}
