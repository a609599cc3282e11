// SPDX-License-Identifier: Apache-2.0

//! Multiscale solver for tide-driven dune morphodynamics on the unit torus.
//!
//! The fine models are degenerate parabolic equations whose coefficients
//! oscillate with the tide. [`solver`] integrates them and builds
//! θ-periodic cell solutions by a penalized period-map iteration;
//! [`homogenize`] assembles the limit profile and its first-order corrector;
//! [`verify`] measures conservation, contraction and convergence rates.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod homogenize;
pub mod physics;
pub mod scaling;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{distance_l2, divergence, gradient, mass, norm_l2, Grid, ScalarField, VectorField};
pub use homogenize::{
    cell_solve, reconstruct, slow_time_derivative, solve_corrector, CorrectorSolution,
    HomogenizedField, PeriodicProfile, ProfileFamily,
};
pub use physics::{
    assemble_coefficients, chi, Amplitude, CoefficientSample, Forcing, LawKind, Secondary, Side,
    TabulatedForcing, TransportLaw,
};
pub use scaling::{derive_regime, Model, PhysicalParams, RegimeDerivation, RegimeKind, RegimeSpec};
pub use solver::{
    find_periodic, period_map, quasi_periodic_reconstruction, solve_fine, step_implicit,
    CellProblem, CoefficientField, ConvergenceReport, RegimeField, SolverConfig, State,
    StepCoefficients, Trajectory,
};
pub use verify::{
    closeness, contraction_ratio, corrector_error, fit_order, mass_drift, run_sweep, sweep_against,
    two_scale_error, ClosenessReport, ContractionReport, ErrorReport, ErrorRow, InitialCondition,
    Reference, SweepSetup,
};
