//! Reflected generalized backward doubly stochastic differential equations
//! driven by Teugels martingales of a finite-activity Lévy process.
//!
//! The crate builds the orthonormal polynomial basis of a discrete Lévy
//! measure, simulates the power-jump and Teugels martingales exactly,
//! reflects a forward SDE in an interval, and solves the backward equation by
//! regression Monte Carlo with either penalization or direct reflection.
//! Structural checks (comparison, compensation, Skorokhod conditions) and a
//! pathwise estimator for the associated obstacle SPDIE sit on top.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(feature = "cli")]
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod levy_basis;
mod par;
pub mod path_engine;
pub mod reflected_forward;
pub mod regression;
pub mod rng;
pub mod scenarios;
pub mod solver;
pub mod spdie_bridge;
pub mod verification;

pub use error::{Error, Result};
pub use levy_basis::{orthonormal_basis, JumpAtom, LevyMeasureModel, Polynomial, PolynomialBasis};
pub use path_engine::{simulate_bundle, simulate_path, BrownianSource, PathBundle, SamplePath, TimeGrid};
pub use reflected_forward::{simulate_reflected, ReflectedCoefficients, ReflectedPath};
pub use regression::RegressionBasis;
pub use solver::{BsdeProblem, CoefficientSpec, DiscreteSolution, ObstacleSpec, Scheme, SolverInput};
