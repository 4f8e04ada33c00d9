//! Square-root lasso toolkit.
//!
//! Pivotal l1-penalized least squares: the estimator minimizes
//! `sqrt(Q(beta)) + (lambda/n) |beta|_1`, whose penalty level can be chosen
//! without knowing the noise scale. The crate provides a coordinate-descent
//! solver with the exact one-dimensional update, a first-order primal-dual
//! solver on the second-order-cone formulation with a duality certificate,
//! penalty calibration, comparison estimators, diagnostics and a seeded
//! Monte Carlo harness.

pub mod conic;
pub mod coordinate;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod io;
pub mod model;
pub mod noise;
pub mod penalty;
pub mod quantile;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};
pub use model::{Dataset, Design, DesignOptions, ObjectiveKind, SolverKind, SparseFit, TrueModel};
pub use noise::NoiseFamily;
pub use penalty::{PenaltyOption, PenaltySpec};
