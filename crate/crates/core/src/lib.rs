//! Optimal investment of a retail investor who penalizes the gap between
//! their trading rate and a leading expert's.
//!
//! The optimal holding solves a two-point boundary value problem whose
//! solution is written with modified Bessel functions of order zero. Two
//! scalar constants couple the solution to its own expected utility and are
//! found by fixed-point iteration. Brute-force oracles, closed-form limits
//! and a parameter estimator round out the crate.

pub mod asymptotics;
pub mod cli;
pub mod constants;
pub mod data;
pub mod error;
pub mod market;
pub mod oracle;
pub mod quad;
pub mod special;
pub mod variational;

pub use constants::{solve, Solution, SolveReport, SolverOptions};
pub use error::{Error, Result};
pub use market::{BoundaryCase, Investor, MarketParams, ProblemSpec, Trajectory};
