//! Gradient symbolic computation: Harmony maximization and Boltzmann
//! sampling over filler/role structures by noisy gradient ascent.
//!
//! A discrete structure assigns one filler to each role; embedded as a
//! coefficient matrix it becomes a vertex of a continuous state space.
//! The dynamics ascend a blended objective `H(y) + q Q(y)` — `H` scores
//! structures, `Q` penalizes states away from the discrete vertices —
//! under Gaussian noise of temperature `T`, following a schedule for
//! `(q, T)`. Exact brute-force and Newton-refinement oracles make every
//! stochastic result checkable on small instances.
//!
//! Module map:
//! - [`representation`]: filler/role specs, grid enumeration, embedding,
//!   quantization.
//! - [`harmony`]: the objectives `H`, `Q`, `H + qQ` and their derivatives.
//! - [`dynamics`]: Euler–Maruyama integration, schedules, batches.
//! - [`oracle`]: exact grid optima, Boltzmann distributions, continuous
//!   refinement and large-`q` predictions.
//! - [`analysis`]: basin classification, total variation, success
//!   probabilities with Wilson intervals.
//! - [`config`] / [`commands`]: the JSON-configured CLI layer.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod harmony;
pub mod oracle;
pub mod representation;

pub use error::{GscError, Result};
