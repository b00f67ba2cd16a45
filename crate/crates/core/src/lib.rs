//! Threshold lending dynamics between an advantaged group `A` and a
//! disadvantaged group `D`.
//!
//! * [`dynamics`]: the per-agent update equation, population steps, exact
//!   one-step expectations and seeded trajectories.
//! * [`threshold`]: the optimal approval threshold, analytic and by grid search.
//! * [`intervention`]: equity/efficiency utility, structural interventions on
//!   the penalty multiplier and recommendation grids.
//! * [`markov`]: exact absorbing-chain analysis of a single agent's walk.
//! * [`distribution`]: Beta populations, empirical CDFs and dominance checks.
//! * [`risk`]: loan-record ingestion and the logistic late-payment model.

pub mod distribution;
pub mod dynamics;
pub mod error;
pub mod intervention;
pub mod markov;
pub mod risk;
pub mod rng;
pub mod threshold;

pub use dynamics::{
    DynamicsParams, Group, PerGroup, ScoreDistribution, ThresholdPolicy, Trajectory,
};
pub use error::{Error, Result};
pub use rng::Stream;
