//! Distribution-independent optimal threshold.
//!
//! Approving an agent with score `x` changes its expected next score from `x`
//! to `g(x) = x·clamp(x+k) + (1-x)·clamp(x-ck)`. The one-step mean is therefore
//! maximised by approving exactly the scores where `g(x) > x`, and that set is
//! an interval `(x0, 1)` whose left end depends only on `(k, c)`.
//!
//! `g(x) - x = x·min(k, 1-x) - (1-x)·min(ck, x)` is linear on three pieces:
//!
//! * interior (`ck <= x <= 1-k`): `k((1+c)x - c)`, zero at `c/(1+c)`;
//! * upper clamp (`x > 1-k`, `x >= ck`): `(1-x)(x - ck)`;
//! * lower clamp (`x < ck`, `x <= 1-k`): `x(x + k - 1) <= 0`;
//!
//! and identically zero where both clamps bind.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{expected_next, horizon_mean, step_mean_raw, ScoreDistribution};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Absolute tolerance under which two objective values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainFunction {
    pub k: f64,
    pub c: f64,
}

impl GainFunction {
    pub fn new(k: f64, c: f64) -> Result<Self> {
        if !(k.is_finite() && c.is_finite() && k >= 0.0 && c >= 0.0) {
            return Err(Error::invalid(format!(
                "k and c must be finite and >= 0 (k={k}, c={c})"
            )));
        }
        Ok(GainFunction { k, c })
    }

    pub fn eval(&self, x: f64) -> f64 {
        expected_next(x, self.k, self.c)
    }
}

pub fn gain(g: &GainFunction, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!(
            "gain is defined on [0, 1], got {x}"
        )));
    }
    Ok(g.eval(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalThreshold {
    pub beta_hat: f64,
    /// Smallest `x0` with `g(x) > x` on `(x0, 1)`; `None` when `g(x) <= x` everywhere.
    pub crossing_point: Option<f64>,
}

/// Optimal one-step threshold for gain `k` and penalty multiplier `c`.
pub fn optimal_threshold(k: f64, c: f64) -> Result<OptimalThreshold> {
    GainFunction::new(k, c)?;
    let crossing_point = if k == 0.0 {
        // g(x) = x: approving changes nothing.
        None
    } else if (1.0 + c) * k <= 1.0 {
        // Interior piece is non-empty and contains its own root.
        Some(c / (1.0 + c))
    } else if c * k < 1.0 {
        // g(x) = x on (1-k, ck); the upper piece turns positive at ck.
        Some(c * k)
    } else {
        None
    };
    Ok(OptimalThreshold {
        beta_hat: crossing_point.map_or(1.0, |x| x.clamp(0.0, 1.0)),
        crossing_point,
    })
}

/// Grid points `0, r, 2r, ...` up to and including 1.
pub fn threshold_grid(resolution: f64) -> Result<Vec<f64>> {
    if !(resolution.is_finite() && resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::invalid(format!(
            "resolution must lie in (0, 1], got {resolution}"
        )));
    }
    let steps = (1.0 / resolution + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=steps)
        .map(|j| ((j as f64 * resolution * 1e9).round() / 1e9).min(1.0))
        .collect();
    if *grid.last().unwrap() < 1.0 - 1e-12 {
        grid.push(1.0);
    } else {
        *grid.last_mut().unwrap() = 1.0;
    }
    Ok(grid)
}

/// Outcome of a grid search over thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    /// Largest grid threshold attaining the maximum.
    pub best: f64,
    /// Smallest grid threshold attaining the maximum.
    pub lowest_tied: f64,
    pub objective: f64,
}

fn argmax_largest(grid: &[f64], values: &[f64]) -> GridSearch {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tied = |v: f64| v >= max - TIE_TOLERANCE;
    let hi = values.iter().rposition(|&v| tied(v)).unwrap();
    let lo = values.iter().position(|&v| tied(v)).unwrap();
    GridSearch {
        best: grid[hi],
        lowest_tied: grid[lo],
        objective: values[hi],
    }
}

/// Grid search of the exact one-step mean; ties go to the largest threshold.
pub fn grid_search_threshold(
    dist: &ScoreDistribution,
    k: f64,
    c: f64,
    resolution: f64,
) -> Result<f64> {
    Ok(grid_search_range(dist, k, c, resolution)?.best)
}

/// Like [`grid_search_threshold`] but also reports the tied range.
pub fn grid_search_range(
    dist: &ScoreDistribution,
    k: f64,
    c: f64,
    resolution: f64,
) -> Result<GridSearch> {
    if resolution > 0.01 {
        return Err(Error::invalid(format!(
            "resolution must be <= 0.01, got {resolution}"
        )));
    }
    GainFunction::new(k, c)?;
    let grid = threshold_grid(resolution)?;
    let values: Vec<f64> = grid
        .par_iter()
        .map(|&b| step_mean_raw(dist.scores(), b, k, c))
        .collect();
    Ok(argmax_largest(&grid, &values))
}

/// Grid search of the seed-averaged mean after `horizon` steps under a
/// stationary threshold, for use when the one-step optimum is in doubt.
pub fn grid_search_long_run(
    dist: &ScoreDistribution,
    k: f64,
    c: f64,
    horizon: u64,
    n_seeds: u64,
    seed: u64,
    resolution: f64,
) -> Result<GridSearch> {
    if n_seeds == 0 {
        return Err(Error::invalid("need at least one seed"));
    }
    GainFunction::new(k, c)?;
    let grid = threshold_grid(resolution)?;
    let root = Stream::new(seed);
    let values: Vec<f64> = grid
        .par_iter()
        .map(|&b| {
            let total: f64 = (0..n_seeds)
                .map(|r| horizon_mean(dist, b, k, c, &root.derive_index(r), horizon))
                .sum();
            total / n_seeds as f64
        })
        .collect();
    Ok(argmax_largest(&grid, &values))
}
