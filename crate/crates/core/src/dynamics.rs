//! Per-agent update equation and population dynamics.
//!
//! An approved agent (score `π ≥ β`) repays with probability `π`; repayment
//! moves the score up by `k`, a late payment moves it down by `c·k`, and the
//! result is clamped to `[0, 1]`. Denied agents keep their score.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Populations above this size are stepped in parallel.
const PAR_THRESHOLD: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    /// Advantaged group.
    A,
    /// Disadvantaged group.
    D,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::A, Group::D];

    pub fn label(self) -> &'static str {
        match self {
            Group::A => "A",
            Group::D => "D",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Group::A),
            "D" | "d" => Ok(Group::D),
            other => Err(Error::UnknownGroup(other.to_string())),
        }
    }
}

/// A value per group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerGroup<T> {
    pub a: T,
    pub d: T,
}

impl<T> PerGroup<T> {
    pub fn new(a: T, d: T) -> Self {
        PerGroup { a, d }
    }

    pub fn get(&self, group: Group) -> &T {
        match group {
            Group::A => &self.a,
            Group::D => &self.d,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(Group, &T) -> U) -> PerGroup<U> {
        PerGroup {
            a: f(Group::A, &self.a),
            d: f(Group::D, &self.d),
        }
    }
}

impl<T: Clone> PerGroup<T> {
    pub fn splat(v: T) -> Self {
        PerGroup { a: v.clone(), d: v }
    }
}

/// Finite sample of repayment probabilities for one group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreDistribution {
    group: Group,
    scores: Vec<f64>,
    weight: f64,
}

impl ScoreDistribution {
    pub fn new(group: Group, scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::invalid(format!(
                "group {group}: score sample is empty"
            )));
        }
        if let Some((i, s)) = scores
            .iter()
            .enumerate()
            .find(|(_, s)| !(0.0..=1.0).contains(*s))
        {
            return Err(Error::invalid(format!(
                "group {group}: score #{i} = {s} is outside [0, 1]"
            )));
        }
        Ok(ScoreDistribution {
            group,
            scores,
            weight: 1.0,
        })
    }

    /// Population share used when groups of unequal size are combined.
    pub fn with_weight(mut self, weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::invalid(format!(
                "weight must be positive, got {weight}"
            )));
        }
        self.weight = weight;
        Ok(self)
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }

    pub fn fraction_at_one(&self) -> f64 {
        self.fraction(|s| s >= 1.0)
    }

    pub fn fraction_below(&self, beta: f64) -> f64 {
        self.fraction(|s| s < beta)
    }

    /// Share of agents strictly inside `(beta, 1)`.
    pub fn fraction_transient(&self, beta: f64) -> f64 {
        self.fraction(|s| s > beta && s < 1.0)
    }

    fn fraction(&self, pred: impl Fn(f64) -> bool) -> f64 {
        self.scores.iter().filter(|&&s| pred(s)).count() as f64 / self.scores.len() as f64
    }

    fn with_scores(&self, scores: Vec<f64>) -> Self {
        ScoreDistribution {
            group: self.group,
            scores,
            weight: self.weight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub k: f64,
    pub c: PerGroup<f64>,
}

impl DynamicsParams {
    pub fn new(k: f64, c: f64) -> Result<Self> {
        Self::per_group(k, c, c)
    }

    pub fn per_group(k: f64, c_a: f64, c_d: f64) -> Result<Self> {
        for (name, v) in [("k", k), ("c_A", c_a), ("c_D", c_d)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(DynamicsParams {
            k,
            c: PerGroup::new(c_a, c_d),
        })
    }

    pub fn c(&self, group: Group) -> f64 {
        *self.c.get(group)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub beta: PerGroup<f64>,
    pub group_blind: bool,
}

impl ThresholdPolicy {
    /// One threshold for everyone.
    pub fn universal(beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(ThresholdPolicy {
            beta: PerGroup::splat(beta),
            group_blind: true,
        })
    }

    pub fn per_group(beta_a: f64, beta_d: f64) -> Result<Self> {
        check_beta(beta_a)?;
        check_beta(beta_d)?;
        Ok(ThresholdPolicy {
            beta: PerGroup::new(beta_a, beta_d),
            group_blind: false,
        })
    }

    pub fn beta(&self, group: Group) -> f64 {
        *self.beta.get(group)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "threshold must lie in [0, 1], got {beta}"
        )))
    }
}

/// `min(max(x, 0), 1)`; rejects NaN and infinities.
pub fn clamp_unit(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("cannot clamp non-finite value {x}")));
    }
    Ok(clamp01(x))
}

#[inline]
pub(crate) fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// One application of the update equation to a single agent.
pub fn step_agent(pi: f64, approved: bool, paid: bool, k: f64, c: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::invalid(format!("score {pi} is outside [0, 1]")));
    }
    if !(k >= 0.0 && c >= 0.0) {
        return Err(Error::invalid(format!(
            "k and c must be >= 0 (k={k}, c={c})"
        )));
    }
    Ok(transition(pi, approved, paid, k, c))
}

#[inline]
fn transition(pi: f64, approved: bool, paid: bool, k: f64, c: f64) -> f64 {
    match (approved, paid) {
        (false, _) => pi,
        (true, true) => clamp01(pi + k),
        (true, false) => clamp01(pi - c * k),
    }
}

/// Expected next score of an approved agent: `π·clamp(π+k) + (1-π)·clamp(π-ck)`.
#[inline]
pub fn expected_next(pi: f64, k: f64, c: f64) -> f64 {
    pi * clamp01(pi + k) + (1.0 - pi) * clamp01(pi - c * k)
}

/// Random step of one agent: the Bernoulli outcome is `u < π`.
#[inline]
fn draw_step(pi: f64, beta: f64, k: f64, c: f64, u: impl FnOnce() -> f64) -> f64 {
    if pi < beta {
        pi
    } else {
        transition(pi, true, u() < pi, k, c)
    }
}

/// Advances every agent of `dist` by one step.
///
/// Agent `i` at step `step` draws from the `(group, i, step)` coordinate of
/// `stream`, so the result does not depend on evaluation order.
pub fn step_population(
    dist: &ScoreDistribution,
    policy: &ThresholdPolicy,
    params: &DynamicsParams,
    stream: &Stream,
    step: u64,
) -> ScoreDistribution {
    let group = dist.group();
    let beta = policy.beta(group);
    let (k, c) = (params.k, params.c(group));
    let gs = stream.derive(group.label());
    let next = |(i, &pi): (usize, &f64)| draw_step(pi, beta, k, c, || gs.uniform(i as u64, step));
    let scores: Vec<f64> = if dist.len() >= PAR_THRESHOLD {
        dist.scores().par_iter().enumerate().map(next).collect()
    } else {
        dist.scores().iter().enumerate().map(next).collect()
    };
    dist.with_scores(scores)
}

/// Exact expectation of the next-step mean, enumerating both outcomes per agent.
pub fn step_mean(
    dist: &ScoreDistribution,
    policy: &ThresholdPolicy,
    params: &DynamicsParams,
) -> f64 {
    let group = dist.group();
    step_mean_raw(dist.scores(), policy.beta(group), params.k, params.c(group))
}

pub(crate) fn step_mean_raw(scores: &[f64], beta: f64, k: f64, c: f64) -> f64 {
    let total: f64 = scores
        .iter()
        .map(|&pi| {
            if pi >= beta {
                expected_next(pi, k, c)
            } else {
                pi
            }
        })
        .sum();
    total / scores.len() as f64
}

/// Scores after `horizon` steps, evolving each agent through all steps in turn.
///
/// Draws are keyed exactly as in [`step_population`], so this agrees bit for
/// bit with repeated population steps while skipping frozen agents.
pub fn evolve_scores(
    scores: &[f64],
    group: Group,
    beta: f64,
    k: f64,
    c: f64,
    stream: &Stream,
    horizon: u64,
) -> Vec<f64> {
    let gs = stream.derive(group.label());
    let agent = |(i, &pi0): (usize, &f64)| {
        let a = gs.agent(i as u64);
        let mut pi = pi0;
        for t in 0..horizon {
            // Below threshold the score is frozen; at 1 repayment is certain.
            if pi < beta || pi >= 1.0 {
                break;
            }
            pi = draw_step(pi, beta, k, c, || a.uniform(t));
        }
        pi
    };
    if scores.len() >= PAR_THRESHOLD {
        scores.par_iter().enumerate().map(agent).collect()
    } else {
        scores.iter().enumerate().map(agent).collect()
    }
}

/// Mean score after `horizon` steps.
pub fn horizon_mean(
    dist: &ScoreDistribution,
    beta: f64,
    k: f64,
    c: f64,
    stream: &Stream,
    horizon: u64,
) -> f64 {
    let v = evolve_scores(dist.scores(), dist.group(), beta, k, c, stream, horizon);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Both groups' populations at every step `0..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub policy: ThresholdPolicy,
    pub params: DynamicsParams,
    pub snapshots: Vec<PerGroup<ScoreDistribution>>,
    pub means: Vec<PerGroup<f64>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.snapshots.len() - 1
    }

    pub fn last(&self) -> &PerGroup<ScoreDistribution> {
        self.snapshots.last().expect("trajectory holds t = 0")
    }

    /// Summary CSV: `step,group,mean,fraction_at_one,fraction_below_beta`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "step",
            "group",
            "mean",
            "fraction_at_one",
            "fraction_below_beta",
        ])?;
        for (t, snap) in self.snapshots.iter().enumerate() {
            for g in Group::ALL {
                let d = snap.get(g);
                w.write_record([
                    t.to_string(),
                    g.to_string(),
                    self.means[t].get(g).to_string(),
                    d.fraction_at_one().to_string(),
                    d.fraction_below(self.policy.beta(g)).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Per-agent dump: `step,group,agent_index,score`.
    pub fn write_agents_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "group", "agent_index", "score"])?;
        for (t, snap) in self.snapshots.iter().enumerate() {
            for g in Group::ALL {
                for (i, s) in snap.get(g).scores().iter().enumerate() {
                    w.write_record([t.to_string(), g.to_string(), i.to_string(), s.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs both groups for `horizon` steps from a single seed.
pub fn simulate(
    dist_a: &ScoreDistribution,
    dist_d: &ScoreDistribution,
    policy: &ThresholdPolicy,
    params: &DynamicsParams,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if dist_a.group() != Group::A || dist_d.group() != Group::D {
        return Err(Error::invalid(
            "expected one distribution for group A and one for group D",
        ));
    }
    let stream = Stream::new(seed);
    let mut current = PerGroup::new(dist_a.clone(), dist_d.clone());
    let mut snapshots = Vec::with_capacity(horizon + 1);
    let mut means = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        if t > 0 {
            current =
                current.map(|_, d| step_population(d, policy, params, &stream, (t - 1) as u64));
        }
        means.push(current.map(|_, d| d.mean()));
        snapshots.push(current.clone());
    }
    Ok(Trajectory {
        policy: *policy,
        params: *params,
        snapshots,
        means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(group: Group, scores: Vec<f64>) -> ScoreDistribution {
        ScoreDistribution::new(group, scores).unwrap()
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_unit(0.5).unwrap(), 0.5);
        assert_eq!(clamp_unit(1.2).unwrap(), 1.0);
        assert_eq!(clamp_unit(-0.05).unwrap(), 0.0);
        assert!(clamp_unit(f64::NAN).is_err());
        assert!(clamp_unit(f64::INFINITY).is_err());
    }

    #[test]
    fn step_agent_examples() {
        assert!((step_agent(0.5, true, true, 0.1, 1.0).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(step_agent(0.95, true, true, 0.1, 1.0).unwrap(), 1.0);
        assert_eq!(step_agent(0.3, false, true, 0.1, 1.0).unwrap(), 0.3);
        assert_eq!(step_agent(0.3, false, false, 0.1, 1.0).unwrap(), 0.3);
        assert_eq!(step_agent(0.05, true, false, 0.1, 1.0).unwrap(), 0.0);
        assert!(step_agent(1.1, true, true, 0.1, 1.0).is_err());
        assert!(step_agent(-0.1, false, true, 0.1, 1.0).is_err());
    }

    #[test]
    fn distribution_invariants() {
        assert!(ScoreDistribution::new(Group::A, vec![]).is_err());
        assert!(ScoreDistribution::new(Group::A, vec![0.2, 1.01]).is_err());
        assert!(ScoreDistribution::new(Group::A, vec![f64::NAN]).is_err());
        let d = dist(Group::D, vec![0.2, 0.4]);
        assert!(d.clone().with_weight(0.0).is_err());
        assert_eq!(d.with_weight(2.5).unwrap().weight(), 2.5);
        assert!(ThresholdPolicy::universal(1.5).is_err());
        assert!(DynamicsParams::new(-0.1, 1.0).is_err());
        assert!(DynamicsParams::per_group(0.1, 1.0, -1.0).is_err());
        assert_eq!("d".parse::<Group>().unwrap(), Group::D);
        assert!("B".parse::<Group>().is_err());
    }

    #[test]
    fn population_fixed_points() {
        let params = DynamicsParams::new(0.1, 1.0).unwrap();
        let s = Stream::new(1);
        let ones = dist(Group::A, vec![1.0; 50]);
        for beta in [0.0, 0.5, 1.0] {
            let p = ThresholdPolicy::universal(beta).unwrap();
            assert_eq!(step_population(&ones, &p, &params, &s, 0), ones);
        }
        let low = dist(Group::D, vec![0.3; 50]);
        let p = ThresholdPolicy::universal(0.5).unwrap();
        assert_eq!(step_population(&low, &p, &params, &s, 3), low);
    }

    #[test]
    fn population_step_mean_matches_lottery_expectation() {
        // Each agent goes to 0.6 or 0.4 with probability 1/2: mean 0.5, sd 0.1.
        let n = 100_000;
        let d = dist(Group::A, vec![0.5; n]);
        let p = ThresholdPolicy::universal(0.0).unwrap();
        let params = DynamicsParams::new(0.1, 1.0).unwrap();
        let next = step_population(&d, &p, &params, &Stream::new(99), 0);
        assert_eq!(next.len(), n);
        let se = 0.1 / (n as f64).sqrt();
        assert!((next.mean() - 0.5).abs() < 3.0 * se, "mean {}", next.mean());
    }

    #[test]
    fn step_mean_closed_cases() {
        let params = DynamicsParams::new(0.1, 1.0).unwrap();
        let d = dist(Group::A, vec![0.1, 0.45, 0.7, 0.99]);
        let nobody = ThresholdPolicy::universal(1.0).unwrap();
        assert!((step_mean(&d, &nobody, &params) - d.mean()).abs() < 1e-15);

        let half = dist(Group::A, vec![0.5; 10]);
        let everyone = ThresholdPolicy::universal(0.0).unwrap();
        let no_penalty = DynamicsParams::new(0.1, 0.0).unwrap();
        assert!((step_mean(&half, &everyone, &no_penalty) - 0.55).abs() < 1e-12);
    }

    #[test]
    fn horizon_one_is_one_population_step() {
        let a = dist(Group::A, vec![0.2, 0.5, 0.8, 0.95]);
        let d = dist(Group::D, vec![0.1, 0.4, 0.6]);
        let p = ThresholdPolicy::universal(0.3).unwrap();
        let params = DynamicsParams::per_group(0.1, 1.0, 2.0).unwrap();
        let tr = simulate(&a, &d, &p, &params, 1, 5).unwrap();
        let s = Stream::new(5);
        assert_eq!(tr.snapshots.len(), 2);
        assert_eq!(tr.snapshots[1].a, step_population(&a, &p, &params, &s, 0));
        assert_eq!(tr.snapshots[1].d, step_population(&d, &p, &params, &s, 0));
        assert!(simulate(&a, &d, &p, &params, 0, 5).is_err());
        assert!(simulate(&d, &a, &p, &params, 1, 5).is_err());
    }

    #[test]
    fn agent_major_evolution_matches_step_major() {
        let a = dist(Group::A, (0..300).map(|i| i as f64 / 299.0).collect());
        let d = dist(
            Group::D,
            (0..200).map(|i| (i as f64 / 199.0).powi(2)).collect(),
        );
        let p = ThresholdPolicy::per_group(0.35, 0.4).unwrap();
        let params = DynamicsParams::per_group(0.1, 1.0, 0.5).unwrap();
        let tr = simulate(&a, &d, &p, &params, 25, 17).unwrap();
        let s = Stream::new(17);
        let fa = evolve_scores(a.scores(), Group::A, 0.35, 0.1, 1.0, &s, 25);
        let fd = evolve_scores(d.scores(), Group::D, 0.4, 0.1, 0.5, &s, 25);
        assert_eq!(tr.last().a.scores(), &fa[..]);
        assert_eq!(tr.last().d.scores(), &fd[..]);
        assert_eq!(tr.means[25].a, horizon_mean(&a, 0.35, 0.1, 1.0, &s, 25));
    }

    #[test]
    fn trajectory_csv_layout() {
        let a = dist(Group::A, vec![0.5, 1.0]);
        let d = dist(Group::D, vec![0.2]);
        let p = ThresholdPolicy::universal(0.4).unwrap();
        let params = DynamicsParams::new(0.1, 1.0).unwrap();
        let tr = simulate(&a, &d, &p, &params, 2, 1).unwrap();
        let mut buf = Vec::new();
        tr.write_summary_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(
            lines[0],
            "step,group,mean,fraction_at_one,fraction_below_beta"
        );
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert!(lines[1].starts_with("0,A,0.75,0.5,0"));
        assert_eq!(lines[2], "0,D,0.2,0,1");

        let mut buf = Vec::new();
        tr.write_agents_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 3);
    }

    #[test]
    fn gain_is_monotone_on_grid() {
        for &(k, c) in &[
            (0.1, 1.0),
            (0.1, 0.0),
            (0.3, 4.0),
            (0.05, 10.0),
            (0.6, 0.5),
            (1.0, 1.0),
        ] {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=1000 {
                let x = i as f64 / 1000.0;
                let g = expected_next(x, k, c);
                assert!(g >= prev - 1e-15, "k={k} c={c} x={x}");
                prev = g;
            }
        }
    }

    proptest! {
        #[test]
        fn scores_stay_in_unit_interval_and_denied_are_frozen(
            scores in prop::collection::vec(0.0f64..=1.0, 1..60),
            beta in 0.0f64..=1.0,
            k in 0.0f64..0.5,
            c in 0.0f64..5.0,
            seed in any::<u64>(),
        ) {
            let a = ScoreDistribution::new(Group::A, scores.clone()).unwrap();
            let d = ScoreDistribution::new(Group::D, scores).unwrap();
            let p = ThresholdPolicy::universal(beta).unwrap();
            let params = DynamicsParams::new(k, c).unwrap();
            let tr = simulate(&a, &d, &p, &params, 6, seed).unwrap();
            prop_assert_eq!(tr.snapshots.len(), 7);
            for (t, snap) in tr.snapshots.iter().enumerate() {
                for g in Group::ALL {
                    let dist = snap.get(g);
                    prop_assert!(dist.scores().iter().all(|s| (0.0..=1.0).contains(s)));
                    prop_assert_eq!(tr.means[t].get(g), &dist.mean());
                    if t > 0 {
                        let prev = tr.snapshots[t - 1].get(g);
                        for (before, after) in prev.scores().iter().zip(dist.scores()) {
                            if *before < beta {
                                prop_assert_eq!(before, after);
                            }
                        }
                    }
                }
            }
        }
    }
}
