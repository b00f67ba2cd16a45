//! Exact absorbing-chain view of a single agent's walk.
//!
//! With rational `k` and `c·k` every reachable score is `pi0 + m·up - n·down`,
//! a multiple of one common denominator, so the walk lives on finitely many
//! states. Scores below the threshold are frozen (absorbing), `1` is absorbing
//! because repayment is certain there, and `0` is absorbing because default is.
//! Everything in between is transient.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use num::{BigInt, BigRational, Integer, One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::dynamics::{evolve_scores, DynamicsParams, ScoreDistribution, ThresholdPolicy};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Guard on the dense solve.
pub const MAX_TRANSIENT_STATES: usize = 4000;

/// Parses `"a/b"`, an integer, or a plain decimal such as `"0.35"` exactly.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || {
        Error::invalid(format!(
            "`{s}` is not a rational number (use a/b or a decimal)"
        ))
    };
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(Error::invalid(format!("`{s}` has a zero denominator")));
        }
        return Ok(BigRational::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if (int.is_empty() && frac.is_empty())
        || !int.bytes().all(|b| b.is_ascii_digit())
        || !frac.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(bad());
    }
    let digits: BigInt = format!("{int}{frac}")
        .trim_start_matches('0')
        .parse()
        .unwrap_or_else(|_| BigInt::zero());
    let value = BigRational::new(digits, num::pow(BigInt::from(10), frac.len()));
    Ok(if neg { -value } else { value })
}

fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

fn clamp_rational(x: BigRational) -> BigRational {
    if x.is_negative() {
        BigRational::zero()
    } else if x > BigRational::one() {
        BigRational::one()
    } else {
        x
    }
}

fn in_unit(x: &BigRational) -> bool {
    !x.is_negative() && *x <= BigRational::one()
}

/// Exact per-step increments: `up = k`, `down = c·k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalStep {
    pub up: BigRational,
    pub down: BigRational,
}

impl RationalStep {
    pub fn new(up: BigRational, down: BigRational) -> Result<Self> {
        if up.is_negative() || down.is_negative() {
            return Err(Error::invalid(format!(
                "step sizes must be nonnegative (up={up}, down={down})"
            )));
        }
        Ok(RationalStep { up, down })
    }

    pub fn from_k_c(k: BigRational, c: BigRational) -> Result<Self> {
        let down = &k * &c;
        Self::new(k, down)
    }

    /// Common denominator of all reachable positions from `pi0`.
    pub fn common_denominator(&self, pi0: &BigRational) -> BigInt {
        pi0.denom().lcm(self.up.denom()).lcm(self.down.denom())
    }

    /// Number of multiples of the common denominator inside `[0, 1]`.
    pub fn state_bound(&self, pi0: &BigRational) -> BigInt {
        self.common_denominator(pi0) + BigInt::one()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSets {
    pub transient: Vec<BigRational>,
    pub absorbing: Vec<BigRational>,
}

impl StateSets {
    pub fn len(&self) -> usize {
        self.transient.len() + self.absorbing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn is_absorbing(x: &BigRational, beta: &BigRational) -> bool {
    x < beta || x.is_zero() || *x >= BigRational::one()
}

fn check_unit(name: &str, x: &BigRational) -> Result<()> {
    if in_unit(x) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{name} must lie in [0, 1], got {x}"
        )))
    }
}

/// Breadth-first closure of `{pi0}` under the two moves.
pub fn enumerate_states(
    pi0: &BigRational,
    step: &RationalStep,
    beta: &BigRational,
) -> Result<StateSets> {
    check_unit("pi0", pi0)?;
    check_unit("beta", beta)?;
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(pi0.clone());
    queue.push_back(pi0.clone());
    let mut transient = 0usize;
    while let Some(x) = queue.pop_front() {
        if is_absorbing(&x, beta) {
            continue;
        }
        transient += 1;
        if transient > MAX_TRANSIENT_STATES {
            return Err(Error::invalid(format!(
                "more than {MAX_TRANSIENT_STATES} transient states; use coarser rationals"
            )));
        }
        if step.up.is_zero() {
            return Err(Error::invalid(
                "k must be positive for a transient state to move",
            ));
        }
        for next in [
            clamp_rational(&x + &step.up),
            clamp_rational(&x - &step.down),
        ] {
            if seen.insert(next.clone()) {
                queue.push_back(next);
            }
        }
    }
    let (absorbing, transient) = seen.into_iter().partition(|x| is_absorbing(x, beta));
    Ok(StateSets {
        transient,
        absorbing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Transient(usize),
    Absorbing(usize),
}

/// Outgoing moves of one transient state: `(target, probability)` for
/// repayment and default, in that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub moves: [(Target, BigRational); 2],
}

/// `[I 0; A B]` in sparse form; each transient row has at most two entries.
#[derive(Debug, Clone)]
pub struct AbsorbingChain {
    pub transient_states: Vec<BigRational>,
    pub absorbing_states: Vec<BigRational>,
    pub rows: Vec<Row>,
    pub beta: BigRational,
}

pub fn build_chain(
    states: &StateSets,
    step: &RationalStep,
    beta: &BigRational,
) -> Result<AbsorbingChain> {
    let index: BTreeMap<&BigRational, Target> = states
        .transient
        .iter()
        .enumerate()
        .map(|(i, x)| (x, Target::Transient(i)))
        .chain(
            states
                .absorbing
                .iter()
                .enumerate()
                .map(|(j, x)| (x, Target::Absorbing(j))),
        )
        .collect();
    let lookup = |x: &BigRational| {
        index
            .get(x)
            .copied()
            .ok_or_else(|| Error::invalid(format!("state {x} is not in the enumerated set")))
    };
    let rows = states
        .transient
        .iter()
        .map(|x| {
            let up = lookup(&clamp_rational(x + &step.up))?;
            let down = lookup(&clamp_rational(x - &step.down))?;
            Ok(Row {
                moves: [(up, x.clone()), (down, BigRational::one() - x)],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AbsorbingChain {
        transient_states: states.transient.clone(),
        absorbing_states: states.absorbing.clone(),
        rows,
        beta: beta.clone(),
    })
}

impl AbsorbingChain {
    pub fn n_transient(&self) -> usize {
        self.transient_states.len()
    }

    pub fn n_absorbing(&self) -> usize {
        self.absorbing_states.len()
    }

    /// Exact entry of the transient block.
    pub fn b_exact(&self, i: usize, j: usize) -> BigRational {
        self.rows[i]
            .moves
            .iter()
            .filter(|(t, _)| *t == Target::Transient(j))
            .fold(BigRational::zero(), |acc, (_, p)| acc + p)
    }

    /// Exact entry of the transient-to-absorbing block.
    pub fn a_exact(&self, i: usize, j: usize) -> BigRational {
        self.rows[i]
            .moves
            .iter()
            .filter(|(t, _)| *t == Target::Absorbing(j))
            .fold(BigRational::zero(), |acc, (_, p)| acc + p)
    }

    /// Exact sum of row `i` of `[A | B]`.
    pub fn row_sum_exact(&self, i: usize) -> BigRational {
        self.rows[i]
            .moves
            .iter()
            .fold(BigRational::zero(), |acc, (_, p)| acc + p)
    }

    pub fn b_matrix(&self) -> DMatrix<f64> {
        let n = self.n_transient();
        let mut b = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for (t, p) in &row.moves {
                if let Target::Transient(j) = *t {
                    b[(i, j)] += to_f64(p);
                }
            }
        }
        b
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n_transient(), self.n_absorbing());
        for (i, row) in self.rows.iter().enumerate() {
            for (t, p) in &row.moves {
                if let Target::Absorbing(j) = *t {
                    a[(i, j)] += to_f64(p);
                }
            }
        }
        a
    }

    fn b_times(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| {
                row.moves
                    .iter()
                    .map(|(t, p)| match *t {
                        Target::Transient(j) => to_f64(p) * v[j],
                        Target::Absorbing(_) => 0.0,
                    })
                    .sum()
            })
            .collect()
    }

    /// Row sums of `B^n`: the probability of still being transient after `n`
    /// steps, per starting state.
    pub fn transient_mass(&self, n: u64) -> Vec<f64> {
        let mut v = vec![1.0; self.n_transient()];
        for _ in 0..n {
            v = self.b_times(&v);
        }
        v
    }

    /// Estimate of the spectral radius of `B` from the growth rate of
    /// `‖B^n‖_inf`, which equals the max row sum of `B^n` since `B >= 0`.
    pub fn spectral_radius(&self) -> f64 {
        const WARMUP: usize = 2000;
        const AVERAGE: usize = 2000;
        if self.n_transient() == 0 {
            return 0.0;
        }
        let mut v = vec![1.0; self.n_transient()];
        let mut log_growth = 0.0;
        for t in 0..WARMUP + AVERAGE {
            v = self.b_times(&v);
            let s = v.iter().cloned().fold(0.0, f64::max);
            if s == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|x| *x /= s);
            if t >= WARMUP {
                log_growth += s.ln();
            }
        }
        (log_growth / AVERAGE as f64).exp()
    }

    pub fn position(&self, state: &BigRational) -> Option<Target> {
        if let Ok(i) = self.transient_states.binary_search(state) {
            Some(Target::Transient(i))
        } else {
            self.absorbing_states
                .binary_search(state)
                .ok()
                .map(Target::Absorbing)
        }
    }

    /// `(I - B)^{-1} A` and `(I - B)^{-1} 1` for every transient start.
    pub fn solve(&self) -> Result<ChainSolution> {
        let n = self.n_transient();
        let m = DMatrix::<f64>::identity(n, n) - self.b_matrix();
        let lu = m.lu();
        let absorption = lu
            .solve(&self.a_matrix())
            .ok_or_else(|| Error::SingularChain("I - B is not invertible".into()))?;
        let steps = lu
            .solve(&DVector::from_element(n, 1.0))
            .ok_or_else(|| Error::SingularChain("I - B is not invertible".into()))?;
        Ok(ChainSolution { absorption, steps })
    }
}

#[derive(Debug, Clone)]
pub struct ChainSolution {
    pub absorption: DMatrix<f64>,
    pub steps: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsorptionResult {
    /// Probability of ending at each absorbing state, in chain order.
    pub probabilities: Vec<f64>,
    pub expected_steps: f64,
}

pub fn absorption_probabilities(
    chain: &AbsorbingChain,
    start: &BigRational,
) -> Result<AbsorptionResult> {
    match chain.position(start) {
        None => Err(Error::invalid(format!(
            "{start} is not a state of this chain"
        ))),
        Some(Target::Absorbing(j)) => {
            let mut probabilities = vec![0.0; chain.n_absorbing()];
            probabilities[j] = 1.0;
            Ok(AbsorptionResult {
                probabilities,
                expected_steps: 0.0,
            })
        }
        Some(Target::Transient(i)) => {
            let sol = chain.solve()?;
            let probabilities = sol.absorption.row(i).iter().map(|p| p.max(0.0)).collect();
            Ok(AbsorptionResult {
                probabilities,
                expected_steps: sol.steps[i],
            })
        }
    }
}

/// Summary of a full analysis, as emitted by the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct MarkovReport {
    pub pi0: String,
    pub up: String,
    pub down: String,
    pub beta: String,
    pub states: Vec<String>,
    pub absorbing: Vec<String>,
    pub probabilities: BTreeMap<String, f64>,
    pub expected_steps: f64,
    pub spectral_radius: f64,
    pub state_bound: String,
    pub horizon: u64,
    /// Probability the walk from `pi0` is still transient after `horizon` steps.
    pub transient_mass_at_horizon: f64,
    pub max_transient_mass_at_horizon: f64,
}

pub fn analyze(
    pi0: &BigRational,
    step: &RationalStep,
    beta: &BigRational,
    horizon: u64,
) -> Result<MarkovReport> {
    let states = enumerate_states(pi0, step, beta)?;
    let chain = build_chain(&states, step, beta)?;
    let result = absorption_probabilities(&chain, pi0)?;
    let rho = chain.spectral_radius();
    if rho >= 1.0 {
        return Err(Error::SingularChain(format!(
            "spectral radius of B is {rho}, expected < 1"
        )));
    }
    let mass = chain.transient_mass(horizon);
    let start_mass = match chain.position(pi0) {
        Some(Target::Transient(i)) => mass[i],
        _ => 0.0,
    };
    Ok(MarkovReport {
        pi0: pi0.to_string(),
        up: step.up.to_string(),
        down: step.down.to_string(),
        beta: beta.to_string(),
        states: chain
            .transient_states
            .iter()
            .map(|x| x.to_string())
            .collect(),
        absorbing: chain
            .absorbing_states
            .iter()
            .map(|x| x.to_string())
            .collect(),
        probabilities: chain
            .absorbing_states
            .iter()
            .zip(&result.probabilities)
            .map(|(x, &p)| (x.to_string(), p))
            .collect(),
        expected_steps: result.expected_steps,
        spectral_radius: rho,
        state_bound: step.state_bound(pi0).to_string(),
        horizon,
        transient_mass_at_horizon: start_mass,
        max_transient_mass_at_horizon: mass.iter().cloned().fold(0.0, f64::max),
    })
}

/// Simulates the population for `horizon` steps and returns the fraction of
/// agents strictly inside `(beta, 1)`.
pub fn verify_bifurcation(
    dist: &ScoreDistribution,
    policy: &ThresholdPolicy,
    params: &DynamicsParams,
    horizon: u64,
    seed: u64,
) -> Result<f64> {
    let group = dist.group();
    let beta = policy.beta(group);
    let last = evolve_scores(
        dist.scores(),
        group,
        beta,
        params.k,
        params.c(group),
        &Stream::new(seed),
        horizon,
    );
    Ok(ScoreDistribution::new(group, last)?.fraction_transient(beta))
}

/// `a/b` as an exact rational; handy in tests and examples.
pub fn rational(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Group;

    fn r(n: i64, d: i64) -> BigRational {
        rational(n, d)
    }

    fn tenths(xs: &[i64]) -> Vec<BigRational> {
        xs.iter().map(|&n| r(n, 10)).collect()
    }

    fn worked() -> (BigRational, RationalStep, BigRational) {
        (
            r(1, 2),
            RationalStep::new(r(1, 10), r(1, 10)).unwrap(),
            r(7, 20),
        )
    }

    /// First-step analysis solved by exact rational Gauss-Jordan elimination:
    /// `p(x) = x·p(up(x)) + (1-x)·p(down(x))` for transient `x`, with the
    /// target absorbing state's indicator on the boundary; also `t(x)`.
    #[allow(clippy::needless_range_loop)]
    fn exact_first_step(
        chain: &AbsorbingChain,
        target: usize,
    ) -> (Vec<BigRational>, Vec<BigRational>) {
        let n = chain.n_transient();
        // columns: n unknowns, then rhs for p, then rhs for t
        let mut m = vec![vec![BigRational::zero(); n + 2]; n];
        for i in 0..n {
            m[i][i] = BigRational::one();
            for (t, p) in &chain.rows[i].moves {
                match *t {
                    Target::Transient(j) => m[i][j] -= p,
                    Target::Absorbing(j) if j == target => m[i][n] += p,
                    Target::Absorbing(_) => {}
                }
            }
            m[i][n + 1] = BigRational::one();
        }
        for col in 0..n {
            let piv = (col..n).find(|&r| !m[r][col].is_zero()).expect("singular");
            m.swap(col, piv);
            let inv = BigRational::one() / m[col][col].clone();
            for v in m[col].iter_mut() {
                *v = &*v * &inv;
            }
            for row in 0..n {
                if row != col && !m[row][col].is_zero() {
                    let f = m[row][col].clone();
                    for k in 0..n + 2 {
                        let sub = &f * &m[col][k];
                        m[row][k] -= sub;
                    }
                }
            }
        }
        (
            m.iter().map(|r| r[n].clone()).collect(),
            m.iter().map(|r| r[n + 1].clone()).collect(),
        )
    }

    #[test]
    fn parses_rationals() {
        assert_eq!(parse_rational("7/20").unwrap(), r(7, 20));
        assert_eq!(parse_rational(" 0.35 ").unwrap(), r(7, 20));
        assert_eq!(parse_rational("1").unwrap(), r(1, 1));
        assert_eq!(parse_rational(".5").unwrap(), r(1, 2));
        assert_eq!(parse_rational("0").unwrap(), r(0, 1));
        assert_eq!(parse_rational("-0.1").unwrap(), r(-1, 10));
        assert_eq!(parse_rational("2/4").unwrap(), r(1, 2));
        for bad in ["", "x", "1/0", "0.1.2", "1e-3", "."] {
            assert!(parse_rational(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn worked_example_states() {
        let (pi0, step, beta) = worked();
        let s = enumerate_states(&pi0, &step, &beta).unwrap();
        assert_eq!(s.transient, tenths(&[4, 5, 6, 7, 8, 9]));
        assert_eq!(s.absorbing, tenths(&[3, 10]));
        assert!(BigInt::from(s.len()) <= step.state_bound(&pi0));
    }

    #[test]
    fn trivial_starts() {
        let (_, step, beta) = worked();
        let s = enumerate_states(&r(1, 5), &step, &beta).unwrap();
        assert!(s.transient.is_empty());
        assert_eq!(s.absorbing, vec![r(1, 5)]);
        let s = enumerate_states(&r(1, 1), &step, &beta).unwrap();
        assert!(s.transient.is_empty());
        assert_eq!(s.absorbing, vec![r(1, 1)]);
        assert!(enumerate_states(&r(3, 2), &step, &beta).is_err());
        assert!(enumerate_states(&r(1, 2), &step, &r(-1, 2)).is_err());
        let frozen = RationalStep::new(r(0, 1), r(0, 1)).unwrap();
        assert!(enumerate_states(&r(1, 2), &frozen, &beta).is_err());
        assert!(RationalStep::new(r(-1, 10), r(0, 1)).is_err());
    }

    #[test]
    fn single_transient_state() {
        let step = RationalStep::new(r(1, 2), r(1, 2)).unwrap();
        let s = enumerate_states(&r(1, 2), &step, &r(1, 10)).unwrap();
        let chain = build_chain(&s, &step, &r(1, 10)).unwrap();
        assert_eq!(chain.n_transient(), 1);
        assert_eq!(chain.b_exact(0, 0), r(0, 1));
        // absorbing order is [0, 1]
        assert_eq!(chain.a_exact(0, 0), r(1, 2));
        assert_eq!(chain.a_exact(0, 1), r(1, 2));
    }

    #[test]
    fn chain_rows_are_exactly_stochastic() {
        let (pi0, step, beta) = worked();
        let chain =
            build_chain(&enumerate_states(&pi0, &step, &beta).unwrap(), &step, &beta).unwrap();
        for i in 0..chain.n_transient() {
            assert_eq!(chain.row_sum_exact(i), BigRational::one());
            assert!(chain.b_exact(i, i).is_zero());
        }
        // 9/10 moves up into the absorbing state 1
        let top = chain.position(&r(9, 10)).unwrap();
        let Target::Transient(i) = top else { panic!() };
        assert_eq!(chain.rows[i].moves[0].0, chain.position(&r(1, 1)).unwrap());
    }

    #[test]
    fn absorption_matches_exact_elimination() {
        let (pi0, step, beta) = worked();
        let chain =
            build_chain(&enumerate_states(&pi0, &step, &beta).unwrap(), &step, &beta).unwrap();
        let res = absorption_probabilities(&chain, &pi0).unwrap();
        assert!((res.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let Some(Target::Transient(i)) = chain.position(&pi0) else {
            panic!()
        };
        for j in 0..chain.n_absorbing() {
            let (p, t) = exact_first_step(&chain, j);
            assert!((res.probabilities[j] - to_f64(&p[i])).abs() < 1e-12);
            assert!((res.expected_steps - to_f64(&t[i])).abs() < 1e-9);
        }
        let at = absorption_probabilities(&chain, &r(3, 10)).unwrap();
        assert_eq!(at.probabilities, vec![1.0, 0.0]);
        assert_eq!(at.expected_steps, 0.0);
        assert!(absorption_probabilities(&chain, &r(1, 3)).is_err());
    }

    #[test]
    fn zero_threshold_has_two_sinks() {
        let step = RationalStep::new(r(1, 10), r(1, 10)).unwrap();
        let beta = r(0, 1);
        let s = enumerate_states(&r(1, 2), &step, &beta).unwrap();
        assert_eq!(s.absorbing, vec![r(0, 1), r(1, 1)]);
        assert_eq!(s.transient.len(), 9);
        let chain = build_chain(&s, &step, &beta).unwrap();
        let res = absorption_probabilities(&chain, &r(1, 2)).unwrap();
        assert!((res.probabilities[0] + res.probabilities[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn spectral_radius_below_one_and_mass_decays() {
        let (pi0, step, beta) = worked();
        let chain =
            build_chain(&enumerate_states(&pi0, &step, &beta).unwrap(), &step, &beta).unwrap();
        let rho = chain.spectral_radius();
        assert!(rho > 0.0 && rho < 1.0, "{rho}");
        let dense = chain.b_matrix();
        let eig = dense.clone().complex_eigenvalues();
        let exact_rho = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!((rho - exact_rho).abs() < 1e-3, "{rho} vs {exact_rho}");
        assert!(chain.transient_mass(400).iter().all(|&m| m < 1e-6));
        // one step of the mass recursion is B·1
        let one = chain.transient_mass(1);
        let direct = &dense * DVector::from_element(chain.n_transient(), 1.0);
        for (a, b) in one.iter().zip(direct.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn penalty_free_walk_self_loops_but_solves() {
        // c = 0: default leaves the score unchanged
        let step = RationalStep::from_k_c(r(1, 4), r(0, 1)).unwrap();
        let beta = r(1, 10);
        let s = enumerate_states(&r(1, 4), &step, &beta).unwrap();
        let chain = build_chain(&s, &step, &beta).unwrap();
        let res = absorption_probabilities(&chain, &r(1, 4)).unwrap();
        assert!((res.probabilities[chain.n_absorbing() - 1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn analyze_report() {
        let (pi0, step, beta) = worked();
        let rep = analyze(&pi0, &step, &beta, 50).unwrap();
        assert_eq!(rep.states.len(), 6);
        assert_eq!(rep.absorbing, vec!["3/10".to_string(), "1".to_string()]);
        assert!((rep.probabilities.values().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(rep.transient_mass_at_horizon <= rep.max_transient_mass_at_horizon);
    }

    #[test]
    fn bifurcation_trivial_cases() {
        let dist = ScoreDistribution::new(Group::A, vec![0.2, 0.5, 0.7, 1.0]).unwrap();
        let policy = ThresholdPolicy::universal(0.35).unwrap();
        let params = DynamicsParams::new(0.1, 1.0).unwrap();
        assert_eq!(
            verify_bifurcation(&dist, &policy, &params, 0, 1).unwrap(),
            0.5
        );
        let ones = ScoreDistribution::new(Group::D, vec![1.0; 50]).unwrap();
        for h in [0, 1, 10, 100] {
            assert_eq!(
                verify_bifurcation(&ones, &policy, &params, h, 3).unwrap(),
                0.0
            );
        }
    }
}
