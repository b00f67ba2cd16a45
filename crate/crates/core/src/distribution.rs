//! Initial populations, empirical CDFs and stochastic dominance.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::function::beta::inv_beta_reg;

use crate::dynamics::{Group, ScoreDistribution};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Absolute slack on CDF comparisons.
pub const CDF_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSpec {
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub seed: u64,
}

impl BetaSpec {
    pub fn new(a: f64, b: f64, n: usize, seed: u64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
            return Err(Error::invalid(format!(
                "beta shape parameters must be positive (a={a}, b={b})"
            )));
        }
        if n == 0 {
            return Err(Error::invalid("sample size must be at least 1"));
        }
        Ok(BetaSpec { a, b, n, seed })
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }
}

/// `n` draws from Beta(a, b) by inverse-CDF transform of counter-based uniforms.
///
/// Two samples drawn with the same seed share their uniforms, so they are
/// comonotone: if one Beta law dominates the other, so does every sample pair.
pub fn sample_beta(spec: &BetaSpec, group: Group) -> Result<ScoreDistribution> {
    let spec = BetaSpec::new(spec.a, spec.b, spec.n, spec.seed)?;
    let stream = Stream::new(spec.seed).derive("beta-sample");
    let scores = (0..spec.n as u64)
        .map(|i| {
            // open interval (0, 1) keeps the inverse finite
            let u = (stream.uniform(i, 0) * ((1u64 << 53) as f64) + 0.5) / ((1u64 << 53) as f64);
            inv_beta_reg(spec.a, spec.b, u).clamp(0.0, 1.0)
        })
        .collect();
    ScoreDistribution::new(group, scores)
}

/// Sorted copy of the scores, for repeated CDF queries.
#[derive(Debug, Clone)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(dist: &ScoreDistribution) -> Self {
        let mut sorted = dist.scores().to_vec();
        sorted.sort_by(f64::total_cmp);
        EmpiricalCdf { sorted }
    }

    /// Fraction of scores `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }
}

pub fn empirical_cdf(dist: &ScoreDistribution, x: f64) -> f64 {
    dist.scores().iter().filter(|&&s| s <= x).count() as f64 / dist.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub x: f64,
    pub cdf_a: f64,
    pub cdf_d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub dominates: bool,
    pub grid_step: f64,
    pub interval: (f64, f64),
    pub violations: Vec<Violation>,
}

/// Grid `lo, lo+step, ..., hi` with both endpoints included.
pub fn inclusive_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step - 1e-9).ceil().max(0.0) as usize;
    let mut xs: Vec<f64> = (0..n).map(|j| lo + j as f64 * step).collect();
    xs.push(hi);
    xs
}

/// Does `a` dominate `d` (`F_a <= F_d`) at every grid point of `[lo, hi]`?
pub fn check_dominance(
    a: &ScoreDistribution,
    d: &ScoreDistribution,
    step: f64,
    interval: (f64, f64),
) -> Result<DominanceReport> {
    let (lo, hi) = interval;
    if !(step > 0.0 && step <= 0.01) {
        return Err(Error::invalid(format!(
            "grid step must lie in (0, 0.01], got {step}"
        )));
    }
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::invalid(format!(
            "interval must satisfy 0 <= lo < hi <= 1, got [{lo}, {hi}]"
        )));
    }
    let (fa, fd) = (EmpiricalCdf::new(a), EmpiricalCdf::new(d));
    let violations: Vec<Violation> = inclusive_grid(lo, hi, step)
        .into_iter()
        .filter_map(|x| {
            let (cdf_a, cdf_d) = (fa.eval(x), fd.eval(x));
            (cdf_a > cdf_d + CDF_TOLERANCE).then_some(Violation { x, cdf_a, cdf_d })
        })
        .collect();
    Ok(DominanceReport {
        dominates: violations.is_empty(),
        grid_step: step,
        interval,
        violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width histogram on `[0, 1]`; the last bin is closed.
pub fn histogram(dist: &ScoreDistribution, bins: usize) -> Vec<HistogramBin> {
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    for &s in dist.scores() {
        let i = ((s * bins as f64) as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lo: i as f64 / bins as f64,
            hi: (i + 1) as f64 / bins as f64,
            count,
        })
        .collect()
}

/// One-column score file with header `score`.
pub fn write_scores_csv<W: Write>(dist: &ScoreDistribution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["score"])?;
    for s in dist.scores() {
        w.write_record([s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads scores from a CSV with a header row: the named column, or the first one.
pub fn read_scores_csv<R: Read>(
    input: R,
    group: Group,
    column: Option<&str>,
) -> Result<ScoreDistribution> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let idx = match column {
        Some(name) => headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::invalid(format!("score file has no column `{name}`")))?,
        None => 0,
    };
    let mut scores = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = rec.get(idx).unwrap_or("").trim();
        if field.is_empty() {
            continue; // ragged multi-group files
        }
        let v: f64 = field.parse().map_err(|_| {
            Error::invalid(format!(
                "score file row {}: `{field}` is not a number",
                line + 2
            ))
        })?;
        scores.push(v);
    }
    ScoreDistribution::new(group, scores)
}
