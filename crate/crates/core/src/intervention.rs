//! Equity/efficiency utility and structural interventions on the penalty
//! multiplier `c`.
//!
//! Three policies are compared against the pre-intervention optimum, where
//! both groups face `ĉ` and the threshold `β̂(k, ĉ)`:
//!
//! * `BetaOnly` keeps `ĉ` and only re-chooses `β`;
//! * `GroupBlind` lowers `c` for everyone to `ĉ - rĉ/2`;
//! * `GroupConscious` lowers `c` for group `D` only, to `ĉ - rĉ`.
//!
//! Every policy then picks the threshold maximising the utility of the
//! seed-averaged horizon means.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve_scores, DynamicsParams, Group, PerGroup, ScoreDistribution};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::threshold::{optimal_threshold, threshold_grid, TIE_TOLERANCE};

pub const DEFAULT_HORIZON: u64 = 20;
pub const DEFAULT_SEEDS: u64 = 10;
pub const BETA_RESOLUTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EfficiencyMode {
    /// Rewards improvements over the baseline and penalises losses.
    #[default]
    SignedImprovement,
    /// Rewards absolute deviation from the baseline in either direction.
    LiteralAbsolute,
}

impl FromStr for EfficiencyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "signed" | "signed-improvement" => Ok(EfficiencyMode::SignedImprovement),
            "literal" | "literal-absolute" => Ok(EfficiencyMode::LiteralAbsolute),
            other => Err(Error::invalid(format!(
                "unknown efficiency mode `{other}` (expected signed-improvement or literal-absolute)"
            ))),
        }
    }
}

impl fmt::Display for EfficiencyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EfficiencyMode::SignedImprovement => "signed-improvement",
            EfficiencyMode::LiteralAbsolute => "literal-absolute",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityWeights {
    pub alpha: f64,
    pub efficiency_mode: EfficiencyMode,
}

impl UtilityWeights {
    pub fn new(alpha: f64, efficiency_mode: EfficiencyMode) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        Ok(UtilityWeights {
            alpha,
            efficiency_mode,
        })
    }

    pub fn signed(alpha: f64) -> Result<Self> {
        Self::new(alpha, EfficiencyMode::SignedImprovement)
    }
}

/// `-α|μA - μD| + (1-α)·efficiency`, equal group sizes.
pub fn utility(mean_a: f64, mean_d: f64, base_a: f64, base_d: f64, w: &UtilityWeights) -> f64 {
    utility_weighted(
        PerGroup::new(mean_a, mean_d),
        PerGroup::new(base_a, base_d),
        PerGroup::splat(1.0),
        w,
    )
}

/// Utility when the groups have population shares `shares`. The efficiency
/// term is the share-weighted average change scaled by two, which reduces to
/// the plain sum for equal shares.
pub fn utility_weighted(
    means: PerGroup<f64>,
    base: PerGroup<f64>,
    shares: PerGroup<f64>,
    w: &UtilityWeights,
) -> f64 {
    let change = |m: f64, b: f64| match w.efficiency_mode {
        EfficiencyMode::SignedImprovement => m - b,
        EfficiencyMode::LiteralAbsolute => (m - b).abs(),
    };
    let total = shares.a + shares.d;
    let efficiency =
        2.0 * (shares.a * change(means.a, base.a) + shares.d * change(means.d, base.d)) / total;
    -w.alpha * (means.a - means.d).abs() + (1.0 - w.alpha) * efficiency
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    BetaOnly,
    GroupBlind,
    GroupConscious,
}

impl PolicyKind {
    /// In tie-break order: the least intrusive policy wins a tie.
    pub const ALL: [PolicyKind; 3] = [
        PolicyKind::BetaOnly,
        PolicyKind::GroupBlind,
        PolicyKind::GroupConscious,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::BetaOnly => "beta_only",
            PolicyKind::GroupBlind => "group_blind",
            PolicyKind::GroupConscious => "group_conscious",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "beta_only" | "betaonly" => Ok(PolicyKind::BetaOnly),
            "group_blind" | "groupblind" => Ok(PolicyKind::GroupBlind),
            "group_conscious" | "groupconscious" => Ok(PolicyKind::GroupConscious),
            _ => Err(Error::invalid(format!(
                "unknown policy `{s}` (expected beta-only, group-blind or group-conscious)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub kind: PolicyKind,
    pub r: f64,
    pub baseline_c: f64,
}

impl InterventionSpec {
    pub fn new(kind: PolicyKind, r: f64, baseline_c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::invalid(format!("r must lie in [0, 1], got {r}")));
        }
        if !(baseline_c.is_finite() && baseline_c >= 0.0) {
            return Err(Error::invalid(format!(
                "baseline c must be finite and >= 0, got {baseline_c}"
            )));
        }
        Ok(InterventionSpec {
            kind,
            r,
            baseline_c,
        })
    }

    /// Post-intervention penalty per group.
    pub fn penalties(&self) -> PerGroup<f64> {
        let c = self.baseline_c;
        match self.kind {
            PolicyKind::BetaOnly => PerGroup::splat(c),
            PolicyKind::GroupBlind => PerGroup::splat(c - self.r * c / 2.0),
            PolicyKind::GroupConscious => PerGroup::new(c, c - self.r * c),
        }
    }
}

pub fn apply_intervention(
    params: &DynamicsParams,
    spec: &InterventionSpec,
) -> Result<DynamicsParams> {
    let spec = InterventionSpec::new(spec.kind, spec.r, spec.baseline_c)?;
    if spec.kind == PolicyKind::BetaOnly {
        return Ok(*params);
    }
    let c = spec.penalties();
    DynamicsParams::per_group(params.k, c.a, c.d)
}

/// Settings shared by policy evaluation and grid generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub k: f64,
    pub horizon: u64,
    pub n_seeds: u64,
    pub seed: u64,
    /// Search a separate threshold per group instead of one universal threshold.
    pub per_group_beta: bool,
}

impl SearchConfig {
    pub fn new(k: f64, horizon: u64, n_seeds: u64, seed: u64) -> Result<Self> {
        let cfg = SearchConfig {
            k,
            horizon,
            n_seeds,
            seed,
            per_group_beta: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(Error::invalid(format!(
                "k must be finite and >= 0, got {}",
                self.k
            )));
        }
        if self.n_seeds == 0 {
            return Err(Error::invalid("need at least one seed"));
        }
        Ok(())
    }
}

/// Replicate streams under a root; replicate `i` is the same for every
/// policy, threshold and penalty evaluated from that root.
fn replicate_streams(root: &Stream, n: u64) -> Vec<Stream> {
    let base = root.derive("replicate");
    (0..n).map(|i| base.derive_index(i)).collect()
}

/// Threshold grid plus the pre-intervention optimum, sorted.
fn candidate_betas(beta_hat: f64) -> Vec<f64> {
    let mut betas = threshold_grid(BETA_RESOLUTION).expect("fixed resolution is valid");
    if betas.iter().all(|b| (b - beta_hat).abs() > 1e-12) {
        betas.push(beta_hat);
        betas.sort_by(f64::total_cmp);
    }
    betas
}

/// Caches seed-averaged horizon means per `(group, c)` over the candidate
/// thresholds.
struct MeanTables<'a> {
    dists: PerGroup<&'a ScoreDistribution>,
    k: f64,
    horizon: u64,
    streams: Vec<Stream>,
    betas: Vec<f64>,
    tables: HashMap<(Group, u64), Vec<f64>>,
}

impl<'a> MeanTables<'a> {
    fn new(
        dists: PerGroup<&'a ScoreDistribution>,
        cfg: &SearchConfig,
        root: &Stream,
        betas: Vec<f64>,
    ) -> Self {
        MeanTables {
            dists,
            k: cfg.k,
            horizon: cfg.horizon,
            streams: replicate_streams(root, cfg.n_seeds),
            betas,
            tables: HashMap::new(),
        }
    }

    fn table(&mut self, group: Group, c: f64) -> &[f64] {
        let (dist, k, horizon) = (*self.dists.get(group), self.k, self.horizon);
        let (streams, betas) = (&self.streams, &self.betas);
        self.tables.entry((group, c.to_bits())).or_insert_with(|| {
            betas
                .par_iter()
                .map(|&b| {
                    let total: f64 = streams
                        .iter()
                        .map(|s| {
                            let v = evolve_scores(dist.scores(), group, b, k, c, s, horizon);
                            v.iter().sum::<f64>() / v.len() as f64
                        })
                        .sum();
                    total / streams.len() as f64
                })
                .collect()
        })
    }

    fn beta_index(&self, beta: f64) -> usize {
        self.betas
            .iter()
            .position(|b| (b - beta).abs() <= 1e-12)
            .expect("beta is a candidate")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    pub kind: PolicyKind,
    pub r: f64,
    pub params: DynamicsParams,
    pub beta: PerGroup<f64>,
    /// Seed-averaged horizon means under the chosen thresholds.
    pub means: PerGroup<f64>,
    /// Seed-averaged horizon means under `β̂(k, ĉ)` and `ĉ`.
    pub baseline: PerGroup<f64>,
    pub baseline_beta: f64,
    pub shares: PerGroup<f64>,
    pub weights: UtilityWeights,
    pub utility: f64,
}

impl PolicyOutcome {
    pub fn recompute_utility(&self) -> f64 {
        utility_weighted(self.means, self.baseline, self.shares, &self.weights)
    }
}

fn check_groups(dist_a: &ScoreDistribution, dist_d: &ScoreDistribution) -> Result<()> {
    if dist_a.group() != Group::A || dist_d.group() != Group::D {
        return Err(Error::invalid(
            "expected distributions for groups A and D, in that order",
        ));
    }
    Ok(())
}

fn shares(dists: PerGroup<&ScoreDistribution>) -> PerGroup<f64> {
    dists.map(|_, d| d.weight())
}

/// Index of the maximum; ties within tolerance go to the largest index.
fn argmax_last(values: impl Iterator<Item = f64> + Clone) -> usize {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    values
        .enumerate()
        .filter(|&(_, v)| v >= max - TIE_TOLERANCE)
        .last()
        .map(|(i, _)| i)
        .expect("non-empty")
}

fn best_outcome(
    ctx: &mut MeanTables<'_>,
    spec: &InterventionSpec,
    weights: &UtilityWeights,
    per_group_beta: bool,
) -> Result<PolicyOutcome> {
    let base_params = DynamicsParams::new(ctx.k, spec.baseline_c)?;
    let params = apply_intervention(&base_params, spec)?;
    let beta_hat = optimal_threshold(ctx.k, spec.baseline_c)?.beta_hat;
    let hat = ctx.beta_index(beta_hat);
    let baseline = PerGroup::new(
        ctx.table(Group::A, spec.baseline_c)[hat],
        ctx.table(Group::D, spec.baseline_c)[hat],
    );
    let ta = ctx.table(Group::A, params.c.a).to_vec();
    let td = ctx.table(Group::D, params.c.d).to_vec();
    let shares = shares(ctx.dists);
    let u = |i: usize, j: usize| {
        utility_weighted(PerGroup::new(ta[i], td[j]), baseline, shares, weights)
    };
    let n = ta.len();
    let (i, j) = if per_group_beta {
        let flat = argmax_last((0..n * n).map(|ij| u(ij / n, ij % n)));
        (flat / n, flat % n)
    } else {
        let i = argmax_last((0..n).map(|i| u(i, i)));
        (i, i)
    };
    Ok(PolicyOutcome {
        kind: spec.kind,
        r: spec.r,
        params,
        beta: PerGroup::new(ctx.betas[i], ctx.betas[j]),
        means: PerGroup::new(ta[i], td[j]),
        baseline,
        baseline_beta: beta_hat,
        shares,
        weights: *weights,
        utility: u(i, j),
    })
}

/// Seed-averaged horizon means under `β̂(k, ĉ)` with the pre-intervention
/// penalty for both groups.
pub fn baseline_outcome(
    dist_a: &ScoreDistribution,
    dist_d: &ScoreDistribution,
    params: &DynamicsParams,
    horizon: u64,
    n_seeds: u64,
    seed: u64,
) -> Result<PerGroup<f64>> {
    check_groups(dist_a, dist_d)?;
    if params.c.a != params.c.d {
        return Err(Error::invalid(
            "the baseline needs one penalty for both groups",
        ));
    }
    let cfg = SearchConfig::new(params.k, horizon, n_seeds, seed)?;
    let beta_hat = optimal_threshold(params.k, params.c.a)?.beta_hat;
    let mut ctx = MeanTables::new(
        PerGroup::new(dist_a, dist_d),
        &cfg,
        &Stream::new(seed),
        vec![beta_hat],
    );
    Ok(PerGroup::new(
        ctx.table(Group::A, params.c.a)[0],
        ctx.table(Group::D, params.c.d)[0],
    ))
}

/// Applies the intervention and searches the threshold on a 0.01 grid
/// (plus `β̂`) for the best seed-averaged utility at the horizon.
pub fn evaluate_policy(
    dist_a: &ScoreDistribution,
    dist_d: &ScoreDistribution,
    spec: &InterventionSpec,
    weights: &UtilityWeights,
    cfg: &SearchConfig,
) -> Result<PolicyOutcome> {
    check_groups(dist_a, dist_d)?;
    cfg.validate()?;
    let spec = InterventionSpec::new(spec.kind, spec.r, spec.baseline_c)?;
    let beta_hat = optimal_threshold(cfg.k, spec.baseline_c)?.beta_hat;
    let mut ctx = MeanTables::new(
        PerGroup::new(dist_a, dist_d),
        cfg,
        &Stream::new(cfg.seed),
        candidate_betas(beta_hat),
    );
    best_outcome(&mut ctx, &spec, weights, cfg.per_group_beta)
}

/// Inclusive axis `min, min+step, ..., max`, rounded to 1e-9.
pub fn axis(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite() && step.is_finite()) {
        return Err(Error::invalid("axis bounds and step must be finite"));
    }
    if step <= 0.0 {
        return Err(Error::invalid(format!("axis step must be > 0, got {step}")));
    }
    if min > max {
        return Err(Error::invalid(format!(
            "axis minimum {min} exceeds maximum {max}"
        )));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| round9(min + i as f64 * step)).collect())
}

pub fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyUtilities {
    pub beta_only: f64,
    pub group_blind: f64,
    pub group_conscious: f64,
}

impl PolicyUtilities {
    pub fn get(&self, kind: PolicyKind) -> f64 {
        match kind {
            PolicyKind::BetaOnly => self.beta_only,
            PolicyKind::GroupBlind => self.group_blind,
            PolicyKind::GroupConscious => self.group_conscious,
        }
    }

    /// Best policy (least intrusive on ties) and its lead over the runner-up.
    pub fn best(&self) -> (PolicyKind, f64) {
        let mut best = PolicyKind::BetaOnly;
        for kind in PolicyKind::ALL {
            if self.get(kind) > self.get(best) + TIE_TOLERANCE {
                best = kind;
            }
        }
        let runner_up = PolicyKind::ALL
            .iter()
            .filter(|&&k| k != best)
            .map(|&k| self.get(k))
            .fold(f64::NEG_INFINITY, f64::max);
        (best, (self.get(best) - runner_up).max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub c: f64,
    pub r: f64,
    pub best: PolicyKind,
    pub utilities: PolicyUtilities,
    /// Lead of the best policy over the runner-up, divided by the largest lead on the grid.
    pub marginal: f64,
    pub marginal_raw: f64,
    pub beta: PerGroup<PerGroup<f64>>,
    pub baseline: PerGroup<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationGrid {
    pub alpha: f64,
    pub efficiency_mode: EfficiencyMode,
    pub k: f64,
    pub horizon: u64,
    pub n_seeds: u64,
    pub seed: u64,
    pub per_group_beta: bool,
    pub c_grid: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub cells: Vec<GridCell>,
}

impl RecommendationGrid {
    pub fn cell(&self, c: f64, r: f64) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|cell| (cell.c - c).abs() < 1e-9 && (cell.r - r).abs() < 1e-9)
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "alpha",
            "c",
            "r",
            "best",
            "beta_only",
            "group_blind",
            "group_conscious",
            "marginal",
            "marginal_raw",
        ])?;
        for cell in &self.cells {
            w.write_record([
                self.alpha.to_string(),
                cell.c.to_string(),
                cell.r.to_string(),
                cell.best.to_string(),
                cell.utilities.beta_only.to_string(),
                cell.utilities.group_blind.to_string(),
                cell.utilities.group_conscious.to_string(),
                cell.marginal.to_string(),
                cell.marginal_raw.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Utilities, chosen thresholds (per policy, per group) and baseline for one cell.
type CellEval = (PolicyUtilities, PerGroup<PerGroup<f64>>, PerGroup<f64>);

/// One recommendation grid per utility weighting. Simulations are shared
/// across weightings; cell `i` draws from its own substream of `cfg.seed`.
pub fn recommend_grids(
    dist_a: &ScoreDistribution,
    dist_d: &ScoreDistribution,
    c_grid: &[f64],
    r_grid: &[f64],
    weights: &[UtilityWeights],
    cfg: &SearchConfig,
) -> Result<Vec<RecommendationGrid>> {
    check_groups(dist_a, dist_d)?;
    cfg.validate()?;
    if c_grid.is_empty() || r_grid.is_empty() || weights.is_empty() {
        return Err(Error::invalid(
            "c grid, r grid and alpha list must be non-empty",
        ));
    }
    let specs: Vec<(f64, f64)> = c_grid
        .iter()
        .flat_map(|&c| r_grid.iter().map(move |&r| (c, r)))
        .collect();
    for &(c, r) in &specs {
        InterventionSpec::new(PolicyKind::BetaOnly, r, c)?;
    }
    let root = Stream::new(cfg.seed).derive("recommend");
    let dists = PerGroup::new(dist_a, dist_d);
    // per cell, per weighting: (utilities, chosen betas, baseline)
    let evaluated: Vec<Vec<CellEval>> = specs
        .par_iter()
        .enumerate()
        .map(|(idx, &(c, r))| {
            let beta_hat = optimal_threshold(cfg.k, c)?.beta_hat;
            let mut ctx = MeanTables::new(
                dists,
                cfg,
                &root.derive_index(idx as u64),
                candidate_betas(beta_hat),
            );
            weights
                .iter()
                .map(|w| {
                    let mut out = [0.0; 3];
                    let mut betas = PerGroup::splat(PerGroup::splat(0.0));
                    let mut baseline = PerGroup::splat(0.0);
                    for (slot, kind) in PolicyKind::ALL.into_iter().enumerate() {
                        let spec = InterventionSpec::new(kind, r, c)?;
                        let o = best_outcome(&mut ctx, &spec, w, cfg.per_group_beta)?;
                        out[slot] = o.utility;
                        baseline = o.baseline;
                        match kind {
                            PolicyKind::BetaOnly => betas.a.a = o.beta.a,
                            PolicyKind::GroupBlind => betas.a.d = o.beta.a,
                            PolicyKind::GroupConscious => betas.d.d = o.beta.d,
                        }
                        if kind == PolicyKind::GroupConscious {
                            betas.d.a = o.beta.a;
                        }
                    }
                    Ok((
                        PolicyUtilities {
                            beta_only: out[0],
                            group_blind: out[1],
                            group_conscious: out[2],
                        },
                        betas,
                        baseline,
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(weights
        .iter()
        .enumerate()
        .map(|(wi, w)| {
            let leads: Vec<(PolicyKind, f64)> =
                evaluated.iter().map(|per_w| per_w[wi].0.best()).collect();
            let max_lead = leads.iter().map(|l| l.1).fold(0.0, f64::max);
            let cells = specs
                .iter()
                .zip(&evaluated)
                .zip(&leads)
                .map(|((&(c, r), per_w), &(best, lead))| GridCell {
                    c,
                    r,
                    best,
                    utilities: per_w[wi].0,
                    marginal: if max_lead > 0.0 { lead / max_lead } else { 0.0 },
                    marginal_raw: lead,
                    beta: per_w[wi].1,
                    baseline: per_w[wi].2,
                })
                .collect();
            RecommendationGrid {
                alpha: w.alpha,
                efficiency_mode: w.efficiency_mode,
                k: cfg.k,
                horizon: cfg.horizon,
                n_seeds: cfg.n_seeds,
                seed: cfg.seed,
                per_group_beta: cfg.per_group_beta,
                c_grid: c_grid.to_vec(),
                r_grid: r_grid.to_vec(),
                cells,
            }
        })
        .collect())
}

pub fn recommend_grid(
    dist_a: &ScoreDistribution,
    dist_d: &ScoreDistribution,
    c_grid: &[f64],
    r_grid: &[f64],
    weights: &UtilityWeights,
    cfg: &SearchConfig,
) -> Result<RecommendationGrid> {
    Ok(recommend_grids(
        dist_a,
        dist_d,
        c_grid,
        r_grid,
        std::slice::from_ref(weights),
        cfg,
    )?
    .remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxMeanPoint {
    pub c: f64,
    pub beta_hat: f64,
    pub mean: PerGroup<f64>,
    pub se: PerGroup<f64>,
    /// Per-replicate horizon means; replicate `i` uses the same stream at every `c`.
    pub replicates: PerGroup<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxMeanCurve {
    pub k: f64,
    pub horizon: u64,
    pub points: Vec<MaxMeanPoint>,
}

impl MaxMeanCurve {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["c", "beta_hat", "max_mean_a", "max_mean_d", "se_a", "se_d"])?;
        for p in &self.points {
            w.write_record([
                p.c.to_string(),
                p.beta_hat.to_string(),
                p.mean.a.to_string(),
                p.mean.d.to_string(),
                p.se.a.to_string(),
                p.se.d.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Horizon means per group under the optimal threshold `β̂(k, c)`, for each `c`.
pub fn max_mean_curve(
    dist_a: &ScoreDistribution,
    dist_d: &ScoreDistribution,
    k: f64,
    c_values: &[f64],
    horizon: u64,
    n_seeds: u64,
    seed: u64,
) -> Result<MaxMeanCurve> {
    check_groups(dist_a, dist_d)?;
    if c_values.is_empty() {
        return Err(Error::invalid("need at least one c value"));
    }
    let cfg = SearchConfig::new(k, horizon, n_seeds, seed)?;
    let streams = replicate_streams(&Stream::new(seed).derive("max-mean"), cfg.n_seeds);
    let points = c_values
        .par_iter()
        .map(|&c| {
            let beta_hat = optimal_threshold(k, c)?.beta_hat;
            let run = |d: &ScoreDistribution| -> Vec<f64> {
                streams
                    .iter()
                    .map(|s| {
                        let v = evolve_scores(d.scores(), d.group(), beta_hat, k, c, s, horizon);
                        v.iter().sum::<f64>() / v.len() as f64
                    })
                    .collect()
            };
            let replicates = PerGroup::new(run(dist_a), run(dist_d));
            let stats = replicates.map(|_, xs| mean_and_se(xs));
            Ok(MaxMeanPoint {
                c,
                beta_hat,
                mean: stats.map(|_, s| s.0),
                se: stats.map(|_, s| s.1),
                replicates,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MaxMeanCurve { k, horizon, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{sample_beta, BetaSpec};

    fn beta_pair(n: usize, seed: u64) -> (ScoreDistribution, ScoreDistribution) {
        (
            sample_beta(&BetaSpec::new(4.0, 8.0, n, seed).unwrap(), Group::A).unwrap(),
            sample_beta(&BetaSpec::new(3.0, 8.0, n, seed).unwrap(), Group::D).unwrap(),
        )
    }

    #[test]
    fn utility_examples() {
        for alpha in [0.0, 0.3, 1.0] {
            for mode in [
                EfficiencyMode::SignedImprovement,
                EfficiencyMode::LiteralAbsolute,
            ] {
                let w = UtilityWeights::new(alpha, mode).unwrap();
                assert_eq!(utility(0.6, 0.6, 0.6, 0.6, &w), 0.0);
            }
        }
        let w = UtilityWeights::signed(1.0).unwrap();
        assert!((utility(0.9, 0.8, 0.5, 0.5, &w) + 0.1).abs() < 1e-15);
        let w = UtilityWeights::signed(0.0).unwrap();
        assert!((utility(0.55, 0.43, 0.5, 0.4, &w) - 0.08).abs() < 1e-15);
        assert!((utility(0.45, 0.37, 0.5, 0.4, &w) + 0.08).abs() < 1e-15);
        let lit = UtilityWeights::new(0.0, EfficiencyMode::LiteralAbsolute).unwrap();
        assert!((utility(0.45, 0.37, 0.5, 0.4, &lit) - 0.08).abs() < 1e-15);
        assert!(UtilityWeights::signed(1.5).is_err());
    }

    #[test]
    fn weighted_utility_reduces_to_equal_shares() {
        let w = UtilityWeights::signed(0.4).unwrap();
        let (m, b) = (PerGroup::new(0.7, 0.5), PerGroup::new(0.6, 0.45));
        let plain = utility(0.7, 0.5, 0.6, 0.45, &w);
        assert!((utility_weighted(m, b, PerGroup::new(3.0, 3.0), &w) - plain).abs() < 1e-15);
        // all weight on A: efficiency is twice A's change
        let only_a = utility_weighted(m, b, PerGroup::new(1.0, 0.0), &w);
        assert!((only_a - (-0.4 * 0.2 + 0.6 * 0.2)).abs() < 1e-15);
    }

    #[test]
    fn intervention_examples() {
        let p = DynamicsParams::new(0.1, 2.0).unwrap();
        let gb = apply_intervention(
            &p,
            &InterventionSpec::new(PolicyKind::GroupBlind, 0.5, 2.0).unwrap(),
        )
        .unwrap();
        assert_eq!(gb.c, PerGroup::new(1.5, 1.5));
        let gc = apply_intervention(
            &p,
            &InterventionSpec::new(PolicyKind::GroupConscious, 0.5, 2.0).unwrap(),
        )
        .unwrap();
        assert_eq!(gc.c, PerGroup::new(2.0, 1.0));
        for r in [0.0, 0.3, 1.0] {
            let bo = apply_intervention(
                &p,
                &InterventionSpec::new(PolicyKind::BetaOnly, r, 2.0).unwrap(),
            )
            .unwrap();
            assert_eq!(bo.c, PerGroup::new(2.0, 2.0));
        }
        assert!(InterventionSpec::new(PolicyKind::GroupBlind, 1.1, 2.0).is_err());
        assert!(InterventionSpec::new(PolicyKind::GroupBlind, 0.5, -1.0).is_err());
        assert_eq!(
            "group-conscious".parse::<PolicyKind>().unwrap(),
            PolicyKind::GroupConscious
        );
    }

    #[test]
    fn axis_is_inclusive_and_rounded() {
        assert_eq!(axis(0.1, 0.9, 0.2).unwrap(), vec![0.1, 0.3, 0.5, 0.7, 0.9]);
        assert_eq!(
            axis(0.5, 3.0, 0.5).unwrap(),
            vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
        );
        assert_eq!(axis(1.0, 1.0, 0.5).unwrap(), vec![1.0]);
        assert!(axis(0.0, 1.0, 0.0).is_err());
        assert!(axis(0.0, 1.0, -0.1).is_err());
        assert!(axis(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn baseline_fixed_point_at_one() {
        let a = ScoreDistribution::new(Group::A, vec![1.0; 20]).unwrap();
        let d = ScoreDistribution::new(Group::D, vec![1.0; 20]).unwrap();
        let base =
            baseline_outcome(&a, &d, &DynamicsParams::new(0.1, 2.0).unwrap(), 20, 3, 1).unwrap();
        assert_eq!(base, PerGroup::new(1.0, 1.0));
    }

    #[test]
    fn penalty_free_baseline_is_nondecreasing_in_time() {
        let (a, d) = beta_pair(300, 5);
        let p = DynamicsParams::new(0.1, 0.0).unwrap();
        let mut prev = PerGroup::new(a.mean(), d.mean());
        for t in 1..=15 {
            let b = baseline_outcome(&a, &d, &p, t, 4, 9).unwrap();
            assert!(b.a >= prev.a && b.d >= prev.d, "t={t}");
            prev = b;
        }
    }

    #[test]
    fn zero_effect_intervention_never_loses_to_the_baseline() {
        let (a, d) = beta_pair(200, 1);
        let cfg = SearchConfig::new(0.1, 20, 3, 4).unwrap();
        for alpha in [0.0, 0.5, 1.0] {
            let w = UtilityWeights::signed(alpha).unwrap();
            for kind in PolicyKind::ALL {
                let o = evaluate_policy(
                    &a,
                    &d,
                    &InterventionSpec::new(kind, 0.0, 2.0).unwrap(),
                    &w,
                    &cfg,
                )
                .unwrap();
                let base_u = utility(o.baseline.a, o.baseline.d, o.baseline.a, o.baseline.d, &w);
                assert!(o.utility >= base_u - 1e-12, "{kind} alpha={alpha}");
                assert!((o.recompute_utility() - o.utility).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn parity_weight_narrows_the_gap() {
        let (a, d) = beta_pair(300, 2);
        let cfg = SearchConfig::new(0.1, 20, 4, 8).unwrap();
        let o = evaluate_policy(
            &a,
            &d,
            &InterventionSpec::new(PolicyKind::BetaOnly, 0.5, 2.0).unwrap(),
            &UtilityWeights::signed(1.0).unwrap(),
            &cfg,
        )
        .unwrap();
        assert!((o.means.a - o.means.d).abs() <= (o.baseline.a - o.baseline.d).abs());
    }

    #[test]
    fn removing_the_penalty_for_d_helps_d() {
        let (a, d) = beta_pair(300, 3);
        let cfg = SearchConfig::new(0.1, 20, 4, 2).unwrap();
        let spec = InterventionSpec::new(PolicyKind::GroupConscious, 1.0, 2.0).unwrap();
        for alpha in [0.0, 0.2, 0.5] {
            let o = evaluate_policy(&a, &d, &spec, &UtilityWeights::signed(alpha).unwrap(), &cfg)
                .unwrap();
            assert_eq!(o.params.c.d, 0.0);
            assert!(o.means.d >= o.baseline.d, "alpha={alpha}: {o:?}");
        }
    }

    #[test]
    fn per_group_search_is_at_least_as_good() {
        let (a, d) = beta_pair(150, 4);
        let mut cfg = SearchConfig::new(0.1, 10, 2, 3).unwrap();
        let spec = InterventionSpec::new(PolicyKind::GroupBlind, 0.5, 2.0).unwrap();
        let w = UtilityWeights::signed(0.5).unwrap();
        let universal = evaluate_policy(&a, &d, &spec, &w, &cfg).unwrap();
        cfg.per_group_beta = true;
        let split = evaluate_policy(&a, &d, &spec, &w, &cfg).unwrap();
        assert!(split.utility >= universal.utility - 1e-12);
        assert_eq!(universal.beta.a, universal.beta.d);
    }

    #[test]
    fn grid_cells_are_consistent_and_reproducible() {
        let (a, d) = beta_pair(100, 6);
        let cfg = SearchConfig::new(0.1, 10, 2, 11).unwrap();
        let weights = [
            UtilityWeights::signed(0.2).unwrap(),
            UtilityWeights::signed(0.8).unwrap(),
        ];
        let grids = recommend_grids(&a, &d, &[1.0, 2.0], &[0.1, 0.9], &weights, &cfg).unwrap();
        for g in &grids {
            assert_eq!(g.cells.len(), 4);
            for cell in &g.cells {
                let best = cell.utilities.get(cell.best);
                assert!(PolicyKind::ALL
                    .iter()
                    .all(|&k| cell.utilities.get(k) <= best + TIE_TOLERANCE));
                assert!((0.0..=1.0).contains(&cell.marginal));
                assert!(cell.marginal_raw >= 0.0);
            }
            let max = g.cells.iter().map(|c| c.marginal).fold(0.0, f64::max);
            assert!(max == 1.0 || g.cells.iter().all(|c| c.marginal == 0.0));
        }
        let single = recommend_grid(&a, &d, &[1.0, 2.0], &[0.1, 0.9], &weights[1], &cfg).unwrap();
        assert_eq!(single, grids[1]);
        let mut json = Vec::new();
        single.write_json(&mut json).unwrap();
        let back: RecommendationGrid = serde_json::from_slice(&json).unwrap();
        assert_eq!(back, single);
        let mut csv = Vec::new();
        single.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
        assert!(recommend_grid(&a, &d, &[], &[0.1], &weights[0], &cfg).is_err());
    }

    #[test]
    fn ties_prefer_the_least_intrusive_policy() {
        let u = PolicyUtilities {
            beta_only: 0.1,
            group_blind: 0.1,
            group_conscious: 0.1,
        };
        assert_eq!(u.best(), (PolicyKind::BetaOnly, 0.0));
        let u = PolicyUtilities {
            beta_only: 0.1,
            group_blind: 0.3,
            group_conscious: 0.25,
        };
        let (best, lead) = u.best();
        assert_eq!(best, PolicyKind::GroupBlind);
        assert!((lead - 0.05).abs() < 1e-12);
    }

    #[test]
    fn max_mean_curve_at_zero_penalty() {
        let a = sample_beta(&BetaSpec::new(8.0, 3.0, 300, 1).unwrap(), Group::A).unwrap();
        let d = sample_beta(&BetaSpec::new(7.0, 3.0, 300, 1).unwrap(), Group::D).unwrap();
        let curve = max_mean_curve(&a, &d, 0.1, &[0.0, 1.0], 200, 3, 5).unwrap();
        let p0 = &curve.points[0];
        assert_eq!(p0.beta_hat, 0.0);
        assert!(p0.mean.a > 0.99 && p0.mean.d > 0.99, "{p0:?}");
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("c,beta_hat,max_mean_a,max_mean_d,se_a,se_d\n"));
    }
}
