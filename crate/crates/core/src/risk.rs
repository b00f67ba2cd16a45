//! Loan-level ingestion and a logistic model of late payment.
//!
//! The model uses the four features shared by the training and application
//! datasets (balance, LTV, DTI, number of units) on their raw scales. Scores
//! for the dynamics are the complement of the predicted late risk.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Group, ScoreDistribution};
use crate::error::{Error, Result};

pub const FEATURES: [&str; 4] = ["balance", "ltv", "dti", "units"];
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;

/// Linear predictors beyond this mean a fitted probability within about
/// 1e-13 of 0 or 1, which for an unpenalised fit signals separation.
const SEPARATION_ETA: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    Purchase,
    Refinance,
    Other,
}

impl FromStr for Purpose {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "purchase" | "p" => Purpose::Purchase,
            "refinance" | "r" | "c" | "cash-out refinance" => Purpose::Refinance,
            _ => Purpose::Other,
        })
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Purpose::Purchase => "purchase",
            Purpose::Refinance => "refinance",
            Purpose::Other => "other",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    /// `balance,ltv,dti,units,purpose,late`
    Training,
    /// `balance,ltv,dti,units,purpose,group`
    Application,
}

impl Schema {
    fn columns(self) -> [&'static str; 6] {
        match self {
            Schema::Training => ["balance", "ltv", "dti", "units", "purpose", "late"],
            Schema::Application => ["balance", "ltv", "dti", "units", "purpose", "group"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoanRecord {
    pub balance: f64,
    pub ltv: f64,
    pub dti: f64,
    pub units: u32,
    pub late: Option<bool>,
    pub group: Option<String>,
    pub purpose: Purpose,
}

impl LoanRecord {
    fn features(&self) -> [f64; 4] {
        [self.balance, self.ltv, self.dti, f64::from(self.units)]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    /// 1-based line number in the file, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadReport {
    pub records: Vec<LoanRecord>,
    pub rejects: Vec<Reject>,
    /// Valid rows dropped because the purpose was not purchase.
    pub filtered: usize,
}

pub fn load_records(path: &Path, schema: Schema) -> Result<LoadReport> {
    read_records(File::open(path)?, path, schema)
}

/// Like [`load_records`], reading from any source; `path` labels errors.
pub fn read_records<R: Read>(input: R, path: &Path, schema: Schema) -> Result<LoadReport> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let mut idx = [0usize; 6];
    for (slot, name) in schema.columns().iter().enumerate() {
        idx[slot] =
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| Error::MissingColumn {
                    path: path.to_path_buf(),
                    column: name.to_string(),
                })?;
    }

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut filtered = 0;
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |slot: usize| row.get(idx[slot]).unwrap_or("");
        let parse_err = |slot: usize| Error::Parse {
            path: path.to_path_buf(),
            line,
            column: schema.columns()[slot].to_string(),
            value: field(slot).to_string(),
        };
        let num = |slot: usize| -> Result<f64> {
            field(slot)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(slot))
        };
        let balance = num(0)?;
        let ltv = num(1)?;
        let dti = num(2)?;
        let units: i64 = field(3).parse().map_err(|_| parse_err(3))?;
        let purpose: Purpose = field(4).parse()?;
        let (late, group) = match schema {
            Schema::Training => {
                let late = match field(5).to_ascii_lowercase().as_str() {
                    "1" | "true" => true,
                    "0" | "false" => false,
                    _ => return Err(parse_err(5)),
                };
                (Some(late), None)
            }
            Schema::Application => (None, Some(field(5).to_string())),
        };

        let reason = if balance < 0.0 {
            Some(format!("balance {balance} is negative"))
        } else if ltv < 0.0 {
            Some(format!("ltv {ltv} is negative"))
        } else if units < 1 || units > i64::from(u32::MAX) {
            Some(format!("units {units} must be a positive integer"))
        } else if group.as_deref() == Some("") {
            Some("group is empty".to_string())
        } else {
            None
        };
        if let Some(reason) = reason {
            rejects.push(Reject { line, reason });
            continue;
        }
        if purpose != Purpose::Purchase {
            filtered += 1;
            continue;
        }
        records.push(LoanRecord {
            balance,
            ltv,
            dti,
            units: units as u32,
            late,
            group,
            purpose,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyAfterFilter {
            path: path.to_path_buf(),
            rejected: rejects.len() + filtered,
        });
    }
    Ok(LoadReport {
        records,
        rejects,
        filtered,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Convergence threshold on the max-norm of the mean log-likelihood gradient.
    pub tol: f64,
    pub max_iter: usize,
    /// L2 penalty on the feature coefficients (not the intercept); 0 disables it.
    pub ridge: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            ridge: 0.0,
        }
    }
}

/// One value per model term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Terms<T> {
    pub intercept: T,
    pub balance: T,
    pub ltv: T,
    pub dti: T,
    pub units: T,
}

impl<T: Copy> Terms<T> {
    pub fn from_array(v: [T; 5]) -> Self {
        Terms {
            intercept: v[0],
            balance: v[1],
            ltv: v[2],
            dti: v[3],
            units: v[4],
        }
    }

    pub fn to_array(&self) -> [T; 5] {
        [self.intercept, self.balance, self.ltv, self.dti, self.units]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Mean log-likelihood (penalised when `ridge > 0`) at the final iterate.
    pub log_likelihood: f64,
    /// Mean log-likelihood at every accepted iterate, starting point included.
    pub log_likelihood_history: Vec<f64>,
    /// Max-norm of the mean log-likelihood gradient at the final iterate.
    pub gradient_max_norm: f64,
    pub tol: f64,
    pub ridge: f64,
    /// `None` for terms dropped as constant.
    pub std_errors: Terms<Option<f64>>,
    /// Features with no variation; their coefficients are fixed at 0.
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModel {
    pub intercept: f64,
    pub coef_balance: f64,
    pub coef_ltv: f64,
    pub coef_dti: f64,
    pub coef_units: f64,
    /// Absent for models built from given coefficients.
    pub diagnostics: Option<FitDiagnostics>,
}

impl RiskModel {
    /// A model with the given coefficients and empty diagnostics.
    pub fn from_coefficients(c: Terms<f64>) -> Self {
        RiskModel {
            intercept: c.intercept,
            coef_balance: c.balance,
            coef_ltv: c.ltv,
            coef_dti: c.dti,
            coef_units: c.units,
            diagnostics: None,
        }
    }

    pub fn coefficients(&self) -> Terms<f64> {
        Terms::from_array([
            self.intercept,
            self.coef_balance,
            self.coef_ltv,
            self.coef_dti,
            self.coef_units,
        ])
    }

    pub fn linear_predictor(&self, r: &LoanRecord) -> f64 {
        let [b, l, d, u] = r.features();
        self.intercept
            + self.coef_balance * b
            + self.coef_ltv * l
            + self.coef_dti * d
            + self.coef_units * u
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        Ok(serde_json::from_reader(input)?)
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Compensated sum; the gradient tolerance is near the rounding floor of a
/// naive sum on raw-scale features.
fn neumaier(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

struct Design {
    /// Active columns only, intercept first.
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    /// Model term index (0 = intercept) of each active column.
    terms: Vec<usize>,
    ridge: f64,
}

impl Design {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn eta(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.x.iter().zip(beta).map(|(col, b)| col[i] * b).sum())
            .collect()
    }

    fn penalty(&self, beta: &[f64]) -> f64 {
        0.5 * self.ridge * beta.iter().skip(1).map(|b| b * b).sum::<f64>()
    }

    /// Mean (penalised) log-likelihood.
    fn objective(&self, beta: &[f64]) -> f64 {
        let eta = self.eta(beta);
        let ll = neumaier(eta.iter().zip(&self.y).map(|(&e, &y)| y * e - softplus(e)));
        (ll - self.penalty(beta)) / self.n() as f64
    }

    fn gradient(&self, beta: &[f64], eta: &[f64]) -> Vec<f64> {
        let resid: Vec<f64> = eta
            .iter()
            .zip(&self.y)
            .map(|(&e, &y)| y - sigmoid(e))
            .collect();
        self.x
            .iter()
            .enumerate()
            .map(|(j, col)| {
                let pen = if j == 0 { 0.0 } else { self.ridge * beta[j] };
                (neumaier(col.iter().zip(&resid).map(|(x, r)| x * r)) - pen) / self.n() as f64
            })
            .collect()
    }

    /// Information matrix (unscaled) at `eta`.
    fn information(&self, eta: &[f64]) -> DMatrix<f64> {
        let p = self.x.len();
        let w: Vec<f64> = eta
            .iter()
            .map(|&e| sigmoid(e) * (1.0 - sigmoid(e)))
            .collect();
        let mut h = DMatrix::zeros(p, p);
        for a in 0..p {
            for b in a..p {
                let v = neumaier((0..self.n()).map(|i| self.x[a][i] * self.x[b][i] * w[i]));
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
            if a > 0 {
                h[(a, a)] += self.ridge;
            }
        }
        h
    }
}

/// Solves `H s = g` after symmetric diagonal scaling.
fn scaled_solve(h: &DMatrix<f64>, g: &[f64]) -> Option<DVector<f64>> {
    let p = g.len();
    let d: Vec<f64> = (0..p)
        .map(|i| 1.0 / h[(i, i)].max(f64::MIN_POSITIVE).sqrt())
        .collect();
    let scaled = DMatrix::from_fn(p, p, |i, j| h[(i, j)] * d[i] * d[j]);
    let rhs = DVector::from_fn(p, |i, _| g[i] * d[i]);
    let z = match scaled.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => scaled.lu().solve(&rhs)?,
    };
    let s = DVector::from_fn(p, |i, _| z[i] * d[i]);
    s.iter().all(|v| v.is_finite()).then_some(s)
}

fn scaled_inverse(h: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let p = h.nrows();
    let d: Vec<f64> = (0..p)
        .map(|i| 1.0 / h[(i, i)].max(f64::MIN_POSITIVE).sqrt())
        .collect();
    let scaled = DMatrix::from_fn(p, p, |i, j| h[(i, j)] * d[i] * d[j]);
    let inv = scaled.cholesky()?.inverse();
    Some(DMatrix::from_fn(p, p, |i, j| inv[(i, j)] * d[i] * d[j]))
}

/// Maximum-likelihood logistic fit of `late` on the four features by Newton
/// iteration with step halving.
pub fn fit_logistic(records: &[LoanRecord], opts: &FitOptions) -> Result<RiskModel> {
    if records.len() < 2 {
        return Err(Error::invalid("need at least two training records"));
    }
    if !(opts.tol > 0.0 && opts.ridge >= 0.0 && opts.ridge.is_finite()) {
        return Err(Error::invalid("tolerance must be > 0 and ridge >= 0"));
    }
    let y = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.late
                .map(|l| if l { 1.0 } else { 0.0 })
                .ok_or_else(|| Error::invalid(format!("training record {i} has no late label")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let positives = y.iter().sum::<f64>();
    if positives == 0.0 || positives == y.len() as f64 {
        return Err(Error::SingleClass);
    }

    let mut x = vec![vec![1.0; records.len()]];
    let mut terms = vec![0];
    let mut dropped = Vec::new();
    for (j, name) in FEATURES.iter().enumerate() {
        let col: Vec<f64> = records.iter().map(|r| r.features()[j]).collect();
        if col.iter().all(|&v| v == col[0]) {
            dropped.push(name.to_string());
        } else {
            x.push(col);
            terms.push(j + 1);
        }
    }
    let design = Design {
        x,
        y,
        terms,
        ridge: opts.ridge,
    };

    let mean = positives / design.n() as f64;
    let mut beta = vec![0.0; design.terms.len()];
    beta[0] = (mean / (1.0 - mean)).ln();
    let mut obj = design.objective(&beta);
    let mut history = vec![obj];
    let mut iterations = 0;
    let mut converged = false;
    let mut eta = design.eta(&beta);
    let mut grad = design.gradient(&beta, &eta);
    loop {
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax < opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;
        let h = design.information(&eta);
        let g_total: Vec<f64> = grad.iter().map(|g| g * design.n() as f64).collect();
        let step = scaled_solve(&h, &g_total).ok_or(Error::SingularInformation)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + t * s)
                .collect();
            let trial_obj = design.objective(&trial);
            if trial_obj >= obj {
                accepted = trial != beta;
                beta = trial;
                obj = trial_obj;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No representable ascent along the Newton direction.
            break;
        }
        history.push(obj);
        eta = design.eta(&beta);
        grad = design.gradient(&beta, &eta);
    }

    if opts.ridge == 0.0 && eta.iter().any(|e| e.abs() > SEPARATION_ETA) {
        return Err(Error::Separation { iterations });
    }

    let h = design.information(&eta);
    let cov = scaled_inverse(&h).ok_or(Error::SingularInformation)?;
    let mut coef = [0.0; 5];
    let mut se = [None; 5];
    for (col, &term) in design.terms.iter().enumerate() {
        coef[term] = beta[col];
        se[term] = Some(cov[(col, col)].sqrt());
    }
    let gradient_max_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    Ok(RiskModel {
        intercept: coef[0],
        coef_balance: coef[1],
        coef_ltv: coef[2],
        coef_dti: coef[3],
        coef_units: coef[4],
        diagnostics: Some(FitDiagnostics {
            n: design.n(),
            iterations,
            converged,
            log_likelihood: obj,
            log_likelihood_history: history,
            gradient_max_norm,
            tol: opts.tol,
            ridge: opts.ridge,
            std_errors: Terms::from_array(se),
            dropped,
        }),
    })
}

/// Predicted probability of a late payment, kept strictly inside `(0, 1)`.
pub fn predict_late_risk(model: &RiskModel, record: &LoanRecord) -> f64 {
    sigmoid(model.linear_predictor(record)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub fn predict_all(model: &RiskModel, records: &[LoanRecord]) -> Vec<f64> {
    records
        .par_iter()
        .map(|r| predict_late_risk(model, r))
        .collect()
}

/// Groups `π = 1 - risk` by each record's group label.
pub fn to_score_distributions(
    records: &[LoanRecord],
    risks: &[f64],
) -> Result<BTreeMap<Group, ScoreDistribution>> {
    if records.len() != risks.len() {
        return Err(Error::invalid(format!(
            "{} records but {} predictions",
            records.len(),
            risks.len()
        )));
    }
    let mut scores: BTreeMap<Group, Vec<f64>> = BTreeMap::new();
    for (i, (r, &risk)) in records.iter().zip(risks).enumerate() {
        let label = r
            .group
            .as_deref()
            .ok_or_else(|| Error::invalid(format!("record {i} has no group")))?;
        let group: Group = label.parse()?;
        scores.entry(group).or_default().push(1.0 - risk);
    }
    scores
        .into_iter()
        .map(|(g, s)| Ok((g, ScoreDistribution::new(g, s)?)))
        .collect()
}

/// One column per group, rows padded with empty fields.
pub fn write_group_scores_csv<W: Write>(
    dists: &BTreeMap<Group, ScoreDistribution>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(dists.keys().map(|g| g.label()))?;
    let rows = dists.values().map(|d| d.len()).max().unwrap_or(0);
    for i in 0..rows {
        w.write_record(
            dists
                .values()
                .map(|d| d.scores().get(i).map_or(String::new(), |s| s.to_string())),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Purchase loans with features on realistic raw scales and `late` drawn
/// from a logistic model with coefficients `truth`.
pub fn synthetic_training(n: usize, truth: &Terms<f64>, seed: u64) -> Vec<LoanRecord> {
    let s = crate::rng::Stream::new(seed).derive("synthetic-loans");
    let model = RiskModel::from_coefficients(*truth);
    (0..n as u64)
        .map(|i| {
            let u = |j: u64| s.uniform(i, j);
            let units = match u(3) {
                x if x < 0.85 => 1,
                x if x < 0.93 => 2,
                x if x < 0.97 => 3,
                _ => 4,
            };
            let mut r = LoanRecord {
                balance: (50_000.0 + 450_000.0 * u(0)).round(),
                ltv: 40.0 + 60.0 * u(1),
                dti: 1.0 + 29.0 * u(2),
                units,
                late: None,
                group: None,
                purpose: Purpose::Purchase,
            };
            r.late = Some(u(4) < predict_late_risk(&model, &r));
            r
        })
        .collect()
}
