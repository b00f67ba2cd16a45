use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lendsim::distribution::{
    check_dominance, read_scores_csv, sample_beta, write_scores_csv, BetaSpec,
};
use lendsim::dynamics::simulate;
use lendsim::intervention::{
    axis, max_mean_curve, recommend_grids, EfficiencyMode, SearchConfig, UtilityWeights,
};
use lendsim::markov::{analyze, parse_rational, RationalStep};
use lendsim::risk::{
    fit_logistic, load_records, predict_all, to_score_distributions, write_group_scores_csv,
    FitOptions, RiskModel, Schema,
};
use lendsim::threshold::{grid_search_range, optimal_threshold};
use lendsim::{DynamicsParams, Group, ScoreDistribution, ThresholdPolicy};
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::error::CliError;

/// Collects every invalid field before anything runs.
#[derive(Default)]
struct Check(Vec<String>);

impl Check {
    fn require(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(msg());
        }
    }

    fn finite(&mut self, name: &str, v: f64) -> bool {
        self.require(v.is_finite(), || {
            format!("--{name}: must be finite, got {v}")
        });
        v.is_finite()
    }

    fn unit(&mut self, name: &str, v: f64) {
        if self.finite(name, v) {
            self.require((0.0..=1.0).contains(&v), || {
                format!("--{name}: must lie in [0, 1], got {v}")
            });
        }
    }

    fn non_negative(&mut self, name: &str, v: f64) {
        if self.finite(name, v) {
            self.require(v >= 0.0, || format!("--{name}: must be >= 0, got {v}"));
        }
    }

    fn positive(&mut self, name: &str, v: f64) {
        if self.finite(name, v) {
            self.require(v > 0.0, || format!("--{name}: must be > 0, got {v}"));
        }
    }

    fn at_least_one(&mut self, name: &str, v: u64) {
        self.require(v >= 1, || format!("--{name}: must be at least 1, got {v}"));
    }

    fn axis(&mut self, name: &str, min: f64, max: f64, step: f64, unit: bool) {
        for (suffix, v) in [("min", min), ("max", max)] {
            let field = format!("{name}-{suffix}");
            if unit {
                self.unit(&field, v);
            } else {
                self.non_negative(&field, v);
            }
        }
        self.positive(&format!("{name}-step"), step);
        self.require(min <= max, || {
            format!("--{name}-min: must not exceed --{name}-max ({min} > {max})")
        });
    }

    fn dist(&mut self, name: &str, s: &str) -> Option<Dist> {
        match Dist::parse(s) {
            Ok(d) => Some(d),
            Err(e) => {
                self.0.push(format!("--{name}: {e}"));
                None
            }
        }
    }

    fn efficiency_mode(&mut self, s: &str) -> Option<EfficiencyMode> {
        match s.parse() {
            Ok(m) => Some(m),
            Err(e) => {
                self.0.push(format!("--efficiency-mode: {e}"));
                None
            }
        }
    }

    fn finish(self) -> Result<(), CliError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(self.0))
        }
    }
}

/// A population source: `beta:a,b` or `file:path[#column]`.
#[derive(Debug, Clone, PartialEq)]
enum Dist {
    Beta(f64, f64),
    File(PathBuf, Option<String>),
}

impl Dist {
    fn parse(s: &str) -> Result<Dist, String> {
        if let Some(rest) = s.strip_prefix("beta:") {
            let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
            let [a, b] = parts[..] else {
                return Err(format!("expected `beta:a,b`, got `{s}`"));
            };
            let num = |x: &str| {
                x.parse::<f64>()
                    .map_err(|_| format!("`{x}` is not a number in `{s}`"))
            };
            let (a, b) = (num(a)?, num(b)?);
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                return Err(format!("Beta parameters must be positive, got `{s}`"));
            }
            Ok(Dist::Beta(a, b))
        } else if let Some(rest) = s.strip_prefix("file:") {
            let (path, col) = split_column(rest);
            Ok(Dist::File(path, col))
        } else {
            Err(format!(
                "expected `beta:a,b` or `file:path[#column]`, got `{s}`"
            ))
        }
    }

    fn load(&self, group: Group, n: usize, seed: u64) -> Result<ScoreDistribution, CliError> {
        match self {
            Dist::Beta(a, b) => Ok(sample_beta(&BetaSpec::new(*a, *b, n, seed)?, group)?),
            Dist::File(path, col) => read_scores(path, col.as_deref(), group),
        }
    }
}

fn split_column(s: &str) -> (PathBuf, Option<String>) {
    match s.rsplit_once('#') {
        Some((p, c)) if !c.is_empty() => (PathBuf::from(p), Some(c.to_string())),
        _ => (PathBuf::from(s), None),
    }
}

fn read_scores(
    path: &Path,
    column: Option<&str>,
    group: Group,
) -> Result<ScoreDistribution, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(read_scores_csv(BufReader::new(f), group, column)?)
}

/// Artifacts built in memory and written only once everything succeeded.
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new() -> Self {
        Outputs { files: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(lendsim::Error::from)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    fn add_with(
        &mut self,
        name: &str,
        write: impl FnOnce(&mut Vec<u8>) -> lendsim::Result<()>,
    ) -> Result<(), CliError> {
        let mut bytes = Vec::new();
        write(&mut bytes)?;
        self.add(name, bytes);
        Ok(())
    }

    /// Writes the artifacts, the resolved configuration and the manifest.
    fn write(self, dir: &Path, run: &RunInfo, config: &toml::Table) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut names: Vec<String> = Vec::new();
        for (name, bytes) in &self.files {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
            names.push(name.clone());
        }
        let echo = toml::to_string(config).map_err(|e| CliError::Config {
            path: dir.join("config.toml"),
            message: e.to_string(),
        })?;
        let p = dir.join("config.toml");
        std::fs::write(&p, echo).map_err(|e| CliError::io(&p, e))?;
        names.push("config.toml".into());

        let manifest = json!({
            "tool": "lendsim",
            "version": env!("CARGO_PKG_VERSION"),
            "command": run.command,
            "config": config,
            "artifacts": names,
            "threads": run.threads,
            "wall_time_seconds": run.started.elapsed().as_secs_f64(),
        });
        let p = dir.join("manifest.json");
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(lendsim::Error::from)?;
        bytes.push(b'\n');
        std::fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        Ok(())
    }
}

pub struct RunInfo {
    pub command: &'static str,
    pub threads: usize,
    pub started: Instant,
}

/// The resolved arguments as a flat table with a `command` key.
fn config_table<T: Serialize>(command: &str, args: &T) -> Result<toml::Table, CliError> {
    let mut t = toml::Table::try_from(args).map_err(|e| CliError::Config {
        path: PathBuf::from("<arguments>"),
        message: e.to_string(),
    })?;
    t.insert("command".into(), toml::Value::String(command.into()));
    Ok(t)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    use std::io::Write;
    let s = serde_json::to_string_pretty(value).map_err(lendsim::Error::from)?;
    match writeln!(std::io::stdout().lock(), "{s}") {
        // a closed pipe (`| head`) is not a failure
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn execute(command: &Command, run: &RunInfo) -> Result<(), CliError> {
    match command {
        Command::Simulate(a) => simulate_cmd(a, run),
        Command::OptimizeThreshold(a) => optimize_cmd(a, run),
        Command::Recommend(a) => recommend_cmd(a, run),
        Command::AnalyzeMarkov(a) => markov_cmd(a, run),
        Command::DominanceCheck(a) => dominance_cmd(a, run),
        Command::Sample(a) => sample_cmd(a),
        Command::TrainRisk(a) => train_cmd(a),
        Command::PredictRisk(a) => predict_cmd(a),
        Command::ReproduceFigure(a) => figure_cmd(a, run),
    }
}

fn simulate_cmd(args: &SimulateArgs, run: &RunInfo) -> Result<(), CliError> {
    let mut chk = Check::default();
    let da = chk.dist("dist-a", &args.population.dist_a);
    let db = chk.dist("dist-b", &args.population.dist_b);
    chk.at_least_one("n", args.population.n as u64);
    chk.unit("k", args.k);
    chk.non_negative("c", args.c);
    for (name, v) in [("c-a", args.c_a), ("c-d", args.c_d)] {
        if let Some(v) = v {
            chk.non_negative(name, v);
        }
    }
    for (name, v) in [
        ("beta", args.beta),
        ("beta-a", args.beta_a),
        ("beta-d", args.beta_d),
    ] {
        if let Some(v) = v {
            chk.unit(name, v);
        }
    }
    chk.at_least_one("horizon", args.horizon);
    chk.require(args.out_dir.is_some(), || "--out-dir: required".into());
    chk.finish()?;

    let mut resolved = args.clone();
    let c_a = *resolved.c_a.get_or_insert(args.c);
    let c_d = *resolved.c_d.get_or_insert(args.c);
    let beta = match args.beta {
        Some(b) => b,
        None => optimal_threshold(args.k, args.c)?.beta_hat,
    };
    resolved.beta = Some(beta);
    let beta_a = *resolved.beta_a.get_or_insert(beta);
    let beta_d = *resolved.beta_d.get_or_insert(beta);

    let dist_a = da.unwrap().load(Group::A, args.population.n, args.seed)?;
    let dist_d = db.unwrap().load(Group::D, args.population.n, args.seed)?;
    let params = DynamicsParams::per_group(args.k, c_a, c_d)?;
    let policy = ThresholdPolicy::per_group(beta_a, beta_d)?;
    let traj = simulate(
        &dist_a,
        &dist_d,
        &policy,
        &params,
        args.horizon as usize,
        args.seed,
    )?;

    let mut out = Outputs::new();
    out.add_with("summary.csv", |w| traj.write_summary_csv(w))?;
    if args.agents {
        out.add_with("agents.csv", |w| traj.write_agents_csv(w))?;
    }
    let last = traj.last();
    let result = json!({
        "beta": { "A": beta_a, "D": beta_d },
        "c": { "A": c_a, "D": c_d },
        "k": args.k,
        "horizon": args.horizon,
        "initial_mean": { "A": dist_a.mean(), "D": dist_d.mean() },
        "final_mean": { "A": last.a.mean(), "D": last.d.mean() },
        "final_fraction_transient": {
            "A": last.a.fraction_transient(beta_a),
            "D": last.d.fraction_transient(beta_d),
        },
    });
    out.add_json("result.json", &result)?;
    out.write(
        args.out_dir.as_ref().unwrap(),
        run,
        &config_table(run.command, &resolved)?,
    )
}

fn optimize_cmd(args: &OptimizeArgs, run: &RunInfo) -> Result<(), CliError> {
    let mut chk = Check::default();
    chk.unit("k", args.k);
    chk.non_negative("c", args.c);
    let dist = args.dist.as_deref().and_then(|s| chk.dist("dist", s));
    if let Some(r) = args.resolution {
        if chk.finite("resolution", r) {
            chk.require(r > 0.0 && r <= 0.01, || {
                format!("--resolution: must lie in (0, 0.01], got {r}")
            });
        }
    }
    chk.require(args.dist.is_none() || args.resolution.is_some(), || {
        "--dist: only used together with --resolution".into()
    });
    chk.finish()?;

    let t = optimal_threshold(args.k, args.c)?;
    let mut report = json!({
        "k": args.k,
        "c": args.c,
        "beta_hat": t.beta_hat,
        "crossing_point": t.crossing_point,
    });
    if let Some(res) = args.resolution {
        let population = match dist {
            Some(d) => d.load(Group::A, args.n, args.seed)?,
            // one agent per grid point
            None => {
                let grid = lendsim::threshold::threshold_grid(res)?;
                ScoreDistribution::new(Group::A, grid)?
            }
        };
        let g = grid_search_range(&population, args.k, args.c, res)?;
        report["grid_search"] = json!({
            "resolution": res,
            "best": g.best,
            "lowest_tied": g.lowest_tied,
            "objective": g.objective,
            "within_resolution": (g.best - t.beta_hat).abs() <= res + 1e-12,
        });
    }
    print_json(&report)?;
    if let Some(dir) = &args.out_dir {
        let mut out = Outputs::new();
        out.add_json("threshold.json", &report)?;
        out.write(dir, run, &config_table(run.command, args)?)?;
    }
    Ok(())
}

struct GridJob {
    weights: Vec<UtilityWeights>,
    alphas: Vec<f64>,
    c_grid: Vec<f64>,
    r_grid: Vec<f64>,
    cfg: SearchConfig,
}

fn check_grid(
    chk: &mut Check,
    alphas: &[f64],
    mode: &str,
    axes: &GridAxes,
    k: f64,
    horizon: u64,
    seeds: u64,
) -> Option<EfficiencyMode> {
    for &a in alphas {
        chk.unit("alpha", a);
    }
    chk.require(!alphas.is_empty(), || {
        "--alpha: need at least one value".into()
    });
    let mode = chk.efficiency_mode(mode);
    chk.axis(
        "c",
        axes.c_min.unwrap(),
        axes.c_max.unwrap(),
        axes.c_step.unwrap(),
        false,
    );
    chk.axis("r", axes.r_min, axes.r_max, axes.r_step, true);
    chk.unit("k", k);
    chk.at_least_one("horizon", horizon);
    chk.at_least_one("seeds", seeds);
    mode
}

#[allow(clippy::too_many_arguments)]
fn grid_job(
    alphas: &[f64],
    mode: EfficiencyMode,
    axes: &GridAxes,
    k: f64,
    horizon: u64,
    seeds: u64,
    seed: u64,
    per_group_beta: bool,
) -> Result<GridJob, CliError> {
    let weights = alphas
        .iter()
        .map(|&a| UtilityWeights::new(a, mode))
        .collect::<lendsim::Result<Vec<_>>>()?;
    let mut cfg = SearchConfig::new(k, horizon, seeds, seed)?;
    cfg.per_group_beta = per_group_beta;
    Ok(GridJob {
        weights,
        alphas: alphas.to_vec(),
        c_grid: axis(
            axes.c_min.unwrap(),
            axes.c_max.unwrap(),
            axes.c_step.unwrap(),
        )?,
        r_grid: axis(axes.r_min, axes.r_max, axes.r_step)?,
        cfg,
    })
}

fn run_grids(
    job: &GridJob,
    a: &ScoreDistribution,
    d: &ScoreDistribution,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let grids = recommend_grids(a, d, &job.c_grid, &job.r_grid, &job.weights, &job.cfg)?;
    for (alpha, grid) in job.alphas.iter().zip(&grids) {
        out.add_with(&format!("grid_alpha_{alpha}.json"), |w| grid.write_json(w))?;
        out.add_with(&format!("grid_alpha_{alpha}.csv"), |w| grid.write_csv(w))?;
    }
    Ok(())
}

fn recommend_cmd(args: &RecommendArgs, run: &RunInfo) -> Result<(), CliError> {
    let mut resolved = args.clone();
    resolved.axes.c_min.get_or_insert(0.5);
    resolved.axes.c_max.get_or_insert(3.0);
    resolved.axes.c_step.get_or_insert(0.5);
    let r = &resolved;

    let mut chk = Check::default();
    let mode = check_grid(
        &mut chk,
        &r.alpha,
        &r.efficiency_mode,
        &r.axes,
        r.k,
        r.horizon,
        r.seeds,
    );
    let da = chk.dist("dist-a", &r.population.dist_a);
    let db = chk.dist("dist-b", &r.population.dist_b);
    chk.at_least_one("n", r.population.n as u64);
    chk.require(r.out_dir.is_some(), || "--out-dir: required".into());
    chk.finish()?;

    let job = grid_job(
        &r.alpha,
        mode.unwrap(),
        &r.axes,
        r.k,
        r.horizon,
        r.seeds,
        r.seed,
        r.per_group_beta,
    )?;
    let a = da.unwrap().load(Group::A, r.population.n, r.seed)?;
    let d = db.unwrap().load(Group::D, r.population.n, r.seed)?;
    let mut out = Outputs::new();
    run_grids(&job, &a, &d, &mut out)?;
    out.write(
        r.out_dir.as_ref().unwrap(),
        run,
        &config_table(run.command, r)?,
    )
}

fn figure_cmd(args: &FigureArgs, run: &RunInfo) -> Result<(), CliError> {
    let mut r = args.clone();
    let (c_defaults, dists) = match args.which {
        Figure::Grid => ((0.5, 3.0, 0.5), ("beta:4,8", "beta:3,8")),
        Figure::MaxMean => ((0.0, 5.0, 0.5), ("beta:8,3", "beta:7,3")),
    };
    r.axes.c_min.get_or_insert(c_defaults.0);
    r.axes.c_max.get_or_insert(c_defaults.1);
    r.axes.c_step.get_or_insert(c_defaults.2);
    r.dist_a.get_or_insert_with(|| dists.0.into());
    r.dist_b.get_or_insert_with(|| dists.1.into());

    let mut chk = Check::default();
    let mode = check_grid(
        &mut chk,
        &r.alpha,
        &r.efficiency_mode,
        &r.axes,
        r.k,
        r.horizon,
        r.seeds,
    );
    let da = chk.dist("dist-a", r.dist_a.as_ref().unwrap());
    let db = chk.dist("dist-b", r.dist_b.as_ref().unwrap());
    chk.at_least_one("n", r.n as u64);
    chk.require(r.out_dir.is_some(), || "--out-dir: required".into());
    chk.finish()?;

    let a = da.unwrap().load(Group::A, r.n, r.seed)?;
    let d = db.unwrap().load(Group::D, r.n, r.seed)?;
    let mut out = Outputs::new();
    match r.which {
        Figure::Grid => {
            let job = grid_job(
                &r.alpha,
                mode.unwrap(),
                &r.axes,
                r.k,
                r.horizon,
                r.seeds,
                r.seed,
                r.per_group_beta,
            )?;
            run_grids(&job, &a, &d, &mut out)?;
        }
        Figure::MaxMean => {
            let c = axis(
                r.axes.c_min.unwrap(),
                r.axes.c_max.unwrap(),
                r.axes.c_step.unwrap(),
            )?;
            let curve = max_mean_curve(&a, &d, r.k, &c, r.horizon, r.seeds, r.seed)?;
            out.add_with("max_mean_curve.csv", |w| curve.write_csv(w))?;
            out.add_json("max_mean_curve.json", &curve)?;
        }
    }
    out.write(
        r.out_dir.as_ref().unwrap(),
        run,
        &config_table(run.command, &r)?,
    )
}

fn markov_cmd(args: &MarkovArgs, run: &RunInfo) -> Result<(), CliError> {
    let mut chk = Check::default();
    let mut parse = |name: &str, s: &str| match parse_rational(s) {
        Ok(x) => Some(x),
        Err(e) => {
            chk.0.push(format!("--{name}: {e}"));
            None
        }
    };
    let (pi0, k, c, beta) = (
        parse("pi0", &args.pi0),
        parse("k", &args.k),
        parse("c", &args.c),
        parse("beta", &args.beta),
    );
    chk.finish()?;
    let (pi0, k, c, beta) = (pi0.unwrap(), k.unwrap(), c.unwrap(), beta.unwrap());
    let step = RationalStep::from_k_c(k, c)?;
    let report = analyze(&pi0, &step, &beta, args.horizon)?;
    print_json(&report)?;
    if let Some(dir) = &args.out_dir {
        let mut out = Outputs::new();
        out.add_json("markov.json", &report)?;
        out.write(dir, run, &config_table(run.command, args)?)?;
    }
    Ok(())
}

fn dominance_cmd(args: &DominanceArgs, run: &RunInfo) -> Result<(), CliError> {
    let mut chk = Check::default();
    if chk.finite("step", args.step) {
        chk.require(args.step > 0.0 && args.step <= 0.01, || {
            format!("--step: must lie in (0, 0.01], got {}", args.step)
        });
    }
    chk.unit("lo", args.lo);
    chk.unit("hi", args.hi);
    chk.require(args.lo < args.hi, || {
        format!("--lo: must be below --hi ({} >= {})", args.lo, args.hi)
    });
    chk.finish()?;

    let (pa, ca) = split_column(&args.file_a);
    let (pb, cb) = split_column(&args.file_b);
    let a = read_scores(&pa, ca.as_deref(), Group::A)?;
    let d = read_scores(&pb, cb.as_deref(), Group::D)?;
    let report = check_dominance(&a, &d, args.step, (args.lo, args.hi))?;
    print_json(&report)?;
    if let Some(dir) = &args.out_dir {
        let mut out = Outputs::new();
        out.add_json("dominance.json", &report)?;
        out.write(dir, run, &config_table(run.command, args)?)?;
    }
    Ok(())
}

fn sample_cmd(args: &SampleArgs) -> Result<(), CliError> {
    let mut chk = Check::default();
    chk.positive("a", args.a);
    chk.positive("b", args.b);
    chk.at_least_one("n", args.n as u64);
    chk.finish()?;
    let dist = sample_beta(&BetaSpec::new(args.a, args.b, args.n, args.seed)?, Group::A)?;
    let mut bytes = Vec::new();
    write_scores_csv(&dist, &mut bytes)?;
    write_file(&args.out, &bytes)
}

fn train_cmd(args: &TrainArgs) -> Result<(), CliError> {
    let mut chk = Check::default();
    chk.non_negative("ridge", args.ridge);
    chk.positive("tol", args.tol);
    chk.at_least_one("max-iter", args.max_iter as u64);
    chk.finish()?;
    let loaded = load_records(&args.input, Schema::Training)?;
    report_rejects(&args.input, &loaded.rejects, loaded.filtered);
    let opts = FitOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        ridge: args.ridge,
    };
    let model = fit_logistic(&loaded.records, &opts)?;
    if let Some(d) = &model.diagnostics {
        if !d.converged {
            eprintln!(
                "warning: not converged after {} iterations (gradient {:.3e})",
                d.iterations, d.gradient_max_norm
            );
        }
    }
    let mut bytes = Vec::new();
    model.write_json(&mut bytes)?;
    write_file(&args.out_model, &bytes)
}

fn predict_cmd(args: &PredictArgs) -> Result<(), CliError> {
    let f = File::open(&args.model).map_err(|e| CliError::io(&args.model, e))?;
    let model = RiskModel::read_json(BufReader::new(f))?;
    let loaded = load_records(&args.input, Schema::Application)?;
    report_rejects(&args.input, &loaded.rejects, loaded.filtered);
    let risks = predict_all(&model, &loaded.records);
    let dists: BTreeMap<Group, ScoreDistribution> =
        to_score_distributions(&loaded.records, &risks)?;
    let mut bytes = Vec::new();
    write_group_scores_csv(&dists, &mut bytes)?;
    write_file(&args.out_scores, &bytes)
}

fn report_rejects(path: &Path, rejects: &[lendsim::risk::Reject], filtered: usize) {
    if filtered > 0 {
        eprintln!(
            "{}: {filtered} rows outside the purchase filter",
            path.display()
        );
    }
    for r in rejects {
        eprintln!("{}:{}: rejected: {}", path.display(), r.line, r.reason);
    }
}
