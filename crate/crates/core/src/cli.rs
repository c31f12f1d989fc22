//! Command-line front end. Every subcommand writes plot-ready CSV or JSON.
//!
//! Exit status: 0 on success, 1 when a numerical method fails to converge,
//! 2 for invalid arguments or unreadable input.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{Datelike, NaiveDate, Weekday};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::asymptotics::{crossing_time, finite_crossing_times, ordering_check, AsymptoticDecision, OrderingReport};
use crate::constants::{solve, Initialization, SolveReport, Solution, SolverOptions};
use crate::data::{estimate_market_params, load_prices_csv, load_rates_csv};
use crate::error::{Error, Result};
use crate::market::{objective, BoundaryCase, Investor, MarketParams, ProblemSpec, Trajectory};
use crate::oracle::{
    compare_analytic_oracle, mc_exact_utility, mc_expected_utility, simulate_gbm_prices, ComparisonReport, McConfig,
    McEstimate, OracleConfig,
};

/// Parse a comma-separated list of nonnegative imitation coefficients.
pub fn parse_theta_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for (k, part) in s.split(',').enumerate() {
        let part = part.trim();
        if part.is_empty() {
            return Err(format!("empty entry at position {}", k + 1));
        }
        let v: f64 = part.parse().map_err(|_| format!("not a number: {part:?}"))?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(format!("theta must be finite and >= 0, got {part}"));
        }
        out.push(v);
    }
    Ok(out)
}

/// Imitation coefficients given as one comma-separated argument.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaList(pub Vec<f64>);

fn parse_theta_arg(s: &str) -> std::result::Result<ThetaList, String> {
    parse_theta_list(s).map(ThetaList)
}

fn parse_case(s: &str) -> std::result::Result<BoundaryCase, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "case1" => Ok(BoundaryCase::Case1),
        "2" | "case2" => Ok(BoundaryCase::Case2),
        _ => Err(format!("expected 1 or 2, got {s:?}")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "imitation", version, about = "Optimal investment of a retail investor imitating an expert's trading rate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal decision for one or more imitation coefficients.
    Solve(SolveArgs),
    /// Limiting decision as the imitation coefficient grows without bound.
    Asymptotic(AsymptoticArgs),
    /// Compare the analytic decision with brute-force optimization and Monte Carlo.
    Oracle(OracleArgs),
    /// Monte Carlo utility of a control, or synthetic daily prices.
    Simulate(SimulateArgs),
    /// Estimate market parameters from price and rate CSV files.
    Estimate(EstimateArgs),
    /// Solve the full grid of cases, risk-aversion orders and coefficients.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Risk-free rate.
    #[arg(long, default_value_t = 0.04, allow_negative_numbers = true)]
    pub r: f64,
    /// Excess return of the risky asset.
    #[arg(long, default_value_t = 0.03, allow_negative_numbers = true)]
    pub v: f64,
    /// Volatility of the risky asset.
    #[arg(long, default_value_t = 0.17, allow_negative_numbers = true)]
    pub sigma: f64,
    /// Retail investor's risk aversion.
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    pub alpha1: f64,
    /// Expert's risk aversion.
    #[arg(long, default_value_t = 0.4, allow_negative_numbers = true)]
    pub alpha2: f64,
    /// Retail investor's initial wealth.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub x1: f64,
    /// Investment horizon in years.
    #[arg(long = "horizon", short = 'T', default_value_t = 50.0, allow_negative_numbers = true)]
    pub horizon: f64,
    /// Boundary case: 1 fixes the endpoint holdings, 2 matches the expert's endpoint rates.
    #[arg(long = "case", default_value = "1", value_parser = parse_case)]
    pub boundary_case: BoundaryCase,
    /// Number of output time points (also the solver grid).
    #[arg(long, default_value_t = 2001)]
    pub grid: usize,
}

impl ModelArgs {
    fn spec(&self, theta: f64) -> ProblemSpec {
        ProblemSpec {
            market: MarketParams { r: self.r, v: self.v, sigma: self.sigma },
            retail: Investor { alpha: self.alpha1, x0: self.x1 },
            expert_alpha: self.alpha2,
            horizon: self.horizon,
            theta,
            boundary_case: self.boundary_case,
            fixed_endpoints: None,
        }
    }

    fn validated_spec(&self, theta: f64) -> Result<ProblemSpec> {
        let spec = self.spec(theta);
        spec.validate()?;
        if self.grid < 3 {
            return Err(Error::Contract("--grid must be at least 3".into()));
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file; defaults to a file in the output directory, else stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Directory for default output files.
    #[arg(long, env = "IMITATION_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Convergence tolerance for the integral constants.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Start from the retail rational decision instead of unit constants.
    #[arg(long)]
    pub warm_start: bool,
}

impl SolverArgs {
    fn options(&self, grid: usize) -> SolverOptions {
        SolverOptions {
            tolerance: self.tol,
            max_iter: self.max_iter,
            grid_points: grid,
            init: if self.warm_start {
                Initialization::RationalWarmStart
            } else {
                SolverOptions::default().init
            },
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Imitation coefficients, comma separated.
    #[arg(long, default_value = "1", value_parser = parse_theta_arg)]
    pub theta: ThetaList,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Where to write the JSON report; defaults to the CSV path with a .json extension.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AsymptoticArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct McArgs {
    #[arg(long, default_value_t = 200_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = McConfig::default().seed)]
    pub seed: u64,
}

impl McArgs {
    fn config(&self) -> McConfig {
        McConfig { paths: self.paths, steps: self.steps, seed: self.seed }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "1", value_parser = parse_theta_arg)]
    pub theta: ThetaList,
    /// Grid size of the brute-force optimizer.
    #[arg(long, default_value_t = 401)]
    pub oracle_grid: usize,
    #[command(flatten)]
    pub mc: McArgs,
    /// Skip the Monte Carlo part.
    #[arg(long)]
    pub no_mc: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    Zero,
    Retail,
    Expert,
    Optimal,
    Asymptotic,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
    #[arg(long, value_enum, default_value_t = Control::Optimal)]
    pub control: Control,
    /// Sample the Gaussian terminal wealth directly instead of stepping the SDE.
    #[arg(long)]
    pub exact: bool,
    /// Emit synthetic daily closes spanning this many trading days instead of a utility estimate.
    #[arg(long)]
    pub gbm_days: Option<usize>,
    /// Arithmetic drift of the synthetic prices; defaults to r + v.
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    #[command(flatten)]
    pub mc: McArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// CSV with `date` and `close` columns.
    #[arg(long)]
    pub prices: PathBuf,
    /// CSV with `date` and `rate` columns (annualized decimals).
    #[arg(long)]
    pub rates: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "0.25,1,4,16", value_parser = parse_theta_arg)]
    pub theta: ThetaList,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numeric(_) | Error::Singular(_) | Error::Invariant(_) | Error::NonConvergence { .. } => {
                Failure::Numeric(e.to_string())
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Asymptotic(a) => cmd_asymptotic(&a),
        Command::Oracle(a) => cmd_oracle(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

/// Resolved output destination: a file, or stdout when `None`.
fn destination(output: &OutputArgs, default_name: &str) -> CliResult<Option<PathBuf>> {
    if let Some(p) = &output.out {
        return Ok(Some(p.clone()));
    }
    if let Some(dir) = &output.out_dir {
        fs::create_dir_all(dir)?;
        return Ok(Some(dir.join(default_name)));
    }
    Ok(None)
}

fn write_text(dest: Option<&Path>, text: &str) -> CliResult<()> {
    match dest {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(p, text)?;
        }
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn sidecar_path(explicit: &Option<PathBuf>, dest: Option<&Path>) -> Option<PathBuf> {
    explicit.clone().or_else(|| dest.map(|p| p.with_extension("json")))
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> CliResult<String> {
    let bytes = w.into_inner().map_err(|e| Failure::Usage(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Failure::Usage(e.to_string()))
}

fn csv_failure(e: csv::Error) -> Failure {
    Failure::Usage(e.to_string())
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub t: f64,
    pub p1_star: f64,
    pub p1_bar: f64,
    pub p2_bar: f64,
    pub p1_inf: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveRecord {
    pub theta: f64,
    pub boundary_case: BoundaryCase,
    pub alpha1: f64,
    pub alpha2: f64,
    pub status: &'static str,
    pub note: Option<String>,
    pub zeta: Option<f64>,
    pub eta: Option<f64>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    /// Crossing time of the limiting decision (rate-matched case).
    pub tau: Option<f64>,
    /// Crossing times of this decision with the retail rational decision.
    pub crossing_times: Vec<f64>,
    pub objective: Option<f64>,
    pub ordering: Option<OrderingReport>,
    /// Largest deviation from the retail rational decision.
    pub deviation_from_rational: Option<f64>,
    pub report: Option<SolveReport>,
}

struct Solved {
    record: SolveRecord,
    rows: Vec<CurveRow>,
}

fn solve_one(model: &ModelArgs, solver: &SolverArgs, theta: f64) -> CliResult<Solved> {
    let spec = model.validated_spec(theta)?;
    let asym = AsymptoticDecision::new(&spec)?;
    let tau = match spec.boundary_case {
        BoundaryCase::Case2 => Some(crossing_time(&spec)?),
        BoundaryCase::Case1 => None,
    };
    let mut record = SolveRecord {
        theta,
        boundary_case: spec.boundary_case,
        alpha1: spec.retail.alpha,
        alpha2: spec.expert_alpha,
        status: "converged",
        note: None,
        zeta: None,
        eta: None,
        gamma1: None,
        gamma2: None,
        tau,
        crossing_times: Vec::new(),
        objective: None,
        ordering: None,
        deviation_from_rational: None,
        report: None,
    };
    let solution = match solve(&spec, &solver.options(model.grid)) {
        Ok(s) => s,
        Err(Error::NonConvergence { reason, report }) => {
            record.status = "non_convergence";
            record.note = Some(reason);
            record.report = Some(*report);
            return Ok(Solved { record, rows: Vec::new() });
        }
        Err(e) => return Err(e.into()),
    };
    let p = solution.sample(model.grid)?;
    if let Solution::Analytic { report, solution: analytic } = &solution {
        let (g1, g2) = analytic.gammas()?;
        record.zeta = Some(report.zeta);
        record.eta = Some(report.eta);
        record.gamma1 = Some(g1);
        record.gamma2 = Some(g2);
        record.report = Some(report.clone());
    } else {
        record.note = Some("theta = 0: the optimal decision is the retail rational decision".into());
    }
    let crossings = finite_crossing_times(&spec, p.grid(), |t| solution.eval(t))?;
    let split = match spec.boundary_case {
        BoundaryCase::Case2 if theta > 0.0 => interior_crossing(&crossings, spec.horizon).or(tau),
        _ => tau,
    };
    record.crossing_times = crossings;
    record.ordering = Some(ordering_check(&p, &spec, split)?);
    record.objective = Some(objective(&p, &spec)?);
    let rows: Vec<CurveRow> = p
        .grid()
        .iter()
        .zip(p.values())
        .map(|(&t, &v)| CurveRow {
            t,
            p1_star: v,
            p1_bar: spec.retail_rational(t),
            p2_bar: spec.expert_rational(t),
            p1_inf: spec.expert_rational(t) + asym.slope * t + asym.offset,
        })
        .collect();
    record.deviation_from_rational = Some(rows.iter().fold(0.0f64, |m, r| m.max((r.p1_star - r.p1_bar).abs())));
    Ok(Solved { record, rows })
}

/// First crossing strictly inside the horizon; endpoint ties are not a regime change.
fn interior_crossing(crossings: &[f64], horizon: f64) -> Option<f64> {
    let eps = 1e-6 * horizon;
    crossings.iter().copied().find(|&t| t > eps && t < horizon - eps)
}

fn cmd_solve(a: &SolveArgs) -> CliResult<()> {
    let thetas = a.theta.0.clone();
    for &th in &thetas {
        a.model.validated_spec(th)?;
    }
    let mut solved = Vec::new();
    for &th in &thetas {
        solved.push(solve_one(&a.model, &a.solver, th)?);
    }
    let failed = solved.iter().any(|s| s.record.status != "converged");
    let records: Vec<&SolveRecord> = solved.iter().map(|s| &s.record).collect();
    let dest = destination(&a.output, &format!("solve_case{}.{}", case_digit(a.model.boundary_case), ext(a.output.format)))?;
    match a.output.format {
        Format::Csv => {
            let mut w = csv_writer();
            w.write_record(["theta", "t", "P1_star", "P1_bar", "P2_bar", "P1_inf"]).map_err(csv_failure)?;
            for s in &solved {
                for r in &s.rows {
                    w.write_record(&[
                        s.record.theta.to_string(),
                        r.t.to_string(),
                        r.p1_star.to_string(),
                        r.p1_bar.to_string(),
                        r.p2_bar.to_string(),
                        r.p1_inf.to_string(),
                    ])
                    .map_err(csv_failure)?;
                }
            }
            write_text(dest.as_deref(), &finish_csv(w)?)?;
            if let Some(side) = sidecar_path(&a.report, dest.as_deref()) {
                write_text(Some(&side), &to_json(&records)?)?;
            }
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Block<'a> {
                record: &'a SolveRecord,
                curves: &'a [CurveRow],
            }
            let blocks: Vec<Block> = solved.iter().map(|s| Block { record: &s.record, curves: &s.rows }).collect();
            write_text(dest.as_deref(), &to_json(&blocks)?)?;
        }
    }
    if failed {
        return Err(Failure::Numeric("integral constants did not converge for at least one theta".into()));
    }
    Ok(())
}

fn case_digit(c: BoundaryCase) -> u8 {
    match c {
        BoundaryCase::Case1 => 1,
        BoundaryCase::Case2 => 2,
    }
}

fn ext(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn cmd_asymptotic(a: &AsymptoticArgs) -> CliResult<()> {
    let spec = a.model.validated_spec(0.0)?;
    let asym = AsymptoticDecision::new(&spec)?;
    let p = asym.sample(&spec, a.model.grid)?;
    let tau = match spec.boundary_case {
        BoundaryCase::Case2 => Some(crossing_time(&spec)?),
        BoundaryCase::Case1 => None,
    };
    let ordering = ordering_check(&p, &spec, tau)?;
    let dest = destination(&a.output, &format!("asymptotic_case{}.{}", case_digit(spec.boundary_case), ext(a.output.format)))?;
    #[derive(Serialize)]
    struct Summary {
        decision: AsymptoticDecision,
        tau: Option<f64>,
        ordering: OrderingReport,
    }
    let summary = Summary { decision: asym, tau, ordering };
    match a.output.format {
        Format::Csv => {
            let mut w = csv_writer();
            w.write_record(["t", "P1_inf", "P1_bar", "P2_bar"]).map_err(csv_failure)?;
            for (&t, &v) in p.grid().iter().zip(p.values()) {
                w.write_record(&[
                    t.to_string(),
                    v.to_string(),
                    spec.retail_rational(t).to_string(),
                    spec.expert_rational(t).to_string(),
                ])
                .map_err(csv_failure)?;
            }
            write_text(dest.as_deref(), &finish_csv(w)?)?;
            if let Some(side) = sidecar_path(&None, dest.as_deref()) {
                write_text(Some(&side), &to_json(&summary)?)?;
            }
        }
        Format::Json => write_text(dest.as_deref(), &to_json(&summary)?)?,
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct McCheck {
    pub control: Control,
    /// Closed-form expected utility `-eta / alpha1`.
    pub target: f64,
    pub estimate: McEstimate,
    pub z_score: f64,
    pub within_3se: bool,
}

fn control_trajectory(control: Control, spec: &ProblemSpec, solution: &Solution, n: usize) -> Result<Trajectory> {
    match control {
        Control::Zero => Trajectory::from_fn(spec.horizon, n, |_| 0.0),
        Control::Retail => Trajectory::from_fn(spec.horizon, n, |t| spec.retail_rational(t)),
        Control::Expert => Trajectory::from_fn(spec.horizon, n, |t| spec.expert_rational(t)),
        Control::Optimal => solution.sample(n),
        Control::Asymptotic => AsymptoticDecision::new(spec)?.sample(spec, n),
    }
}

fn mc_check(control: Control, p: &Trajectory, spec: &ProblemSpec, cfg: &McConfig, exact: bool) -> Result<McCheck> {
    let eta = crate::market::deterministic_equivalent_eta(p, spec)?;
    let target = -eta / spec.retail.alpha;
    let estimate = if exact { mc_exact_utility(p, spec, cfg)? } else { mc_expected_utility(p, spec, cfg)? };
    let z = if estimate.std_error > 0.0 { (estimate.mean - target) / estimate.std_error } else { 0.0 };
    Ok(McCheck { control, target, within_3se: estimate.covers(target, 3.0), estimate, z_score: z })
}

fn cmd_oracle(a: &OracleArgs) -> CliResult<()> {
    let thetas = a.theta.0.clone();
    for &th in &thetas {
        a.model.validated_spec(th)?;
    }
    let cfg = OracleConfig { grid_points: a.oracle_grid, ..Default::default() };
    cfg.validate()?;
    let mc = a.mc.config();
    mc.validate()?;
    #[derive(Serialize)]
    struct Entry {
        theta: f64,
        note: Option<String>,
        comparison: ComparisonReport,
        monte_carlo: Vec<McCheck>,
    }
    let mut entries = Vec::new();
    for &th in &thetas {
        let spec = a.model.validated_spec(th)?;
        let opts = a.solver.options(a.model.grid);
        let comparison = compare_analytic_oracle(&spec, &cfg, &opts)?;
        let mut monte_carlo = Vec::new();
        if !a.no_mc {
            let solution = solve(&spec, &opts)?;
            for control in [Control::Zero, Control::Retail, Control::Expert, Control::Optimal, Control::Asymptotic] {
                let p = control_trajectory(control, &spec, &solution, a.model.grid)?;
                monte_carlo.push(mc_check(control, &p, &spec, &mc, false)?);
            }
        }
        let note = (th == 0.0).then(|| "theta = 0: the analytic decision is the retail rational decision".to_string());
        entries.push(Entry { theta: th, note, comparison, monte_carlo });
    }
    let dest = destination(&a.output, "oracle.json")?;
    write_text(dest.as_deref(), &to_json(&entries)?)?;
    Ok(())
}

/// Weekdays starting at `start`, one per trading day.
fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    out
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    let spec = a.model.validated_spec(a.theta)?;
    let mc = a.mc.config();
    if let Some(days) = a.gbm_days {
        let mu = a.mu.unwrap_or(spec.market.r + spec.market.v);
        let prices = simulate_gbm_prices(100.0, mu, spec.market.sigma, 1.0 / crate::data::TRADING_DAYS_PER_YEAR, days, mc.seed)?;
        let dates = trading_days(NaiveDate::from_ymd_opt(1974, 1, 2).expect("valid date"), prices.len());
        let mut w = csv_writer();
        w.write_record(["date", "close"]).map_err(csv_failure)?;
        for (d, p) in dates.iter().zip(&prices) {
            w.write_record(&[d.format("%Y-%m-%d").to_string(), p.to_string()]).map_err(csv_failure)?;
        }
        let dest = destination(&a.output, "prices.csv")?;
        return write_text(dest.as_deref(), &finish_csv(w)?);
    }
    mc.validate()?;
    let solution = solve(&spec, &a.solver.options(a.model.grid))?;
    let p = control_trajectory(a.control, &spec, &solution, a.model.grid)?;
    let check = mc_check(a.control, &p, &spec, &mc, a.exact)?;
    let dest = destination(&a.output, "simulate.json")?;
    write_text(dest.as_deref(), &to_json(&check)?)
}

fn cmd_estimate(a: &EstimateArgs) -> CliResult<()> {
    let prices = load_prices_csv(&a.prices)?;
    let rates = load_rates_csv(&a.rates)?;
    if prices.reordered {
        eprintln!("warning: {} rows were out of date order and have been sorted", a.prices.display());
    }
    if rates.reordered {
        eprintln!("warning: {} rows were out of date order and have been sorted", a.rates.display());
    }
    let est = estimate_market_params(&prices, &rates.rates)?;
    let dest = destination(&a.output, "estimate.json")?;
    write_text(dest.as_deref(), &to_json(&est)?)
}

fn cmd_sweep(a: &SweepArgs) -> CliResult<()> {
    let thetas = a.theta.0.clone();
    let mut all = Vec::new();
    for case in [BoundaryCase::Case1, BoundaryCase::Case2] {
        for (a1, a2) in [(a.model.alpha1, a.model.alpha2), (a.model.alpha2, a.model.alpha1)] {
            let model = ModelArgs { boundary_case: case, alpha1: a1, alpha2: a2, ..a.model.clone() };
            for &th in &thetas {
                model.validated_spec(th)?;
            }
            for &th in &thetas {
                all.push(solve_one(&model, &a.solver, th)?);
            }
            if a1 == a2 {
                break;
            }
        }
    }
    let failed = all.iter().any(|s| s.record.status != "converged");
    let dest = destination(&a.output, &format!("sweep.{}", ext(a.output.format)))?;
    let records: Vec<&SolveRecord> = all.iter().map(|s| &s.record).collect();
    match a.output.format {
        Format::Csv => {
            let mut w = csv_writer();
            w.write_record(["case", "alpha1", "alpha2", "theta", "t", "P1_star", "P1_bar", "P2_bar", "P1_inf"])
                .map_err(csv_failure)?;
            for s in &all {
                for r in &s.rows {
                    w.write_record(&[
                        case_digit(s.record.boundary_case).to_string(),
                        s.record.alpha1.to_string(),
                        s.record.alpha2.to_string(),
                        s.record.theta.to_string(),
                        r.t.to_string(),
                        r.p1_star.to_string(),
                        r.p1_bar.to_string(),
                        r.p2_bar.to_string(),
                        r.p1_inf.to_string(),
                    ])
                    .map_err(csv_failure)?;
                }
            }
            write_text(dest.as_deref(), &finish_csv(w)?)?;
            if let Some(side) = sidecar_path(&a.report, dest.as_deref()) {
                write_text(Some(&side), &to_json(&records)?)?;
            }
        }
        Format::Json => write_text(dest.as_deref(), &to_json(&records)?)?,
    }
    if failed {
        return Err(Failure::Numeric("integral constants did not converge for at least one configuration".into()));
    }
    Ok(())
}
