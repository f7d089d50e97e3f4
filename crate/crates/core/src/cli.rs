//! Command-line front end. Exit codes: 0 ok, 1 parse/IO or other error,
//! 2 no convergence, 3 verification failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{
    integration_study, parse_grid, run_sweep, write_integration_curves, write_lambda_star, write_sweep, IntegrationSpec,
    SweepParam, SweepSpec,
};
use crate::config::load_config;
use crate::consumer::consumer_best_response;
use crate::dynamics::{
    build_jump_chain, default_start, discounted_payoff, expected_switch_time, long_run_stats, regime_occupation, simulate_path,
    SimConfig, StationaryConfig,
};
use crate::equilibrium::{default_seed, solve_equilibrium, Branch, Mode, TatonnementOptions};
use crate::error::{Error, Result};
use crate::io::{
    read_thresholds, write_chain, write_checks, write_density, write_events, write_history, write_json, write_path,
    write_stats, write_text, write_thresholds, write_value_samples, SolveSummary, ValueDump,
};
use crate::model::{Model, Regime};
use crate::producer::producer_best_response;
use crate::report::{self, run_report};
use crate::strategy::StrategyPair;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_UNVERIFIED: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "commodity-game", version, about = "Threshold equilibria of a producer-consumer commodity game")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve for an equilibrium and verify it.
    Solve(SolveArgs),
    /// One best response against fixed opponent thresholds.
    BestResponse(BestResponseArgs),
    /// Simulate one controlled price path; optionally estimate discounted payoffs.
    Simulate(SimulateArgs),
    /// Long-run price statistics and density.
    Stationary(StationaryArgs),
    /// Embedded chain of interventions.
    Chain(ChainArgs),
    /// Re-solve over a parameter grid.
    Sweep(SweepArgs),
    /// Risk/return of vertical integration over a pass-through grid.
    Integrate(IntegrateArgs),
    /// Collate the artifacts in a directory into report.md.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML model configuration.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "generic")]
    pub branch: Branch,
    #[arg(long, default_value = "async")]
    pub mode: Mode,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    /// Also write the samples of the value functions as CSV.
    #[arg(long)]
    pub dump_value: bool,
    /// Also write the iteration history.
    #[arg(long)]
    pub dump_history: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Who {
    Consumer,
    Producer,
}

#[derive(Args, Debug)]
pub struct BestResponseArgs {
    pub who: Who,
    #[command(flatten)]
    pub common: Common,
    /// Opponent thresholds CSV; the monopoly and stand-alone rules if omitted.
    #[arg(long)]
    pub against: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct Source {
    /// Use these thresholds instead of solving.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub source: Source,
    /// Years.
    #[arg(long, default_value_t = 100.0)]
    pub horizon: f64,
    /// Euler step in years.
    #[arg(long, default_value_t = 1.0 / 3650.0)]
    pub dt: f64,
    /// Starting price; midpoint of a bounded band if omitted.
    #[arg(long)]
    pub x0: Option<f64>,
    #[arg(long, value_parser = parse_regime)]
    pub regime: Option<Regime>,
    /// Keep every n-th step in path.csv.
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    /// Paths for the discounted payoff estimate (0 skips it).
    #[arg(long, default_value_t = 0)]
    pub paths: usize,
    /// Brownian-bridge crossing detection (for coarse steps).
    #[arg(long)]
    pub bridge: bool,
}

#[derive(Args, Debug, Clone)]
pub struct StationaryKnobs {
    #[arg(long)]
    pub paths: Option<usize>,
    /// Years per path after burn-in.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Brownian-bridge crossing detection (for coarse steps).
    #[arg(long)]
    pub bridge: bool,
}

impl StationaryKnobs {
    fn config(&self, model: &Model, seed: u64) -> StationaryConfig {
        let d = StationaryConfig::for_model(model);
        StationaryConfig {
            paths: self.paths.unwrap_or(d.paths),
            horizon: self.horizon.unwrap_or(d.horizon),
            burn_in: self.burn_in.unwrap_or(d.burn_in),
            dt: self.dt.unwrap_or(d.dt),
            bins: self.bins.unwrap_or(d.bins),
            seed,
            bridge: self.bridge,
        }
    }
}

#[derive(Args, Debug)]
pub struct StationaryArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub knobs: StationaryKnobs,
}

#[derive(Args, Debug)]
pub struct ChainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub source: Source,
    /// Regime whose recurrent class carries the invariant law.
    #[arg(long, value_parser = parse_regime, default_value = "plus")]
    pub start: Regime,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub param: SweepParam,
    /// `a,b,c` or `start:stop:count`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    /// Add long-run statistics per point.
    #[arg(long)]
    pub stats: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub knobs: StationaryKnobs,
}

#[derive(Args, Debug)]
pub struct IntegrateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub p1: String,
    #[arg(long, default_value = "0:1:21")]
    pub lambdas: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub knobs: StationaryKnobs,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn parse_regime(s: &str) -> std::result::Result<Regime, String> {
    match s {
        "plus" | "+" => Ok(Regime::Plus),
        "minus" | "-" => Ok(Regime::Minus),
        _ => Err(format!("unknown regime '{s}' (plus or minus)")),
    }
}

/// Command failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NoSolution { .. } => EXIT_NOT_CONVERGED,
            _ => EXIT_ERROR,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = std::result::Result<i32, Failure>;

fn setup(c: &Common) -> Result<Model> {
    let model = Model::new(load_config(&c.config)?)?;
    std::fs::create_dir_all(&c.out).map_err(|e| Error::io(&c.out, e))?;
    Ok(model)
}

fn opts(c: &Common) -> TatonnementOptions {
    TatonnementOptions {
        mode: c.mode,
        ..Default::default()
    }
}

/// Thresholds from a file, or a converged solve on the chosen branch.
fn strategies(model: &Model, c: &Common, src: &Source) -> std::result::Result<StrategyPair, Failure> {
    if let Some(p) = &src.thresholds {
        return Ok(read_thresholds(p)?);
    }
    let eq = solve_equilibrium(model, c.branch, opts(c))?;
    if !eq.converged {
        return Err(Failure {
            code: EXIT_NOT_CONVERGED,
            message: format!("no convergence on branch {} after {} iterations", c.branch, eq.iterations),
        });
    }
    Ok(eq.strategies)
}

fn out(c: &Common, name: &str) -> PathBuf {
    c.out.join(name)
}

fn solve(a: &SolveArgs) -> Outcome {
    let c = &a.common;
    let model = setup(c)?;
    let eq = solve_equilibrium(&model, c.branch, opts(c))?;
    write_thresholds(&out(c, report::THRESHOLDS), &eq.strategies)?;
    write_checks(&out(c, report::CHECKS), &eq.diagnostics)?;
    let dump = ValueDump::new(eq.producer_values(), eq.consumer_values(), model.domain(), 201);
    write_json(&out(c, report::VALUES), &dump)?;
    if a.dump_value {
        write_value_samples(&out(c, report::VALUE_SAMPLES), &dump)?;
    }
    if a.dump_history {
        write_history(&out(c, report::HISTORY), &eq.history)?;
    }
    let summary = SolveSummary::of(&eq);
    write_json(&out(c, report::SUMMARY), &summary)?;
    println!("{} equilibrium on branch {}: {}", summary.type_tag, summary.branch, eq.strategies);
    if !eq.converged {
        eprintln!("no convergence after {} iterations", eq.iterations);
        return Ok(EXIT_NOT_CONVERGED);
    }
    if !summary.verified {
        eprintln!("verification failed: {}", summary.failed_checks.join(", "));
        return Ok(EXIT_UNVERIFIED);
    }
    Ok(EXIT_OK)
}

fn best_response(a: &BestResponseArgs) -> Outcome {
    let c = &a.common;
    let model = setup(c)?;
    let base = match &a.against {
        Some(p) => read_thresholds(p)?,
        None => default_seed(&model)?,
    };
    let (pair, candidates, crossing) = match a.who {
        Who::Consumer => {
            let sel = consumer_best_response(&model, &base.producer, c.branch.consumer_candidates(), None)?;
            let pair = StrategyPair {
                producer: base.producer,
                consumer: sel.chosen.strategy,
            };
            write_json(&out(c, report::RESPONSE_VALUES), &sel.chosen.values)?;
            println!("consumer best response ({}): {}", sel.chosen.kind.label(), sel.chosen.strategy);
            (pair, sel.candidates, sel.crossing)
        }
        Who::Producer => {
            let sel = producer_best_response(&model, &base.consumer, c.branch.producer_candidates(), Some(&base.producer), None)?;
            let pair = StrategyPair {
                producer: sel.chosen.strategy,
                consumer: base.consumer,
            };
            write_json(&out(c, report::RESPONSE_VALUES), &sel.chosen.values)?;
            println!("producer best response ({}): {}", sel.chosen.kind.label(), sel.chosen.strategy);
            (pair, sel.candidates, sel.crossing)
        }
    };
    for cand in &candidates {
        match &cand.outcome {
            Ok(s) => println!("  candidate {}: {s}", cand.kind),
            Err(e) => println!("  candidate {}: failed ({e})", cand.kind),
        }
    }
    if let Some(note) = crossing {
        println!("  {note}");
    }
    write_thresholds(&out(c, report::RESPONSE), &pair)?;
    Ok(EXIT_OK)
}

fn start(model: &Model, s: &StrategyPair, x0: Option<f64>, regime: Option<Regime>) -> Result<(f64, Regime)> {
    let (dx, dr) = default_start(model, s)?;
    Ok((x0.unwrap_or(dx), regime.unwrap_or(dr)))
}

fn simulate(a: &SimulateArgs) -> Outcome {
    let c = &a.common;
    let model = setup(c)?;
    let s = strategies(&model, c, &a.source)?;
    let (x0, r0) = start(&model, &s, a.x0, a.regime)?;
    let cfg = SimConfig {
        horizon: a.horizon,
        dt: a.dt,
        seed: a.source.seed,
        bridge: a.bridge,
    };
    let rec = simulate_path(&model, &s, x0, r0, cfg, a.stride);
    for w in &rec.warnings {
        eprintln!("warning: {w}");
    }
    write_path(&out(c, report::PATH), &rec)?;
    write_events(&out(c, report::EVENTS), &rec.events)?;
    println!("{} events over {} years", rec.events.len(), a.horizon);
    if a.paths > 0 {
        let est = discounted_payoff(&model, &s, x0, r0, a.paths, cfg);
        println!(
            "discounted payoff: producer {:.6} (se {:.6}), consumer {:.6} (se {:.6})",
            est.producer, est.producer_se, est.consumer, est.consumer_se
        );
        write_json(&out(c, "payoff.json"), &est)?;
    }
    Ok(EXIT_OK)
}

fn stationary(a: &StationaryArgs) -> Outcome {
    let c = &a.common;
    let model = setup(c)?;
    let s = strategies(&model, c, &a.source)?;
    let (x0, r0) = default_start(&model, &s)?;
    let stats = long_run_stats(&model, &s, x0, r0, a.knobs.config(&model, a.source.seed))?;
    write_stats(&out(c, report::STATS), &[(c.branch.label().to_string(), stats.clone())])?;
    write_density(&out(c, report::DENSITY), &stats.density)?;
    println!(
        "E[X] = {:.4}, Var[X] = {:.4}, E[pi_p] = {:.4}, E[pi_c] = {:.4}, switches/yr = {:.4} over {:.3e} years",
        stats.mean, stats.var, stats.mean_pi_p, stats.mean_pi_c, stats.switches_per_year, stats.years
    );
    Ok(EXIT_OK)
}

fn chain(a: &ChainArgs) -> Outcome {
    let c = &a.common;
    let model = setup(c)?;
    let s = strategies(&model, c, &a.source)?;
    let ch = build_jump_chain(&model, &s, a.start)?;
    write_chain(&out(c, report::CHAIN), &ch)?;
    let (rp, rm) = regime_occupation(&ch);
    println!("rho_plus = {rp:.6}, rho_minus = {rm:.6}, invariance residual {:.2e}", ch.invariance_residual());
    if let Ok((x0, Regime::Plus)) = default_start(&model, &s) {
        if let Ok(t) = expected_switch_time(&model, &s, x0) {
            println!("expected time to the first contraction switch from {x0:.4}: {:.4} yr", t.first_step);
        }
    }
    Ok(EXIT_OK)
}

fn sweep(a: &SweepArgs) -> Outcome {
    let c = &a.common;
    let model = setup(c)?;
    let mut spec = SweepSpec::new(a.param, parse_grid(&a.grid)?, c.branch)?;
    spec.tatonnement = opts(c);
    if a.stats {
        spec.stats = Some(a.knobs.config(&model, a.seed));
    }
    let rows = run_sweep(&model.params, &spec);
    write_sweep(&out(c, report::SWEEP), a.param, &rows)?;
    let ok = rows.iter().filter(|r| matches!(&r.outcome, Ok(p) if p.converged)).count();
    println!("{ok} of {} points converged", rows.len());
    Ok(EXIT_OK)
}

fn integrate(a: &IntegrateArgs) -> Outcome {
    let c = &a.common;
    let model = setup(c)?;
    let spec = IntegrationSpec {
        p1_grid: parse_grid(&a.p1)?,
        lambdas: parse_grid(&a.lambdas)?,
        branch: c.branch,
        tatonnement: opts(c),
        stats: Some(a.knobs.config(&model, a.seed)),
    };
    let points = integration_study(&model.params, &spec)?;
    write_integration_curves(&out(c, report::CURVES), &points)?;
    write_lambda_star(&out(c, report::LAMBDA_STAR), &points)?;
    for p in &points {
        match &p.outcome {
            Ok(curve) => println!("p1 = {}: lambda* = {:.4}", p.p1, curve.lambda_star),
            Err(e) => println!("p1 = {}: failed ({e})", p.p1),
        }
    }
    Ok(EXIT_OK)
}

fn report_cmd(a: &ReportArgs) -> Outcome {
    let text = run_report(&a.out)?;
    let path = a.out.join(report::REPORT);
    write_text(&path, &text)?;
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let res = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::BestResponse(a) => best_response(a),
        Command::Simulate(a) => simulate(a),
        Command::Stationary(a) => stationary(a),
        Command::Chain(a) => chain(a),
        Command::Sweep(a) => sweep(a),
        Command::Integrate(a) => integrate(a),
        Command::Report(a) => report_cmd(a),
    };
    match res {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Parses `args` (program name first) and runs; clap errors map to 1.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_ERROR,
            }
        }
    }
}
