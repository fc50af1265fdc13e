//! Command-line front end: `run`, `check-derivatives` and `oracle`.
//!
//! Exit codes: 0 success, 2 invalid input, 3 runtime failure, 4 checks failed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use crate::audit::{derivative_audit, AuditSettings};
use crate::config::{ConfigError, Overrides, ScenarioConfig};
use crate::controller::{gain_audit, GainReport};
use crate::metrics::{attach_tracking, lemma_suite, LemmaReport, Thresholds};
use crate::oracle::{oracle_grid, time_grid, OptimumReport, OracleError};
use crate::report::{diagnostics_csv, emit, oracle_csv, trajectory_csv, trajectory_svg, RunManifest};
use crate::simulator::{simulate, Scenario, Scheme, SimError, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_CHECKS: i32 = 4;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const LEMMAS_FILE: &str = "lemmas.json";
pub const PLOT_FILE: &str = "trajectory.svg";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "tvswarm", version, about = "Distributed time-varying constrained optimization: simulate, solve, audit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write trajectory, diagnostics, checks and plot.
    Run(RunArgs),
    /// Compare analytic derivatives with central differences.
    CheckDerivatives(CheckArgs),
    /// Solve for the constrained and barrier optima at given times.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// Saturation width replacing the signum (0 keeps the exact signum).
    #[arg(long)]
    pub epsilon: Option<f64>,
}

impl ScenarioArgs {
    fn overrides(&self) -> Overrides {
        Overrides { dt: self.dt, t_end: self.t_end, seed: self.seed, scheme: self.scheme, epsilon: self.epsilon }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    /// Multiply every objective gradient by this factor before checking.
    #[arg(long = "inject-gradient-fault", num_args = 0..=1, default_missing_value = "1.01")]
    pub inject_gradient_fault: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated sample times; defaults to a grid over the horizon.
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    ChecksFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::ChecksFailed(_) => EXIT_CHECKS,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Runtime(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn io_error(e: std::io::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Simulation plus everything derived from it.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub trajectory: Trajectory,
    pub oracle: Vec<OptimumReport>,
    pub oracle_failures: Vec<(f64, OracleError)>,
    pub lemmas: LemmaReport,
    pub gain: Option<GainReport>,
}

/// Simulates, solves the oracle at every recorded sample and evaluates the
/// run-level checks.
pub fn run_experiment(scenario: &Scenario, thresholds: &Thresholds) -> Result<Experiment, SimError> {
    let mut trajectory = simulate(scenario)?;
    let times: Vec<f64> = trajectory.records.iter().map(|r| r.t).collect();
    let mut oracle = Vec::with_capacity(times.len());
    let mut oracle_failures = Vec::new();
    for (t, row) in times.iter().zip(oracle_grid(&scenario.problems, &scenario.schedule, &times)) {
        match row {
            Ok(r) => oracle.push(r),
            Err(e) => oracle_failures.push((*t, e)),
        }
    }
    attach_tracking(&mut trajectory, &oracle);
    let lemmas = lemma_suite(&trajectory, &oracle, thresholds);
    let gain = gain_audit(&trajectory, scenario.beta, scenario.graph.edge_count()).ok();
    Ok(Experiment { trajectory, oracle, oracle_failures, lemmas, gain })
}

fn load(path: &Path, overrides: &Overrides) -> Result<(ScenarioConfig, Scenario), CliError> {
    let mut config = ScenarioConfig::load(path)?;
    config.apply(overrides);
    let scenario = config.to_scenario()?;
    Ok((config, scenario))
}

/// Runs a scenario and writes its artifacts plus `manifest.json` into `out`.
/// Returns the manifest and whether every check passed.
pub fn cmd_run(args: &RunArgs) -> Result<(RunManifest, LemmaReport), CliError> {
    let start = Instant::now();
    let (config, scenario) = load(&args.scenario.config, &args.scenario.overrides())?;
    let samples: Vec<_> = scenario.init.x.iter().map(|x| (x.clone(), scenario.init.t)).collect();
    for w in scenario.problems.convexity_warnings(&samples) {
        eprintln!("warning: {w}");
    }
    let exp = run_experiment(&scenario, &config.thresholds).map_err(|e| CliError::Runtime(e.to_string()))?;
    if let Some((t, e)) = exp.oracle_failures.first() {
        return Err(CliError::Runtime(format!("oracle failed at t = {t}: {e}")));
    }
    std::fs::create_dir_all(&args.out).map_err(io_error)?;
    let lemmas_json = serde_json::to_string_pretty(&exp.lemmas).expect("report serializes") + "\n";
    let files = vec![
        emit(&args.out, TRAJECTORY_FILE, trajectory_csv(&exp.trajectory).as_bytes()).map_err(io_error)?,
        emit(&args.out, DIAGNOSTICS_FILE, diagnostics_csv(&exp.trajectory).as_bytes()).map_err(io_error)?,
        emit(&args.out, LEMMAS_FILE, lemmas_json.as_bytes()).map_err(io_error)?,
        emit(&args.out, PLOT_FILE, trajectory_svg(&exp.trajectory, &exp.oracle).as_bytes()).map_err(io_error)?,
    ];
    let manifest = RunManifest {
        scenario: args.scenario.config.display().to_string(),
        output_dir: args.out.display().to_string(),
        files,
        duration_seconds: start.elapsed().as_secs_f64(),
        config: serde_json::to_value(&config).expect("config serializes"),
        summary: Some(json!({
            "steps": exp.trajectory.steps,
            "halvings": exp.trajectory.halvings,
            "max_sgn_residual": exp.trajectory.max_sgn_residual,
            "max_margin": exp.trajectory.max_margin,
            "gain_audit": exp.gain,
            "all_checks_pass": exp.lemmas.all_pass(),
        })),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(args.out.join(MANIFEST_FILE), text).map_err(io_error)?;
    Ok((manifest, exp.lemmas))
}

pub fn cmd_check_derivatives(args: &CheckArgs) -> Result<crate::audit::DerivativeAudit, CliError> {
    let config = ScenarioConfig::load(&args.config)?;
    let problems = config.build_problems()?;
    let settings = AuditSettings {
        samples: args.samples,
        step: args.step,
        seed: args.seed.unwrap_or(config.seed),
        t_range: (0.0, config.integration.t_end),
        gradient_fault: args.inject_gradient_fault,
        ..AuditSettings::default()
    };
    derivative_audit(&problems, &config.barrier, &settings).map_err(|e| CliError::Runtime(e.to_string()))
}

/// Oracle table as CSV text plus the number of failed rows.
pub fn cmd_oracle(args: &OracleArgs) -> Result<(String, usize), CliError> {
    let config = ScenarioConfig::load(&args.config)?;
    let problems = config.build_problems()?;
    if !(args.step > 0.0) {
        return Err(CliError::Validation(format!("--step must be positive, got {}", args.step)));
    }
    let times = match &args.times {
        Some(t) => t.clone(),
        None => time_grid(args.t_end.unwrap_or(config.integration.t_end), args.step),
    };
    let rows = oracle_grid(&problems, &config.barrier, &times);
    let failures = rows.iter().filter(|r| r.is_err()).count();
    Ok((oracle_csv(&times, &rows, problems.dim()), failures))
}

/// Caps the rayon pool at `TVSWARM_THREADS` workers when set.
pub fn configure_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var("TVSWARM_THREADS") {
        let n: usize = v.parse().map_err(|_| format!("TVSWARM_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            return Err("TVSWARM_THREADS must be at least 1".into());
        }
        // a pool that was already built keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Executes a parsed command, printing results, and returns the exit code.
pub fn execute(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args).and_then(|(manifest, lemmas)| {
            print!("{}", lemmas.table());
            for f in &manifest.files {
                println!("{}  {}", f.sha256, manifest.output_dir.clone() + "/" + &f.path);
            }
            if lemmas.all_pass() {
                Ok(())
            } else {
                Err(CliError::ChecksFailed("one or more checks failed".into()))
            }
        }),
        Command::CheckDerivatives(args) => cmd_check_derivatives(args).and_then(|audit| {
            for f in &audit.fields {
                println!("agent {:>3}  {:<60} {:.3e}", f.agent, f.field, f.errors.max());
            }
            println!("max relative error {:.3e} over {} samples per agent", audit.max_error, audit.samples_per_agent);
            if audit.passes(args.tolerance) {
                Ok(())
            } else {
                Err(CliError::ChecksFailed(format!("derivative mismatch {:.3e} >= {:e}", audit.max_error, args.tolerance)))
            }
        }),
        Command::Oracle(args) => cmd_oracle(args).and_then(|(csv, failures)| {
            match &args.out {
                Some(path) => std::fs::write(path, &csv).map_err(io_error)?,
                None => print!("{csv}"),
            }
            if failures == 0 {
                Ok(())
            } else {
                Err(CliError::Runtime(format!("{failures} oracle rows failed")))
            }
        }),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
