use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use platoon_core::config::{Problem, RunConfig};
use platoon_core::runtime::ControllerKind;
use platoon_core::sim::{compare_controllers, run_closed_loop, AnalyticRates, Plant, SimOptions};
use platoon_core::synthesis::{synthesize_steady, DelayedGains, GainsDocument};
use platoon_core::validate::{run_validation, ValidationOptions};
use platoon_core::{Error, ExecMode};

#[derive(Parser)]
#[command(name = "platoon", version, about = "Delayed-information LQG control of a vehicle platoon")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    /// Structured controller, monolithic realization.
    Dist,
    /// Structured controller, one process per vehicle with message passing.
    DistMp,
    /// Full-information LQR.
    Cent,
    /// Centralized controller on two-step-old information.
    Delayed,
}

impl From<ControllerArg> for ControllerKind {
    fn from(c: ControllerArg) -> Self {
        match c {
            ControllerArg::Dist => ControllerKind::Distributed,
            ControllerArg::DistMp => ControllerKind::DistributedPerVehicle,
            ControllerArg::Cent => ControllerKind::Centralized,
            ControllerArg::Delayed => ControllerKind::DelayedCentralized,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print a complete configuration file.
    DefaultConfig {
        /// The speed-profile scenario with lead integral action.
        #[arg(long)]
        fig2: bool,
    },
    /// Compute the structured gains and print the analytic cost rates.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        /// Gains JSON; defaults to output.gains from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one realization and write a CSV trace plus a JSON summary.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Gains from `synthesize`; synthesized on the fly when omitted.
        #[arg(long)]
        gains: Option<PathBuf>,
        /// CSV trace; defaults to output.trace, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "dist")]
        controller: ControllerArg,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of simulated steps.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Analytic rates of all controllers with Monte-Carlo confirmation.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// JSON report; defaults to output.report.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        /// Averaged steps per run.
        #[arg(long)]
        horizon: Option<usize>,
        /// Skip the simulation and report analytic rates only.
        #[arg(long)]
        analytic_only: bool,
    },
    /// Run the algebraic, oracle and runtime self-checks.
    Validate {
        /// Problem to check; the shipped default when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, hide = true)]
        flip_l_sign: bool,
    },
}

enum Failure {
    Lib(Error),
    Validation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 5,
            Failure::Lib(e) => match e {
                Error::Config(_)
                | Error::Json(_)
                | Error::Parameter(_)
                | Error::Domain(_)
                | Error::Model(_)
                | Error::Scenario(_)
                | Error::Dimension { .. }
                | Error::Asymmetric { .. }
                | Error::Structure(_)
                | Error::IndexOutOfRange { .. } => 2,
                Error::Synthesis(_)
                | Error::Factorization(_)
                | Error::Convergence { .. }
                | Error::NotStabilizing { .. }
                | Error::UnsupportedStructure(_) => 3,
                Error::Instability { .. } | Error::InformationViolation { .. } => 4,
                Error::Io(_) | Error::Csv(_) => 1,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Lib(e) => e.to_string(),
            Failure::Validation(s) => s.clone(),
        }
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    info!("wrote {}", path.display());
    Ok(())
}

fn load_gains(path: &Path, problem: &Problem) -> Result<DelayedGains, Error> {
    let text = std::fs::read_to_string(path)?;
    let doc: GainsDocument = serde_json::from_str(&text).map_err(|e| {
        Error::Config(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
    })?;
    let gains = doc.into_gains()?;
    if gains.partition != problem.model.partition {
        return Err(Error::Config(format!(
            "{} was synthesized for a different model ({} states, {} inputs)",
            path.display(),
            gains.partition.n(),
            gains.partition.m()
        )));
    }
    Ok(gains)
}

fn rates_table(rates: &AnalyticRates) -> String {
    let gaps = rates.gaps();
    format!(
        "centralized          {:.9}\ndistributed          {:.9}\ndelayed-centralized  {:.9}\n\
         gap distributed vs centralized:         {:.6}%\n\
         gap distributed vs delayed centralized: {:.6}%\n",
        rates.j_cent, rates.j_dist, rates.j_delayed, gaps.dist_vs_cent_pct, gaps.dist_vs_delayed_pct
    )
}

fn summary_path(csv: &Path) -> PathBuf {
    csv.with_extension("summary.json")
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::DefaultConfig { fig2 } => {
            let cfg = if fig2 { RunConfig::fig2_platoon() } else { RunConfig::default_platoon() };
            println!("{}", cfg.to_json_pretty()?);
        }
        Command::Synthesize { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let problem = cfg.build()?;
            let (gains, sol) = synthesize_steady(&problem.model, &problem.cost, cfg.synthesis.options())?;
            info!("DARE converged in {} iterations, rho(A+BL) = {:.6}", sol.iterations, sol.spectral_radius);
            print!("{}", rates_table(&AnalyticRates::from_gains(&gains)));
            println!("free gain entries: {}", gains.index_set().len());
            if let Some(path) = out.or(cfg.output.gains) {
                write_json(&path, &GainsDocument::from(&gains))?;
            }
        }
        Command::Simulate { config, gains, out, controller, seed, horizon } => {
            let cfg = RunConfig::load(&config)?;
            let problem = cfg.build()?;
            let gains = match gains {
                Some(path) => load_gains(&path, &problem)?,
                None => synthesize_steady(&problem.model, &problem.cost, cfg.synthesis.options())?.0,
            };
            let mut scenario = cfg.scenario.clone();
            if let Some(s) = seed {
                scenario.seed = s;
            }
            if let Some(h) = horizon {
                scenario.horizon = h;
            }
            let plant = Plant { model: &problem.model, cost: &problem.cost, gains: &gains, v0: problem.v0() };
            let opts = SimOptions { record_estimates: false, ..SimOptions::default() };
            let trace = run_closed_loop(plant, controller.into(), &scenario, opts)?;
            let summary = trace.summary();
            match out.or(cfg.output.trace) {
                Some(path) => {
                    trace.save_csv(&path)?;
                    info!("wrote {}", path.display());
                    let spath = cfg.output.summary.unwrap_or_else(|| summary_path(&path));
                    write_json(&spath, &summary)?;
                }
                None => {
                    trace.write_csv(std::io::stdout().lock())?;
                    eprintln!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
                }
            }
        }
        Command::Compare { config, out, seed, runs, horizon, analytic_only } => {
            let cfg = RunConfig::load(&config)?;
            let problem = cfg.build()?;
            let (gains, _) = synthesize_steady(&problem.model, &problem.cost, cfg.synthesis.options())?;
            let mut mc = cfg.monte_carlo.options(ExecMode::Parallel);
            if let Some(s) = seed {
                mc.seed = s;
            }
            if let Some(r) = runs {
                mc.runs = r;
            }
            if let Some(h) = horizon {
                mc.steps = h;
            }
            let plant = Plant { model: &problem.model, cost: &problem.cost, gains: &gains, v0: problem.v0() };
            let report = compare_controllers(plant, (!analytic_only).then_some(&mc))?;
            print!("{}", report.table());
            if let Some(path) = out.or(cfg.output.report) {
                write_json(&path, &report)?;
            }
        }
        Command::Validate { config, seed, out, flip_l_sign } => {
            let cfg = match config {
                Some(path) => RunConfig::load(&path)?,
                None => RunConfig::default_platoon(),
            };
            let mut opts = ValidationOptions { flip_l_sign, ..ValidationOptions::default() };
            if let Some(s) = seed {
                opts.seed = s;
            }
            let report = run_validation(&cfg, &opts)?;
            print!("{}", report.table());
            if let Some(path) = out {
                write_json(&path, &report)?;
            }
            if !report.all_passed() {
                let failed: Vec<&str> =
                    report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                return Err(Failure::Validation(format!("validation failed: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
