use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use asse_cli::pipeline::{cmd_eval, cmd_run, cmd_sweep, Overrides};
use asse_cli::ExperimentConfig;
use asse_core::analytics::Method;
use asse_core::grid::{newton_power_flow, parse_matpower_case};
use asse_core::uncertainty::Space;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "asse", version, about = "Surrogate-based probabilistic AC-OPF experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the OPF batch (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated subset of MC, ASSE, SPCE.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceArg {
    Unit,
    Physical,
}

#[derive(Subcommand)]
enum Command {
    /// Design, OPF batch, fit, validation and report.
    Run(ExperimentArgs),
    /// Validation error against the experiment design size.
    Sweep(ExperimentArgs),
    /// Evaluate a stored surrogate on a CSV of points.
    Eval {
        #[arg(long)]
        surrogate: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long, value_enum, default_value = "physical")]
        space: SpaceArg,
        /// Predictions CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a MATPOWER case file and print a summary.
    ParseCase {
        case: PathBuf,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

fn experiment(args: &ExperimentArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    let out = Overrides {
        out: args.out.clone(),
        workers: args.workers,
        methods: args.methods.clone(),
    }
    .apply(&mut cfg)?;
    Ok((cfg, out))
}

fn parse_case(path: &PathBuf) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    let case = parse_matpower_case(&text)?;
    let pd: f64 = case.buses.iter().map(|b| b.pd).sum();
    let qd: f64 = case.buses.iter().map(|b| b.qd).sum();
    println!("base MVA    {}", case.base_mva);
    println!("buses       {}", case.buses.len());
    println!("generators  {} ({} online)", case.generators.len(), case.online_generators().len());
    println!("branches    {}", case.branches.len());
    println!("demand      {pd} MW, {qd} MVAr");
    let pf = newton_power_flow(&case, None)?;
    println!(
        "power flow  {} after {} iterations (mismatch {:.3e} p.u.)",
        if pf.converged { "converged" } else { "did not converge" },
        pf.iterations,
        pf.mismatch
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => experiment(args).and_then(|(cfg, out)| {
            cmd_run(&cfg, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }),
        Command::Sweep(args) => experiment(args).and_then(|(cfg, out)| {
            cmd_sweep(&cfg, &out)?;
            println!("wrote {}", out.join("sweep.csv").display());
            Ok(())
        }),
        Command::Eval {
            surrogate,
            points,
            space,
            out,
        } => {
            let space = match space {
                SpaceArg::Unit => Space::Unit,
                SpaceArg::Physical => Space::Physical,
            };
            cmd_eval(surrogate, points, space, out.as_deref()).map(|_| ())
        }
        Command::ParseCase { case } => parse_case(case),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
