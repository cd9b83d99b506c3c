//! Binary entry point: argument surface and exit-code mapping.
//!
//! Exit codes: 0 success, 1 bad arguments or configuration, 2 simulation or
//! training fault, 3 filesystem trouble. They are the only machine-readable
//! outcome; everything printed is advisory.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pvgrid_cli::run::{self, EmitFlags, RunManifest, ScenarioSource};
use pvgrid_cli::train::{self, TrainRequest};
use pvgrid_cli::CliError;
use pvgrid_core::ControllerVariant;

#[derive(Parser)]
#[command(
    name = "pvgrid",
    version,
    about = "Simulates a grid-tied two-stage solar conversion system and reports its power quality"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trace, report and plot artifacts
    Run(RunArgs),
    /// Train the tracker step-size network and save its parameters
    TrainAnfis(TrainArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file path, or a bundled case name (case1, case2, case3)
    #[arg(long, required_unless_present = "all", conflicts_with = "all")]
    scenario: Option<String>,
    /// Output directory; with --all, one subdirectory per case
    #[arg(long)]
    out: PathBuf,
    /// Override the scenario's random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Controller variant to impose on the scenario
    #[arg(long, value_parser = parse_variant)]
    variant: Option<ControllerVariant>,
    /// Run the three bundled cases concurrently
    #[arg(long)]
    all: bool,
    /// Artifact families to write
    #[arg(long, value_delimiter = ',', default_value = "csv,svg,summary")]
    emit: Vec<EmitKind>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset CSV with header x,y,target
    #[arg(long, required_unless_present = "generate", conflicts_with = "generate")]
    dataset: Option<PathBuf>,
    /// Generate the teacher dataset for the default array instead
    #[arg(long)]
    generate: bool,
    /// Output directory for the parameter file and error trace
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmitKind {
    Csv,
    Svg,
    Summary,
}

fn parse_variant(s: &str) -> Result<ControllerVariant, String> {
    ControllerVariant::parse(s)
        .ok_or_else(|| format!("unknown variant '{s}' (have proposed, po, pso-tuned)"))
}

fn emit_flags(kinds: &[EmitKind]) -> EmitFlags {
    let mut flags = EmitFlags { csv: false, svg: false, summary: false };
    for k in kinds {
        match k {
            EmitKind::Csv => flags.csv = true,
            EmitKind::Svg => flags.svg = true,
            EmitKind::Summary => flags.summary = true,
        }
    }
    flags
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let emit = emit_flags(&args.emit);
            if args.all {
                return run::execute_all(&args.out, args.seed, args.variant, emit);
            }
            let spec = args.scenario.expect("clap enforces --scenario without --all");
            let manifest = RunManifest {
                source: ScenarioSource::resolve(&spec)?,
                out_dir: args.out,
                seed: args.seed,
                variant: args.variant,
                emit,
            };
            let artifacts = run::execute(&manifest)?;
            println!("{}", artifacts.console_line());
            artifacts.exit_result()
        }
        Command::TrainAnfis(args) => {
            let request = TrainRequest { dataset: args.dataset, out_dir: args.out };
            let report = train::execute(&request)?;
            let first = report.rmse.first().copied().unwrap_or(f64::NAN);
            let last = report.rmse.last().copied().unwrap_or(f64::NAN);
            println!(
                "trained {} epochs: rmse {first:.6} -> {last:.6} (files in {})",
                report.rmse.len().saturating_sub(1),
                request.out_dir.display()
            );
            if !report.rank_deficient_epochs.is_empty() {
                println!(
                    "note: least-squares pass was rank deficient in epochs {:?}",
                    report.rank_deficient_epochs
                );
            }
            Ok(())
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests land here too; only real usage
            // mistakes take the error path.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = dispatch(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
