use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use resonet_cli::config::{parse_config, Format, Mode};
use resonet_cli::output::{emit_results, OutputFormat};
use resonet_cli::run::{run_experiment, CliError};

#[derive(Parser)]
#[command(
    name = "resonet",
    version,
    about = "Parametrically coupled resonator network simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Perfect-transfer coupling profile (and pump voltages).
    Synth(Args),
    /// Envelope evolution through a coupling schedule.
    EvolveRwa(Args),
    /// Full equations of motion, lock-in demodulated.
    EvolveFull(Args),
    /// Eigenvalues and driven response.
    Spectrum(Args),
    /// Launch-site phase after a round trip.
    Parity(Args),
    /// Voltage-to-coupling calibration fit.
    Calibrate(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Experiment config (TOML, or JSON by extension).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

fn execute(mode: Mode, args: &Args) -> Result<Vec<PathBuf>, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|source| CliError::Io {
        path: args.config.clone(),
        source,
    })?;
    let cfg = parse_config(&text, Format::from_path(&args.config), Some(mode))
        .map_err(CliError::Config)?;
    let bundle = run_experiment(&cfg)?;
    let format = match args.format {
        FormatArg::Csv => OutputFormat::Csv,
        FormatArg::Json => OutputFormat::Json,
    };
    emit_results(&bundle, &args.out, format).map_err(|(path, source)| CliError::Io { path, source })
}

fn configure_threads() {
    if let Some(n) = std::env::var("RESONET_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let (mode, args) = match &cli.command {
        Command::Synth(a) => (Mode::Synth, a),
        Command::EvolveRwa(a) => (Mode::EvolveRwa, a),
        Command::EvolveFull(a) => (Mode::EvolveFull, a),
        Command::Spectrum(a) => (Mode::Spectrum, a),
        Command::Parity(a) => (Mode::Parity, a),
        Command::Calibrate(a) => (Mode::Calibrate, a),
    };
    match execute(mode, args) {
        Ok(paths) => {
            for p in paths {
                println!("{}", display(&p));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let source = args.config.display();
            match &e {
                CliError::Config(errs) => {
                    for issue in &errs.0 {
                        eprintln!("{source}: {issue}");
                    }
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
