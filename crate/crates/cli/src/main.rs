use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use amp_core::harness::{emit_report, parse_config, run_ensemble, Format, Mode};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ampse", version, about = "AMP and state-evolution experiments")]
struct Cli {
    #[command(subcommand)]
    mode: ModeCmd,
}

#[derive(Subcommand)]
enum ModeCmd {
    /// State-evolution predictions only
    Se(RunArgs),
    /// Monte Carlo ensemble of AMP
    Amp(RunArgs),
    /// Monte Carlo ensemble of iterative soft thresholding
    Ist(RunArgs),
    /// Ensemble of the algorithm named in the config
    Ensemble(RunArgs),
    /// Symmetric-matrix iteration
    Symmetric(RunArgs),
    /// Full message passing against AMP
    MpCompare(RunArgs),
    /// Decoupling of iterate coordinates
    Decouple(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON experiment config
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Worker threads
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl ModeCmd {
    fn split(self) -> (Mode, RunArgs) {
        match self {
            ModeCmd::Se(a) => (Mode::Se, a),
            ModeCmd::Amp(a) => (Mode::Amp, a),
            ModeCmd::Ist(a) => (Mode::Ist, a),
            ModeCmd::Ensemble(a) => (Mode::Ensemble, a),
            ModeCmd::Symmetric(a) => (Mode::Symmetric, a),
            ModeCmd::MpCompare(a) => (Mode::MpCompare, a),
            ModeCmd::Decouple(a) => (Mode::Decouple, a),
        }
    }
}

fn run(cli: Cli) -> amp_core::Result<()> {
    let (mode, args) = cli.mode.split();
    let text = std::fs::read(&args.config).map_err(|e| {
        amp_core::Error::Config(format!("cannot read {}: {e}", args.config.display()))
    })?;
    let mut cfg = parse_config(&text)?;
    cfg.mode = mode;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(f) = args.format {
        cfg.output.format = match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        };
    }
    if args.out.is_some() {
        cfg.output.path = args.out;
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    cfg.validate()?;
    let report = run_ensemble(&cfg)?;
    for w in report.metadata.state_evolution.iter().flat_map(|s| &s.warnings) {
        eprintln!("warning: quadrature disagreement {:.3e} at t = {}", w.discrepancy, w.t);
    }
    for d in &report.metadata.diverged {
        eprintln!("warning: replicate {} diverged at t = {}", d.replicate, d.t);
    }
    match &cfg.output.path {
        Some(p) => amp_core::harness::write_report(&report, cfg.output.format, p),
        None => {
            let bytes = emit_report(&report, cfg.output.format)?;
            std::io::stdout().write_all(&bytes)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
