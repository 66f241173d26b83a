use std::path::PathBuf;
use std::process::ExitCode;

use cavity_cli::{run_file, CliError, Experiment, RunOptions};
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "simulate",
    version,
    about = "Steady states, spectra and phase-space data for the cavity models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir` and the environment).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// First cutoff tried by the automatic truncation.
    #[arg(long)]
    seed_cutoff: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Micromaser steady state against the Rabi angle.
    SweepPhi(Common),
    /// Josephson-photonics steady state against Delta_0.
    SweepDelta0(Common),
    /// Fock-state fidelity against drive for all three schemes.
    Fidelity(Common),
    /// Wigner function of one steady state.
    Wigner(Common),
    /// Emission spectrum, with and without the static-noise average.
    Psd(Common),
    /// Second-order coherence g2(tau).
    G2(Common),
    /// Mean-field fixed points and the bifurcation threshold.
    Semiclassical(Common),
}

impl Command {
    fn split(self) -> (Experiment, Common) {
        match self {
            Command::SweepPhi(c) => (Experiment::SweepPhi, c),
            Command::SweepDelta0(c) => (Experiment::SweepDelta0, c),
            Command::Fidelity(c) => (Experiment::Fidelity, c),
            Command::Wigner(c) => (Experiment::Wigner, c),
            Command::Psd(c) => (Experiment::Psd, c),
            Command::G2(c) => (Experiment::G2, c),
            Command::Semiclassical(c) => (Experiment::Semiclassical, c),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (experiment, common) = cli.command.split();
    let opts = RunOptions {
        out_dir: common.out,
        workers: common.workers,
        seed_cutoff: common.seed_cutoff,
    };
    let result = run_file(experiment, &common.config, &opts).and_then(|summary| {
        for f in &summary.files {
            eprintln!("wrote {}", f.display());
        }
        eprintln!("wrote {}", summary.manifest.display());
        if summary.failures > 0 {
            Err(CliError::PointsFailed {
                failed: summary.failures,
                total: summary.points,
            })
        } else {
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("simulate {experiment}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
