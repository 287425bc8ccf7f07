//! `rotbec`: Thomas-Fermi profiles, GP ground states, trial states and
//! regime sweeps for rotating condensates in `r^s` traps.
//!
//! Exit codes: 0 success, 2 usage or parameter error, 3 numerical failure.
//! Set `RAYON_NUM_THREADS` to limit the worker threads.

mod commands;
mod config;
mod failure;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Flags;

#[derive(Parser)]
#[command(name = "rotbec", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// TF solution and a 1000-point radial profile.
    Tf(Flags),
    /// Critical rotation at which the TF density develops a hole.
    Critical(Flags),
    /// Closed-form quartic TF solution next to the numerical one.
    Quartic(Flags),
    /// GP ground state with energy, density and tail diagnostics.
    Gp(Flags),
    /// Vortex-lattice or giant-vortex trial state energy.
    Trial(Flags),
    /// Sweep over ε (or over ω₀ for the TF rate) with rate fits.
    Sweep(Flags),
    /// Asymptotic homogeneity check of a polynomial potential.
    CheckPotential(Flags),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    type Runner = fn(&config::RunConfig) -> Result<(), failure::Failure>;
    let (flags, run): (&Flags, Runner) = match &cli.command {
        Command::Tf(f) => (f, commands::tf),
        Command::Critical(f) => (f, commands::critical),
        Command::Quartic(f) => (f, commands::quartic),
        Command::Gp(f) => (f, commands::gp),
        Command::Trial(f) => (f, commands::trial),
        Command::Sweep(f) => (f, commands::sweep),
        Command::CheckPotential(f) => (f, commands::check_potential),
    };
    match flags.resolve().and_then(|cfg| run(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
