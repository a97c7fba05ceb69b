use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use twocomp::checks;
use twocomp::harness::{
    emit_effective, emit_report, emit_scattering, parse_config, parse_effective_config, parse_scattering_config,
    run_convergence_sweep, run_effective, run_scattering,
};

#[derive(Parser)]
#[command(name = "twocomp", version, about = "Two-component Bose gas laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory (overrides `[output] dir`)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Seed for randomized parts (overrides the config seed)
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads; defaults to the number of cores
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact dynamics against the effective flow along a particle-number ladder
    Sweep { config: PathBuf },
    /// Integrate an effective (Hartree, GP, Rabi or spin-1) system
    Effective { config: PathBuf },
    /// Scattering lengths, rescalings and the W calibration of a radial potential
    Scattering { config: PathBuf },
    /// Run the invariant and trend suite
    Check {
        /// Run only these checks (1-based)
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn out_dir(flag: Option<PathBuf>, config: Option<PathBuf>) -> PathBuf {
    flag.or(config).unwrap_or_else(|| PathBuf::from("out"))
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        anyhow::ensure!(n >= 1, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Sweep { config } => {
            let mut cfg = parse_config(&read(&config)?).with_context(|| format!("in {}", config.display()))?;
            anyhow::ensure!(!cfg.ladder.is_empty(), "{}: ladder.entries is empty", config.display());
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let report = run_convergence_sweep(&cfg)?;
            for e in &report.entries {
                println!(
                    "({}, {}) dim {:>7}  alpha(t*) = {:.6e}  |E - E_eff| = {:.6e}  {}",
                    e.n1,
                    e.n2,
                    e.dim,
                    e.alpha_probe,
                    e.energy_gap(),
                    e.status.label()
                );
            }
            if let Some(p) = report.fitted_exponent {
                println!("fitted exponent of alpha(t*) in N1+N2: {p:.4}");
            }
            let dir = out_dir(cli.out, cfg.out_dir.clone());
            print_files(&emit_report(&report, &cfg, &dir)?);
            Ok(report.entries.iter().all(|e| e.is_ok()))
        }
        Command::Effective { config } => {
            let mut cfg =
                parse_effective_config(&read(&config)?).with_context(|| format!("in {}", config.display()))?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let (traj, wall) = run_effective(&cfg)?;
            println!(
                "{} samples, mass drift {:.3e}, relative energy drift {:.3e}",
                traj.times.len(),
                traj.total_mass_drift(),
                traj.relative_energy_drift()
            );
            let dir = out_dir(cli.out, cfg.out_dir.clone());
            print_files(&emit_effective(&traj, &cfg, &dir, wall)?);
            Ok(true)
        }
        Command::Scattering { config } => {
            let cfg = parse_scattering_config(&read(&config)?).with_context(|| format!("in {}", config.display()))?;
            let report = run_scattering(&cfg)?;
            println!("a = {:.17e}", report.base.scattering_length);
            for (n, r) in &report.scaled {
                println!("N = {n}: a = {:.17e}", r.scattering_length);
            }
            if let Some(cal) = &report.calibration {
                println!("C = {:.17e}, residual a = {:.3e}", cal.spec.constant(), cal.residual);
            }
            let dir = out_dir(cli.out, cfg.out_dir.clone());
            print_files(&emit_scattering(&report, &cfg, &dir)?);
            Ok(true)
        }
        Command::Check { only } => {
            let seed = cli.seed.unwrap_or(0);
            let ids: Vec<usize> = if only.is_empty() {
                (1..=checks::CHECK_NAMES.len()).collect()
            } else {
                only
            };
            let mut all = true;
            for id in ids {
                let outcome = checks::run_check(id, seed);
                println!("{}", outcome.line());
                all &= outcome.passed;
            }
            Ok(all)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
