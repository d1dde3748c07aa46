//! Command-line driver: simulations, Besov norms of stored fields, the
//! rescaling-equivariance check, lifespan scans and the self-test battery.
//!
//! Exit codes: 0 success, 1 self-test failure, 2 blow-up proxy tripped
//! (or inconclusive rescale check), 3 solver error or failed check,
//! 4 configuration error.

use clap::{Parser, Subcommand, ValueEnum};
use ddeuler::config::ExperimentConfig;
use ddeuler::dyadic::{BesovIndex, DyadicLadder, Exponent};
use ddeuler::experiments::{self, diagnostics_csv, scan_csv, RescaleStatus, ScanMode};
use ddeuler::field::read_fld1_file;
use ddeuler::solver::RunStatus;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ddeuler",
    version,
    about = "Density-dependent incompressible Euler on the torus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScanModeArg {
    Epsilon,
    Eta,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured flow, writing diagnostics and snapshots.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to the config's output.dir or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Besov norm of a stored FLD1 field.
    Besov {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        s: f64,
        /// Lebesgue exponent: 1, 2 or inf.
        #[arg(long)]
        p: String,
        /// Summation exponent: 1, 2 or inf.
        #[arg(long)]
        r: String,
    },
    /// Exact rescaling-symmetry check at the given epsilon.
    RescaleCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        eps: f64,
        /// Pass tolerance on the unscaled discrepancies.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Lifespan scan over a decreasing parameter list.
    LifespanScan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: ScanModeArg,
        /// Comma-separated decreasing values.
        #[arg(long)]
        values: String,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property battery at n = 64.
    Selftest,
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read config {}: {e}", path.display());
        ExitCode::from(4)
    })?;
    ExperimentConfig::parse(&text).map_err(|e| {
        eprintln!("config error: {e}");
        ExitCode::from(4)
    })
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Simulate { config, out } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let out_dir = out.unwrap_or_else(|| {
                if cfg.output_dir.is_empty() {
                    PathBuf::from("out")
                } else {
                    PathBuf::from(&cfg.output_dir)
                }
            });
            match experiments::simulate(&cfg, &out_dir) {
                Ok(outcome) => {
                    print!("{}", diagnostics_csv(&outcome.result.records));
                    match outcome.result.status {
                        RunStatus::Completed => {
                            eprintln!(
                                "completed: {} steps to t = {:.6}",
                                outcome.result.steps,
                                outcome.result.records.last().map(|r| r.t).unwrap_or(0.0)
                            );
                            ExitCode::SUCCESS
                        }
                        RunStatus::ProxyTripped { t, reason } => {
                            eprintln!("blow-up proxy tripped at t = {t:.6}: {reason}");
                            ExitCode::from(2)
                        }
                    }
                }
                Err(e) => {
                    eprintln!("solver error: {e}");
                    ExitCode::from(3)
                }
            }
        }
        Command::Besov { field, s, p, r } => {
            let (Some(p), Some(r)) = (Exponent::parse(&p), Exponent::parse(&r)) else {
                eprintln!("config error: p and r must be one of 1, 2, inf");
                return ExitCode::from(4);
            };
            match read_fld1_file(&field) {
                Ok(f) => {
                    let ladder = DyadicLadder::new(f.grid());
                    let idx = BesovIndex::new(s, p, r);
                    let norm = (0..f.ncomp())
                        .map(|c| ladder.besov_norm(&f.component(c), idx))
                        .fold(0.0f64, f64::max);
                    println!("{norm}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: cannot read field: {e}");
                    ExitCode::from(4)
                }
            }
        }
        Command::RescaleCheck { config, eps, tol } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match experiments::rescale_equivariance_check(&cfg, eps) {
                Ok(report) => match report.status {
                    RescaleStatus::Conclusive => {
                        println!(
                            "eps = {eps}: rho {:.3e}, u {:.3e}, grad_pi {:.3e}",
                            report.rho_discrepancy,
                            report.u_discrepancy,
                            report.grad_pi_discrepancy
                        );
                        if report.max_discrepancy() <= tol {
                            println!("rescale check passed at tolerance {tol:.1e}");
                            ExitCode::SUCCESS
                        } else {
                            println!("rescale check FAILED at tolerance {tol:.1e}");
                            ExitCode::from(3)
                        }
                    }
                    RescaleStatus::Inconclusive(why) => {
                        println!("inconclusive: {why}");
                        ExitCode::from(2)
                    }
                },
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(3)
                }
            }
        }
        Command::LifespanScan {
            config,
            mode,
            values,
            out,
        } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let parsed: Result<Vec<f64>, _> = values
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<f64>())
                .collect();
            let list = match parsed {
                Ok(l) => l,
                Err(e) => {
                    eprintln!("config error: bad values list: {e}");
                    return ExitCode::from(4);
                }
            };
            let report = match mode {
                ScanModeArg::Epsilon => experiments::lifespan_scan_epsilon(&cfg, &list),
                ScanModeArg::Eta => experiments::lifespan_scan_eta(&cfg, &list),
            };
            match report {
                Ok(report) => {
                    let csv = scan_csv(&report);
                    if let Some(path) = out {
                        if let Err(e) = std::fs::write(&path, &csv) {
                            eprintln!("error: cannot write {}: {e}", path.display());
                            return ExitCode::from(3);
                        }
                    } else {
                        print!("{csv}");
                    }
                    if let Some(why) = &report.aborted {
                        eprintln!("solver error: scan aborted, partial results kept: {why}");
                        return ExitCode::from(3);
                    }
                    if !report.monotone_ok {
                        eprintln!("warning: monotonicity band violated across the scan");
                    }
                    if let Some((alpha, beta, r2)) = report.fit {
                        eprintln!(
                            "fit T ~ {alpha:.4} + {beta:.4} * log(1 + log(1/{})), r^2 = {r2:.4}",
                            report.mode.param_name()
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(experiments::ExperimentError::BadArgument(msg))
                | Err(experiments::ExperimentError::Config(
                    ddeuler::config::ConfigError::Invariant(msg),
                )) => {
                    eprintln!("config error: {msg}");
                    ExitCode::from(4)
                }
                Err(e) => {
                    eprintln!("solver error: {e}");
                    ExitCode::from(3)
                }
            }
        }
        Command::Selftest => {
            let report = experiments::selftest();
            print!("{}", report.summary());
            for suite in &report.suites {
                eprintln!("{:28} {:8.3}s", suite.name, suite.seconds);
            }
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}

impl From<ScanModeArg> for ScanMode {
    fn from(m: ScanModeArg) -> Self {
        match m {
            ScanModeArg::Epsilon => ScanMode::Epsilon,
            ScanModeArg::Eta => ScanMode::Eta,
        }
    }
}
