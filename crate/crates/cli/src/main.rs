use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use irs_relay::experiment::{
    find_crossover, parse_deployments, rows_to_csv, run_deployment_sweep, run_rho_report,
    run_rician_monte_carlo, run_scaling_report, scaling_to_csv,
};
use irs_relay::{Deployment, Error, ExperimentConfig, Strategy};
use log::info;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Report {
    Sweep,
    Rician,
    Scaling,
    Rho,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    ClosedForm,
    Ascent,
}

/// Capacity experiments for an IRS-aided decode-and-forward relay link.
///
/// Settings come from the defaults, then `--config`, then the flags.
/// Results are written as CSV to `--out` or standard output.
#[derive(Debug, Parser)]
#[command(name = "irs-relay", version)]
struct Cli {
    /// Which experiment to run.
    #[arg(long, value_enum, default_value = "sweep")]
    report: Report,
    /// key = value configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Comma-separated deployments (no-irs, near-s, near-r, near-d, multi) or `all`.
    #[arg(long)]
    deployment: Option<String>,
    /// Comma-separated, strictly increasing element counts.
    #[arg(long, value_name = "LIST")]
    m_grid: Option<String>,
    /// Single split ratio for the cooperative deployment.
    #[arg(long, conflicts_with = "rho_grid")]
    rho: Option<f64>,
    /// Comma-separated split ratios.
    #[arg(long, value_name = "LIST")]
    rho_grid: Option<String>,
    /// Comma-separated Rician factors in dB (`inf` for pure LoS).
    #[arg(long, value_name = "LIST")]
    tau_db: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Output CSV file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn build_config(cli: &Cli) -> irs_relay::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        // an unreadable config file is bad input, not an output failure
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::Io { path, message } => Error::Config(format!("cannot read {path}: {message}")),
            other => other,
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &cli.deployment {
        cfg.deployments = parse_deployments(d)?;
    }
    let overrides = [
        ("m_grid", &cli.m_grid),
        ("rho_grid", &cli.rho_grid),
        ("tau_db", &cli.tau_db),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    if let Some(r) = cli.rho {
        cfg.rho_grid = vec![r];
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(s) = cli.strategy {
        cfg.strategy = match s {
            StrategyArg::ClosedForm => Strategy::ClosedForm,
            StrategyArg::Ascent => Strategy::CoordinateAscent,
        };
    }
    if let Some(p) = &cli.out {
        cfg.output_path = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> irs_relay::Result<()> {
    let cfg = build_config(cli)?;
    let text = match cli.report {
        Report::Sweep => {
            let rows = run_deployment_sweep(&cfg)?;
            if cfg.deployments.contains(&Deployment::Multi) {
                for &rho in &cfg.rho_grid {
                    match find_crossover(&cfg.scenario, &cfg.m_grid, rho, cfg.strategy)? {
                        Some(c) => eprintln!(
                            "crossover rho={rho}: multi >= near-r from grid M={} (bracket ({}, {}], refined M={})",
                            c.grid_m, c.bracket_low, c.grid_m, c.refined_m
                        ),
                        None => eprintln!("crossover rho={rho}: multi never stays ahead of near-r on this grid"),
                    }
                }
            }
            rows_to_csv(&rows)?
        }
        Report::Rician => rows_to_csv(&run_rician_monte_carlo(&cfg)?)?,
        Report::Scaling => {
            let lines = run_scaling_report(&cfg)?;
            for l in &lines {
                eprintln!(
                    "{:<12} slope {:>9.5}  expected {} +/- {}  {}",
                    l.quantity,
                    l.slope,
                    l.expected,
                    l.tolerance,
                    if l.passes() { "pass" } else { "FAIL" }
                );
            }
            scaling_to_csv(&lines)
        }
        Report::Rho => {
            let (rows, optima) = run_rho_report(&cfg)?;
            for o in &optima {
                eprintln!(
                    "M={}: best rho achieved {} upper bound {}",
                    o.m, o.achieved, o.upper_bound
                );
            }
            rows_to_csv(&rows)?
        }
    };
    match &cfg.output_path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| Error::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })?;
            info!("wrote {}", p.display());
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| Error::Io {
                path: "<stdout>".into(),
                message: e.to_string(),
            })?;
        }
    }
    Ok(())
}

/// 2 for bad input, 3 for a numerical guard, 1 for I/O.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SearchTooLarge { .. }
        | Error::NotRankOne(_)
        | Error::ZeroMagnitude(_)
        | Error::CoincidentPoints
        | Error::NonUnitDirection(_)
        | Error::DimensionMismatch(_) => 3,
        Error::Io { .. } => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_errors_map_to_three() {
        let guard = Error::SearchTooLarge {
            size: 1e9,
            limit: irs_relay::beamforming::EXHAUSTIVE_LIMIT,
        };
        assert_eq!(exit_code(&guard), 3);
        assert_eq!(exit_code(&Error::NotRankOne(0.1)), 3);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::InvalidSplit(0.7)), 2);
    }
}
