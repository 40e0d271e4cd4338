//! Command-line front end: experiment sweeps and the oracle suite.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use riscom::driver::Scheme;
use riscom::harness::{emit, run_sweep, Experiment, SweepSpec};
use riscom::oracle::run_suite;
use riscom::scenario::{default_scenario, ScenarioConfig};
use riscom::{Error, Result};

#[derive(Parser)]
#[command(name = "riscom", version, about = "RIS-assisted ISAC beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment sweep and write CSV/SVG output.
    Run {
        /// vs_L, vs_e, vs_gamma, vs_power or per_mr
        #[arg(long)]
        experiment: String,
        /// Scenario JSON; omitted keys keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated sweep points (vs_power in dBm, per_mr as MR indices).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
        /// Comma-separated schemes: proposed, without_ris, rps, apt.
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<String>>,
        /// A count `n` (seeds 0..n) or a comma-separated seed list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check the solvers against brute-force references on tiny instances.
    Oracle,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidConfig(format!("bad seed list `{s}`"));
    if s.contains(',') {
        s.split(',')
            .map(|t| t.trim().parse::<u64>().map_err(|_| bad()))
            .collect()
    } else {
        let n = s.trim().parse::<u64>().map_err(|_| bad())?;
        Ok((0..n).collect())
    }
}

fn run(
    experiment: &str,
    config: Option<PathBuf>,
    values: Option<Vec<f64>>,
    schemes: Option<Vec<String>>,
    seeds: Option<String>,
    out: PathBuf,
) -> Result<ExitCode> {
    let experiment = Experiment::parse(experiment)?;
    let scenario: ScenarioConfig = match config {
        Some(path) => ScenarioConfig::from_json_file(&path)?,
        None => default_scenario(),
    };
    let schemes = match schemes {
        Some(list) => list.iter().map(|s| Scheme::parse(s)).collect::<Result<Vec<_>>>()?,
        None if experiment == Experiment::PerMr => vec![Scheme::Proposed],
        None => Scheme::ALL.to_vec(),
    };
    let seeds = match seeds {
        Some(s) => parse_seeds(&s)?,
        None => (0..scenario.mc_drops as u64).collect(),
    };
    let spec = SweepSpec {
        experiment,
        values: values.unwrap_or_else(|| experiment.default_values(&scenario)),
        schemes,
        seeds,
        scenario,
    };
    let report = run_sweep(&spec)?;
    for f in &report.failures {
        let scheme = f.scheme.map_or("-".to_string(), |s| s.to_string());
        let seed = f.seed.map_or("-".to_string(), |s| s.to_string());
        eprintln!("failed: scheme {scheme} value {} seed {seed}: {}", f.value, f.message);
    }
    if report.rows.is_empty() {
        return Err(Error::InvalidConfig("no sweep point could be evaluated".into()));
    }
    let emitted = emit(&report.rows, &out)?;
    println!("wrote {}", emitted.results.display());
    println!("wrote {}", emitted.summary.display());
    for c in &emitted.charts {
        println!("wrote {}", c.display());
    }
    if !report.failures.is_empty() {
        return Ok(ExitCode::from(2));
    }
    if report.infeasible_only() {
        eprintln!("every run was infeasible");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn oracle() -> Result<ExitCode> {
    let checks = run_suite()?;
    let mut ok = true;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            experiment,
            config,
            values,
            schemes,
            seeds,
            out,
        } => run(&experiment, config, values, schemes, seeds, out),
        Command::Oracle => oracle(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
