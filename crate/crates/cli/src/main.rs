use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use rayon::prelude::*;

use repo_contagion::engine::{run_simulation, Simulation};
use repo_contagion::output::{
    aggregate, sweep_csv, sweep_values, timeseries_csv, write_file, OutputError, RunSummary,
};
use repo_contagion::scenario::{load_scenario, set_scenario_key, validate, Scenario, ScenarioError};
use repo_contagion::sis::{
    epidemic_threshold, extract_exposure_network, integrate_sis, read_edge_list, write_edge_list, SisError,
};

#[derive(Parser)]
#[command(name = "repo-sim", version, about = "Repo market contagion simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its time series and summary.
    Simulate {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo sweep of one scenario key over seeds.
    Sweep {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seeds: u64,
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate the SIS model on a weighted network.
    Sis {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the epidemic threshold.
        #[arg(long)]
        threshold: bool,
        /// Uniform initial infection probability.
        #[arg(long, default_value_t = 0.5)]
        rho0: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        /// Record every `stride`-th step.
        #[arg(long, default_value_t = 10)]
        stride: usize,
    },
    /// Write the exposure network of a run at a given step.
    ExtractNetwork {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        at_step: u64,
        #[arg(long)]
        out: PathBuf,
        /// Ignore collateral when measuring repo exposure.
        #[arg(long)]
        gross: bool,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SisError> for CliError {
    fn from(e: SisError) -> Self {
        match e {
            SisError::InvalidNetwork(_) | SisError::InvalidState(_) | SisError::Parse { .. } => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<OutputError> for CliError {
    fn from(e: OutputError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn scenario_from(path: Option<&Path>) -> Result<Scenario, CliError> {
    let s = match path {
        Some(p) => load_scenario(p)?,
        None => Scenario::default(),
    };
    Ok(s)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

fn summary_json(summary: &RunSummary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}

fn simulate(scenario: Option<&Path>, seed: u64, out: &Path) -> Result<(), CliError> {
    let s = scenario_from(scenario)?;
    let reports = run_simulation(&s, seed)?;
    create_dir(out)?;
    write_file(&out.join("timeseries.csv"), &timeseries_csv(&reports))?;
    let summary = RunSummary::from_reports(&reports, seed, s.shock_step()).expect("at least one report");
    write_file(&out.join("summary.json"), &summary_json(&summary))?;
    info!(
        "seed {seed}: {} bankrupt, leverage {:.3} -> {:.3}",
        summary.final_bankrupt, summary.leverage_before, summary.leverage_after
    );
    Ok(())
}

fn sweep(
    scenario: Option<&Path>,
    seeds: u64,
    param: &str,
    from: f64,
    to: f64,
    steps: usize,
    out: &Path,
) -> Result<(), CliError> {
    let base = scenario_from(scenario)?;
    let values = sweep_values(from, to, steps);
    let mut scenarios = Vec::with_capacity(values.len());
    for v in &values {
        let mut s = base.clone();
        set_scenario_key(&mut s, param, &v.to_string())?;
        validate(&s)?;
        scenarios.push(s);
    }
    create_dir(out)?;
    let jobs: Vec<(usize, u64)> = (0..values.len()).flat_map(|i| (0..seeds).map(move |k| (i, k))).collect();
    let finals = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let reports = run_simulation(&scenarios[i], seed)?;
            let path = out.join(format!("run_{i:03}_seed_{seed:04}.csv"));
            write_file(&path, &timeseries_csv(&reports))?;
            Ok(reports.last().map_or(0, |r| r.n_bankrupt) as f64)
        })
        .collect::<Result<Vec<f64>, CliError>>()?;
    let k = seeds as usize;
    let points: Vec<_> =
        values.iter().enumerate().map(|(i, &v)| aggregate(v, &finals[i * k..(i + 1) * k])).collect();
    write_file(&out.join("sweep_summary.csv"), &sweep_csv(&points))?;
    info!("{} runs over {param}", jobs.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sis(
    network: &Path,
    lambda: Option<f64>,
    t_end: f64,
    out: Option<&Path>,
    threshold: bool,
    rho0: f64,
    dt: f64,
    stride: usize,
) -> Result<(), CliError> {
    let file = fs::File::open(network).map_err(|e| CliError::Runtime(format!("{}: {e}", network.display())))?;
    let net = read_edge_list(BufReader::new(file))?;
    if threshold {
        println!("lambda_c = {:.6}", epidemic_threshold(&net)?);
    }
    let Some(lambda) = lambda else {
        if threshold {
            return Ok(());
        }
        return Err(CliError::Validation("--lambda is required unless --threshold is given".into()));
    };
    let Some(out) = out else {
        return Err(CliError::Validation("--out is required with --lambda".into()));
    };
    let rho = vec![rho0; net.size()];
    let traj = integrate_sis(&rho, lambda, &net, dt, t_end, stride)?;
    create_dir(out)?;
    let mut csv = String::from("t,mean_rho");
    for i in 0..net.size() {
        write!(csv, ",rho_{i}").expect("writing to a String");
    }
    csv.push('\n');
    for (t, r) in traj.times.iter().zip(&traj.rho) {
        let mean = if r.is_empty() { 0.0 } else { r.iter().sum::<f64>() / r.len() as f64 };
        write!(csv, "{t:.6},{mean:.6}").expect("writing to a String");
        for x in r {
            write!(csv, ",{x:.6}").expect("writing to a String");
        }
        csv.push('\n');
    }
    write_file(&out.join("sis_trajectory.csv"), &csv)?;
    Ok(())
}

fn extract_network(scenario: Option<&Path>, seed: u64, at_step: u64, out: &Path, gross: bool) -> Result<(), CliError> {
    let s = scenario_from(scenario)?;
    let mut sim = Simulation::new(&s, seed)?;
    sim.run_to(at_step);
    let exposure = extract_exposure_network(&sim.market, gross);
    if !exposure.flagged.is_empty() {
        log::warn!("{} agents with non-positive NAV", exposure.flagged.len());
    }
    let file = fs::File::create(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    write_edge_list(&exposure.network, BufWriter::new(file))
        .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { scenario, seed, out } => simulate(scenario.as_deref(), seed, &out),
        Command::Sweep { scenario, seeds, param, from, to, steps, out } => {
            sweep(scenario.as_deref(), seeds, &param, from, to, steps, &out)
        }
        Command::Sis { network, lambda, t_end, out, threshold, rho0, dt, stride } => {
            sis(&network, lambda, t_end, out.as_deref(), threshold, rho0, dt, stride)
        }
        Command::ExtractNetwork { scenario, seed, at_step, out, gross } => {
            extract_network(scenario.as_deref(), seed, at_step, &out, gross)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SIM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Validation(_) => ExitCode::from(1),
                CliError::Runtime(_) => ExitCode::from(2),
            }
        }
    }
}
