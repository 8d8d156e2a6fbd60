use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use pyrogrid::landscape::RedFlagThresholds;
use pyrogrid::mitigation::PspsPolicy;
use pyrogrid::network::{build_testbed, TestbedConfig};
use pyrogrid::scenario::{
    run_ensemble, run_scenario, write_ensemble_outputs, write_outputs, Scenario, ScenarioInputs, Stats,
};

#[derive(Parser)]
#[command(name = "pyrogrid", version, about = "Wildfire and power-grid co-simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct PspsOverrides {
    /// Override the PSPS minimum wind speed (m/s).
    #[arg(long)]
    psps_wind: Option<f64>,
    /// Override the PSPS maximum relative humidity (%).
    #[arg(long)]
    psps_rh: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the bundled Tx/Dx testbed network.
    BuildTestbed {
        /// JSON testbed options, e.g. {"feeders": 1}.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one scenario realization.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Seed; defaults to the scenario's.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        psps: PspsOverrides,
    },
    /// Run an ensemble over consecutive seeds.
    Ensemble {
        #[arg(long)]
        scenario: PathBuf,
        /// Number of runs; defaults to the scenario's ensemble_size.
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        psps: PspsOverrides,
    },
    /// Print the metrics of a simulate or ensemble output directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn load_inputs(path: &Path, psps: &PspsOverrides) -> Result<ScenarioInputs> {
    let scenario = Scenario::load(path)?;
    let mut inputs = ScenarioInputs::load(&scenario)?;
    if psps.psps_wind.is_some() || psps.psps_rh.is_some() {
        let p = inputs.policy.psps.get_or_insert_with(|| PspsPolicy {
            thresholds: RedFlagThresholds {
                wind_speed_min: f64::INFINITY,
                humidity_max: f64::NEG_INFINITY,
            },
            zone: Vec::new(),
        });
        if let Some(w) = psps.psps_wind {
            p.thresholds.wind_speed_min = w;
        }
        if let Some(rh) = psps.psps_rh {
            p.thresholds.humidity_max = rh;
        }
        inputs.validate()?;
    }
    Ok(inputs)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.4}"))
}

fn print_metrics(m: &serde_json::Value) {
    let num = |v: &serde_json::Value| v.as_f64();
    println!("seed                          {}", m["seed"]);
    println!(
        "robustness                    {}",
        fmt_opt(num(&m["curve"]["robustness"]))
    );
    println!(
        "rapidity (1/h)                {}",
        fmt_opt(num(&m["curve"]["rapidity"]))
    );
    println!(
        "lost performance (h)          {}",
        fmt_opt(num(&m["curve"]["lost_performance_hours"]))
    );
    println!(
        "energy not served (MWh)       {}",
        fmt_opt(num(&m["community"]["energy_not_served"]))
    );
    println!(
        "weighted ENS (MWh)            {}",
        fmt_opt(num(&m["community"]["weighted_energy_not_served"]))
    );
    println!(
        "customer interruption (h)     {}",
        fmt_opt(num(&m["community"]["customer_interruption_hours"]))
    );
    println!(
        "burned area (ha)              {}",
        fmt_opt(num(&m["fire"]["burned_area_ha"]))
    );
    println!(
        "max intensity (kW/m)          {}",
        fmt_opt(num(&m["fire"]["max_intensity"]))
    );
    println!("grid-induced ignitions        {}", m["grid_ignitions"]);
    println!("outages                       {}", m["outages"]);
    println!("repairs                       {}", m["repairs"]);
}

fn print_aggregate(a: &serde_json::Value) -> Result<()> {
    println!("runs {}  failed {}", a["runs"], a["failed_runs"]);
    println!(
        "{:<32}{:>12}{:>12}{:>12}{:>12}{:>12}",
        "metric", "mean", "min", "p50", "p90", "max"
    );
    let obj = a.as_object().context("aggregate.json is not an object")?;
    for (name, v) in obj {
        if v.is_object() {
            let s: Stats = serde_json::from_value(v.clone())?;
            println!(
                "{name:<32}{:>12.4}{:>12.4}{:>12.4}{:>12.4}{:>12.4}",
                s.mean, s.min, s.p50, s.p90, s.max
            );
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildTestbed { config, out } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let cfg: TestbedConfig = serde_json::from_str(&text).map_err(pyrogrid::Error::from)?;
            let net = build_testbed(&cfg)?;
            net.save(&out)?;
            println!(
                "wrote {} ({} buses, {} branches, {} poles)",
                out.display(),
                net.buses.len(),
                net.branches.len(),
                net.poles.len()
            );
        }
        Command::Simulate {
            scenario,
            seed,
            out,
            psps,
        } => {
            let inputs = load_inputs(&scenario, &psps)?;
            let report = run_scenario(&inputs, seed.unwrap_or(inputs.run.seed))?;
            write_outputs(&report, &out)?;
            let m = report.metrics();
            println!(
                "seed {}: robustness {:.4}, lost {:.3} performance-hours, {} grid ignitions, {} outages -> {}",
                m.seed,
                m.robustness,
                m.lost_performance_hours,
                m.grid_ignitions,
                m.outages,
                out.display()
            );
        }
        Command::Ensemble {
            scenario,
            runs,
            out,
            threads,
            psps,
        } => {
            let inputs = load_inputs(&scenario, &psps)?;
            let n = runs.unwrap_or(inputs.run.ensemble_size);
            let ens = match threads {
                Some(t) => rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .context("building thread pool")?
                    .install(|| run_ensemble(&inputs, n))?,
                None => run_ensemble(&inputs, n)?,
            };
            write_ensemble_outputs(&ens, &out)?;
            for (seed, e) in &ens.failures {
                eprintln!("seed {seed} failed: {e}");
            }
            println!("{} runs ({} failed) -> {}", n, ens.failures.len(), out.display());
        }
        Command::Report { input } => {
            let metrics = input.join("metrics.json");
            let aggregate = input.join("aggregate.json");
            if metrics.exists() {
                let text =
                    std::fs::read_to_string(&metrics).with_context(|| format!("reading {}", metrics.display()))?;
                print_metrics(&serde_json::from_str(&text).map_err(pyrogrid::Error::from)?);
            } else if aggregate.exists() {
                let text =
                    std::fs::read_to_string(&aggregate).with_context(|| format!("reading {}", aggregate.display()))?;
                print_aggregate(&serde_json::from_str(&text).map_err(pyrogrid::Error::from)?)?;
            } else {
                return Err(pyrogrid::Error::config(format!(
                    "{} holds neither metrics.json nor aggregate.json",
                    input.display()
                ))
                .into());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e
                .downcast_ref::<pyrogrid::Error>()
                .is_some_and(pyrogrid::Error::is_validation);
            ExitCode::from(if validation { 1 } else { 2 })
        }
    }
}
