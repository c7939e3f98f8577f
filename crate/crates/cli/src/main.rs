//! `carbon-sched` command-line tool.
//!
//! Exit codes: 0 on success, 1 when inputs fail validation, 2 when a run
//! fails after its inputs loaded. Errors go to stderr as
//! `error: <Name>: <detail>`.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use carbon_sched::policy::{plan_hour, HourInputs, PolicyKind};
use carbon_sched::report::{self, RunManifest};
use carbon_sched::sim::{forecast_hour, SimulationRun};
use carbon_sched::trace::{self, Traces};
use carbon_sched::{run_simulation, sweep, synthetic, verify_plan, PolicySpec, SimConfig};
use clap::{Args, Parser, Subcommand};

use config::Config;

#[derive(Parser, Debug)]
#[command(
    name = "carbon-sched",
    version,
    about = "Carbon-aware provisioning and scheduling simulator"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load and check trace files.
    Validate(TracePaths),
    /// Solve one hour and print the plan as JSON.
    Solve {
        #[arg(long)]
        hour: u32,
        /// Policy to plan with (default: first carbon policy in the config, else carbon-100).
        #[arg(long)]
        policy: Option<String>,
    },
    /// Simulate one policy.
    Run {
        /// Policy to simulate (default: first policy in the config).
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        hours: Option<u32>,
    },
    /// Simulate several policies on the same traces and compare them.
    Sweep {
        /// Latency ceilings in ms; runs the baseline plus one carbon policy per value.
        #[arg(long, value_delimiter = ',')]
        slo: Option<Vec<f64>>,
        #[arg(long)]
        hours: Option<u32>,
    },
    /// Write the bundled synthetic traces and a matching config.
    Synth {
        #[arg(long, default_value_t = 7)]
        days: u32,
    },
}

#[derive(Args, Debug)]
struct TracePaths {
    #[arg(long)]
    regions: Option<PathBuf>,
    #[arg(long)]
    latency: Option<PathBuf>,
    #[arg(long)]
    carbon: Option<PathBuf>,
    #[arg(long)]
    workload: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Validation(String, String),
    Runtime(String, String),
}

impl Failure {
    fn validation(name: &str, detail: impl ToString) -> Self {
        Failure::Validation(name.to_string(), detail.to_string())
    }

    fn runtime(name: &str, detail: impl ToString) -> Self {
        Failure::Runtime(name.to_string(), detail.to_string())
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::runtime("IoError", format!("{}: {e}", path.display()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(name, detail)) => {
            eprintln!("error: {name}: {detail}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(name, detail)) => {
            eprintln!("error: {name}: {detail}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Validate(paths) => validate(&cli, paths),
        Command::Solve { hour, policy } => solve(&cli, *hour, policy.as_deref()),
        Command::Run { policy, hours } => run(&cli, policy.as_deref(), *hours),
        Command::Sweep { slo, hours } => run_sweep(&cli, slo.as_deref(), *hours),
        Command::Synth { days } => synth(&cli, *days),
    }
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::validation("ConfigError", "--config is required"))?;
    let mut config = Config::load(path).map_err(|e| Failure::validation("ConfigError", e))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    Ok(config)
}

fn load_traces(config: &Config) -> Result<Traces, Failure> {
    Traces::load(&config.regions, &config.latency, &config.carbon, &config.workload)
        .map_err(|e| Failure::validation(e.name(), e))
}

fn validate(cli: &Cli, paths: &TracePaths) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(_) => Some(load_config(cli)?),
        None => None,
    };
    let pick = |flag: &Option<PathBuf>, from_config: Option<&PathBuf>, name: &str| -> Result<PathBuf, Failure> {
        flag.clone()
            .or_else(|| from_config.cloned())
            .ok_or_else(|| Failure::validation("ConfigError", format!("no {name} path given")))
    };
    let regions_path = pick(&paths.regions, config.as_ref().map(|c| &c.regions), "regions")?;
    let latency_path = pick(&paths.latency, config.as_ref().map(|c| &c.latency), "latency")?;
    let carbon_path = pick(&paths.carbon, config.as_ref().map(|c| &c.carbon), "carbon")?;
    let workload_path = pick(&paths.workload, config.as_ref().map(|c| &c.workload), "workload")?;

    let mut first_error: Option<Failure> = None;
    let mut report = |path: &Path, result: Result<String, trace::TraceError>| match result {
        Ok(msg) => println!("ok {}: {msg}", path.display()),
        Err(e) => {
            println!("error {}: {}: {e}", path.display(), e.name());
            first_error.get_or_insert(Failure::validation(e.name(), e));
        }
    };

    let regions = trace::load_region_set(&regions_path);
    report(
        &regions_path,
        regions
            .as_ref()
            .map(|r| format!("{} regions", r.len()))
            .map_err(Clone::clone),
    );
    let Ok(regions) = regions else {
        return Err(first_error.expect("region error recorded"));
    };
    let latency = trace::load_latency_matrix(&latency_path, &regions);
    report(
        &latency_path,
        latency
            .as_ref()
            .map(|m| format!("{0}x{0} matrix", m.len()))
            .map_err(Clone::clone),
    );
    let carbon = trace::load_carbon_trace(&carbon_path, &regions);
    report(
        &carbon_path,
        carbon
            .as_ref()
            .map(|t| format!("hours {}..{}", t.start(), t.end()))
            .map_err(Clone::clone),
    );
    let workload = trace::load_workload_trace(&workload_path, &regions);
    report(
        &workload_path,
        workload
            .as_ref()
            .map(|t| format!("hours {}..{}", t.start(), t.end()))
            .map_err(Clone::clone),
    );
    if let (Ok(latency), Ok(carbon), Ok(workload)) = (latency, carbon, workload) {
        if let Err(e) = Traces::new(regions, latency, carbon, workload) {
            println!("error traces: {}: {e}", e.name());
            first_error.get_or_insert(Failure::validation(e.name(), e));
        }
    }
    match first_error {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn sim_config(config: &Config, spec: PolicySpec, hours: u32) -> SimConfig {
    SimConfig {
        hours,
        timesteps_per_hour: config.timesteps_per_hour,
        seed: config.seed,
        energy_per_request_kwh: config.energy_per_request,
        policy: spec,
        carbon_forecaster: Config::forecaster(config.carbon_forecaster),
        workload_forecaster: Config::forecaster(config.workload_forecaster),
        bucket_minutes: config.bucket_minutes,
    }
}

fn manifest(cli: &Cli, config: &Config, policies: Vec<String>, hours: u32) -> RunManifest {
    let kind = |k| match k {
        trace::ForecastKind::Oracle => "oracle".to_string(),
        trace::ForecastKind::Persistence => "persistence".to_string(),
    };
    RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_path: cli.config.as_ref().map(|p| p.display().to_string()),
        regions: config.regions.display().to_string(),
        latency: config.latency.display().to_string(),
        carbon: config.carbon.display().to_string(),
        workload: config.workload.display().to_string(),
        policies,
        seed: config.seed,
        hours,
        timesteps_per_hour: config.timesteps_per_hour,
        energy_per_request_kwh: config.energy_per_request,
        alpha: config.alpha,
        capacity: config.c.to_vec(),
        max_servers: config.max_servers,
        carbon_forecaster: kind(config.carbon_forecaster),
        workload_forecaster: kind(config.workload_forecaster),
        out_dir: config.out.display().to_string(),
    }
}

fn solve(cli: &Cli, hour: u32, policy: Option<&str>) -> Result<(), Failure> {
    let config = load_config(cli)?;
    let traces = load_traces(&config)?;
    let name = match policy {
        Some(p) => p.to_string(),
        None => config
            .policies
            .iter()
            .find(|p| matches!(p.parse(), Ok(PolicyKind::CarbonL { .. })))
            .cloned()
            .unwrap_or_else(|| "carbon-100".to_string()),
    };
    let spec = config
        .policy_spec(&name)
        .map_err(|e| Failure::validation("InvalidSpec", e))?;
    let sim = sim_config(&config, spec.clone(), 1);
    let (carbon, expected) = forecast_hour(hour, &traces, &sim).map_err(|e| Failure::runtime(e.name(), e))?;
    let inputs = HourInputs {
        regions: &traces.regions,
        carbon: &carbon,
        expected_arrivals: &expected,
        latency: &traces.latency,
    };
    let (plan, _) = plan_hour(&spec, &inputs).map_err(|e| Failure::runtime(e.name(), e))?;
    let plan = plan.with_hour(hour);
    let slo = match spec.kind {
        PolicyKind::CarbonL { slo_ms } => slo_ms,
        PolicyKind::LatencyBaseline => f64::MAX,
    };
    let inst = carbon_sched::cap::build_instance(
        &traces.regions,
        &carbon,
        &expected,
        &traces.latency,
        &spec.cap_params(slo),
    )
    .map_err(|e| Failure::runtime(e.name(), e))?;
    let violations = verify_plan(&inst, &plan);
    if let Some(v) = violations.first() {
        return Err(Failure::runtime("PlanInvalid", v));
    }
    let json = serde_json::to_string_pretty(&plan).map_err(|e| Failure::runtime("SerializeError", e))?;
    println!("{json}");
    Ok(())
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Failure::io(&path, e))
}

fn write_run(dir: &Path, manifest: &RunManifest, traces: &Traces, run: &SimulationRun) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    write(dir, "hourly.csv", &report::hourly_csv(manifest, &run.hourly))?;
    write(dir, "summary.json", &report::summary_json(manifest, run))?;
    write(dir, "plans.json", &report::plans_json(manifest, &run.hourly))?;
    write(dir, "weights.json", &report::weights_json(manifest, &run.hourly))?;
    if run.hourly.iter().any(|h| !h.buckets.is_empty()) {
        write(
            dir,
            "buckets.csv",
            &report::buckets_csv(manifest, traces.regions.names(), &run.hourly),
        )?;
    }
    Ok(())
}

fn run(cli: &Cli, policy: Option<&str>, hours: Option<u32>) -> Result<(), Failure> {
    let config = load_config(cli)?;
    let traces = load_traces(&config)?;
    let name = match policy {
        Some(p) => p.to_string(),
        None => config
            .policies
            .first()
            .cloned()
            .ok_or_else(|| Failure::validation("ConfigError", "no policy given"))?,
    };
    let spec = config
        .policy_spec(&name)
        .map_err(|e| Failure::validation("InvalidSpec", e))?;
    let hours = hours.unwrap_or(config.hours);
    let sim = sim_config(&config, spec.clone(), hours);
    let run = run_simulation(&sim, &traces).map_err(|e| Failure::runtime(e.name(), e))?;
    let manifest = manifest(cli, &config, vec![spec.kind.to_string()], hours);
    write_run(&config.out, &manifest, &traces, &run)?;
    println!(
        "{}: {} requests, {:.1} g CO2e, mean latency {:.2} ms -> {}",
        run.summary.policy,
        run.summary.total_served,
        run.summary.total_emissions_g,
        run.summary.mean_latency_ms,
        config.out.display()
    );
    Ok(())
}

fn run_sweep(cli: &Cli, slo: Option<&[f64]>, hours: Option<u32>) -> Result<(), Failure> {
    let config = load_config(cli)?;
    let traces = load_traces(&config)?;
    let specs = match slo {
        Some(values) => std::iter::once("latency".to_string())
            .chain(values.iter().map(|v| format!("carbon-{v}")))
            .map(|n| config.policy_spec(&n))
            .collect::<Result<Vec<_>, _>>(),
        None => config.policy_specs(),
    }
    .map_err(|e| Failure::validation("InvalidSpec", e))?;
    if specs.is_empty() {
        return Err(Failure::validation("ConfigError", "no policies to sweep"));
    }
    let hours = hours.unwrap_or(config.hours);
    let base = sim_config(&config, specs[0].clone(), hours);
    let result = sweep(&specs, &base, &traces).map_err(|e| Failure::runtime(e.name(), e))?;
    let manifest = manifest(cli, &config, specs.iter().map(|s| s.kind.to_string()).collect(), hours);
    let out = &config.out;
    std::fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    write(
        out,
        "comparison.json",
        &report::comparison_json(&manifest, &result.comparison),
    )?;
    write(
        out,
        "plot.csv",
        &report::plot_csv(&manifest, &result.specs, &result.runs),
    )?;
    for (spec, run) in result.specs.iter().zip(&result.runs) {
        write_run(&out.join(spec.name()), &manifest, &traces, run)?;
    }
    for p in &result.comparison.policies {
        let reduction = p
            .reduction_vs_baseline
            .map_or_else(|| "-".to_string(), |r| format!("{:.1}%", r * 100.0));
        println!(
            "{:<12} emissions {:>12.1} g  reduction {:>6}  mean latency {:>7.2} ms  p95 {:>6.1} ms  overloads {}",
            p.name, p.total_emissions_g, reduction, p.mean_latency_ms, p.p95_latency_ms, p.total_overloads
        );
    }
    Ok(())
}

fn synth(cli: &Cli, days: u32) -> Result<(), Failure> {
    if days == 0 {
        return Err(Failure::validation("ConfigError", "--days must be >= 1"));
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("data"));
    std::fs::create_dir_all(&out).map_err(|e| Failure::io(&out, e))?;
    let traces = synthetic::generate(days);
    traces.write_to(&out).map_err(|e| Failure::io(&out, e))?;
    let config = serde_json::json!({
        "regions": "regions.csv",
        "latency": "latency.csv",
        "carbon": "carbon.csv",
        "workload": "workload.csv",
        "policies": ["latency", "carbon-20", "carbon-100", "carbon-400", "carbon-500"],
        "seed": cli.seed.unwrap_or(42),
        "hours": 24,
        "timesteps_per_hour": 60,
        "energy_per_request": 1e-4,
        "alpha": 0.5,
        "c": 100,
        "K": 500,
        "carbon_forecaster": "oracle",
        "workload_forecaster": "oracle",
        "out": "../out"
    });
    let text = serde_json::to_string_pretty(&config).map_err(|e| Failure::runtime("SerializeError", e))? + "\n";
    write(&out, "config.json", &text)?;
    println!("wrote {days} days of traces to {}", out.display());
    Ok(())
}
