use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use utail::config::{parse_config, ExperimentConfig, V_MODE_TOKENS};
use utail::error::Error;
use utail::experiment::{property_violations, run_experiment_stages, RunOutcome, CATALOG_VERSION, STAGES};
use utail::kernels::KERNEL_TOKENS;
use utail::tail_models::DistributionModel;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_PROPERTY: u8 = 4;

#[derive(Parser)]
#[command(name = "utail", version, about = "Tail bounds and Monte Carlo checks for heavy-tailed U-statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List distribution families, kernels and v modes.
    Catalog,
    /// Assumption checks for each n.
    Check(StageArgs),
    /// Upper bound over the n x t grid.
    Bound(StageArgs),
    /// Monte Carlo tail estimates with bounds attached.
    Tail(StageArgs),
    /// Rate-function ratio scan.
    LdpScan(StageArgs),
    /// Full pipeline: check, bound, tail, ldp-scan.
    Run(StageArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Master seed; overrides UTAIL_SEED and the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Exit with status 4 if a bound or sandwich property is violated.
    #[arg(long = "assert")]
    assert_properties: bool,
}

enum Failure {
    Config(String),
    Runtime(String),
    Property(Vec<String>),
}

impl Failure {
    fn from_error(e: Error, context: &str) -> Self {
        match e {
            Error::Config(_) | Error::Syntax { .. } | Error::UnknownToken { .. } | Error::ParameterDomain(_) => {
                Failure::Config(format!("{context}{e}"))
            }
            other => Failure::Runtime(format!("{context}{other}")),
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = parse_config(&text).map_err(|e| Failure::from_error(e, ""))?;
    let env_seed = match std::env::var("UTAIL_SEED") {
        Ok(s) => Some(s.trim().parse::<u64>().map_err(|_| Failure::Config(format!("UTAIL_SEED: not an integer: {s:?}")))?),
        Err(_) => None,
    };
    if let Some(s) = seed.or(env_seed) {
        config.mc.seed = s;
    }
    Ok(config)
}

fn summarize(outcome: &RunOutcome) {
    for s in &outcome.manifest.stages {
        let file = s.file.as_deref().unwrap_or("-");
        let rows = s.rows.map(|r| r.to_string()).unwrap_or_else(|| "-".into());
        println!("{:<9} {:<8} {:<16} rows={rows}", s.name, s.status, file);
    }
    println!("manifest  {}", outcome.out_dir.join(&outcome.manifest.config.outputs.manifest).display());
}

fn run_stages(args: &StageArgs, stages: &[&str]) -> Result<(), Failure> {
    let config = load_config(&args.config, args.seed)?;
    let work = || -> Result<(), Failure> {
        let outcome = run_experiment_stages(&config, &args.out_dir, stages).map_err(|f| {
            let ctx = format!("stage `{}` failed (manifest at {}): ", f.stage, f.manifest_path.display());
            Failure::from_error(f.error, &ctx)
        })?;
        summarize(&outcome);
        if args.assert_properties {
            let v = property_violations(&outcome);
            if !v.is_empty() {
                return Err(Failure::Property(v));
            }
        }
        Ok(())
    };
    match args.threads {
        Some(0) => Err(Failure::Config("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
            pool.install(work)
        }
        None => work(),
    }
}

fn catalog() -> serde_json::Value {
    let models: Vec<_> = DistributionModel::catalog()
        .iter()
        .map(|m| {
            json!({
                "family": m.family_name(),
                "token": m.to_string(),
                "tail_class": format!("{:?}", m.tail_class()),
                "subadditivity_shift": m.subadditivity_shift(),
                "subweibull": m.subweibull_params(),
            })
        })
        .collect();
    json!({
        "catalog_version": CATALOG_VERSION,
        "models": models,
        "kernels": KERNEL_TOKENS,
        "v_modes": V_MODE_TOKENS,
        "stages": STAGES,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Catalog => {
            println!("{}", serde_json::to_string_pretty(&catalog()).expect("serializable"));
            Ok(())
        }
        Command::Check(a) => run_stages(a, &["check"]),
        Command::Bound(a) => run_stages(a, &["bound"]),
        Command::Tail(a) => run_stages(a, &["tail"]),
        Command::LdpScan(a) => run_stages(a, &["ldp-scan"]),
        Command::Run(a) => run_stages(a, &STAGES),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Property(v)) => {
            for line in &v {
                eprintln!("property violation: {line}");
            }
            ExitCode::from(EXIT_PROPERTY)
        }
    }
}
