use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rmtpair_core::experiments::{load_report, run_experiment, ExperimentConfig, SampleFormat};
use rmtpair_core::Error;
use serde_json::Value;

#[derive(Parser)]
#[command(name = "rmtpair", version, about = "Experiments on pairs of correlated Wigner-type matrices")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and every model it references.
    Validate {
        config: PathBuf,
        #[arg(long)]
        allow_large: bool,
    },
    /// Run an experiment and write a run directory.
    Run(RunArgs),
    /// Run once per entry of `n_list`, one run directory per N.
    Sweep(RunArgs),
    /// Print the summary of a finished run after checking its config hash.
    Report {
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's, else runs/<experiment>-<hash>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Format of the per-sample table.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Lift the N <= 1000 and 1e5-sample caps.
    #[arg(long)]
    allow_large: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::InvalidSpec(_) | Error::ResourceGuard(_) | Error::HashMismatch { .. } => {
                Failure::Validation(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::load(path).map_err(|e| Failure::Runtime(format!("cannot read config {}: {e}", path.display())))
}

fn prepare(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let mut config = load(&args.config)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    let out = match (&args.out, &config.output_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => PathBuf::from("runs").join(format!("{}-{}", config.experiment.label(), &config.content_hash()[..12])),
    };
    config.output_dir = Some(out.display().to_string());
    config.validate(args.allow_large)?;
    Ok((config, out))
}

fn sample_format(f: Format) -> SampleFormat {
    match f {
        Format::Csv => SampleFormat::Csv,
        Format::Json => SampleFormat::Json,
    }
}

fn run_one(config: &ExperimentConfig, out: &Path, args: &RunArgs) -> Result<(), Failure> {
    let record = run_experiment(config, args.allow_large)?;
    record.write(out, sample_format(args.format))?;
    eprintln!("wrote {} ({:.1} s)", out.display(), record.wall_clock_seconds);
    Ok(())
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Null => Some(String::new()),
        _ => None,
    }
}

/// Scalar fields of each summary group as CSV rows.
fn groups_csv(summary: &Value) -> String {
    let groups = summary["groups"].as_array().cloned().unwrap_or_default();
    let Some(Value::Object(first)) = groups.first() else {
        return String::new();
    };
    let keys: Vec<&String> = first.iter().filter(|(_, v)| scalar(v).is_some()).map(|(k, _)| k).collect();
    let mut out = keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(",") + "\n";
    for g in &groups {
        let row: Vec<String> = keys.iter().map(|k| g.get(k.as_str()).and_then(scalar).unwrap_or_default()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { config, allow_large } => {
            let c = load(&config)?;
            c.validate(allow_large)?;
            println!("{}: ok ({}, {} grid points)", config.display(), c.experiment.label(), c.grid().len());
        }
        Command::Run(args) => {
            let (config, out) = prepare(&args)?;
            run_one(&config, &out, &args)?;
        }
        Command::Sweep(args) => {
            let (config, out) = prepare(&args)?;
            let mut index = Vec::new();
            for &n in &config.n_list {
                let mut c = config.clone();
                c.n_list = vec![n];
                let dir = out.join(format!("n{n}"));
                c.output_dir = Some(dir.display().to_string());
                run_one(&c, &dir, &args)?;
                index.push(serde_json::json!({ "n": n, "dir": format!("n{n}"), "config_hash": c.content_hash() }));
            }
            let body = serde_json::to_string_pretty(&index).map_err(|e| Failure::Runtime(e.to_string()))?;
            std::fs::write(out.join("sweep.json"), body + "\n").map_err(|e| Failure::Runtime(e.to_string()))?;
        }
        Command::Report { run_dir, format } => {
            let report = load_report(&run_dir)?;
            match format {
                Format::Json => {
                    let s = serde_json::to_string_pretty(&report.summary).map_err(|e| Failure::Runtime(e.to_string()))?;
                    println!("{s}");
                }
                Format::Csv => print!("{}", groups_csv(&report.summary)),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("validation failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
