//! Command-line front end: full runs, single stages, scoring, and seed
//! batches. Exit codes: 0 ok, 2 config error, 3 pipeline error (with a
//! machine-readable reason.json in the run directory).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vascusim::artifacts::{self, RunDir};
use vascusim::config::ScenarioConfig;
use vascusim::pipeline::{self, Stage};
use vascusim::Error;

#[derive(Parser)]
#[command(name = "vascusim", version, about = "Vascular access pipeline simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scan → track → recon → plan → insert and score the run.
    Run {
        /// Scenario config JSON.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory (defaults to the config's out_dir, then ./out).
        #[arg(long)]
        out: Option<PathArg>,
    },
    /// Run exactly one stage from prior artifacts in the run directory.
    Stage {
        #[arg(long)]
        config: PathBuf,
        /// One of scan|track|recon|plan|insert.
        #[arg(long)]
        stage: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathArg>,
    },
    /// Score an existing run directory against ground truth.
    Metrics {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathArg>,
    },
    /// Run many seeds, one run directory per seed, and summarize.
    Batch {
        #[arg(long)]
        config: PathBuf,
        /// Seed set: a range "0..20" or a comma list "1,5,9".
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        out: Option<PathArg>,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
}

type PathArg = PathBuf;

struct Failure {
    code: u8,
    message: String,
    /// Run directory for the machine-readable reason file, when known.
    out: Option<PathBuf>,
}

fn classify(err: &Error) -> u8 {
    match err {
        Error::Validation(_) | Error::Config(_) => 2,
        _ => 3,
    }
}

fn fail(err: Error, out: Option<&RunDir>) -> Failure {
    Failure {
        code: classify(&err),
        message: err.to_string(),
        out: out.map(|d| d.root.clone()),
    }
}

fn resolve_out(config: &ScenarioConfig, flag: Option<PathBuf>) -> RunDir {
    let root = flag
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    RunDir::new(root)
}

fn load_scenario(path: &PathBuf, seed: Option<u64>) -> Result<ScenarioConfig, Failure> {
    let mut scenario = ScenarioConfig::load(path).map_err(|e| fail(e, None))?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn cmd_run(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let scenario = load_scenario(&config, seed)?;
    let dir = resolve_out(&scenario, out);
    let report = pipeline::run_all(&scenario, &dir).map_err(|e| fail(e, Some(&dir)))?;
    println!("{}", report.summary());
    println!("artifacts in {}", dir.root.display());
    Ok(())
}

fn cmd_stage(
    config: PathBuf,
    stage: String,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let scenario = load_scenario(&config, seed)?;
    let stage = Stage::parse(&stage).map_err(|e| fail(e, None))?;
    let dir = resolve_out(&scenario, out);
    std::fs::create_dir_all(&dir.root)
        .map_err(|e| fail(Error::Config(format!("{}: {e}", dir.root.display())), None))?;
    pipeline::run_stage(stage, &scenario, &dir).map_err(|e| fail(e, Some(&dir)))?;
    println!("stage {} complete in {}", stage.name(), dir.root.display());
    Ok(())
}

fn cmd_metrics(config: PathBuf, out: Option<PathBuf>) -> Result<(), Failure> {
    let scenario = load_scenario(&config, None)?;
    let dir = resolve_out(&scenario, out);
    let report =
        pipeline::compute_run_metrics(&scenario, &dir).map_err(|e| fail(e, Some(&dir)))?;
    artifacts::write_metrics(&dir.metrics(), &report).map_err(|e| fail(e, Some(&dir)))?;
    println!("{}", report.summary());
    Ok(())
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, Failure> {
    let bad = |msg: String| Failure { code: 2, message: msg, out: None };
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| bad(format!("bad seed range '{spec}'")))?;
        let hi: u64 = hi.trim().parse().map_err(|_| bad(format!("bad seed range '{spec}'")))?;
        if hi <= lo {
            return Err(bad(format!("empty seed range '{spec}'")));
        }
        return Ok((lo..hi).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad(format!("bad seed '{s}'"))))
        .collect()
}

#[derive(serde::Serialize)]
struct BatchEntry {
    seed: u64,
    dir: String,
    successes: usize,
    attempts: usize,
    detection_recall: f64,
    error: Option<String>,
}

#[derive(serde::Serialize)]
struct BatchSummary {
    schema_version: u32,
    runs: Vec<BatchEntry>,
    completed: usize,
    mean_recall: f64,
    success_rate: f64,
}

fn cmd_batch(
    config: PathBuf,
    seeds: String,
    out: Option<PathBuf>,
    workers: usize,
) -> Result<(), Failure> {
    let scenario = load_scenario(&config, None)?;
    let seeds = parse_seeds(&seeds)?;
    let dir = resolve_out(&scenario, out);
    std::fs::create_dir_all(&dir.root)
        .map_err(|e| fail(Error::Config(format!("{}: {e}", dir.root.display())), None))?;

    let workers = workers.max(1).min(seeds.len().max(1));
    let mut entries: Vec<BatchEntry> = Vec::with_capacity(seeds.len());
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let scenario = scenario.clone();
                let seeds = &seeds;
                let root = dir.root.clone();
                scope.spawn(move || {
                    let mut local = Vec::new();
                    for &seed in seeds.iter().skip(w).step_by(workers) {
                        let mut s = scenario.clone();
                        s.seed = seed;
                        let run_dir = root.join(format!("seed_{seed:04}"));
                        let outcome = pipeline::run_to(&s, &run_dir);
                        local.push(match outcome {
                            Ok(report) => BatchEntry {
                                seed,
                                dir: run_dir.display().to_string(),
                                successes: report.total_successes,
                                attempts: report.total_attempts,
                                detection_recall: report.detection_recall,
                                error: None,
                            },
                            Err(e) => BatchEntry {
                                seed,
                                dir: run_dir.display().to_string(),
                                successes: 0,
                                attempts: 0,
                                detection_recall: 0.0,
                                error: Some(e.to_string()),
                            },
                        });
                    }
                    local
                })
            })
            .collect();
        for handle in handles {
            entries.extend(handle.join().expect("batch worker panicked"));
        }
    });
    entries.sort_by_key(|e| e.seed);

    let done: Vec<&BatchEntry> = entries.iter().filter(|e| e.error.is_none()).collect();
    let completed = done.len();
    let mean_recall =
        done.iter().map(|e| e.detection_recall).sum::<f64>() / completed.max(1) as f64;
    let success_rate = done.iter().map(|e| e.successes).sum::<usize>() as f64
        / done.iter().map(|e| e.attempts).sum::<usize>().max(1) as f64;
    let summary = BatchSummary {
        schema_version: artifacts::SCHEMA_VERSION,
        runs: entries,
        completed,
        mean_recall,
        success_rate,
    };
    artifacts::write_json(&dir.root.join("batch_summary.json"), &summary)
        .map_err(|e| fail(e, Some(&dir)))?;
    println!(
        "batch: {completed}/{} runs, mean recall {mean_recall:.3}, success rate {success_rate:.3}",
        summary.runs.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => cmd_run(config, seed, out),
        Command::Stage { config, stage, seed, out } => cmd_stage(config, stage, seed, out),
        Command::Metrics { config, out } => cmd_metrics(config, out),
        Command::Batch { config, seeds, out, workers } => cmd_batch(config, seeds, out, workers),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            if failure.code == 3 {
                if let Some(root) = &failure.out {
                    artifacts::write_reason(
                        &RunDir::new(root.clone()).reason(),
                        i32::from(failure.code),
                        &failure.message,
                    );
                }
            }
            ExitCode::from(failure.code)
        }
    }
}
