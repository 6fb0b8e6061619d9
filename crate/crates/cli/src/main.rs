use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dynperturb::scenario::{self, exit, parse_config, preset_config, Pipeline, RunReport, ScenarioConfig, ScenarioError};

/// Deterministic scenario runner for almost-action perturbation and matrix lifting.
#[derive(Parser)]
#[command(name = "dynperturb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline selected by a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Recompute every table of a report bundle (a report.json or its directory).
    Verify {
        bundle: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Perturb a random action and solve it (preset unless a config is given).
    Solve(Shortcut),
    /// Residual-finiteness witness.
    Witness(Shortcut),
    /// Projection and partial-isometry lifting.
    Lift(Shortcut),
    /// Limit extraction followed by the solver.
    Limits(Shortcut),
    /// Covariance defects and the orbit-closure check on the circle.
    Covariance(Shortcut),
}

#[derive(Args)]
struct Shortcut {
    config: Option<PathBuf>,
    #[command(flatten)]
    opts: RunOpts,
}

#[derive(Args)]
struct RunOpts {
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write report.json and CSV tables here instead of printing the report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for per-level work.
    #[arg(long)]
    jobs: Option<usize>,
    /// Treat warnings as errors.
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, opts } => load(&config).and_then(|c| execute(c, &opts)),
        Command::Verify { bundle, jobs } => {
            set_jobs(jobs);
            verify_bundle(&bundle)
        }
        Command::Solve(s) => shortcut(Pipeline::Solve, s),
        Command::Witness(s) => shortcut(Pipeline::Witness, s),
        Command::Lift(s) => shortcut(Pipeline::Lift, s),
        Command::Limits(s) => shortcut(Pipeline::Limits, s),
        Command::Covariance(s) => shortcut(Pipeline::Covariance, s),
    };
    let code = code.unwrap_or_else(|(code, msg)| {
        eprintln!("error: {msg}");
        code
    });
    ExitCode::from(code as u8)
}

type Outcome = Result<i32, (i32, String)>;

fn fail(e: ScenarioError) -> (i32, String) {
    (e.exit_code(), e.to_string())
}

fn set_jobs(jobs: Option<usize>) {
    if let Some(k) = jobs {
        // only the first call can configure the global pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, (i32, String)> {
    let text = fs::read_to_string(path).map_err(|e| (exit::OTHER, format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(fail)
}

fn shortcut(pipeline: Pipeline, s: Shortcut) -> Outcome {
    let config = match &s.config {
        Some(p) => {
            let c = load(p)?;
            if c.pipeline != pipeline {
                return Err((
                    exit::CONFIG,
                    format!("config error at pipeline: expected {}, found {}", pipeline.name(), c.pipeline.name()),
                ));
            }
            c
        }
        None => preset_config(pipeline, 0),
    };
    execute(config, &s.opts)
}

fn execute(mut config: ScenarioConfig, opts: &RunOpts) -> Outcome {
    set_jobs(opts.jobs);
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    let mut report = scenario::run(&config).map_err(fail)?;
    if opts.strict {
        report.apply_strict();
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    match &opts.out {
        Some(dir) => write_bundle(dir, &report).map_err(|e| (exit::OTHER, e))?,
        None => emit(&report),
    }
    let v = &report.verdict;
    eprintln!(
        "{}{}{} (exit {})",
        v.status,
        v.kind.as_deref().map(|k| format!(" [{k}]")).unwrap_or_default(),
        v.message.as_deref().map(|m| format!(": {m}")).unwrap_or_default(),
        report.exit_code
    );
    Ok(report.exit_code)
}

/// Pretty JSON on stdout; a closed pipe is not an error.
fn emit<T: Serialize>(value: &T) {
    let mut out = std::io::stdout().lock();
    if serde_json::to_writer_pretty(&mut out, value).is_ok() {
        let _ = writeln!(out);
    }
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<(), String> {
    if rows.is_empty() {
        return Ok(());
    }
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    for r in rows {
        w.serialize(r).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    w.flush().map_err(|e| format!("{}: {e}", path.display()))
}

fn write_bundle(dir: &Path, report: &RunReport) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(dir.join("report.json"), json).map_err(|e| e.to_string())?;
    let t = &report.tables;
    if let Some(d) = &t.defects {
        write_csv(dir, "defects.csv", &d.rows)?;
    }
    write_csv(dir, "distances.csv", &t.distances)?;
    write_csv(dir, "relations.csv", &t.relations)?;
    write_csv(dir, "rejected.csv", &t.rejected)?;
    write_csv(dir, "certificate.csv", &t.certificate)?;
    write_csv(dir, "lift.csv", &t.lift)?;
    write_csv(dir, "covariance.csv", &t.covariance)?;
    write_csv(dir, "embedding.csv", &t.embedding)?;
    Ok(())
}

fn verify_bundle(path: &Path) -> Outcome {
    let file = if path.is_dir() { path.join("report.json") } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).map_err(|e| (exit::OTHER, format!("{}: {e}", file.display())))?;
    let report: RunReport =
        serde_json::from_str(&text).map_err(|e| (exit::OTHER, format!("{}: not a report: {e}", file.display())))?;
    let mismatches = scenario::verify(&report).map_err(fail)?;
    emit(&mismatches);
    if mismatches.is_empty() {
        eprintln!("pass");
        Ok(exit::OK)
    } else {
        eprintln!("{} mismatch(es)", mismatches.len());
        Ok(exit::VERIFY_MISMATCH)
    }
}
