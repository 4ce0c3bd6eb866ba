use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use wearsafe_core::harness::{report, run, HarnessError, ReportFormat, RunOptions, Scenario};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "wearsafe", version, about = "Wearable-network traffic safety simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.jsonl, summary.json and summary.csv.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the seed stored in the scenario.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        disable_advisories: bool,
        #[arg(long)]
        disable_plausibility: bool,
        #[arg(long)]
        channel_profile: Option<String>,
        /// Adds the coordinator state to the trace after every tick.
        #[arg(long)]
        dump_coordinator: bool,
    },
    /// Run every matching scenario with and without advisories.
    Batch {
        /// Glob pattern, e.g. 'scenarios/*.json'.
        #[arg(long)]
        scenarios: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Aggregate metrics from every trace.jsonl under a directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Text,
}

fn load(path: &Path) -> Result<Scenario, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Scenario::from_json(&text).map_err(|e| match e {
        HarnessError::Schema {
            line,
            column,
            path: field,
            message,
        } => HarnessError::Schema {
            line,
            column,
            path: format!("{}: {field}", path.display()),
            message,
        },
        HarnessError::Invalid { field, message } => HarnessError::Invalid {
            field: format!("{}: {field}", path.display()),
            message,
        },
        other => other,
    })
}

fn run_one(scenario: &Scenario, out: &Path, opts: &RunOptions) -> Result<String, HarnessError> {
    let output = run(scenario, opts)?;
    output.write(out)?;
    let m = &output.metrics;
    Ok(format!(
        "{}: seed {} collisions {} advisories {} reversals {} -> {}",
        scenario.name,
        scenario.seed,
        m.collisions,
        m.advisories_issued,
        m.reversals,
        out.display()
    ))
}

fn batch(pattern: &str, out: &Path, jobs: Option<usize>) -> Result<(), HarnessError> {
    let invalid = |message: String| HarnessError::Invalid {
        field: "--scenarios".into(),
        message,
    };
    let mut files: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| invalid(e.to_string()))?
        .filter_map(Result::ok)
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(invalid(format!("no files match {pattern}")));
    }
    // validate everything before simulating anything
    let scenarios = files
        .iter()
        .map(|p| load(p).map(|s| (p.file_stem().unwrap_or_default().to_string_lossy().into_owned(), s)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut work = Vec::new();
    for (stem, s) in scenarios {
        let mut baseline = s.clone();
        baseline.toggles.advisories = false;
        work.push((out.join(&stem), s));
        work.push((out.join(format!("{stem}.baseline")), baseline));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let lines = pool.install(|| {
        work.par_iter()
            .map(|(dir, s)| run_one(s, dir, &RunOptions::default()))
            .collect::<Result<Vec<_>, _>>()
    })?;
    for l in lines {
        println!("{l}");
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            disable_advisories,
            disable_plausibility,
            channel_profile,
            dump_coordinator,
        } => {
            let mut s = load(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if disable_advisories {
                s.toggles.advisories = false;
            }
            if disable_plausibility {
                s.toggles.plausibility = false;
            }
            if let Some(p) = channel_profile {
                s.channel_profile = p;
            }
            s.validate()?;
            println!("{}", run_one(&s, &out, &RunOptions { dump_coordinator })?);
        }
        Command::Batch { scenarios, out, jobs } => batch(&scenarios, &out, jobs)?,
        Command::Report { input, format } => {
            let r = report(&input)?;
            let f = match format {
                Format::Csv => ReportFormat::Csv,
                Format::Text => ReportFormat::Text,
            };
            print!("{}", r.render(f));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}
