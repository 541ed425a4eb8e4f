mod config;
mod run;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use ommap_core::counterexamples::{reproduce_figure, FIGURE_IDS};
use ommap_core::report::Table;

use config::{parse_config, SchemaError};
use run::RunError;

#[derive(Parser)]
#[command(name = "ommap", version, about = "Onsager-Machlup functionals, modes and MAP estimators")]
struct Cli {
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "OMMAP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run { config: PathBuf },
    /// Check a config against the schema without running it.
    Validate { config: PathBuf },
    /// Regenerate the data behind a figure.
    Reproduce {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(FIGURE_IDS))]
        figure_id: String,
    },
}

/// Failures tagged with their exit status.
enum Failure {
    Schema(String),
    Numerical(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<SchemaError> for Failure {
    fn from(e: SchemaError) -> Self {
        Failure::Schema(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Schema(m) => Failure::Schema(m),
            RunError::Numerical(m) => Failure::Numerical(m),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Schema(m)) => {
            eprintln!("error: invalid config: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("error: numerical failure: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Validate { config } => {
            let text = read(&config)?;
            let cfg = parse_config(&text)?;
            println!("{}: ok ({})", config.display(), cfg.experiment.kind());
            Ok(())
        }
        Command::Run { config } => {
            let text = read(&config)?;
            let cfg = parse_config(&text)?;
            let seed = cli.seed.or(cfg.seed).unwrap_or(0);
            let out = cli.out.or(cfg.output).unwrap_or_else(|| PathBuf::from("results"));
            let output = run::run(&cfg.experiment, seed)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let tables: Vec<_> = output.tables.iter().map(|t| json!({ "name": t.name, "columns": t.columns, "rows": t.rows })).collect();
            let doc = json!({
                "kind": cfg.experiment.kind(),
                "seed": seed,
                "config": cfg.raw,
                "report": output.report,
                "tables": tables,
            });
            let path = out.join("results.json");
            let body = serde_json::to_string_pretty(&doc).context("serialising results")?;
            fs::write(&path, body + "\n").with_context(|| format!("writing {}", path.display()))?;
            for t in &output.tables {
                write_table(&out, t)?;
            }
            println!("{}", path.display());
            Ok(())
        }
        Command::Reproduce { figure_id } => {
            let fig = reproduce_figure(&figure_id)?;
            let out = cli.out.unwrap_or_else(|| PathBuf::from("figures"));
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let path = out.join(format!("{}.csv", fig.id));
            let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
            w.write_record(&fig.columns).context("writing csv")?;
            for row in &fig.rows {
                w.write_record(row.iter().map(|x| format!("{x:e}"))).context("writing csv")?;
            }
            w.flush().context("writing csv")?;
            let mpath = out.join(format!("{}_markers.csv", fig.id));
            let mut m = csv::Writer::from_path(&mpath).with_context(|| format!("writing {}", mpath.display()))?;
            m.write_record(["marker", "x"]).context("writing csv")?;
            for (name, x) in &fig.markers {
                m.write_record([name.clone(), format!("{x:e}")]).context("writing csv")?;
            }
            m.flush().context("writing csv")?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

impl From<ommap_core::Error> for Failure {
    fn from(e: ommap_core::Error) -> Self {
        RunError::from(e).into()
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_table(dir: &Path, t: &Table) -> Result<()> {
    let path = dir.join(format!("{}.csv", t.name));
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(&t.columns)?;
    for row in &t.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
