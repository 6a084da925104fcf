use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use aoi_tandem::experiments::{self, OutputFormat, SimSettings, SweepSpec, FIGURES};

#[derive(Parser)]
#[command(name = "aoi-tandem", version, about = "Age of information in unreliable tandem queues")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Base seed for simulation replications (replicate i uses seed + i).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Jsonl => OutputFormat::Jsonl,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a parameter grid described by a JSON sweep spec.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output file; defaults to the spec's output_path, then ./sweep.<ext>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate the data behind a figure (or `all`).
    Reproduce {
        figure: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Simulated time per replication.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Run the analytic-vs-oracle validation matrix.
    Validate {
        #[arg(long, default_value = "default")]
        suite: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Locate the AAoI-minimizing arrival rate for each alpha and engine.
    LambdaStar {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_spec(path: &Path, seed: Option<u64>) -> Result<SweepSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut spec = SweepSpec::from_json(&text).with_context(|| format!("in {}", path.display()))?;
    if let Some(s) = seed {
        spec.sim.base_seed = s;
    }
    Ok(spec)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let format = OutputFormat::from(cli.format);
    match cli.command {
        Command::Sweep { config, out } => {
            let spec = load_spec(&config, cli.seed)?;
            let out = out
                .or_else(|| spec.output_path.clone())
                .unwrap_or_else(|| PathBuf::from(format!("sweep.{}", format.extension())));
            let rows = experiments::run_sweep(&spec, &out, format)?;
            let unstable = rows.iter().filter(|r| !r.stable).count();
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            println!("wrote {} rows to {} ({unstable} unstable, {failed} without a value)", rows.len(), out.display());
        }
        Command::Reproduce {
            figure,
            out,
            horizon,
            replications,
        } => {
            let mut sim = SimSettings::default();
            if let Some(h) = horizon {
                sim.horizon = h;
            }
            if let Some(r) = replications {
                sim.replications = r;
            }
            if let Some(s) = cli.seed {
                sim.base_seed = s;
            }
            let figures: Vec<&str> = if figure == "all" {
                FIGURES.to_vec()
            } else {
                vec![figure.as_str()]
            };
            for fig in figures {
                let result = experiments::reproduce(fig, sim)?;
                for p in experiments::write_figure(&result, sim, &out, format)? {
                    println!("{fig}: {}", p.display());
                }
            }
        }
        Command::Validate { suite, out } => {
            let report = experiments::validate(&suite)?;
            experiments::write_validation(&report, &out)?;
            print!("{}", report.text());
            println!("report written to {}", out.display());
        }
        Command::LambdaStar { config, out } => {
            let spec = load_spec(&config, cli.seed)?;
            let table = experiments::lambda_star_table(&spec)?;
            let text = serde_json::to_string_pretty(&table)?;
            match out {
                Some(p) => {
                    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                        fs::create_dir_all(dir)?;
                    }
                    fs::write(&p, text + "\n").with_context(|| format!("writing {}", p.display()))?;
                    println!("wrote {}", p.display());
                }
                None => println!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
