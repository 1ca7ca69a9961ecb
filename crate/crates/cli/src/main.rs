use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clmds::datagen::HolesSpec;
use clmds_cli::commands::{datagen_holes, datagen_s_curve, embed, metrics_voronoi};
use clmds_cli::{CliError, RunConfig};
use serde_json::json;

/// Cluster MDS embeddings of distance matrices and descriptor sets.
#[derive(Parser)]
#[command(name = "clmds", version)]
struct Cli {
    /// Worker threads for the pipeline; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed the configured input and write coords.csv, result.json and optionally plot.svg.
    Embed(EmbedArgs),
    /// Write synthetic datasets.
    #[command(subcommand)]
    Datagen(Datagen),
    /// Quality metrics over finished runs.
    #[command(subcommand)]
    Metrics(Metrics),
}

#[derive(Args)]
struct EmbedArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set clmds.hierarchy=[12,1]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Also write plot.svg.
    #[arg(long)]
    plot: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Datagen {
    /// Points on the 3-D S-shaped surface.
    SCurve {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Unit square with circular holes; features are distances to the hole centers.
    Holes {
        #[arg(long, default_value_t = HolesSpec::default().n_points)]
        n_points: usize,
        #[arg(long, default_value_t = HolesSpec::default().n_holes)]
        n_holes: usize,
        #[arg(long, default_value_t = HolesSpec::default().hole_radius)]
        hole_radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum Metrics {
    /// Fraction of points inside their own medoid's Voronoi cell.
    Voronoi {
        /// coords.csv, or a run directory containing one.
        path: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<serde_json::Value, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::new("threads", e.to_string()))?;
    match cli.command {
        Command::Embed(args) => {
            let mut sets = args.sets;
            if let Some(dir) = &args.output_dir {
                sets.push(format!("output.dir={:?}", dir.to_string_lossy()));
            }
            if args.plot {
                sets.push("output.plot=true".into());
            }
            if let Some(seed) = args.seed {
                sets.push(format!("clmds.seed={seed}"));
            }
            let cfg = RunConfig::load(args.config.as_deref(), &sets)?;
            let out = embed(&cfg)?;
            Ok(json!({
                "output_dir": out.dir,
                "files": out.files,
                "rows": out.n_rows,
                "estimated": out.n_estimated,
            }))
        }
        Command::Datagen(Datagen::SCurve { n, seed, output_dir }) => {
            Ok(json!({ "files": datagen_s_curve(n, seed, &output_dir)? }))
        }
        Command::Datagen(Datagen::Holes { n_points, n_holes, hole_radius, seed, output_dir }) => {
            let spec = HolesSpec { n_points, n_holes, hole_radius, seed };
            Ok(json!({ "files": datagen_holes(&spec, &output_dir)? }))
        }
        Command::Metrics(Metrics::Voronoi { path }) => Ok(json!({ "containment": metrics_voronoi(&path)? })),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", CliError::new("usage", first).to_json_line());
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::FAILURE
        }
    }
}
