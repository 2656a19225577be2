use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use asyncode::experiment::write_report;
use asyncode::spanner::default_k;
use asyncode::{
    emit_report, greedy_spanner, run_bfs, run_experiment, verify_bfs, verify_spanner, AdversarySpec, ExperimentConfig,
    Graph, OutputFormat,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "asyncode", version, about = "Noise-resilient asynchronous protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a BFS tree with the content-oblivious algorithm and verify it.
    Bfs {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 0)]
        root: usize,
        #[arg(long)]
        out: PathBuf,
        /// Seed for the random delivery schedule.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt every message in flight.
        #[arg(long)]
        noise: bool,
    },
    /// Build a greedy (2k-1)-spanner and verify it.
    Spanner {
        #[arg(long)]
        graph: PathBuf,
        /// Defaults to ceil(log2 n).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the experiment in a config file and print the report.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a config-driven batch and write the report into a directory.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_graph(path: &PathBuf) -> Result<Graph> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Graph::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Bfs { graph, root, out, seed, noise } => {
            let g = read_graph(&graph)?;
            let adversary = if noise { AdversarySpec::total_noise() } else { AdversarySpec::random() };
            let run = run_bfs(&g, root, &adversary, seed)?;
            fs::write(&out, run.tree.to_text()).with_context(|| format!("writing {}", out.display()))?;
            let v = verify_bfs(&g, root, &run.tree);
            println!(
                "messages={} spanning={} acyclic={} distance_correct={} children_consistent={}",
                run.metrics.messages_sent, v.spanning, v.acyclic, v.distance_correct, v.children_consistent
            );
            Ok(v.all())
        }
        Command::Spanner { graph, k, out } => {
            let g = read_graph(&graph)?;
            let k = k.unwrap_or_else(|| default_k(g.n()));
            let s = greedy_spanner(&g, k)?;
            fs::write(&out, s.to_text()).with_context(|| format!("writing {}", out.display()))?;
            let ok = verify_spanner(&g, &s.subgraph, s.t);
            println!("n={} m={} s={} t={} valid={ok}", g.n(), g.m(), s.s, s.t);
            Ok(ok)
        }
        Command::Simulate { config } => {
            let config = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let reports = run_experiment(&config)?;
            write_report(&reports, config.format, std::io::stdout().lock())?;
            Ok(reports.iter().all(|r| r.success))
        }
        Command::Sweep { config, out } => {
            let config = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let reports = run_experiment(&config)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let name = match config.format {
                OutputFormat::Csv => "report.csv",
                OutputFormat::Json => "report.json",
            };
            let dest = out.join(name);
            emit_report(&reports, config.format, &dest).with_context(|| format!("writing {}", dest.display()))?;
            let failed = reports.iter().filter(|r| !r.success).count();
            println!("{} runs, {failed} failed, report in {}", reports.len(), dest.display());
            if reports.is_empty() {
                bail!("no runs");
            }
            Ok(failed == 0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
