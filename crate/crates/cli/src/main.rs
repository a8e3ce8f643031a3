use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use comimo_cli::{parse_cases, parse_config, parse_seeds, run_experiment, summarize, ExperimentPlan};

#[derive(Parser)]
#[command(name = "comimo", version, about = "Collaborative multi-device MIMO system simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a case/seed matrix and write records.csv, loc_results.csv and summary.json.
    Run {
        /// Key-value configuration file; flags override its keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated cases, e.g. `baseline,diversity`.
        #[arg(long)]
        case: Option<String>,
        /// Seed count `N` (seeds 0..N) or a comma-separated list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the gain table of one or more records.csv files.
    Summarize {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run { config, case, seeds, out, threads } => {
            let mut plan = match config {
                Some(p) => parse_config(&p)?,
                None => ExperimentPlan::default(),
            };
            if let Some(c) = case {
                plan.cases = parse_cases(&c).map_err(|e| format!("--case: {e}"))?;
            }
            if let Some(s) = seeds {
                plan.seeds = parse_seeds(&s).map_err(|e| format!("--seeds: {e}"))?;
            }
            if let Some(o) = out {
                plan.out_dir = o;
            }
            if let Some(t) = threads {
                plan.threads = (t > 0).then_some(t);
            }
            let summary = run_experiment(&plan)?;
            for c in &summary.throughput {
                if let (Some(e), Some(m)) = (c.gain_cell_edge_pct, c.gain_mean_pct) {
                    println!("{}: {:+.1}% cell-edge, {:+.1}% average", c.case, e, m);
                }
            }
            for l in &summary.localization {
                println!("{}: median AoA error {:.2} deg, median position error {:.2} m", l.case, l.median_aoa_err_deg, l.median_pos_err_m);
            }
            println!("results in {}", plan.out_dir.display());
        }
        Command::Summarize { records, json } => {
            let table = summarize(&records)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&table)?);
            } else {
                print!("{table}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
