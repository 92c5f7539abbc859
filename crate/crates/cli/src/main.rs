//! Experiment driver. `run` executes a configured comparison and writes the
//! CSV artifacts; `check` executes the invariant property suite. Exit codes:
//! 0 success, 1 configuration error, 2 property failure, 3 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ssum_core::error::Error;
use ssum_core::experiment::{
    emit_plot_data, property_suite, run_experiment, ExperimentConfig, ResultTable,
};

const EXIT_CONFIG: u8 = 1;
const EXIT_PROPERTY: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "ssum", version, about = "Seeded stochastic-optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment; write results.csv, per-method plot
    /// CSVs, and manifest.txt into the output directory.
    Run {
        /// Path to a key = value config file.
        config: PathBuf,
        /// Output directory (overrides the config's `out`; default `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides the config's `seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for Monte-Carlo scoring (never changes results).
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Run the invariant property suite for the config's scenario and print
    /// one pass/fail line per check.
    Check {
        /// Path to a key = value config file.
        config: PathBuf,
        /// Also write the report to <dir>/property_report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides the config's `seed`; the suite itself uses
        /// fixed internal seeds, so this only affects the echoed config).
        #[arg(long)]
        seed: Option<u64>,
        /// Accepted for symmetry with `run`; the suite is single-threaded.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
}

fn load_config(path: &Path, seed: Option<u64>, threads: usize) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::from_file(path).map_err(|e| e.to_string())?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if threads == 0 {
        return Err("--threads must be at least 1".to_string());
    }
    cfg.threads = threads;
    Ok(cfg)
}

fn print_timings(table: &ResultTable) {
    for method in table.methods() {
        let wall = table
            .rows_for(method)
            .map(|r| r.wall_time_s)
            .fold(0.0f64, f64::max);
        println!("method {}: {:.3} s (run + scoring)", method.name(), wall);
    }
}

fn cmd_run(config: &Path, out: Option<PathBuf>, seed: Option<u64>, threads: usize) -> u8 {
    let cfg = match load_config(config, seed, threads) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("config error: {msg}");
            return EXIT_CONFIG;
        }
    };
    let out_dir = out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let table = match run_experiment(&cfg) {
        Ok(table) => table,
        Err(Error::Config(msg)) => {
            eprintln!("config error: {msg}");
            return EXIT_CONFIG;
        }
        Err(e) => {
            eprintln!("runtime error: {e}");
            return EXIT_RUNTIME;
        }
    };
    match emit_plot_data(&cfg, &table, &out_dir) {
        Ok(written) => {
            print_timings(&table);
            for path in &written {
                println!("wrote {}", path.display());
            }
            println!("config hash {}", cfg.config_hash());
            0
        }
        Err(e) => {
            eprintln!("runtime error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn cmd_check(config: &Path, out: Option<PathBuf>, seed: Option<u64>, threads: usize) -> u8 {
    let cfg = match load_config(config, seed, threads) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("config error: {msg}");
            return EXIT_CONFIG;
        }
    };
    let report = property_suite(&cfg);
    let rendered = report.render();
    print!("{rendered}");
    if let Some(dir) = out {
        if let Err(e) = std::fs::create_dir_all(&dir)
            .and_then(|_| std::fs::write(dir.join("property_report.txt"), &rendered))
        {
            eprintln!("runtime error: {e}");
            return EXIT_RUNTIME;
        }
    }
    if report.all_passed() {
        0
    } else {
        EXIT_PROPERTY
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, out, seed, threads } => cmd_run(&config, out, seed, threads),
        Command::Check { config, out, seed, threads } => cmd_check(&config, out, seed, threads),
    };
    ExitCode::from(code)
}
