use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flatpoint::Error;
use flatpoint_cli::{
    cmd_asymptotics, cmd_correlate, cmd_holder, cmd_tail, cmd_validate, exit_code, write_error,
    Outcome, RunConfig,
};

#[derive(Parser)]
#[command(name = "flatpoint", version, about = "Billiard tables with a flat point: simulation and statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Geometry and dynamics invariants.
    Validate,
    /// Return-time tails from the window section.
    Tail,
    /// Map and flow correlation functions.
    Correlate,
    /// Hölder ratios of the roof function along stable and unstable pairs.
    Holder,
    /// Regression bundle for long window excursions.
    Asymptotics,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (wall time only; outputs do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Sample count for `tail` and `correlate`.
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Comma-separated excursion cells for `holder`.
    #[arg(long, global = true, value_delimiter = ',')]
    cells: Option<Vec<i64>>,
    #[arg(long, global = true)]
    n_min: Option<i64>,
}

impl Common {
    fn config(&self) -> flatpoint::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = self.beta {
            cfg.table.beta = v;
        }
        if let Some(v) = self.epsilon {
            cfg.table.epsilon = v;
        }
        if let Some(v) = self.samples {
            cfg.samples = v;
        }
        if let Some(v) = self.gamma {
            cfg.holder.gamma = Some(v);
        }
        if let Some(v) = &self.cells {
            cfg.holder.cells = v.clone();
        }
        if let Some(v) = self.n_min {
            cfg.asymptotics.n_min = v;
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, run): (&str, fn(&RunConfig) -> flatpoint::Result<Outcome>) = match cli.command {
        Command::Validate => ("validate", cmd_validate),
        Command::Tail => ("tail", cmd_tail),
        Command::Correlate => ("correlate", cmd_correlate),
        Command::Holder => ("holder", cmd_holder),
        Command::Asymptotics => ("asymptotics", cmd_asymptotics),
    };
    let cfg = match cli.common.config() {
        Ok(cfg) => cfg,
        Err(e) => {
            let out_dir = cli.common.out.clone().unwrap_or_else(|| RunConfig::default().out_dir);
            return fail(name, &out_dir, &e);
        }
    };
    match run(&cfg) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            if let Some(f) = &outcome.failure {
                eprintln!("{name}: {f}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => fail(name, &cfg.out_dir, &e),
    }
}

fn fail(name: &str, out_dir: &std::path::Path, e: &Error) -> ExitCode {
    eprintln!("{name}: {e}");
    write_error(out_dir, name, e);
    ExitCode::from(exit_code(e) as u8)
}
