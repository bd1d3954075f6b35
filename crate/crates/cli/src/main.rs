mod qcalc;
mod replay;
mod run;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit codes shared by every subcommand.
pub mod exit {
    pub const OK: u8 = 0;
    pub const CHECK_FAILED: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const ABORTED: u8 = 3;
}

#[derive(Parser)]
#[command(name = "rsagg", version, about = "Byzantine-robust secure aggregation simulator")]
struct Cli {
    /// Cap on worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training experiment and write metrics, summary and transcript.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Record wall-clock phase times (makes the CSV non-reproducible).
        #[arg(long)]
        timings: bool,
    },
    /// Minimal number of sampled checks q and the detection curve.
    Qcalc {
        #[arg(long)]
        l: usize,
        #[arg(long)]
        sm: f64,
        #[arg(long, default_value_t = 0.005)]
        delta: f64,
        /// Last q printed in the curve (defaults to 2q, capped at l).
        #[arg(long)]
        max_q: Option<usize>,
    },
    /// Fast invariant checks on the primitives.
    Selftest {
        /// Corrupt one MAC so the IT-MAC check must fail.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Re-execute a run from its transcript and compare every message.
    Replay {
        /// Path to `transcript.bin` (the index `transcript.json` sits next to it)
        /// or to the run output directory.
        path: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(exit::USAGE);
        }
    }
    let code = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            timings,
        } => run::cmd_run(&config, &out, seed, timings, cli.verbose),
        Command::Qcalc { l, sm, delta, max_q } => qcalc::cmd_qcalc(l, sm, delta, max_q),
        Command::Selftest { inject_fault } => selftest::cmd_selftest(inject_fault),
        Command::Replay { path } => replay::cmd_replay(&path, cli.verbose),
    };
    ExitCode::from(code)
}
