use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use onebit_swap::harness::{
    cmd_bench, cmd_check, cmd_exhaustive, cmd_stress, exit, exit_code, BackendKind, InputPattern,
    Mode, RunConfig,
};
use onebit_swap::{Bit, Error};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Exhaustive,
    Stress,
    Bench,
    Check,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Atomic,
    Regtree,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PatternArg {
    AllOnes,
    AllZeros,
    Alternating,
    Mixed,
    Random,
}

/// Runs, stress-tests and verifies the one-bit swap object.
#[derive(Debug, Parser)]
#[command(name = "onebit-swap", version)]
struct Cli {
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Number of processes (threads).
    #[arg(long)]
    procs: Option<usize>,
    /// Swaps per process.
    #[arg(long)]
    ops: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "atomic")]
    backend: BackendArg,
    /// Initial value of the swap object.
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
    init: u8,
    /// Register-tree capacity (power of two); sized to the run by default.
    #[arg(long)]
    capacity: Option<u64>,
    /// History output path (stress) or report output path (other modes).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Lift the exhaustive and brute-force size limits.
    #[arg(long)]
    force_large: bool,
    /// Input patterns, comma separated.
    #[arg(long, value_enum, value_delimiter = ',')]
    pattern: Vec<PatternArg>,
    /// History file to verify in check mode.
    path: Option<PathBuf>,
}

impl Cli {
    fn config(self) -> RunConfig {
        let mode = match self.mode {
            ModeArg::Exhaustive => Mode::Exhaustive,
            ModeArg::Stress => Mode::Stress,
            ModeArg::Bench => Mode::Bench,
            ModeArg::Check => Mode::Check,
        };
        let mut cfg = RunConfig::new(mode);
        if let Some(p) = self.procs {
            cfg.procs = p;
        }
        if let Some(k) = self.ops {
            cfg.ops_per_proc = k;
        }
        cfg.seed = self.seed;
        cfg.backend = match self.backend {
            BackendArg::Atomic => BackendKind::Atomic,
            BackendArg::Regtree => BackendKind::Regtree,
        };
        cfg.init = Bit::from(self.init == 1);
        cfg.capacity = self.capacity;
        cfg.out = self.out;
        cfg.force_large = self.force_large;
        cfg.patterns = self
            .pattern
            .into_iter()
            .map(|p| match p {
                PatternArg::AllOnes => InputPattern::AllOnes,
                PatternArg::AllZeros => InputPattern::AllZeros,
                PatternArg::Alternating => InputPattern::Alternating,
                PatternArg::Mixed => InputPattern::Mixed,
                PatternArg::Random => InputPattern::Random,
            })
            .collect();
        cfg.input = self.path;
        cfg
    }
}

fn run(cfg: &RunConfig) -> Result<(String, bool), Error> {
    Ok(match cfg.mode {
        Mode::Exhaustive => {
            let r = cmd_exhaustive(cfg)?;
            (r.to_string(), r.passed())
        }
        Mode::Stress => {
            let reports = cmd_stress(cfg)?;
            let text: Vec<String> = reports.iter().map(ToString::to_string).collect();
            (text.join("\n"), reports.iter().all(|r| r.passed()))
        }
        Mode::Bench => {
            let r = cmd_bench(cfg)?;
            if let Some(e) = r.capacity_error() {
                eprintln!("{r}");
                return Err(e.clone());
            }
            (r.to_string(), r.passed())
        }
        Mode::Check => {
            let r = cmd_check(cfg)?;
            (r.to_string(), r.passed())
        }
    })
}

fn main() -> ExitCode {
    let cfg = Cli::parse().config();
    let code = match run(&cfg) {
        Ok((text, passed)) => {
            println!("{text}");
            let mut code = if passed { exit::OK } else { exit::VERIFICATION };
            if let (Some(out), Mode::Exhaustive | Mode::Bench) = (&cfg.out, cfg.mode) {
                if let Err(e) = std::fs::write(out, format!("{text}\n")) {
                    eprintln!("error: cannot write {}: {e}", out.display());
                    code = exit::VERIFICATION;
                }
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
