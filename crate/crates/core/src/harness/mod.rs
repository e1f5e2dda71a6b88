//! Run modes behind the command-line front end.
//!
//! * `exhaustive`: every schedule of a small program matrix, each history
//!   checked by both checkers.
//! * `stress`: real threads on a shared object, verified at quiescence.
//! * `bench`: step-count histograms and latency percentiles per backend.
//! * `check`: offline verification of a history file.

mod bench;
mod check;
mod exhaustive;
mod stress;

use std::fmt;
use std::path::PathBuf;

use rand_core::RngCore;

pub use bench::{cmd_bench, BackendBench, BenchReport};
pub use check::{cmd_check, records_path, CheckReport};
pub use exhaustive::{
    check_outcome, cmd_exhaustive, explore_stats, ExhaustiveReport, ExhaustiveStats, PatternRun,
};
pub use stress::{cmd_stress, run_threads, StressReport, StressRun};

use crate::base_objects::Backend;
use crate::error::Error;
use crate::rng;
use crate::Bit;

/// Exit statuses of the command-line tool.
pub mod exit {
    pub const OK: i32 = 0;
    pub const PARSE: i32 = 2;
    pub const REFUSAL: i32 = 3;
    pub const VERIFICATION: i32 = 4;
}

/// Exit status for an error: parse errors 2, refusals and capacity
/// exhaustion 3, everything else 4.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. } => exit::PARSE,
        Error::Refusal { .. } | Error::Capacity { .. } => exit::REFUSAL,
        Error::ContractViolation(_) | Error::Corruption(_) => exit::VERIFICATION,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exhaustive,
    Stress,
    Bench,
    Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Atomic,
    Regtree,
}

/// How each process picks the inputs of its swaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InputPattern {
    AllOnes,
    AllZeros,
    /// Process `p`, operation `k` swaps in `(p + k + 1) mod 2`.
    Alternating,
    /// Even processes all-ones, odd processes alternating.
    Mixed,
    /// Draws from SplitMix64, one generator per process; bit = draw mod 2.
    Random,
}

impl InputPattern {
    pub const FIXED: [InputPattern; 4] = [
        InputPattern::AllOnes,
        InputPattern::AllZeros,
        InputPattern::Alternating,
        InputPattern::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InputPattern::AllOnes => "all-ones",
            InputPattern::AllZeros => "all-zeros",
            InputPattern::Alternating => "alternating",
            InputPattern::Mixed => "mixed",
            InputPattern::Random => "random",
        }
    }

    /// Inputs for every process; process seeds come from
    /// [`rng::worker_seeds`].
    pub fn inputs(self, procs: usize, ops: usize, seed: u64) -> Vec<Vec<Bit>> {
        let seeds = rng::worker_seeds(seed, procs);
        (0..procs)
            .map(|p| match self {
                InputPattern::AllOnes => vec![Bit::One; ops],
                InputPattern::AllZeros => vec![Bit::Zero; ops],
                InputPattern::Alternating => alternating(p, ops),
                InputPattern::Mixed if p % 2 == 0 => vec![Bit::One; ops],
                InputPattern::Mixed => alternating(p, ops),
                InputPattern::Random => {
                    let mut r = rng::seeded(seeds[p]);
                    (0..ops).map(|_| Bit::of_parity(r.next_u64())).collect()
                }
            })
            .collect()
    }
}

fn alternating(p: usize, ops: usize) -> Vec<Bit> {
    (0..ops)
        .map(|k| Bit::of_parity((p + k + 1) as u64))
        .collect()
}

impl fmt::Display for InputPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub mode: Mode,
    pub procs: usize,
    pub ops_per_proc: usize,
    pub seed: u64,
    pub backend: BackendKind,
    pub init: Bit,
    /// Register-tree capacity; chosen from the swap count when absent.
    pub capacity: Option<u64>,
    pub out: Option<PathBuf>,
    pub force_large: bool,
    /// Empty means the mode's default.
    pub patterns: Vec<InputPattern>,
    /// History file for `check`.
    pub input: Option<PathBuf>,
}

/// Largest process count and per-process operation count exhaustive mode
/// accepts without `force_large`.
pub const EXHAUSTIVE_MAX_PROCS: usize = 3;
pub const EXHAUSTIVE_MAX_OPS: usize = 2;

impl RunConfig {
    pub fn new(mode: Mode) -> Self {
        let (procs, ops_per_proc) = match mode {
            Mode::Exhaustive => (2, 2),
            Mode::Stress | Mode::Bench => (4, 10_000),
            Mode::Check => (1, 1),
        };
        RunConfig {
            mode,
            procs,
            ops_per_proc,
            seed: 0,
            backend: BackendKind::Atomic,
            init: Bit::Zero,
            capacity: None,
            out: None,
            force_large: false,
            patterns: Vec::new(),
            input: None,
        }
    }

    pub fn total_swaps(&self) -> u64 {
        (self.procs * self.ops_per_proc) as u64
    }

    /// Patterns to run. Exhaustive mode defaults to all-ones plus
    /// alternating, which covers both outcomes of the parity check; stress
    /// and bench default to random inputs.
    pub fn patterns(&self) -> Vec<InputPattern> {
        if !self.patterns.is_empty() {
            return self.patterns.clone();
        }
        match self.mode {
            Mode::Exhaustive => vec![InputPattern::AllOnes, InputPattern::Alternating],
            _ => vec![InputPattern::Random],
        }
    }

    /// The smallest power of two strictly above the largest round a run can
    /// reach (`init + total swaps`), unless set explicitly.
    pub fn tree_capacity(&self) -> u64 {
        self.capacity.unwrap_or_else(|| {
            (u64::from(self.init) + self.total_swaps() + 1)
                .next_power_of_two()
                .max(2)
        })
    }

    pub fn resolved_backend(&self) -> Backend {
        match self.backend {
            BackendKind::Atomic => Backend::Atomic,
            BackendKind::Regtree => Backend::RegTree {
                capacity: self.tree_capacity(),
            },
        }
    }
}

pub(crate) fn backend_name(b: Backend) -> String {
    match b {
        Backend::Atomic => "atomic".into(),
        Backend::RegTree { capacity } => format!("regtree(capacity={capacity})"),
    }
}
