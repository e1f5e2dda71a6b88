use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{backend_name, InputPattern, RunConfig, EXHAUSTIVE_MAX_OPS, EXHAUSTIVE_MAX_PROCS};
use crate::base_objects::Backend;
use crate::error::{Error, Result};
use crate::lin_check::{brute_force_linearizable_bounded, explicit_linearize, verify_explicit};
use crate::model::{
    ExecutionOutcome, Explorer, ModelConfig, ProcessProgram, Schedule, DEFAULT_MAX_STEPS,
};
use crate::Bit;

/// Aggregated checks over a set of executions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExhaustiveStats {
    pub schedules: u64,
    pub brute_force_pass: u64,
    pub brute_force_fail: u64,
    pub explicit_pass: u64,
    pub explicit_fail: u64,
    /// Histories on which the two checkers disagree.
    pub disagreements: u64,
    /// Records with a base-op count outside {2, 3} or inconsistent with the
    /// parity branch.
    pub step_violations: u64,
    /// Executions whose final round exceeds `init + swaps`.
    pub round_bound_violations: u64,
    /// Executions whose quiescent value differs from the linearization's.
    pub final_value_mismatches: u64,
    pub base_ops: BTreeMap<u32, u64>,
    /// Distinct sorted multisets of returned values.
    pub return_multisets: BTreeSet<Vec<Bit>>,
    /// Lexicographically smallest failing schedule and why it failed.
    pub first_failure: Option<(Schedule, String)>,
}

impl ExhaustiveStats {
    pub fn passed(&self) -> bool {
        self.brute_force_fail == 0
            && self.explicit_fail == 0
            && self.disagreements == 0
            && self.step_violations == 0
            && self.round_bound_violations == 0
            && self.final_value_mismatches == 0
    }

    pub fn max_base_ops(&self) -> Option<u32> {
        self.base_ops.keys().next_back().copied()
    }

    pub fn merge(mut self, other: ExhaustiveStats) -> ExhaustiveStats {
        self.schedules += other.schedules;
        self.brute_force_pass += other.brute_force_pass;
        self.brute_force_fail += other.brute_force_fail;
        self.explicit_pass += other.explicit_pass;
        self.explicit_fail += other.explicit_fail;
        self.disagreements += other.disagreements;
        self.step_violations += other.step_violations;
        self.round_bound_violations += other.round_bound_violations;
        self.final_value_mismatches += other.final_value_mismatches;
        for (k, v) in other.base_ops {
            *self.base_ops.entry(k).or_default() += v;
        }
        self.return_multisets.extend(other.return_multisets);
        self.first_failure = match (self.first_failure, other.first_failure) {
            (Some(a), Some(b)) => Some(if b.0 < a.0 { b } else { a }),
            (a, b) => a.or(b),
        };
        self
    }
}

/// Runs every check on one execution.
pub fn check_outcome(o: &ExecutionOutcome) -> ExhaustiveStats {
    let init = o.history.init;
    let mut s = ExhaustiveStats {
        schedules: 1,
        ..Default::default()
    };
    let mut problems = Vec::new();

    let brute = match brute_force_linearizable_bounded(&o.history, usize::MAX) {
        Ok(v) => v.is_linearizable(),
        Err(e) => {
            problems.push(format!("brute force: {e}"));
            false
        }
    };
    if brute {
        s.brute_force_pass = 1;
    } else {
        s.brute_force_fail = 1;
        problems.push("brute force: not linearizable".into());
    }

    let grouped = explicit_linearize(&o.records, init);
    let explicit = match grouped
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|g| verify_explicit(g, &o.history, init))
    {
        Ok(v) if v.is_pass() => true,
        Ok(v) => {
            problems.push(format!("explicit: {v}"));
            false
        }
        Err(e) => {
            problems.push(format!("explicit: {e}"));
            false
        }
    };
    if explicit {
        s.explicit_pass = 1;
    } else {
        s.explicit_fail = 1;
    }
    if brute != explicit {
        s.disagreements = 1;
        problems.push("checkers disagree".into());
    }

    for r in &o.records {
        *s.base_ops.entry(r.base_ops).or_default() += 1;
        let expected = if r.branch_taken { 3 } else { 2 };
        if r.base_ops != expected {
            s.step_violations += 1;
            problems.push(format!(
                "process {} op {} took {} base ops",
                r.op.proc, r.op.op_id, r.base_ops
            ));
        }
    }

    if o.final_round > u64::from(init) + o.records.len() as u64 {
        s.round_bound_violations = 1;
        problems.push(format!("final round {} exceeds bound", o.final_round));
    }

    if let Ok(g) = &grouped {
        let expected = g.flatten().last().map_or(init, |r| r.input);
        if expected != o.final_value {
            s.final_value_mismatches = 1;
            problems.push(format!(
                "quiescent value {} but linearization ends at {expected}",
                o.final_value
            ));
        }
    }

    let mut rets: Vec<Bit> = o.records.iter().map(|r| r.returned).collect();
    rets.sort();
    s.return_multisets.insert(rets);

    if !problems.is_empty() {
        s.first_failure = Some((o.schedule.clone(), problems.join("; ")));
    }
    s
}

/// Explores every schedule of `programs` and checks each execution.
/// `parallel` is ignored without the `parallel` feature.
pub fn explore_stats(
    programs: &[ProcessProgram],
    cfg: &ModelConfig,
    parallel: bool,
) -> Result<ExhaustiveStats> {
    let explorer = Explorer::new(programs, cfg)?;
    if parallel {
        explorer.fold(
            ExhaustiveStats::default,
            |acc, o| acc.merge(check_outcome(&o)),
            ExhaustiveStats::merge,
        )
    } else {
        explorer.fold_sequential(ExhaustiveStats::default(), |acc, o| {
            acc.merge(check_outcome(&o))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternRun {
    pub pattern: InputPattern,
    pub init: Bit,
    pub stats: ExhaustiveStats,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExhaustiveReport {
    pub procs: usize,
    pub ops_per_proc: usize,
    pub backend: Backend,
    pub runs: Vec<PatternRun>,
}

impl ExhaustiveReport {
    pub fn passed(&self) -> bool {
        self.runs.iter().all(|r| r.stats.passed())
    }

    pub fn schedules(&self) -> u64 {
        self.runs.iter().map(|r| r.stats.schedules).sum()
    }
}

pub fn cmd_exhaustive(cfg: &RunConfig) -> Result<ExhaustiveReport> {
    if !cfg.force_large {
        if cfg.procs > EXHAUSTIVE_MAX_PROCS {
            return Err(Error::Refusal {
                what: "processes",
                count: cfg.procs as u128,
                bound: EXHAUSTIVE_MAX_PROCS as u128,
            });
        }
        if cfg.ops_per_proc > EXHAUSTIVE_MAX_OPS {
            return Err(Error::Refusal {
                what: "operations per process",
                count: cfg.ops_per_proc as u128,
                bound: EXHAUSTIVE_MAX_OPS as u128,
            });
        }
    }
    let model = ModelConfig {
        init: cfg.init,
        backend: cfg.resolved_backend(),
        max_steps: if cfg.force_large {
            usize::MAX
        } else {
            DEFAULT_MAX_STEPS
        },
    };
    let runs = cfg
        .patterns()
        .into_iter()
        .map(|pattern| {
            let programs: Vec<ProcessProgram> = pattern
                .inputs(cfg.procs, cfg.ops_per_proc, cfg.seed)
                .iter()
                .map(|inputs| ProcessProgram::swaps(inputs))
                .collect();
            Ok(PatternRun {
                pattern,
                init: cfg.init,
                stats: explore_stats(&programs, &model, true)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ExhaustiveReport {
        procs: cfg.procs,
        ops_per_proc: cfg.ops_per_proc,
        backend: model.backend,
        runs,
    })
}

impl fmt::Display for ExhaustiveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "exhaustive: procs={} ops={} backend={}",
            self.procs,
            self.ops_per_proc,
            backend_name(self.backend)
        )?;
        for run in &self.runs {
            let s = &run.stats;
            let bins: Vec<String> = s.base_ops.iter().map(|(k, v)| format!("{k}:{v}")).collect();
            writeln!(
                f,
                "  pattern={} init={} schedules={} brute-force={}/{} explicit={}/{} disagreements={} base-ops=[{}] max-base-ops={} step-violations={} round-bound-violations={} final-value-mismatches={} -> {}",
                run.pattern,
                run.init,
                s.schedules,
                s.brute_force_pass,
                s.schedules,
                s.explicit_pass,
                s.schedules,
                s.disagreements,
                bins.join(" "),
                s.max_base_ops().map_or("-".into(), |m| m.to_string()),
                s.step_violations,
                s.round_bound_violations,
                s.final_value_mismatches,
                if s.passed() { "pass" } else { "FAIL" }
            )?;
            if let Some((sched, why)) = &s.first_failure {
                writeln!(f, "    first failing schedule {:?}: {why}", sched.0)?;
            }
        }
        write!(
            f,
            "total schedules={} verdict={}",
            self.schedules(),
            if self.passed() { "pass" } else { "fail" }
        )
    }
}
