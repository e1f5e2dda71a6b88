use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Barrier;
use std::time::Instant;

use super::{backend_name, check::records_path, InputPattern, RunConfig};
use crate::base_objects::Backend;
use crate::error::{Error, Result};
use crate::history::{encode_records, Event, History, OpId};
use crate::lin_check::{
    round_order_violations, sample_round_order, seq_swap_oracle, verify_records, PairSample,
    Verdict,
};
use crate::swap::{SwapMetrics, SwapObject, SwapRecord};
use crate::Bit;

/// Non-overlapping pairs sampled for the round-order check.
pub const SAMPLED_PAIRS: usize = 100_000;

/// Merged output of a multi-threaded run.
#[derive(Debug, Clone)]
pub struct StressRun {
    pub history: History,
    /// Sorted by operation id.
    pub records: Vec<SwapRecord>,
    /// Wall time of each swap in nanoseconds, in record order; empty unless
    /// timing was requested.
    pub latencies_ns: Vec<u64>,
}

/// One thread per input vector, all swapping on `obj`. Invocation and
/// response events take their sequence numbers from a shared counter
/// immediately before and after each swap.
pub fn run_threads(obj: &SwapObject, inputs: &[Vec<Bit>], timed: bool) -> Result<StressRun> {
    let clock = AtomicU64::new(0);
    let barrier = Barrier::new(inputs.len());
    type Local = (Vec<Event>, Vec<(SwapRecord, u64)>);
    let per_thread: Vec<Result<Local>> = std::thread::scope(|sc| {
        let handles: Vec<_> = inputs
            .iter()
            .enumerate()
            .map(|(p, ins)| {
                let (clock, barrier) = (&clock, &barrier);
                sc.spawn(move || -> Result<Local> {
                    let mut events = Vec::with_capacity(2 * ins.len());
                    let mut records = Vec::with_capacity(ins.len());
                    barrier.wait();
                    for (k, &v) in ins.iter().enumerate() {
                        let op = OpId::new(p, k as u64);
                        let invoke = clock.fetch_add(1, Ordering::SeqCst);
                        let start = timed.then(Instant::now);
                        let (ret, mut rec) = obj.swap(v)?;
                        let ns = start.map_or(0, |s| s.elapsed().as_nanos() as u64);
                        let response = clock.fetch_add(1, Ordering::SeqCst);
                        rec.op = op;
                        events.push(Event::invoke(invoke, op, v));
                        events.push(Event::response(response, op, ret));
                        records.push((rec, ns));
                    }
                    Ok((events, records))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("stress thread panicked"))
            .collect()
    });

    let mut events = Vec::new();
    let mut timed_records = Vec::new();
    for local in per_thread {
        let (e, r) = local?;
        events.extend(e);
        timed_records.extend(r);
    }
    events.sort_unstable_by_key(|e| e.seq);
    timed_records.sort_unstable_by_key(|(r, _)| r.op);
    let (records, latencies_ns): (Vec<_>, Vec<_>) = timed_records.into_iter().unzip();
    Ok(StressRun {
        history: History {
            init: obj.init(),
            events,
        },
        records,
        latencies_ns: if timed { latencies_ns } else { Vec::new() },
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StressReport {
    pub pattern: InputPattern,
    pub procs: usize,
    pub ops_per_proc: usize,
    pub backend: Backend,
    pub init: Bit,
    pub total_swaps: usize,
    pub verdict: Verdict,
    pub base_ops: BTreeMap<u32, u64>,
    pub step_violations: usize,
    /// Operations whose round is below that of an operation that finished
    /// before they started (all pairs).
    pub round_order_violations: usize,
    pub sampled: PairSample,
    pub metrics: SwapMetrics,
    pub round_bound_ok: bool,
    /// Only for single-process runs: mismatches against the sequential oracle.
    pub oracle_mismatches: Option<usize>,
    pub written: Option<PathBuf>,
}

impl StressReport {
    pub fn passed(&self) -> bool {
        self.verdict.is_pass()
            && self.step_violations == 0
            && self.round_order_violations == 0
            && self.sampled.violations == 0
            && self.round_bound_ok
            && self.oracle_mismatches.unwrap_or(0) == 0
    }
}

/// Runs, verifies and summarizes one stress configuration per pattern.
pub fn cmd_stress(cfg: &RunConfig) -> Result<Vec<StressReport>> {
    if cfg.procs == 0 {
        return Err(Error::contract("stress needs at least one process"));
    }
    let patterns = cfg.patterns();
    patterns
        .iter()
        .map(|&pattern| {
            let inputs = pattern.inputs(cfg.procs, cfg.ops_per_proc, cfg.seed);
            let obj = SwapObject::new(cfg.init, cfg.resolved_backend())?;
            let run = run_threads(&obj, &inputs, false)?;
            let mut report = summarize(cfg, pattern, &obj, &inputs, &run)?;
            if let Some(out) = &cfg.out {
                let path = if patterns.len() > 1 {
                    PathBuf::from(format!("{}.{}", out.display(), pattern))
                } else {
                    out.clone()
                };
                write_run(&path, &run)?;
                report.written = Some(path);
            }
            Ok(report)
        })
        .collect()
}

fn write_run(path: &PathBuf, run: &StressRun) -> Result<()> {
    let io = |e: std::io::Error| Error::contract(format!("cannot write {}: {e}", path.display()));
    std::fs::write(path, run.history.encode()).map_err(io)?;
    std::fs::write(records_path(path), encode_records(&run.records)).map_err(io)?;
    Ok(())
}

fn summarize(
    cfg: &RunConfig,
    pattern: InputPattern,
    obj: &SwapObject,
    inputs: &[Vec<Bit>],
    run: &StressRun,
) -> Result<StressReport> {
    let verdict = verify_records(&run.records, &run.history)?;
    let mut base_ops = BTreeMap::new();
    let mut step_violations = 0;
    for r in &run.records {
        *base_ops.entry(r.base_ops).or_default() += 1;
        if r.base_ops != if r.branch_taken { 3 } else { 2 } {
            step_violations += 1;
        }
    }
    let metrics = obj.metrics(&run.records);
    let oracle_mismatches = (cfg.procs == 1).then(|| {
        let expected = seq_swap_oracle(cfg.init, &inputs[0]);
        run.records
            .iter()
            .zip(&expected)
            .filter(|(r, e)| r.returned != **e)
            .count()
            + expected.len().abs_diff(run.records.len())
    });
    Ok(StressReport {
        pattern,
        procs: cfg.procs,
        ops_per_proc: cfg.ops_per_proc,
        backend: obj.backend(),
        init: cfg.init,
        total_swaps: run.records.len(),
        verdict,
        base_ops,
        step_violations,
        round_order_violations: round_order_violations(&run.records, &run.history)?,
        sampled: sample_round_order(&run.records, &run.history, SAMPLED_PAIRS, cfg.seed)?,
        round_bound_ok: metrics.max_round_final <= u64::from(cfg.init) + metrics.total_swaps as u64,
        metrics,
        oracle_mismatches,
        written: None,
    })
}

impl fmt::Display for StressReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bins: Vec<String> = self
            .base_ops
            .iter()
            .map(|(k, v)| format!("{k}:{v}"))
            .collect();
        writeln!(
            f,
            "stress: pattern={} procs={} ops={} init={} backend={}",
            self.pattern,
            self.procs,
            self.ops_per_proc,
            self.init,
            backend_name(self.backend)
        )?;
        writeln!(
            f,
            "  swaps={} explicit-verifier={}",
            self.total_swaps, self.verdict
        )?;
        writeln!(
            f,
            "  base-ops=[{}] step-violations={}",
            bins.join(" "),
            self.step_violations
        )?;
        writeln!(
            f,
            "  round-order: all-pairs violations={} sampled pairs={} violations={}",
            self.round_order_violations, self.sampled.checked, self.sampled.violations
        )?;
        writeln!(
            f,
            "  switches={} max-round={} bound={} ({})",
            self.metrics.switch_count,
            self.metrics.max_round_final,
            u64::from(self.init) + self.total_swaps as u64,
            if self.round_bound_ok {
                "ok"
            } else {
                "EXCEEDED"
            }
        )?;
        if let Some(m) = self.oracle_mismatches {
            writeln!(f, "  sequential-oracle mismatches={m}")?;
        }
        if let Some(p) = &self.written {
            writeln!(
                f,
                "  wrote {} and {}",
                p.display(),
                records_path(p).display()
            )?;
        }
        write!(
            f,
            "  verdict={}",
            if self.passed() { "pass" } else { "fail" }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{BackendKind, Mode};

    #[test]
    fn small_stress_passes() {
        let mut cfg = RunConfig::new(Mode::Stress);
        cfg.procs = 4;
        cfg.ops_per_proc = 2_000;
        cfg.patterns = vec![InputPattern::Random, InputPattern::Alternating];
        for r in cmd_stress(&cfg).unwrap() {
            assert!(r.passed(), "{r}");
            assert!(r.base_ops.keys().all(|k| *k == 2 || *k == 3));
        }
    }

    #[test]
    fn single_process_matches_oracle() {
        let mut cfg = RunConfig::new(Mode::Stress);
        cfg.procs = 1;
        cfg.ops_per_proc = 5_000;
        cfg.init = Bit::One;
        let r = &cmd_stress(&cfg).unwrap()[0];
        assert_eq!(r.oracle_mismatches, Some(0));
        assert!(r.passed());
    }

    #[test]
    fn regtree_stress_and_capacity_error() {
        let mut cfg = RunConfig::new(Mode::Stress);
        cfg.procs = 3;
        cfg.ops_per_proc = 1_000;
        cfg.backend = BackendKind::Regtree;
        assert!(cmd_stress(&cfg).unwrap()[0].passed());
        cfg.capacity = Some(4);
        assert!(matches!(cmd_stress(&cfg), Err(Error::Capacity { .. })));
    }

    #[test]
    fn writes_history_and_records() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new(Mode::Stress);
        cfg.procs = 2;
        cfg.ops_per_proc = 50;
        cfg.out = Some(dir.path().join("h.txt"));
        let r = &cmd_stress(&cfg).unwrap()[0];
        let text = std::fs::read_to_string(dir.path().join("h.txt")).unwrap();
        let h = History::decode(&text).unwrap();
        assert_eq!(h.events.len(), 200);
        assert_eq!(h.encode(), text);
        assert!(dir.path().join("h.txt.records").exists());
        assert!(r.written.is_some());
    }
}
