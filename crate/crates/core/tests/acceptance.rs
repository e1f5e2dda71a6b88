//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::process::ExitCode;

use onebit_swap::harness::{cmd_stress, explore_stats, run_threads, InputPattern, Mode, RunConfig};
use onebit_swap::history::{EventKind, History, OpId};
use onebit_swap::lin_check::{
    brute_force_linearizable, seq_swap_oracle, verify_records, Clause, Verdict,
};
use onebit_swap::maxreg_tree::TreeMaxRegister;
use onebit_swap::model::{ModelConfig, ProcessProgram};
use onebit_swap::rng::{below, seeded};
use onebit_swap::{Backend, Bit, Event, MaxRegister, StepCounter, SwapObject};

const SEED: u64 = 0x5eed;
/// Exhaustive configurations as (processes, swaps per process).
const EXHAUSTIVE_SHAPES: [(usize, usize); 2] = [(2, 2), (3, 1)];
const STEP_STRESS_THREADS: usize = 8;
const STRESS_OPS: usize = 10_000;
const STRESS_THREADS: [usize; 3] = [2, 4, 8];
const MIN_SAMPLED_PAIRS: usize = 100_000;
/// Fraction of records allowed outside the step rule.
const STEP_TOLERANCE: f64 = 0.0;
const TREE_LOG2: [u32; 3] = [4, 8, 16];
const TREE_OPS: usize = 10_000;
const ORACLE_SWAPS: usize = 100_000;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn programs(pattern: InputPattern, procs: usize, ops: usize) -> Vec<ProcessProgram> {
    pattern
        .inputs(procs, ops, SEED)
        .iter()
        .map(|i| ProcessProgram::swaps(i))
        .collect()
}

/// Shared data for criteria 1, 2 and 5.
struct ExhaustiveSummary {
    runs: usize,
    schedules: u64,
    records: u64,
    step_violations: u64,
    off_support: u64,
    brute_fail: u64,
    explicit_fail: u64,
    disagreements: u64,
    round_bound_violations: u64,
    failure: Option<String>,
}

fn exhaustive() -> ExhaustiveSummary {
    let mut s = ExhaustiveSummary {
        runs: 0,
        schedules: 0,
        records: 0,
        step_violations: 0,
        off_support: 0,
        brute_fail: 0,
        explicit_fail: 0,
        disagreements: 0,
        round_bound_violations: 0,
        failure: None,
    };
    for (procs, ops) in EXHAUSTIVE_SHAPES {
        for pattern in InputPattern::FIXED {
            for init in [Bit::Zero, Bit::One] {
                let cfg = ModelConfig::with_init(init);
                let stats = match explore_stats(&programs(pattern, procs, ops), &cfg, true) {
                    Ok(st) => st,
                    Err(e) => {
                        s.failure
                            .get_or_insert(format!("{procs}x{ops} {pattern}: {e}"));
                        s.brute_fail += 1;
                        continue;
                    }
                };
                s.runs += 1;
                s.schedules += stats.schedules;
                s.records += stats.base_ops.values().sum::<u64>();
                s.off_support += stats
                    .base_ops
                    .iter()
                    .filter(|(k, _)| **k != 2 && **k != 3)
                    .map(|(_, v)| v)
                    .sum::<u64>();
                s.step_violations += stats.step_violations;
                s.brute_fail += stats.brute_force_fail;
                s.explicit_fail += stats.explicit_fail;
                s.disagreements += stats.disagreements;
                s.round_bound_violations += stats.round_bound_violations;
                if let Some((sched, why)) = &stats.first_failure {
                    s.failure.get_or_insert(format!(
                        "{procs}x{ops} {pattern} init={init}: {sched:?}: {why}"
                    ));
                }
            }
        }
    }
    s
}

fn criterion_1(ex: &ExhaustiveSummary) -> Outcome {
    let obj = SwapObject::new(Bit::Zero, Backend::Atomic).expect("atomic swap");
    let inputs = InputPattern::Random.inputs(STEP_STRESS_THREADS, STRESS_OPS, SEED);
    let run = match run_threads(&obj, &inputs, false) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("stress run failed: {e}")),
    };
    let bad = run
        .records
        .iter()
        .filter(|r| !matches!(r.base_ops, 2 | 3) || (r.base_ops == 2) == r.branch_taken)
        .count() as u64;
    let total = ex.records + run.records.len() as u64;
    let violations = bad + ex.off_support + ex.step_violations;
    let rate = violations as f64 / total.max(1) as f64;
    outcome(
        rate <= STEP_TOLERANCE && run.records.len() == STEP_STRESS_THREADS * STRESS_OPS,
        format!("{violations} of {total} records outside the step rule"),
    )
}

fn criterion_2(ex: &ExhaustiveSummary) -> Outcome {
    let ok = ex.brute_fail == 0
        && ex.explicit_fail == 0
        && ex.disagreements == 0
        && ex.failure.is_none();
    let mut detail = format!(
        "{} runs, {} schedules, brute-force failures {}, explicit failures {}, disagreements {}",
        ex.runs, ex.schedules, ex.brute_fail, ex.explicit_fail, ex.disagreements
    );
    if let Some(f) = &ex.failure {
        detail.push_str(&format!("; first failure {f}"));
    }
    outcome(ok && ex.runs == EXHAUSTIVE_SHAPES.len() * 8, detail)
}

/// Shared data for criteria 3, 4 and 5.
struct StressSummary {
    runs: usize,
    failed: Vec<String>,
    pairs_checked: usize,
    pair_violations: usize,
    all_pair_violations: usize,
    round_bound_failures: usize,
}

fn stress() -> StressSummary {
    let mut s = StressSummary {
        runs: 0,
        failed: Vec::new(),
        pairs_checked: 0,
        pair_violations: 0,
        all_pair_violations: 0,
        round_bound_failures: 0,
    };
    for n in STRESS_THREADS {
        let mut cfg = RunConfig::new(Mode::Stress);
        cfg.procs = n;
        cfg.ops_per_proc = STRESS_OPS;
        cfg.seed = SEED;
        cfg.patterns = vec![InputPattern::Random, InputPattern::Alternating];
        match cmd_stress(&cfg) {
            Ok(reports) => {
                for r in reports {
                    s.runs += 1;
                    if !r.verdict.is_pass() {
                        s.failed.push(format!("n={n} {}: {}", r.pattern, r.verdict));
                    }
                    s.pairs_checked = s.pairs_checked.max(r.sampled.checked);
                    s.pair_violations += r.sampled.violations;
                    s.all_pair_violations += r.round_order_violations;
                    s.round_bound_failures += usize::from(!r.round_bound_ok);
                }
            }
            Err(e) => s.failed.push(format!("n={n}: {e}")),
        }
    }
    s
}

fn criterion_3(st: &StressSummary) -> Outcome {
    outcome(
        st.failed.is_empty() && st.runs == STRESS_THREADS.len() * 2,
        if st.failed.is_empty() {
            format!("{} stress runs verified", st.runs)
        } else {
            st.failed.join("; ")
        },
    )
}

fn criterion_4(st: &StressSummary) -> Outcome {
    outcome(
        st.pairs_checked >= MIN_SAMPLED_PAIRS
            && st.pair_violations == 0
            && st.all_pair_violations == 0,
        format!(
            "{} sampled pairs per run, {} sampled violations, {} all-pairs violations",
            st.pairs_checked, st.pair_violations, st.all_pair_violations
        ),
    )
}

fn criterion_5(ex: &ExhaustiveSummary, st: &StressSummary) -> Outcome {
    outcome(
        ex.round_bound_violations == 0 && st.round_bound_failures == 0,
        format!(
            "{} exhaustive executions and {} stress runs over the bound",
            ex.round_bound_violations, st.round_bound_failures
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = seeded(SEED);
    let mut problems = Vec::new();
    for k in TREE_LOG2 {
        let cap = 1u64 << k;
        let reg = TreeMaxRegister::new(cap).expect("tree");
        let mut expected = 0u64;
        let mut worst = 0u64;
        for i in 0..TREE_OPS {
            let mut steps = StepCounter::new();
            if below(&mut rng, 2) == 0 {
                let x = rng_value(&mut rng, cap);
                reg.write_max(x, &mut steps).expect("in range");
                expected = expected.max(x);
            } else {
                let got = reg.read_max(&mut steps);
                if got != expected {
                    problems.push(format!("k={k} op {i}: read {got}, expected {expected}"));
                    break;
                }
            }
            worst = worst.max(steps.count());
        }
        if worst > u64::from(k) + 1 {
            problems.push(format!("k={k}: an operation took {worst} steps"));
        }
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("k in {TREE_LOG2:?}, {TREE_OPS} operations each")
        } else {
            problems.join("; ")
        },
    )
}

fn rng_value(rng: &mut onebit_swap::rng::SplitMix64, cap: u64) -> u64 {
    below(rng, cap as usize) as u64
}

fn criterion_7() -> Outcome {
    let mut rng = seeded(SEED ^ 7);
    let inputs: Vec<Bit> = (0..ORACLE_SWAPS)
        .map(|_| Bit::from(below(&mut rng, 2) == 1))
        .collect();
    let mut mismatches = 0;
    for init in [Bit::Zero, Bit::One] {
        let expected = seq_swap_oracle(init, &inputs);
        let cap = (ORACLE_SWAPS as u64 + 2).next_power_of_two();
        for backend in [Backend::Atomic, Backend::RegTree { capacity: cap }] {
            let obj = SwapObject::new(init, backend).expect("swap object");
            for (v, e) in inputs.iter().zip(&expected) {
                match obj.swap(*v) {
                    Ok((got, _)) if got == *e => {}
                    _ => mismatches += 1,
                }
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} mismatches over 4 x {ORACLE_SWAPS} swaps"),
    )
}

fn history(init: Bit, events: &[(usize, EventKind, Bit)]) -> History {
    let mut h = History::new(init);
    for (seq, (proc, kind, v)) in events.iter().enumerate() {
        let op = OpId::new(*proc, 0);
        h.events.push(match kind {
            EventKind::Invoke => Event::invoke(seq as u64, op, *v),
            EventKind::Response => Event::response(seq as u64, op, *v),
        });
    }
    h
}

fn criterion_8() -> Outcome {
    use EventKind::{Invoke, Response};
    let mut problems = Vec::new();

    let wrong = history(Bit::Zero, &[(0, Invoke, Bit::One), (0, Response, Bit::One)]);
    if brute_force_linearizable(&wrong)
        .map(|v| v.is_linearizable())
        .unwrap_or(true)
    {
        problems.push("single wrong operation accepted".to_string());
    }
    let both_one = history(
        Bit::Zero,
        &[
            (0, Invoke, Bit::One),
            (1, Invoke, Bit::One),
            (0, Response, Bit::One),
            (1, Response, Bit::One),
        ],
    );
    if brute_force_linearizable(&both_one)
        .map(|v| v.is_linearizable())
        .unwrap_or(true)
    {
        problems.push("concurrent {1, 1} accepted".to_string());
    }

    let obj = SwapObject::new(Bit::Zero, Backend::Atomic).expect("atomic swap");
    let inputs = InputPattern::Random.inputs(4, 1_000, SEED);
    match run_threads(&obj, &inputs, false) {
        Ok(mut run) => {
            let idx = run
                .history
                .events
                .iter()
                .position(|e| e.kind == Response)
                .expect("a response");
            run.history.events[idx].value = !run.history.events[idx].value;
            match verify_records(&run.records, &run.history) {
                Ok(Verdict::Fail(v)) if v.clause == Clause::Replay => {}
                other => problems.push(format!("mutated stress history gave {other:?}")),
            }
        }
        Err(e) => problems.push(format!("stress run failed: {e}")),
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            "all three controls rejected".to_string()
        } else {
            problems.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let ex = exhaustive();
    let st = stress();
    let results = [
        ("step bound", criterion_1(&ex)),
        ("exhaustive linearizability", criterion_2(&ex)),
        ("stress explicit verification", criterion_3(&st)),
        ("round ordering", criterion_4(&st)),
        ("round bound", criterion_5(&ex, &st)),
        ("register tree", criterion_6()),
        ("sequential oracle", criterion_7()),
        ("negative controls", criterion_8()),
    ];
    let mut all = true;
    for (i, (name, o)) in results.iter().enumerate() {
        all &= o.passed;
        println!(
            "criterion {} ({name}): {} [{}]",
            i + 1,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
