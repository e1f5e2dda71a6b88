//! Linearizability checking for one-bit swap histories.
//!
//! Two independent routes: [`brute_force_linearizable`] searches every
//! real-time-respecting order of a small history, while [`explicit_linearize`]
//! and [`verify_explicit`] rebuild the algorithm's own linearization from the
//! per-operation records (group by round, order groups by round and each group
//! by test-and-set ticket) and check it clause by clause.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand_core::RngCore;

use crate::base_objects::Ticket;
use crate::error::{Error, Result};
use crate::history::{History, HistoryOp, OpId};
use crate::rng;
use crate::swap::SwapRecord;
use crate::Bit;

/// Sequential specification: each swap returns the previous value and
/// installs its input.
pub fn seq_swap_oracle(init: Bit, inputs: &[Bit]) -> Vec<Bit> {
    let mut state = init;
    inputs
        .iter()
        .map(|&v| std::mem::replace(&mut state, v))
        .collect()
}

/// Default bound on completed operations for the brute-force checker.
pub const DEFAULT_MAX_OPS: usize = 12;
const MAX_TOTAL_OPS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BruteForceVerdict {
    /// A valid order of the completed operations plus whichever pending
    /// operations took effect.
    Linearizable {
        witness: Vec<OpId>,
    },
    NotLinearizable,
}

impl BruteForceVerdict {
    pub fn is_linearizable(&self) -> bool {
        matches!(self, BruteForceVerdict::Linearizable { .. })
    }
}

pub fn brute_force_linearizable(h: &History) -> Result<BruteForceVerdict> {
    brute_force_linearizable_bounded(h, DEFAULT_MAX_OPS)
}

/// Exhaustive search for a linearization.
///
/// An operation may be placed next when every operation that responded before
/// its invocation is already placed. Completed operations must return the
/// current state; pending ones may be placed with any result or left out.
/// Failed `(placed set, state)` pairs are memoized.
pub fn brute_force_linearizable_bounded(h: &History, max_ops: usize) -> Result<BruteForceVerdict> {
    let ops = h.operations()?;
    let completed = ops.iter().filter(|o| o.output.is_some()).count();
    if completed > max_ops {
        return Err(Error::Refusal {
            what: "completed operations",
            count: completed as u128,
            bound: max_ops as u128,
        });
    }
    if ops.len() > MAX_TOTAL_OPS {
        return Err(Error::Refusal {
            what: "operations including pending",
            count: ops.len() as u128,
            bound: MAX_TOTAL_OPS as u128,
        });
    }

    let n = ops.len();
    let must_precede: Vec<u32> = ops
        .iter()
        .map(|b| {
            ops.iter()
                .enumerate()
                .filter(|(_, a)| a.precedes(b))
                .fold(0u32, |m, (i, _)| m | 1 << i)
        })
        .collect();
    let completed_mask = ops
        .iter()
        .enumerate()
        .filter(|(_, o)| o.output.is_some())
        .fold(0u32, |m, (i, _)| m | 1 << i);

    let mut search = Search {
        ops: &ops,
        must_precede: &must_precede,
        completed_mask,
        failed: HashSet::new(),
        path: Vec::with_capacity(n),
    };
    if search.run(0, h.init) {
        Ok(BruteForceVerdict::Linearizable {
            witness: search.path.iter().map(|&i| ops[i].op).collect(),
        })
    } else {
        Ok(BruteForceVerdict::NotLinearizable)
    }
}

struct Search<'a> {
    ops: &'a [HistoryOp],
    must_precede: &'a [u32],
    completed_mask: u32,
    failed: HashSet<(u32, Bit)>,
    path: Vec<usize>,
}

impl Search<'_> {
    fn run(&mut self, placed: u32, state: Bit) -> bool {
        if placed & self.completed_mask == self.completed_mask {
            return true;
        }
        if self.failed.contains(&(placed, state)) {
            return false;
        }
        for (i, op) in self.ops.iter().enumerate() {
            let bit = 1u32 << i;
            if placed & bit != 0 || self.must_precede[i] & !placed != 0 {
                continue;
            }
            if op.output.is_some_and(|out| out != state) {
                continue;
            }
            self.path.push(i);
            if self.run(placed | bit, op.input) {
                return true;
            }
            self.path.pop();
        }
        self.failed.insert((placed, state));
        false
    }
}

/// Records grouped by round, groups ascending, each group in ticket order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroupedLinearization {
    pub groups: Vec<Group>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub round: u64,
    pub records: Vec<SwapRecord>,
}

impl GroupedLinearization {
    pub fn flatten(&self) -> impl Iterator<Item = &SwapRecord> {
        self.groups.iter().flat_map(|g| g.records.iter())
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.records.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Builds the round-then-ticket order. The group of the initial round starts
/// with the implicit initializing swap, which is not materialized.
pub fn explicit_linearize(records: &[SwapRecord], init: Bit) -> Result<GroupedLinearization> {
    let _ = init;
    let mut by_round: BTreeMap<u64, Vec<SwapRecord>> = BTreeMap::new();
    for r in records {
        by_round.entry(r.round).or_default().push(*r);
    }
    let mut groups = Vec::with_capacity(by_round.len());
    for (round, mut recs) in by_round {
        recs.sort_by_key(|r| r.ticket);
        if let Some(w) = recs.windows(2).find(|w| w[0].ticket == w[1].ticket) {
            return Err(Error::Corruption(format!(
                "round {round} has two operations with ticket {}",
                w[0].ticket.0
            )));
        }
        if recs.first().is_some_and(|r| r.ticket == Ticket::PRESET) {
            return Err(Error::Corruption(format!(
                "round {round} has an operation holding the preset ticket"
            )));
        }
        groups.push(Group {
            round,
            records: recs,
        });
    }
    Ok(GroupedLinearization { groups })
}

/// The clauses [`verify_explicit`] checks, in checking order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Clause {
    /// The order respects real-time precedence.
    RealTime = 1,
    /// Replaying the order reproduces every returned value.
    Replay = 2,
    /// Every round has the parity of its operation's input.
    Parity = 3,
    /// No round is skipped above the initial round plus one.
    GapFree = 4,
    /// Each round has one test-and-set winner, the initial round none.
    GroupWinner = 5,
}

impl Clause {
    pub fn number(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub clause: Clause,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail(Violation),
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    fn fail(clause: Clause, detail: String) -> Self {
        Verdict::Fail(Violation { clause, detail })
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => write!(f, "pass"),
            Verdict::Fail(v) => write!(f, "fail(clause {}: {})", v.clause.number(), v.detail),
        }
    }
}

/// Pairs each record with its history operation. The history must be
/// complete and cover exactly the recorded operations.
fn join_records<'a>(
    records: impl Iterator<Item = &'a SwapRecord>,
    h: &History,
) -> Result<Vec<(HistoryOp, SwapRecord)>> {
    let ops = h.operations()?;
    let mut by_id: HashMap<OpId, HistoryOp> = HashMap::with_capacity(ops.len());
    for op in ops {
        if op.output.is_none() {
            return Err(Error::contract(format!(
                "process {} op {} is pending; verification needs a complete history",
                op.op.proc, op.op.op_id
            )));
        }
        by_id.insert(op.op, op);
    }
    let mut joined = Vec::with_capacity(by_id.len());
    for r in records {
        let op = by_id.remove(&r.op).ok_or_else(|| {
            Error::contract(format!(
                "record for process {} op {} has no operation in the history",
                r.op.proc, r.op.op_id
            ))
        })?;
        if op.input != r.input {
            return Err(Error::contract(format!(
                "process {} op {}: record input {} but history input {}",
                r.op.proc, r.op.op_id, r.input, op.input
            )));
        }
        joined.push((op, *r));
    }
    if let Some(op) = by_id.values().next() {
        return Err(Error::contract(format!(
            "process {} op {} has no record",
            op.op.proc, op.op.op_id
        )));
    }
    Ok(joined)
}

/// Checks a grouped linearization against a complete history.
/// Returns the first failing clause.
pub fn verify_explicit(g: &GroupedLinearization, h: &History, init: Bit) -> Result<Verdict> {
    if h.init != init {
        return Err(Error::contract(format!(
            "history starts at {} but verification asked for {init}",
            h.init
        )));
    }
    let order = join_records(g.flatten(), h)?;

    // 1: no later op in the order responded before an earlier one was invoked
    let mut min_response_after = u64::MAX;
    let mut earliest: Option<&HistoryOp> = None;
    for (op, _) in order.iter().rev() {
        if min_response_after < op.invoke {
            let later = earliest.expect("set with the minimum");
            return Ok(Verdict::fail(
                Clause::RealTime,
                format!(
                    "process {} op {} is ordered after process {} op {} which it precedes",
                    later.op.proc, later.op.op_id, op.op.proc, op.op.op_id
                ),
            ));
        }
        let resp = op.response.expect("complete");
        if resp < min_response_after {
            min_response_after = resp;
            earliest = Some(op);
        }
    }

    // 2
    let inputs: Vec<Bit> = order.iter().map(|(op, _)| op.input).collect();
    let expected = seq_swap_oracle(init, &inputs);
    for ((op, _), want) in order.iter().zip(&expected) {
        let got = op.output.expect("complete");
        if got != *want {
            return Ok(Verdict::fail(
                Clause::Replay,
                format!(
                    "process {} op {} returned {got}, linearization gives {want}",
                    op.op.proc, op.op.op_id
                ),
            ));
        }
    }

    // 3
    if let Some((_, r)) = order
        .iter()
        .find(|(_, r)| Bit::of_parity(r.round) != r.input)
    {
        return Ok(Verdict::fail(
            Clause::Parity,
            format!(
                "process {} op {} has input {} but round {}",
                r.op.proc, r.op.op_id, r.input, r.round
            ),
        ));
    }

    // 4
    let b = u64::from(init);
    let rounds: Vec<u64> = g.groups.iter().map(|gr| gr.round).collect();
    if let Some(&low) = rounds.first().filter(|&&r| r < b) {
        return Ok(Verdict::fail(
            Clause::GapFree,
            format!("round {low} lies below the initial round {b}"),
        ));
    }
    for w in rounds.windows(2) {
        if w[1] > b + 1 && w[1] != w[0] + 1 {
            return Ok(Verdict::fail(
                Clause::GapFree,
                format!("round {} is used but round {} is not", w[1], w[1] - 1),
            ));
        }
    }
    if let Some(&first) = rounds.first() {
        if first > b + 1 {
            return Ok(Verdict::fail(
                Clause::GapFree,
                format!("round {first} is used but round {} is not", first - 1),
            ));
        }
    }

    // 5
    for gr in &g.groups {
        let winners = gr
            .records
            .iter()
            .filter(|r| r.tas_result == Bit::Zero)
            .count();
        let wanted = usize::from(gr.round != b);
        if winners != wanted {
            return Ok(Verdict::fail(
                Clause::GroupWinner,
                format!(
                    "round {} has {winners} winners, expected {wanted}",
                    gr.round
                ),
            ));
        }
        if wanted == 1 && gr.records[0].tas_result != Bit::Zero {
            return Ok(Verdict::fail(
                Clause::GroupWinner,
                format!(
                    "round {} winner does not hold the smallest ticket",
                    gr.round
                ),
            ));
        }
    }
    Ok(Verdict::Pass)
}

/// Convenience: [`explicit_linearize`] followed by [`verify_explicit`].
pub fn verify_records(records: &[SwapRecord], h: &History) -> Result<Verdict> {
    let g = explicit_linearize(records, h.init)?;
    verify_explicit(&g, h, h.init)
}

/// Number of operations whose round is smaller than the round of some
/// operation that finished before it started. Covers every non-overlapping
/// pair.
pub fn round_order_violations(records: &[SwapRecord], h: &History) -> Result<usize> {
    let joined = join_records(records.iter(), h)?;
    let mut by_response: Vec<(u64, u64)> = joined
        .iter()
        .map(|(op, r)| (op.response.expect("complete"), r.round))
        .collect();
    by_response.sort_unstable();
    let mut best = 0;
    let prefix_max: Vec<u64> = by_response
        .iter()
        .map(|&(_, r)| {
            best = best.max(r);
            best
        })
        .collect();
    Ok(joined
        .iter()
        .filter(|(op, r)| {
            let k = by_response.partition_point(|&(t, _)| t < op.invoke);
            k > 0 && prefix_max[k - 1] > r.round
        })
        .count())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairSample {
    /// Non-overlapping pairs examined.
    pub checked: usize,
    pub violations: usize,
}

/// Checks `r1 <= r2` on up to `pairs` randomly drawn non-overlapping pairs.
pub fn sample_round_order(
    records: &[SwapRecord],
    h: &History,
    pairs: usize,
    seed: u64,
) -> Result<PairSample> {
    let joined = join_records(records.iter(), h)?;
    let mut out = PairSample::default();
    if joined.len() < 2 {
        return Ok(out);
    }
    let mut rng = rng::seeded(seed);
    let n = joined.len() as u64;
    let mut attempts = 0usize;
    while out.checked < pairs && attempts < pairs.saturating_mul(100) {
        attempts += 1;
        let a = &joined[(rng.next_u64() % n) as usize];
        let b = &joined[(rng.next_u64() % n) as usize];
        let (first, second) = if a.0.precedes(&b.0) {
            (a, b)
        } else if b.0.precedes(&a.0) {
            (b, a)
        } else {
            continue;
        };
        out.checked += 1;
        if first.1.round > second.1.round {
            out.violations += 1;
        }
    }
    Ok(out)
}
