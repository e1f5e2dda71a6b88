//! Base objects: read-write registers, max registers and test-and-set bits.
//!
//! Every operation on a base object takes effect atomically and charges a
//! [`StepCounter`] in the unit its backend declares: one unit per call for the
//! atomic max register and for a test-and-set bit, one unit per underlying
//! register access for the register-tree max register.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::maxreg_tree::TreeMaxRegister;
use crate::Bit;

/// Count of base-object operations attributed to one high-level operation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepCounter(u64);

impl StepCounter {
    pub const fn new() -> Self {
        StepCounter(0)
    }

    #[inline]
    pub fn tick(&mut self) {
        self.0 += 1;
    }

    pub const fn count(&self) -> u64 {
        self.0
    }
}

/// A read-write register holding an unsigned value of at most `width` bits.
#[derive(Debug)]
pub struct Register {
    value: AtomicU64,
    width: u32,
}

impl Register {
    pub fn new(width: u32) -> Result<Self> {
        if width == 0 || width > 64 {
            return Err(Error::contract(format!(
                "register width {width} not in 1..=64"
            )));
        }
        Ok(Register {
            value: AtomicU64::new(0),
            width,
        })
    }

    /// A one-bit register, used for the switches of the register tree.
    pub(crate) const fn bit() -> Self {
        Register {
            value: AtomicU64::new(0),
            width: 1,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn read(&self, steps: &mut StepCounter) -> u64 {
        steps.tick();
        self.value.load(Ordering::SeqCst)
    }

    pub fn write(&self, x: u64, steps: &mut StepCounter) -> Result<()> {
        if self.width < 64 && x >> self.width != 0 {
            return Err(Error::contract(format!(
                "value {x} exceeds register width {}",
                self.width
            )));
        }
        steps.tick();
        self.value.store(x, Ordering::SeqCst);
        Ok(())
    }
}

/// A linearizable max register.
///
/// `read_max` returns the largest value written by any completed `write_max`
/// and never more than the largest value of any started one.
pub trait MaxRegister: Send + Sync {
    fn read_max(&self, steps: &mut StepCounter) -> u64;

    fn write_max(&self, x: u64, steps: &mut StepCounter) -> Result<()>;
}

/// Max register held in one machine word, raised with a compare-and-swap loop.
///
/// The whole retry loop is one base-object operation and costs one step.
/// Values are 64-bit; the swap object raises the register by at most one per
/// operation, so overflow needs 2^64 swaps and is treated as unreachable.
#[derive(Debug, Default)]
pub struct AtomicMaxRegister {
    value: AtomicU64,
}

impl AtomicMaxRegister {
    pub fn new(init: u64) -> Self {
        AtomicMaxRegister {
            value: AtomicU64::new(init),
        }
    }
}

impl MaxRegister for AtomicMaxRegister {
    fn read_max(&self, steps: &mut StepCounter) -> u64 {
        steps.tick();
        self.value.load(Ordering::SeqCst)
    }

    fn write_max(&self, x: u64, steps: &mut StepCounter) -> Result<()> {
        steps.tick();
        let mut current = self.value.load(Ordering::SeqCst);
        while current < x {
            match self
                .value
                .compare_exchange_weak(current, x, Ordering::SeqCst, Ordering::SeqCst)
            {
                Ok(_) => break,
                Err(seen) => current = seen,
            }
        }
        Ok(())
    }
}

/// Which max register implementation backs a swap object.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Atomic,
    /// Bounded register tree; `capacity` must be a power of two.
    RegTree {
        capacity: u64,
    },
}

/// A max register of either backend.
#[derive(Debug)]
pub enum MaxRegisterHandle {
    Atomic(AtomicMaxRegister),
    Tree(TreeMaxRegister),
}

impl MaxRegisterHandle {
    /// Builds a register of the given backend holding `init`. The
    /// initializing write is not charged to anyone.
    pub fn new(backend: Backend, init: u64) -> Result<Self> {
        match backend {
            Backend::Atomic => Ok(MaxRegisterHandle::Atomic(AtomicMaxRegister::new(init))),
            Backend::RegTree { capacity } => {
                let tree = TreeMaxRegister::new(capacity)?;
                tree.write_max(init, &mut StepCounter::new())?;
                Ok(MaxRegisterHandle::Tree(tree))
            }
        }
    }

    pub fn backend(&self) -> Backend {
        match self {
            MaxRegisterHandle::Atomic(_) => Backend::Atomic,
            MaxRegisterHandle::Tree(t) => Backend::RegTree {
                capacity: t.capacity(),
            },
        }
    }
}

impl MaxRegister for MaxRegisterHandle {
    fn read_max(&self, steps: &mut StepCounter) -> u64 {
        match self {
            MaxRegisterHandle::Atomic(m) => m.read_max(steps),
            MaxRegisterHandle::Tree(m) => m.read_max(steps),
        }
    }

    fn write_max(&self, x: u64, steps: &mut StepCounter) -> Result<()> {
        match self {
            MaxRegisterHandle::Atomic(m) => m.write_max(x, steps),
            MaxRegisterHandle::Tree(m) => m.write_max(x, steps),
        }
    }
}

/// Position of a test-and-set call in its bit's linearization order.
///
/// Real tickets start at 1; [`Ticket::PRESET`] stands for the implicit
/// winning call of a preset bit and precedes every real ticket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ticket(pub u64);

impl Ticket {
    pub const PRESET: Ticket = Ticket(0);
}

/// Global source of tickets shared by all bits of one object.
#[derive(Debug)]
pub struct TicketCounter(AtomicU64);

impl TicketCounter {
    pub fn new() -> Self {
        TicketCounter(AtomicU64::new(1))
    }

    pub fn draw(&self) -> Ticket {
        Ticket(self.0.fetch_add(1, Ordering::SeqCst))
    }
}

impl Default for TicketCounter {
    fn default() -> Self {
        Self::new()
    }
}

/// Result of one test-and-set call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TasOutcome {
    pub previous: Bit,
    pub ticket: Ticket,
}

const CLEAR: u64 = 0;
const PRESET: u64 = u64::MAX;

/// A one-shot test-and-set bit.
///
/// The state word is `0` while clear, the winner's ticket once won, and
/// `u64::MAX` when preset. The winner draws its ticket before the
/// compare-and-swap that sets the bit; a loser draws after observing the set
/// bit. Every loser's ticket therefore exceeds the winner's, and tickets of
/// calls that do not overlap in real time are ordered by real time.
#[derive(Debug, Default)]
pub struct TasBit {
    state: AtomicU64,
}

impl TasBit {
    pub const fn new() -> Self {
        TasBit {
            state: AtomicU64::new(CLEAR),
        }
    }

    /// A bit that behaves as if a winning call happened before the execution
    /// began: every call returns 1.
    pub const fn preset() -> Self {
        TasBit {
            state: AtomicU64::new(PRESET),
        }
    }

    pub fn test_and_set(&self, tickets: &TicketCounter, steps: &mut StepCounter) -> TasOutcome {
        steps.tick();
        let ticket = tickets.draw();
        match self
            .state
            .compare_exchange(CLEAR, ticket.0, Ordering::SeqCst, Ordering::SeqCst)
        {
            Ok(_) => TasOutcome {
                previous: Bit::Zero,
                ticket,
            },
            Err(_) => TasOutcome {
                previous: Bit::One,
                ticket: tickets.draw(),
            },
        }
    }

    pub fn is_set(&self) -> bool {
        self.state.load(Ordering::SeqCst) != CLEAR
    }

    /// Ticket of the winning call, if any.
    pub fn winner(&self) -> Option<Ticket> {
        match self.state.load(Ordering::SeqCst) {
            CLEAR => None,
            PRESET => Some(Ticket::PRESET),
            t => Some(Ticket(t)),
        }
    }
}

/// One max-register operation with its real-time interval, for offline checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimedMaxOp {
    pub proc: usize,
    pub kind: MaxOpKind,
    pub invoke: u64,
    pub response: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxOpKind {
    Write(u64),
    Read(u64),
}

/// Checks a completed max-register history.
///
/// Every read must return at least the largest write that finished before it
/// started and at most the largest write that started before it finished;
/// reads by one process must not decrease.
pub fn check_max_register_history(init: u64, ops: &[TimedMaxOp]) -> Result<(), String> {
    let mut writes: Vec<(u64, u64, u64)> = ops
        .iter()
        .filter_map(|op| match op.kind {
            MaxOpKind::Write(x) => Some((op.invoke, op.response, x)),
            MaxOpKind::Read(_) => None,
        })
        .collect();

    // prefix maxima over writes sorted by response and by invoke
    writes.sort_by_key(|w| w.1);
    let by_response: Vec<(u64, u64)> = running_max(writes.iter().map(|w| (w.1, w.2)), init);
    writes.sort_by_key(|w| w.0);
    let by_invoke: Vec<(u64, u64)> = running_max(writes.iter().map(|w| (w.0, w.2)), init);

    let mut reads: Vec<&TimedMaxOp> = ops
        .iter()
        .filter(|op| matches!(op.kind, MaxOpKind::Read(_)))
        .collect();
    reads.sort_by_key(|op| op.invoke);
    let mut last_read: std::collections::HashMap<usize, u64> = Default::default();

    for read in reads {
        let MaxOpKind::Read(got) = read.kind else {
            unreachable!()
        };
        let lo = max_before(&by_response, read.invoke, init);
        let hi = max_before(&by_invoke, read.response, init);
        if got < lo || got > hi {
            return Err(format!(
                "read by process {} in [{}, {}] returned {got}, expected within [{lo}, {hi}]",
                read.proc, read.invoke, read.response
            ));
        }
        if let Some(prev) = last_read.insert(read.proc, got) {
            if got < prev {
                return Err(format!(
                    "process {} read {got} after reading {prev}",
                    read.proc
                ));
            }
        }
    }
    Ok(())
}

fn running_max(points: impl Iterator<Item = (u64, u64)>, init: u64) -> Vec<(u64, u64)> {
    let mut best = init;
    points
        .map(|(t, x)| {
            best = best.max(x);
            (t, best)
        })
        .collect()
}

/// Largest value among points with time strictly below `t`.
fn max_before(points: &[(u64, u64)], t: u64, init: u64) -> u64 {
    let idx = points.partition_point(|p| p.0 < t);
    if idx == 0 {
        init
    } else {
        points[idx - 1].1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand_core::RngCore;
    use std::sync::atomic::AtomicU64;
    use std::sync::Barrier;

    #[test]
    fn register_last_write_wins() {
        let mut s = StepCounter::new();
        let r = Register::new(8).unwrap();
        assert_eq!(r.read(&mut s), 0);
        r.write(5, &mut s).unwrap();
        assert_eq!(r.read(&mut s), 5);
        r.write(3, &mut s).unwrap();
        r.write(1, &mut s).unwrap();
        assert_eq!(r.read(&mut s), 1);
        r.write(0, &mut s).unwrap();
        assert_eq!(r.read(&mut s), 0);
        r.write(7, &mut s).unwrap();
        assert_eq!(r.read(&mut s), 7);
        assert_eq!(s.count(), 10);
    }

    #[test]
    fn register_width_is_enforced() {
        let mut s = StepCounter::new();
        let r = Register::new(3).unwrap();
        assert!(matches!(
            r.write(8, &mut s),
            Err(Error::ContractViolation(_))
        ));
        assert_eq!(s.count(), 0);
        assert!(Register::new(0).is_err());
        let wide = Register::new(64).unwrap();
        wide.write(u64::MAX, &mut s).unwrap();
        assert_eq!(wide.read(&mut s), u64::MAX);
    }

    #[test]
    fn concurrent_register_writes() {
        let r = Register::new(8).unwrap();
        std::thread::scope(|sc| {
            sc.spawn(|| r.write(2, &mut StepCounter::new()).unwrap());
            sc.spawn(|| r.write(9, &mut StepCounter::new()).unwrap());
        });
        assert!([2, 9].contains(&r.read(&mut StepCounter::new())));
    }

    #[test]
    fn atomic_max_register_semantics() {
        let mut s = StepCounter::new();
        let m = AtomicMaxRegister::new(0);
        assert_eq!(m.read_max(&mut s), 0);
        m.write_max(0, &mut s).unwrap();
        assert_eq!(m.read_max(&mut s), 0);
        m.write_max(4, &mut s).unwrap();
        m.write_max(2, &mut s).unwrap();
        assert_eq!(m.read_max(&mut s), 4);
        m.write_max(3, &mut s).unwrap();
        m.write_max(1, &mut s).unwrap();
        assert_eq!(m.read_max(&mut s), 4);
        assert_eq!(s.count(), 9);
    }

    #[test]
    fn quiescent_max_register_matches_oracle() {
        for backend in [Backend::Atomic, Backend::RegTree { capacity: 1 << 16 }] {
            let m = MaxRegisterHandle::new(backend, 0).unwrap();
            let mut rng = seeded(17);
            let mut oracle = 0u64;
            let mut s = StepCounter::new();
            for _ in 0..100_000 {
                if rng.next_u64().is_multiple_of(2) {
                    let x = rng.next_u64() % (1 << 16);
                    m.write_max(x, &mut s).unwrap();
                    oracle = oracle.max(x);
                } else {
                    assert_eq!(m.read_max(&mut s), oracle, "{backend:?}");
                }
            }
        }
    }

    #[test]
    fn concurrent_max_register_sandwich() {
        for backend in [Backend::Atomic, Backend::RegTree { capacity: 1 << 10 }] {
            let m = MaxRegisterHandle::new(backend, 0).unwrap();
            let clock = AtomicU64::new(0);
            let barrier = Barrier::new(4);
            let mut ops = Vec::new();
            std::thread::scope(|sc| {
                let handles: Vec<_> = (0..4)
                    .map(|p| {
                        let (m, clock, barrier) = (&m, &clock, &barrier);
                        sc.spawn(move || {
                            let mut rng = seeded(p as u64);
                            let mut local = Vec::new();
                            let mut s = StepCounter::new();
                            barrier.wait();
                            for _ in 0..2_000 {
                                let invoke = clock.fetch_add(1, Ordering::SeqCst);
                                let kind = if rng.next_u64().is_multiple_of(2) {
                                    let x = rng.next_u64() % 1024;
                                    m.write_max(x, &mut s).unwrap();
                                    MaxOpKind::Write(x)
                                } else {
                                    MaxOpKind::Read(m.read_max(&mut s))
                                };
                                let response = clock.fetch_add(1, Ordering::SeqCst);
                                local.push(TimedMaxOp {
                                    proc: p,
                                    kind,
                                    invoke,
                                    response,
                                });
                            }
                            local
                        })
                    })
                    .collect();
                for h in handles {
                    ops.extend(h.join().unwrap());
                }
            });
            check_max_register_history(0, &ops).unwrap();
        }
    }

    #[test]
    fn sandwich_check_rejects_stale_read() {
        let ops = [
            TimedMaxOp {
                proc: 0,
                kind: MaxOpKind::Write(6),
                invoke: 0,
                response: 1,
            },
            TimedMaxOp {
                proc: 1,
                kind: MaxOpKind::Read(0),
                invoke: 2,
                response: 3,
            },
        ];
        assert!(check_max_register_history(0, &ops).is_err());
        // overlapping read may see either value
        let overlapping = [
            TimedMaxOp {
                proc: 0,
                kind: MaxOpKind::Write(6),
                invoke: 0,
                response: 3,
            },
            TimedMaxOp {
                proc: 1,
                kind: MaxOpKind::Read(0),
                invoke: 1,
                response: 2,
            },
        ];
        assert!(check_max_register_history(0, &overlapping).is_ok());
    }

    #[test]
    fn tas_fresh_and_preset() {
        let tickets = TicketCounter::new();
        let mut s = StepCounter::new();
        let bit = TasBit::new();
        let first = bit.test_and_set(&tickets, &mut s);
        assert_eq!(first.previous, Bit::Zero);
        assert_eq!(bit.winner(), Some(first.ticket));
        let second = bit.test_and_set(&tickets, &mut s);
        assert_eq!(second.previous, Bit::One);
        assert!(second.ticket > first.ticket);

        let preset = TasBit::preset();
        for _ in 0..5 {
            let out = preset.test_and_set(&tickets, &mut s);
            assert_eq!(out.previous, Bit::One);
            assert!(out.ticket > Ticket::PRESET);
        }
        assert_eq!(preset.winner(), Some(Ticket::PRESET));
        assert_eq!(s.count(), 7);
    }

    #[test]
    fn concurrent_tas_has_one_winner() {
        for _ in 0..200 {
            let tickets = TicketCounter::new();
            let bit = TasBit::new();
            let results: Vec<TasOutcome> = std::thread::scope(|sc| {
                let hs: Vec<_> = (0..4)
                    .map(|_| sc.spawn(|| bit.test_and_set(&tickets, &mut StepCounter::new())))
                    .collect();
                hs.into_iter().map(|h| h.join().unwrap()).collect()
            });
            let winners: Vec<_> = results.iter().filter(|o| o.previous == Bit::Zero).collect();
            assert_eq!(winners.len(), 1);
            let min = results.iter().map(|o| o.ticket).min().unwrap();
            assert_eq!(winners[0].ticket, min);
            let mut all: Vec<_> = results.iter().map(|o| o.ticket).collect();
            all.sort();
            all.dedup();
            assert_eq!(all.len(), 4);
        }
    }
}
