//! The one-bit swap object.
//!
//! State is a max register `max_round` and an unbounded array of
//! test-and-set bits. A swap with input `v` reads the round `r`; if `r` has
//! the wrong parity for `v` it moves to `r + 1` and raises `max_round` to it.
//! It then runs test-and-set on bit `r`: the winner returns `!v`, everyone
//! else returns `v`. That is two or three base-object operations.
//!
//! Initializing to `b` sets `max_round` to `b` and presets bit `b`, as if a
//! `swap(b)` had already run on an all-zero object.

use std::collections::BTreeSet;
use std::ptr;
use std::sync::atomic::{AtomicPtr, Ordering};

use crate::base_objects::{
    Backend, MaxRegister, MaxRegisterHandle, StepCounter, TasBit, Ticket, TicketCounter,
};
use crate::error::Result;
use crate::history::OpId;
use crate::Bit;

const SEGMENTS: usize = 64;

/// Unbounded array of test-and-set bits.
///
/// Segment `k` holds indices `2^k - 1 .. 2^(k+1) - 1`. A segment is allocated
/// by the first thread that needs it and published with a compare-and-swap;
/// a thread that loses the race frees its copy and uses the winner's.
pub struct TasArray {
    segments: [AtomicPtr<TasBit>; SEGMENTS],
}

fn locate(index: u64) -> (usize, usize) {
    let pos = index + 1;
    let segment = 63 - pos.leading_zeros() as usize;
    (segment, (pos - (1u64 << segment)) as usize)
}

fn alloc_segment(segment: usize) -> *mut TasBit {
    let bits: Box<[TasBit]> = (0..1usize << segment).map(|_| TasBit::new()).collect();
    Box::into_raw(bits) as *mut TasBit
}

/// # Safety
/// `ptr` must come from [`alloc_segment`] with the same `segment`, and must
/// not be used afterwards.
unsafe fn free_segment(ptr: *mut TasBit, segment: usize) {
    drop(Box::from_raw(ptr::slice_from_raw_parts_mut(
        ptr,
        1usize << segment,
    )));
}

impl TasArray {
    /// All bits clear except `preset`, which behaves as already won.
    pub fn new(preset: u64) -> Self {
        let array = TasArray {
            segments: std::array::from_fn(|_| AtomicPtr::new(ptr::null_mut())),
        };
        let (segment, offset) = locate(preset);
        let bits: Box<[TasBit]> = (0..1usize << segment)
            .map(|i| {
                if i == offset {
                    TasBit::preset()
                } else {
                    TasBit::new()
                }
            })
            .collect();
        array.segments[segment].store(Box::into_raw(bits) as *mut TasBit, Ordering::Release);
        array
    }

    pub fn get(&self, index: u64) -> &TasBit {
        assert!(
            index < u64::MAX >> 1,
            "test-and-set index {index} out of range"
        );
        let (segment, offset) = locate(index);
        let slot = &self.segments[segment];
        let mut base = slot.load(Ordering::Acquire);
        if base.is_null() {
            let fresh = alloc_segment(segment);
            base = match slot.compare_exchange(
                ptr::null_mut(),
                fresh,
                Ordering::AcqRel,
                Ordering::Acquire,
            ) {
                Ok(_) => fresh,
                Err(published) => {
                    // SAFETY: `fresh` was never shared.
                    unsafe { free_segment(fresh, segment) };
                    published
                }
            };
        }
        // SAFETY: published segments have length 2^segment and live until drop.
        unsafe { &*base.add(offset) }
    }

    /// The bit at `index` if its segment has been materialized.
    pub fn peek(&self, index: u64) -> Option<&TasBit> {
        let (segment, offset) = locate(index);
        let base = self.segments[segment].load(Ordering::Acquire);
        // SAFETY: as in `get`.
        (!base.is_null()).then(|| unsafe { &*base.add(offset) })
    }
}

impl Drop for TasArray {
    fn drop(&mut self) {
        for (segment, slot) in self.segments.iter_mut().enumerate() {
            let p = *slot.get_mut();
            if !p.is_null() {
                // SAFETY: exclusive access; pointer came from a segment allocation.
                unsafe { free_segment(p, segment) };
            }
        }
    }
}

impl std::fmt::Debug for TasArray {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let live = self
            .segments
            .iter()
            .filter(|s| !s.load(Ordering::Relaxed).is_null())
            .count();
        f.debug_struct("TasArray").field("segments", &live).finish()
    }
}

/// Instrumentation for one completed swap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwapRecord {
    pub op: OpId,
    pub input: Bit,
    /// Round at which the test-and-set ran.
    pub round: u64,
    pub tas_result: Bit,
    pub ticket: Ticket,
    /// Base-object operations: 2 or 3.
    pub base_ops: u32,
    /// Steps in the max register's native unit plus one for the test-and-set.
    pub register_ops: u64,
    /// Whether the parity check moved to the next round.
    pub branch_taken: bool,
    pub returned: Bit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwapMetrics {
    pub total_swaps: usize,
    /// Number of times the value changed: rounds above the initial one that
    /// have a test-and-set winner.
    pub switch_count: usize,
    pub max_round_final: u64,
}

#[derive(Debug)]
pub struct SwapObject {
    max_round: MaxRegisterHandle,
    bits: TasArray,
    tickets: TicketCounter,
    init: Bit,
}

impl SwapObject {
    pub fn new(init: Bit, backend: Backend) -> Result<Self> {
        let b = u64::from(init);
        Ok(SwapObject {
            max_round: MaxRegisterHandle::new(backend, b)?,
            bits: TasArray::new(b),
            tickets: TicketCounter::new(),
            init,
        })
    }

    pub fn init(&self) -> Bit {
        self.init
    }

    pub fn backend(&self) -> Backend {
        self.max_round.backend()
    }

    /// Writes `v` and returns the previous value together with the record.
    /// Fails only when a bounded max register runs out of capacity.
    pub fn swap(&self, v: Bit) -> Result<(Bit, SwapRecord)> {
        let mut units = StepCounter::new();
        let mut r = self.max_round.read_max(&mut units);
        let mut base_ops = 1;
        let branch_taken = Bit::of_parity(r) != v;
        if branch_taken {
            r += 1;
            self.max_round.write_max(r, &mut units)?;
            base_ops += 1;
        }
        let tas = self.bits.get(r).test_and_set(&self.tickets, &mut units);
        base_ops += 1;
        let returned = match tas.previous {
            Bit::Zero => !v,
            Bit::One => v,
        };
        let record = SwapRecord {
            op: OpId::default(),
            input: v,
            round: r,
            tas_result: tas.previous,
            ticket: tas.ticket,
            base_ops,
            register_ops: units.count(),
            branch_taken,
            returned,
        };
        Ok((returned, record))
    }

    /// Current round, read without charging anyone.
    pub fn current_round(&self) -> u64 {
        self.max_round.read_max(&mut StepCounter::new())
    }

    /// The object's value; only meaningful when no swap is pending.
    pub fn quiescent_value(&self) -> Bit {
        Bit::of_parity(self.current_round())
    }

    pub fn tas_bit(&self, round: u64) -> Option<&TasBit> {
        self.bits.peek(round)
    }

    pub fn metrics(&self, records: &[SwapRecord]) -> SwapMetrics {
        let b = u64::from(self.init);
        let winners: BTreeSet<u64> = records
            .iter()
            .filter(|r| r.tas_result == Bit::Zero && r.round > b)
            .map(|r| r.round)
            .collect();
        SwapMetrics {
            total_swaps: records.len(),
            switch_count: winners.len(),
            max_round_final: self.current_round(),
        }
    }
}
