//! Deterministic step-level executor.
//!
//! Processes run programs of high-level operations over simulated base
//! objects. One scheduler step is one base-register access: a max-register
//! read or write (one access for the atomic backend, one switch access for
//! the register tree) or a test-and-set. A [`Schedule`] lists which process
//! takes each step. Test-and-set tickets are the 1-based index of the step.
//!
//! [`Explorer`] enumerates every schedule of a set of programs by depth-first
//! search over executor states; the `parallel` feature splits the search tree
//! across a rayon pool.

use std::sync::Arc;

use crate::base_objects::{Backend, Ticket};
use crate::error::{Error, Result};
use crate::history::{Event, History, OpId};
use crate::rng;
use crate::swap::SwapRecord;
use crate::Bit;

/// Default bound on the worst-case number of steps an exploration may take.
pub const DEFAULT_MAX_STEPS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operation {
    Swap(Bit),
    WriteMax(u64),
    ReadMax,
    /// Raw test-and-set on the bit with the given index.
    Tas(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpResult {
    Swap(Bit),
    WriteMax,
    ReadMax(u64),
    Tas(Bit),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProcessProgram {
    pub ops: Vec<Operation>,
}

impl ProcessProgram {
    pub fn new(ops: Vec<Operation>) -> Self {
        ProcessProgram { ops }
    }

    pub fn swaps(inputs: &[Bit]) -> Self {
        ProcessProgram {
            ops: inputs.iter().map(|&v| Operation::Swap(v)).collect(),
        }
    }
}

/// Process ids in the order they take steps.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Schedule(pub Vec<usize>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub init: Bit,
    pub backend: Backend,
    pub max_steps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            init: Bit::Zero,
            backend: Backend::Atomic,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl ModelConfig {
    pub fn with_init(init: Bit) -> Self {
        ModelConfig {
            init,
            ..Default::default()
        }
    }
}

/// Any completed operation, with its real-time interval on the event clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpLog {
    pub op: OpId,
    pub operation: Operation,
    pub result: OpResult,
    pub invoke: u64,
    pub response: u64,
    /// Scheduler steps the operation took.
    pub steps: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionOutcome {
    pub schedule: Schedule,
    /// Swap events only.
    pub history: History,
    pub records: Vec<SwapRecord>,
    pub ops: Vec<OpLog>,
    /// Value of the swap object once every process finished.
    pub final_value: Bit,
    pub final_round: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SimTas {
    Clear,
    Preset,
    Won(u64),
}

#[derive(Debug, Clone)]
enum SimMax {
    Atomic(u64),
    Tree { capacity: u64, switches: Vec<bool> },
}

#[derive(Debug, Clone)]
struct SimMemory {
    max: SimMax,
    tas: Vec<SimTas>,
}

impl SimMemory {
    fn new(init: Bit, backend: Backend) -> Result<Self> {
        let b = u64::from(init);
        let max = match backend {
            Backend::Atomic => SimMax::Atomic(b),
            Backend::RegTree { capacity } => {
                if !capacity.is_power_of_two() || capacity < 2 {
                    return Err(Error::contract(format!(
                        "executor tree capacity {capacity} must be a power of two of at least 2"
                    )));
                }
                if capacity > 1 << 16 {
                    return Err(Error::contract(format!(
                        "executor tree capacity {capacity} exceeds 2^16"
                    )));
                }
                SimMax::Tree {
                    capacity,
                    switches: vec![false; capacity as usize],
                }
            }
        };
        let mut mem = SimMemory {
            max,
            tas: Vec::new(),
        };
        if b > 0 && matches!(mem.max, SimMax::Tree { .. }) {
            let mut w = MaxWrite::new(b, &mem)?;
            while !w.step(&mut mem) {}
        }
        *mem.tas_slot(b) = SimTas::Preset;
        Ok(mem)
    }

    fn tas_slot(&mut self, i: u64) -> &mut SimTas {
        let i = i as usize;
        if self.tas.len() <= i {
            self.tas.resize(i + 1, SimTas::Clear);
        }
        &mut self.tas[i]
    }

    fn test_and_set(&mut self, i: u64, ticket: u64) -> Bit {
        let slot = self.tas_slot(i);
        match slot {
            SimTas::Clear => {
                *slot = SimTas::Won(ticket);
                Bit::Zero
            }
            _ => Bit::One,
        }
    }

    fn quiescent_max(&self) -> u64 {
        match &self.max {
            SimMax::Atomic(v) => *v,
            SimMax::Tree { capacity, switches } => {
                let (mut node, mut half, mut acc) = (1, capacity / 2, 0);
                while half > 0 {
                    if switches[node] {
                        acc += half;
                        node = 2 * node + 1;
                    } else {
                        node *= 2;
                    }
                    half /= 2;
                }
                acc
            }
        }
    }
}

#[derive(Debug, Clone)]
struct MaxRead {
    node: usize,
    half: u64,
    acc: u64,
}

impl MaxRead {
    fn new(mem: &SimMemory) -> Self {
        let half = match mem.max {
            SimMax::Atomic(_) => 0,
            SimMax::Tree { capacity, .. } => capacity / 2,
        };
        MaxRead {
            node: 1,
            half,
            acc: 0,
        }
    }

    /// One access; the value once the read is complete.
    fn step(&mut self, mem: &SimMemory) -> Option<u64> {
        match &mem.max {
            SimMax::Atomic(v) => Some(*v),
            SimMax::Tree { switches, .. } => {
                if switches[self.node] {
                    self.acc += self.half;
                    self.node = 2 * self.node + 1;
                } else {
                    self.node *= 2;
                }
                self.half /= 2;
                (self.half == 0).then_some(self.acc)
            }
        }
    }
}

/// Tree write as a state machine: descend (moving right is free, moving
/// left costs a switch read), then set the switches passed on right moves,
/// deepest first.
#[derive(Debug, Clone)]
struct MaxWrite {
    x: u64,
    node: usize,
    half: u64,
    descending: bool,
    to_set: Vec<usize>,
}

impl MaxWrite {
    fn new(x: u64, mem: &SimMemory) -> Result<Self> {
        let half = match mem.max {
            SimMax::Atomic(_) => 0,
            SimMax::Tree { capacity, .. } => {
                if x >= capacity {
                    return Err(Error::Capacity { value: x, capacity });
                }
                capacity / 2
            }
        };
        let mut w = MaxWrite {
            x,
            node: 1,
            half,
            descending: true,
            to_set: Vec::new(),
        };
        w.settle();
        Ok(w)
    }

    /// Takes free moves until the next access is a switch read or write.
    /// Returns true when no access remains.
    fn settle(&mut self) -> bool {
        while self.descending {
            if self.half == 0 {
                self.descending = false;
            } else if self.x >= self.half {
                self.to_set.push(self.node);
                self.x -= self.half;
                self.node = 2 * self.node + 1;
                self.half /= 2;
            } else {
                return false;
            }
        }
        self.to_set.is_empty()
    }

    /// One access; true when the write is complete.
    fn step(&mut self, mem: &mut SimMemory) -> bool {
        match &mut mem.max {
            SimMax::Atomic(v) => {
                *v = (*v).max(self.x);
                true
            }
            SimMax::Tree { switches, .. } => {
                if self.descending {
                    if switches[self.node] {
                        self.descending = false;
                    } else {
                        self.node *= 2;
                        self.half /= 2;
                    }
                } else {
                    let node = self.to_set.pop().expect("settled write has work");
                    switches[node] = true;
                }
                self.settle()
            }
        }
    }
}

#[derive(Debug, Clone)]
enum SwapPhase {
    ReadRound(MaxRead),
    WriteRound(u64, MaxWrite),
    Tas(u64),
}

#[derive(Debug, Clone)]
struct SwapMachine {
    input: Bit,
    phase: SwapPhase,
    branch_taken: bool,
    base_ops: u32,
    register_ops: u64,
}

impl SwapMachine {
    fn step(&mut self, mem: &mut SimMemory, ticket: u64) -> Result<Option<(Bit, Bit, u64)>> {
        self.register_ops += 1;
        match &mut self.phase {
            SwapPhase::ReadRound(read) => {
                if let Some(r) = read.step(mem) {
                    self.base_ops += 1;
                    self.phase = if Bit::of_parity(r) != self.input {
                        self.branch_taken = true;
                        SwapPhase::WriteRound(r + 1, MaxWrite::new(r + 1, mem)?)
                    } else {
                        SwapPhase::Tas(r)
                    };
                }
                Ok(None)
            }
            SwapPhase::WriteRound(r, write) => {
                if write.step(mem) {
                    self.base_ops += 1;
                    self.phase = SwapPhase::Tas(*r);
                }
                Ok(None)
            }
            SwapPhase::Tas(r) => {
                self.base_ops += 1;
                let prev = mem.test_and_set(*r, ticket);
                let ret = if prev == Bit::Zero {
                    !self.input
                } else {
                    self.input
                };
                Ok(Some((ret, prev, *r)))
            }
        }
    }
}

#[derive(Debug, Clone)]
enum OpMachine {
    Swap(SwapMachine),
    Read(MaxRead),
    Write(MaxWrite),
    Tas(u64),
}

#[derive(Debug, Clone)]
struct Active {
    op: OpId,
    operation: Operation,
    invoke: u64,
    steps: u32,
    machine: OpMachine,
}

#[derive(Debug, Clone, Default)]
struct ProcState {
    next: usize,
    active: Option<Active>,
}

/// Complete executor state; cloned at every branch of an exploration.
#[derive(Debug, Clone)]
pub(crate) struct Machine {
    programs: Arc<[ProcessProgram]>,
    mem: SimMemory,
    procs: Vec<ProcState>,
    step_index: u64,
    clock: u64,
    init: Bit,
    schedule: Vec<usize>,
    events: Vec<Event>,
    records: Vec<SwapRecord>,
    ops: Vec<OpLog>,
}

impl Machine {
    fn new(programs: &[ProcessProgram], cfg: &ModelConfig) -> Result<Self> {
        Ok(Machine {
            programs: programs.into(),
            mem: SimMemory::new(cfg.init, cfg.backend)?,
            procs: vec![ProcState::default(); programs.len()],
            step_index: 0,
            clock: 0,
            init: cfg.init,
            schedule: Vec::new(),
            events: Vec::new(),
            records: Vec::new(),
            ops: Vec::new(),
        })
    }

    fn runnable(&self, p: usize) -> bool {
        let st = &self.procs[p];
        st.active.is_some() || st.next < self.programs[p].ops.len()
    }

    fn runnable_procs(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.procs.len()).filter(|&p| self.runnable(p))
    }

    #[cfg(feature = "parallel")]
    fn finished(&self) -> bool {
        self.runnable_procs().next().is_none()
    }

    fn tick(&mut self) -> u64 {
        let t = self.clock;
        self.clock += 1;
        t
    }

    /// Process `p` takes its next step. `p` must be runnable.
    fn step(&mut self, p: usize) -> Result<()> {
        self.step_index += 1;
        self.schedule.push(p);
        let ticket = self.step_index;

        let mut active = match self.procs[p].active.take() {
            Some(a) => a,
            None => {
                let idx = self.procs[p].next;
                self.procs[p].next += 1;
                let operation = self.programs[p].ops[idx];
                let op = OpId::new(p, idx as u64);
                let invoke = self.tick();
                let machine = match operation {
                    Operation::Swap(v) => {
                        self.events.push(Event::invoke(invoke, op, v));
                        OpMachine::Swap(SwapMachine {
                            input: v,
                            phase: SwapPhase::ReadRound(MaxRead::new(&self.mem)),
                            branch_taken: false,
                            base_ops: 0,
                            register_ops: 0,
                        })
                    }
                    Operation::ReadMax => OpMachine::Read(MaxRead::new(&self.mem)),
                    Operation::WriteMax(x) => OpMachine::Write(MaxWrite::new(x, &self.mem)?),
                    Operation::Tas(i) => OpMachine::Tas(i),
                };
                Active {
                    op,
                    operation,
                    invoke,
                    steps: 0,
                    machine,
                }
            }
        };
        active.steps += 1;

        let result = match &mut active.machine {
            OpMachine::Swap(m) => m.step(&mut self.mem, ticket)?.map(|(ret, tas, round)| {
                self.records.push(SwapRecord {
                    op: active.op,
                    input: m.input,
                    round,
                    tas_result: tas,
                    ticket: Ticket(ticket),
                    base_ops: m.base_ops,
                    register_ops: m.register_ops,
                    branch_taken: m.branch_taken,
                    returned: ret,
                });
                OpResult::Swap(ret)
            }),
            OpMachine::Read(m) => m.step(&self.mem).map(OpResult::ReadMax),
            OpMachine::Write(m) => m.step(&mut self.mem).then_some(OpResult::WriteMax),
            OpMachine::Tas(i) => Some(OpResult::Tas(self.mem.test_and_set(*i, ticket))),
        };

        match result {
            Some(result) => {
                let response = self.tick();
                if let OpResult::Swap(ret) = result {
                    self.events.push(Event::response(response, active.op, ret));
                }
                self.ops.push(OpLog {
                    op: active.op,
                    operation: active.operation,
                    result,
                    invoke: active.invoke,
                    response,
                    steps: active.steps,
                });
            }
            None => self.procs[p].active = Some(active),
        }
        Ok(())
    }

    fn into_outcome(self) -> ExecutionOutcome {
        let final_round = self.mem.quiescent_max();
        ExecutionOutcome {
            schedule: Schedule(self.schedule),
            history: History {
                init: self.init,
                events: self.events,
            },
            records: self.records,
            ops: self.ops,
            final_value: Bit::of_parity(final_round),
            final_round,
        }
    }
}

/// Runs `programs` under a fixed schedule.
pub fn run_schedule(
    programs: &[ProcessProgram],
    schedule: &Schedule,
    cfg: &ModelConfig,
) -> Result<ExecutionOutcome> {
    let mut m = Machine::new(programs, cfg)?;
    for (i, &p) in schedule.0.iter().enumerate() {
        if p >= programs.len() || !m.runnable(p) {
            return Err(Error::contract(format!(
                "schedule entry {i} names process {p}, which has no step left"
            )));
        }
        m.step(p)?;
    }
    if let Some(p) = m.runnable_procs().next() {
        return Err(Error::contract(format!(
            "schedule ends while process {p} still has steps"
        )));
    }
    Ok(m.into_outcome())
}

/// Runs `programs` choosing uniformly among runnable processes with a
/// SplitMix64 generator seeded with `seed`.
pub fn run_random(
    programs: &[ProcessProgram],
    seed: u64,
    cfg: &ModelConfig,
) -> Result<ExecutionOutcome> {
    let mut m = Machine::new(programs, cfg)?;
    let mut rng = rng::seeded(seed);
    let mut runnable = Vec::with_capacity(programs.len());
    loop {
        runnable.clear();
        runnable.extend(m.runnable_procs());
        if runnable.is_empty() {
            return Ok(m.into_outcome());
        }
        let p = runnable[rng::below(&mut rng, runnable.len())];
        m.step(p)?;
    }
}

/// Upper bound on the scheduler steps `programs` can take.
pub fn worst_case_steps(programs: &[ProcessProgram], backend: Backend) -> u64 {
    let depth = match backend {
        Backend::Atomic => 1,
        Backend::RegTree { capacity } => capacity.trailing_zeros() as u64,
    };
    programs
        .iter()
        .flat_map(|p| &p.ops)
        .map(|op| match op {
            Operation::Swap(_) => 2 * depth + 1,
            Operation::ReadMax | Operation::WriteMax(_) => depth,
            Operation::Tas(_) => 1,
        })
        .sum()
}

/// Multinomial upper bound on the number of schedules.
pub fn schedule_count_bound(programs: &[ProcessProgram], backend: Backend) -> u128 {
    let per_proc: Vec<u64> = programs
        .iter()
        .map(|p| worst_case_steps(std::slice::from_ref(p), backend))
        .collect();
    let mut total = 0u64;
    let mut count = 1u128;
    for k in per_proc {
        for i in 1..=k {
            total += 1;
            // count * total / i stays integral: it is a running binomial product
            count = count.saturating_mul(total as u128) / i as u128;
        }
    }
    count
}

/// Exhaustive exploration of every schedule of a set of programs.
#[derive(Debug, Clone)]
pub struct Explorer {
    root: Machine,
}

impl Explorer {
    /// Fails with a refusal when the worst-case step count exceeds
    /// `cfg.max_steps`.
    pub fn new(programs: &[ProcessProgram], cfg: &ModelConfig) -> Result<Self> {
        let steps = worst_case_steps(programs, cfg.backend);
        if steps > cfg.max_steps as u64 {
            return Err(Error::Refusal {
                what: "worst-case scheduler steps",
                count: steps as u128,
                bound: cfg.max_steps as u128,
            });
        }
        Ok(Explorer {
            root: Machine::new(programs, cfg)?,
        })
    }

    /// Every execution, in lexicographic schedule order.
    pub fn iter(&self) -> Exploration {
        Exploration {
            stack: vec![self.root.clone()],
        }
    }

    pub fn fold_sequential<A, F>(&self, init: A, mut fold: F) -> Result<A>
    where
        F: FnMut(A, ExecutionOutcome) -> A,
    {
        let mut acc = init;
        for outcome in self.iter() {
            acc = fold(acc, outcome?);
        }
        Ok(acc)
    }

    /// Splits the search tree into subtrees and folds them on the rayon pool.
    /// `reduce` must be associative and order-insensitive for results to be
    /// reproducible.
    #[cfg(feature = "parallel")]
    pub fn fold_parallel<A, I, F, R>(&self, identity: I, fold: F, reduce: R) -> Result<A>
    where
        A: Send,
        I: Fn() -> A + Sync + Send,
        F: Fn(A, ExecutionOutcome) -> A + Sync + Send,
        R: Fn(A, A) -> A + Sync + Send,
    {
        use rayon::prelude::*;

        let target = rayon::current_num_threads() * 32;
        let mut frontier = vec![self.root.clone()];
        while frontier.len() < target {
            let mut next = Vec::with_capacity(frontier.len() * 3);
            let mut grew = false;
            for m in frontier {
                if m.finished() {
                    next.push(m);
                    continue;
                }
                grew = true;
                for p in m.runnable_procs() {
                    let mut child = m.clone();
                    child.step(p)?;
                    next.push(child);
                }
            }
            frontier = next;
            if !grew {
                break;
            }
        }
        frontier
            .into_par_iter()
            .map(|m| {
                let mut acc = identity();
                for outcome in (Exploration { stack: vec![m] }) {
                    acc = fold(acc, outcome?);
                }
                Ok(acc)
            })
            .try_reduce(&identity, |a, b| Ok(reduce(a, b)))
    }

    /// Parallel fold when the `parallel` feature is on, sequential otherwise.
    pub fn fold<A, I, F, R>(&self, identity: I, fold: F, reduce: R) -> Result<A>
    where
        A: Send,
        I: Fn() -> A + Sync + Send,
        F: Fn(A, ExecutionOutcome) -> A + Sync + Send,
        R: Fn(A, A) -> A + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            self.fold_parallel(identity, fold, reduce)
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = reduce;
            self.fold_sequential(identity(), fold)
        }
    }
}

/// Depth-first iterator over executions.
pub struct Exploration {
    stack: Vec<Machine>,
}

impl Iterator for Exploration {
    type Item = Result<ExecutionOutcome>;

    fn next(&mut self) -> Option<Self::Item> {
        while let Some(m) = self.stack.pop() {
            let runnable: Vec<usize> = m.runnable_procs().collect();
            let Some((&last, rest)) = runnable.split_last() else {
                return Some(Ok(m.into_outcome()));
            };
            let mut children = Vec::with_capacity(runnable.len());
            for &p in rest {
                let mut child = m.clone();
                if let Err(e) = child.step(p) {
                    return Some(Err(e));
                }
                children.push(child);
            }
            let mut child = m;
            if let Err(e) = child.step(last) {
                return Some(Err(e));
            }
            children.push(child);
            self.stack.extend(children.into_iter().rev());
        }
        None
    }
}

/// Every distinct schedule of `programs`, each exactly once.
pub fn enumerate_schedules(
    programs: &[ProcessProgram],
    cfg: &ModelConfig,
) -> Result<impl Iterator<Item = Result<Schedule>>> {
    Ok(Explorer::new(programs, cfg)?
        .iter()
        .map(|o| o.map(|o| o.schedule)))
}
