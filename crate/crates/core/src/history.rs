//! Swap histories and their text formats.
//!
//! A history file is a header line followed by one event per line:
//!
//! ```text
//! # swap-history v1 init=0
//! 0 0 0 inv 1
//! 1 1 0 inv 1
//! 2 0 0 res 0
//! 3 1 0 res 1
//! ```
//!
//! Fields are `seq proc opId kind value`, single-space separated, with `kind`
//! one of `inv`/`res` and `value` the input bit (invocations) or the returned
//! bit (responses). A records sidecar carries one line per completed swap,
//! `proc opId r tas ticket steps ret`, after the header `# swap-records v1`.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::base_objects::Ticket;
use crate::error::{Error, Result};
use crate::swap::SwapRecord;
use crate::Bit;

const HISTORY_HEADER: &str = "# swap-history v1 init=";
const RECORDS_HEADER: &str = "# swap-records v1";

/// Identifies one high-level operation: the issuing process and its
/// per-process operation counter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpId {
    pub proc: usize,
    pub op_id: u64,
}

impl OpId {
    pub const fn new(proc: usize, op_id: u64) -> Self {
        OpId { proc, op_id }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Invoke,
    Response,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub seq: u64,
    pub proc: usize,
    pub op_id: u64,
    pub kind: EventKind,
    pub value: Bit,
}

impl Event {
    pub fn invoke(seq: u64, op: OpId, input: Bit) -> Self {
        Event {
            seq,
            proc: op.proc,
            op_id: op.op_id,
            kind: EventKind::Invoke,
            value: input,
        }
    }

    pub fn response(seq: u64, op: OpId, output: Bit) -> Self {
        Event {
            seq,
            proc: op.proc,
            op_id: op.op_id,
            kind: EventKind::Response,
            value: output,
        }
    }

    pub fn op(&self) -> OpId {
        OpId::new(self.proc, self.op_id)
    }
}

/// A swap operation reconstructed from its events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistoryOp {
    pub op: OpId,
    pub input: Bit,
    /// `None` while pending.
    pub output: Option<Bit>,
    pub invoke: u64,
    pub response: Option<u64>,
}

impl HistoryOp {
    /// True when this operation responded before `other` was invoked.
    pub fn precedes(&self, other: &HistoryOp) -> bool {
        self.response.is_some_and(|r| r < other.invoke)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct History {
    pub init: Bit,
    pub events: Vec<Event>,
}

#[derive(Default)]
struct Validator {
    last_seq: Option<u64>,
    // per process: last op id seen, and whether it is still open
    procs: HashMap<usize, (u64, bool)>,
}

impl Validator {
    fn push(&mut self, e: &Event) -> std::result::Result<(), String> {
        if let Some(last) = self.last_seq {
            if e.seq <= last {
                return Err(format!("seq {} does not follow {last}", e.seq));
            }
        }
        self.last_seq = Some(e.seq);
        let entry = self.procs.get(&e.proc).copied();
        match (e.kind, entry) {
            (EventKind::Invoke, Some((_, true))) => Err(format!(
                "process {} invokes op {} with an operation still open",
                e.proc, e.op_id
            )),
            (EventKind::Invoke, Some((last, false))) if e.op_id <= last => Err(format!(
                "process {} reuses op id {} (last was {last})",
                e.proc, e.op_id
            )),
            (EventKind::Invoke, _) => {
                self.procs.insert(e.proc, (e.op_id, true));
                Ok(())
            }
            (EventKind::Response, Some((open, true))) if open == e.op_id => {
                self.procs.insert(e.proc, (open, false));
                Ok(())
            }
            (EventKind::Response, _) => Err(format!(
                "response of process {} op {} has no open invocation",
                e.proc, e.op_id
            )),
        }
    }
}

impl History {
    pub fn new(init: Bit) -> Self {
        History {
            init,
            events: Vec::new(),
        }
    }

    /// Checks that sequence numbers increase and that each process
    /// alternates invocations and matching responses.
    pub fn validate(&self) -> Result<()> {
        let mut v = Validator::default();
        self.events
            .iter()
            .try_for_each(|e| v.push(e))
            .map_err(Error::ContractViolation)
    }

    /// Operations in invocation order.
    pub fn operations(&self) -> Result<Vec<HistoryOp>> {
        self.validate()?;
        let mut ops: Vec<HistoryOp> = Vec::new();
        let mut open: HashMap<OpId, usize> = HashMap::new();
        for e in &self.events {
            match e.kind {
                EventKind::Invoke => {
                    open.insert(e.op(), ops.len());
                    ops.push(HistoryOp {
                        op: e.op(),
                        input: e.value,
                        output: None,
                        invoke: e.seq,
                        response: None,
                    });
                }
                EventKind::Response => {
                    let i = open.remove(&e.op()).expect("validated");
                    ops[i].output = Some(e.value);
                    ops[i].response = Some(e.seq);
                }
            }
        }
        Ok(ops)
    }

    pub fn is_complete(&self) -> Result<bool> {
        Ok(self.operations()?.iter().all(|op| op.output.is_some()))
    }

    pub fn encode(&self) -> String {
        let mut out = format!("{HISTORY_HEADER}{}\n", self.init);
        for e in &self.events {
            let kind = match e.kind {
                EventKind::Invoke => "inv",
                EventKind::Response => "res",
            };
            writeln!(out, "{} {} {} {} {}", e.seq, e.proc, e.op_id, kind, e.value)
                .expect("writing to a String");
        }
        out
    }

    /// Parses a history file. An empty file is the empty history with
    /// initial value 0.
    pub fn decode(text: &str) -> Result<History> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let Some((_, header)) = lines.next() else {
            return Ok(History::new(Bit::Zero));
        };
        let init = match header.strip_prefix(HISTORY_HEADER) {
            Some("0") => Bit::Zero,
            Some("1") => Bit::One,
            _ => {
                if text.trim().is_empty() {
                    return Ok(History::new(Bit::Zero));
                }
                return Err(Error::parse(1, format!("expected `{HISTORY_HEADER}<0|1>`")));
            }
        };
        let mut history = History::new(init);
        let mut validator = Validator::default();
        for (n, line) in lines {
            let event = parse_event(line).map_err(|m| Error::parse(n, m))?;
            validator.push(&event).map_err(|m| Error::parse(n, m))?;
            history.events.push(event);
        }
        Ok(history)
    }
}

fn fields<const N: usize>(line: &str) -> std::result::Result<[&str; N], String> {
    let parts: Vec<&str> = line.split(' ').collect();
    parts
        .try_into()
        .map_err(|p: Vec<&str>| format!("expected {N} space-separated fields, found {}", p.len()))
}

fn num<T: std::str::FromStr>(field: &str, name: &str) -> std::result::Result<T, String> {
    if field.is_empty() || !field.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("{name} `{field}` is not a decimal integer"));
    }
    field
        .parse()
        .map_err(|_| format!("{name} `{field}` is out of range"))
}

fn bit(field: &str, name: &str) -> std::result::Result<Bit, String> {
    match field {
        "0" => Ok(Bit::Zero),
        "1" => Ok(Bit::One),
        _ => Err(format!("{name} `{field}` is not 0 or 1")),
    }
}

fn parse_event(line: &str) -> std::result::Result<Event, String> {
    let [seq, proc, op_id, kind, value] = fields::<5>(line)?;
    let kind = match kind {
        "inv" => EventKind::Invoke,
        "res" => EventKind::Response,
        other => return Err(format!("kind `{other}` is not inv or res")),
    };
    Ok(Event {
        seq: num(seq, "seq")?,
        proc: num(proc, "proc")?,
        op_id: num(op_id, "opId")?,
        kind,
        value: bit(value, "value")?,
    })
}

/// One line of a records sidecar. The input bit lives in the history.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordLine {
    pub op: OpId,
    pub round: u64,
    pub tas_result: Bit,
    pub ticket: Ticket,
    pub steps: u32,
    pub returned: Bit,
}

impl RecordLine {
    pub fn from_record(r: &SwapRecord) -> Self {
        RecordLine {
            op: r.op,
            round: r.round,
            tas_result: r.tas_result,
            ticket: r.ticket,
            steps: r.base_ops,
            returned: r.returned,
        }
    }

    /// Rebuilds a record given the operation's input. The native step count
    /// is not stored, so it is taken to equal the base-op count.
    pub fn into_record(self, input: Bit) -> SwapRecord {
        SwapRecord {
            op: self.op,
            input,
            round: self.round,
            tas_result: self.tas_result,
            ticket: self.ticket,
            base_ops: self.steps,
            register_ops: self.steps as u64,
            branch_taken: self.steps == 3,
            returned: self.returned,
        }
    }
}

pub fn encode_records(records: &[SwapRecord]) -> String {
    let mut out = format!("{RECORDS_HEADER}\n");
    for r in records {
        writeln!(
            out,
            "{} {} {} {} {} {} {}",
            r.op.proc, r.op.op_id, r.round, r.tas_result, r.ticket.0, r.base_ops, r.returned
        )
        .expect("writing to a String");
    }
    out
}

pub fn decode_records(text: &str) -> Result<Vec<RecordLine>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        None => return Ok(Vec::new()),
        Some((_, RECORDS_HEADER)) => {}
        Some(_) => return Err(Error::parse(1, format!("expected `{RECORDS_HEADER}`"))),
    }
    lines
        .map(|(n, line)| parse_record(line).map_err(|m| Error::parse(n, m)))
        .collect()
}

fn parse_record(line: &str) -> std::result::Result<RecordLine, String> {
    let [proc, op_id, r, tas, ticket, steps, ret] = fields::<7>(line)?;
    Ok(RecordLine {
        op: OpId::new(num(proc, "proc")?, num(op_id, "opId")?),
        round: num(r, "r")?,
        tas_result: bit(tas, "tas")?,
        ticket: Ticket(num(ticket, "ticket")?),
        steps: num(steps, "steps")?,
        returned: bit(ret, "ret")?,
    })
}

/// Joins sidecar lines with the history's invocations.
pub fn records_for(history: &History, lines: &[RecordLine]) -> Result<Vec<SwapRecord>> {
    let inputs: HashMap<OpId, Bit> = history
        .operations()?
        .into_iter()
        .map(|op| (op.op, op.input))
        .collect();
    lines
        .iter()
        .map(|l| {
            inputs
                .get(&l.op)
                .map(|&input| l.into_record(input))
                .ok_or_else(|| {
                    Error::contract(format!(
                        "record for process {} op {} has no invocation in the history",
                        l.op.proc, l.op.op_id
                    ))
                })
        })
        .collect()
}
