//! Wait-free one-bit swap built from a max register and an unbounded array
//! of test-and-set bits, plus the tooling to check it: a deterministic
//! interleaving executor, a brute-force linearizability checker, and a fast
//! verifier that rebuilds the algorithm's own linearization order.

pub mod base_objects;
mod bit;
pub mod error;
pub mod harness;
pub mod history;
pub mod lin_check;
pub mod maxreg_tree;
pub mod model;
pub mod rng;
pub mod swap;

pub use base_objects::{Backend, MaxRegister, StepCounter, TasBit, Ticket};
pub use bit::Bit;
pub use error::{Error, Result};
pub use history::{Event, EventKind, History, OpId};
pub use swap::{SwapMetrics, SwapObject, SwapRecord};
