//! Bounded max register built from one-bit read-write registers.
//!
//! A register of capacity `2^k` is a complete binary tree of depth `k`. Each
//! internal node has a one-bit switch; the left subtree holds values below
//! half the node's capacity and the right subtree holds the rest, offset by
//! that half. Leaves have capacity 1 and always hold 0. Switches move from 0
//! to 1 only.
//!
//! Nodes live in a flat array in heap order: the root is node 1 and node `i`
//! has children `2i` and `2i + 1`. Each read or write touches at most one
//! switch per level, so both operations cost at most `k` register accesses.

use crate::base_objects::{MaxRegister, Register, StepCounter};
use crate::error::{Error, Result};

/// Largest supported capacity exponent. Switches are allocated eagerly, so a
/// capacity of `2^k` costs `2^k` registers.
pub const MAX_CAPACITY_LOG2: u32 = 26;

#[derive(Debug)]
pub struct TreeMaxRegister {
    capacity: u64,
    switches: Box<[Register]>,
}

impl TreeMaxRegister {
    /// Builds a tree holding 0. `capacity` must be a power of two.
    pub fn new(capacity: u64) -> Result<Self> {
        if !capacity.is_power_of_two() {
            return Err(Error::contract(format!(
                "tree capacity {capacity} is not a power of two"
            )));
        }
        if capacity.trailing_zeros() > MAX_CAPACITY_LOG2 {
            return Err(Error::contract(format!(
                "tree capacity {capacity} exceeds 2^{MAX_CAPACITY_LOG2}"
            )));
        }
        let switches = (0..capacity).map(|_| Register::bit()).collect();
        Ok(TreeMaxRegister { capacity, switches })
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn depth(&self) -> u32 {
        self.capacity.trailing_zeros()
    }

    fn write_node(&self, node: usize, half: u64, x: u64, steps: &mut StepCounter) {
        if half == 0 {
            return;
        }
        let switch = &self.switches[node];
        if x >= half {
            self.write_node(2 * node + 1, half / 2, x - half, steps);
            switch.write(1, steps).expect("switch holds one bit");
        } else if switch.read(steps) == 0 {
            self.write_node(2 * node, half / 2, x, steps);
        }
    }

    #[cfg(test)]
    fn switch_is_set(&self, node: usize) -> bool {
        self.switches[node].read(&mut StepCounter::new()) == 1
    }
}

impl MaxRegister for TreeMaxRegister {
    fn read_max(&self, steps: &mut StepCounter) -> u64 {
        let mut node = 1;
        let mut half = self.capacity / 2;
        let mut value = 0;
        while half > 0 {
            if self.switches[node].read(steps) == 1 {
                value += half;
                node = 2 * node + 1;
            } else {
                node *= 2;
            }
            half /= 2;
        }
        value
    }

    fn write_max(&self, x: u64, steps: &mut StepCounter) -> Result<()> {
        if x >= self.capacity {
            return Err(Error::Capacity {
                value: x,
                capacity: self.capacity,
            });
        }
        self.write_node(1, self.capacity / 2, x, steps);
        Ok(())
    }
}
