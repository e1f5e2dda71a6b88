use std::fmt;
use std::ops::Not;

use crate::error::{Error, Result};

/// A single bit, the value domain of the swap object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub const fn as_u8(self) -> u8 {
        match self {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }

    /// Parity of `n`.
    pub const fn of_parity(n: u64) -> Bit {
        if n.is_multiple_of(2) {
            Bit::Zero
        } else {
            Bit::One
        }
    }

    pub fn from_u64(n: u64) -> Result<Bit> {
        match n {
            0 => Ok(Bit::Zero),
            1 => Ok(Bit::One),
            _ => Err(Error::contract(format!("{n} is not a bit"))),
        }
    }
}

impl Not for Bit {
    type Output = Bit;

    fn not(self) -> Bit {
        match self {
            Bit::Zero => Bit::One,
            Bit::One => Bit::Zero,
        }
    }
}

impl From<bool> for Bit {
    fn from(b: bool) -> Bit {
        if b {
            Bit::One
        } else {
            Bit::Zero
        }
    }
}

impl From<Bit> for u64 {
    fn from(b: Bit) -> u64 {
        b.as_u8() as u64
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_and_negation() {
        assert_eq!(Bit::of_parity(0), Bit::Zero);
        assert_eq!(Bit::of_parity(7), Bit::One);
        assert_eq!(!Bit::Zero, Bit::One);
        assert_eq!(Bit::from_u64(1).unwrap(), Bit::One);
        assert!(Bit::from_u64(2).is_err());
    }
}
