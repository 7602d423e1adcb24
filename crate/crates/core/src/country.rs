use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Canonical country key: the FAO numeric area code.
///
/// Area codes are stable across the old and new balance-sheet releases even
/// where display names change, and dissolved states (USSR, Yugoslav SFR, ...)
/// keep their own code, so predecessors and successors never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CountryId(pub u32);

impl CountryId {
    pub const fn code(self) -> u32 {
        self.0
    }
}

impl fmt::Display for CountryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for CountryId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim().parse().map(CountryId)
    }
}

impl From<u32> for CountryId {
    fn from(code: u32) -> Self {
        CountryId(code)
    }
}
