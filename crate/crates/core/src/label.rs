use std::fmt;

use serde::{Deserialize, Serialize};

/// Ground-truth availability of a part or system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartState {
    Available,
    Obsolete,
}

impl PartState {
    pub fn other(self) -> Self {
        match self {
            PartState::Available => PartState::Obsolete,
            PartState::Obsolete => PartState::Available,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PartState::Available => "available",
            PartState::Obsolete => "obsolete",
        }
    }
}

impl fmt::Display for PartState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PartState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "available" => Ok(PartState::Available),
            "obsolete" => Ok(PartState::Obsolete),
            other => Err(format!("unknown state `{other}` (expected `available` or `obsolete`)")),
        }
    }
}

/// Stable row identity: the id column value, or the 0-based data row index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RowId(pub String);

impl RowId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RowId {
    fn from(s: &str) -> Self {
        RowId(s.to_string())
    }
}

impl From<String> for RowId {
    fn from(s: String) -> Self {
        RowId(s)
    }
}

impl From<usize> for RowId {
    fn from(i: usize) -> Self {
        RowId(i.to_string())
    }
}
