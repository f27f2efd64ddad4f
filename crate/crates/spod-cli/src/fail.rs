//! Command failures carrying their process exit code.
//!
//! The contract: 0 success, 1 usage problems, 2 unreadable or inconsistent
//! data, 3 a run or check that stopped short of its tolerance, 4 divergence.

use std::fmt;

#[derive(Debug)]
pub enum Fail {
    /// Contradictory or missing command-line/config settings.
    Usage(String),
    /// Unreadable, unwritable, or inconsistent inputs and outputs.
    Data(String),
    /// The optimization or check ran out of budget before its tolerance.
    NoConvergence(String),
    /// The optimization made the objective worse until the patience ran out.
    Divergence(String),
}

pub type CmdResult<T> = Result<T, Fail>;

impl Fail {
    pub fn exit_code(&self) -> u8 {
        match self {
            Fail::Usage(_) => 1,
            Fail::Data(_) => 2,
            Fail::NoConvergence(_) => 3,
            Fail::Divergence(_) => 4,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Fail::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Fail::Data(msg.into())
    }
}

impl fmt::Display for Fail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fail::Usage(m) | Fail::Data(m) | Fail::NoConvergence(m) | Fail::Divergence(m) => {
                f.write_str(m)
            }
        }
    }
}

impl From<spod::Error> for Fail {
    fn from(e: spod::Error) -> Self {
        Fail::Data(e.to_string())
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::Data(e.to_string())
    }
}
