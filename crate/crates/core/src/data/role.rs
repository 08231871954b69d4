use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Conversation role of a motion stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Speaker,
    Listener,
}

impl Role {
    pub const BOTH: [Role; 2] = [Role::Speaker, Role::Listener];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Speaker => "speaker",
            Role::Listener => "listener",
        }
    }

    pub fn other(self) -> Role {
        match self {
            Role::Speaker => Role::Listener,
            Role::Listener => Role::Speaker,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "speaker" => Ok(Role::Speaker),
            "listener" => Ok(Role::Listener),
            _ => Err(Error::Config(format!("unknown role {s:?}"))),
        }
    }
}
