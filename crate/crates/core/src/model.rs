//! Small enums shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The vendor synthesis tool that produced a log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tool {
    Vivado,
    Quartus,
}

impl Tool {
    /// Ordering used everywhere a deterministic tool order is needed.
    pub const ALL: [Tool; 2] = [Tool::Vivado, Tool::Quartus];

    pub fn as_str(self) -> &'static str {
        match self {
            Tool::Vivado => "Vivado",
            Tool::Quartus => "Quartus",
        }
    }

    /// Directory name used inside the corpus tree.
    pub fn dir_name(self) -> &'static str {
        match self {
            Tool::Vivado => "vivado",
            Tool::Quartus => "quartus",
        }
    }
}

impl fmt::Display for Tool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tool {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vivado" => Ok(Tool::Vivado),
            "quartus" => Ok(Tool::Quartus),
            _ => Err(ParseEnumError::new("tool", s)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "VHDL")]
    Vhdl,
    Verilog,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::Vhdl => "VHDL",
            Language::Verilog => "Verilog",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// User-prompt strategy: error and code, or error, code and the reported line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "EC")]
    ErrorCode,
    #[serde(rename = "ECL")]
    ErrorCodeLine,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::ErrorCode, Strategy::ErrorCodeLine];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::ErrorCode => "EC",
            Strategy::ErrorCodeLine => "ECL",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ec" | "e&c" => Ok(Strategy::ErrorCode),
            "ecl" | "ec&l" => Ok(Strategy::ErrorCodeLine),
            _ => Err(ParseEnumError::new("strategy", s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} `{value}`")]
pub struct ParseEnumError {
    kind: &'static str,
    value: String,
}

impl ParseEnumError {
    pub(crate) fn new(kind: &'static str, value: &str) -> Self {
        Self {
            kind,
            value: value.to_owned(),
        }
    }
}
