//! System prompt and the two user-prompt templates.
//!
//! Templates are plain text with `{{error_message}}`, `{{error_line}}` and
//! `{{code_file}}` placeholders. The built-ins live in `templates/` and are
//! compiled in; instructors can load replacements from disk. Layout of the
//! built-ins: one blank line between sections, fenced blocks on their own
//! lines, no trailing newline after the closing question.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::Strategy;

const SYSTEM_PROMPT: &str = include_str!("../templates/system.txt").trim_ascii_end();
const EC_TEMPLATE: &str = include_str!("../templates/ec.txt").trim_ascii_end();
const ECL_TEMPLATE: &str = include_str!("../templates/ecl.txt").trim_ascii_end();

pub const NO_CODE_SENTENCE: &str = "Do not provide code in your answer.";
pub const CLOSING_QUESTION: &str = "What is the bug and why is it occurring?";
pub const ERROR_LINE_HEADER: &str = "Error line:";

const ERROR_MESSAGE: &str = "error_message";
const ERROR_LINE: &str = "error_line";
const CODE_FILE: &str = "code_file";

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("the ECL strategy needs the reported error line")]
    MissingLine,
    #[error("the EC strategy does not take an error line")]
    UnexpectedLine,
    #[error("template `{name}` is missing placeholder {{{{{placeholder}}}}}")]
    MissingPlaceholder {
        name: String,
        placeholder: &'static str,
    },
    #[error("template `{name}` for EC must not use {{{{error_line}}}}")]
    StrayLinePlaceholder { name: String },
    #[error("template `{name}` has an unknown or unterminated placeholder near byte {offset}")]
    BadPlaceholder { name: String, offset: usize },
    #[error("unknown built-in template `{0}` (expected `ec` or `ecl`)")]
    UnknownBuiltin(String),
    #[error("cannot read template {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub fn system_prompt() -> &'static str {
    SYSTEM_PROMPT
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(&'static str),
}

/// A parsed user-prompt template bound to one strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    strategy: Strategy,
    pieces: Vec<Piece>,
}

impl PromptTemplate {
    pub fn builtin(strategy: Strategy) -> Self {
        let (name, body) = match strategy {
            Strategy::ErrorCode => ("ec", EC_TEMPLATE),
            Strategy::ErrorCodeLine => ("ecl", ECL_TEMPLATE),
        };
        Self::parse(name, strategy, body).expect("built-in templates are valid")
    }

    pub fn builtin_by_name(name: &str) -> Result<Self, PromptError> {
        match name {
            "ec" => Ok(Self::builtin(Strategy::ErrorCode)),
            "ecl" => Ok(Self::builtin(Strategy::ErrorCodeLine)),
            other => Err(PromptError::UnknownBuiltin(other.to_owned())),
        }
    }

    pub fn from_file(path: &Path, strategy: Strategy) -> Result<Self, PromptError> {
        let body = fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let name = path.display().to_string();
        Self::parse(&name, strategy, body.trim_end())
    }

    pub fn parse(name: &str, strategy: Strategy, body: &str) -> Result<Self, PromptError> {
        let mut pieces = Vec::new();
        let mut rest = body;
        let mut offset = 0;
        while let Some(open) = rest.find("{{") {
            let close = rest[open..].find("}}").ok_or(PromptError::BadPlaceholder {
                name: name.to_owned(),
                offset: offset + open,
            })?;
            let key = &rest[open + 2..open + close];
            let slot = match key.trim() {
                ERROR_MESSAGE => ERROR_MESSAGE,
                ERROR_LINE => ERROR_LINE,
                CODE_FILE => CODE_FILE,
                _ => {
                    return Err(PromptError::BadPlaceholder {
                        name: name.to_owned(),
                        offset: offset + open,
                    })
                }
            };
            if open > 0 {
                pieces.push(Piece::Text(rest[..open].to_owned()));
            }
            pieces.push(Piece::Slot(slot));
            let consumed = open + close + 2;
            rest = &rest[consumed..];
            offset += consumed;
        }
        if !rest.is_empty() {
            pieces.push(Piece::Text(rest.to_owned()));
        }

        let has = |slot: &str| {
            pieces
                .iter()
                .any(|p| matches!(p, Piece::Slot(s) if *s == slot))
        };
        for required in [ERROR_MESSAGE, CODE_FILE] {
            if !has(required) {
                return Err(PromptError::MissingPlaceholder {
                    name: name.to_owned(),
                    placeholder: required,
                });
            }
        }
        match (strategy, has(ERROR_LINE)) {
            (Strategy::ErrorCodeLine, false) => {
                return Err(PromptError::MissingPlaceholder {
                    name: name.to_owned(),
                    placeholder: ERROR_LINE,
                })
            }
            (Strategy::ErrorCode, true) => {
                return Err(PromptError::StrayLinePlaceholder {
                    name: name.to_owned(),
                })
            }
            _ => {}
        }
        Ok(Self {
            name: name.to_owned(),
            strategy,
            pieces,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// Fills the template. `code_text` is inserted verbatim; a newline is added
    /// after it only when it lacks one, so the closing fence sits on its own line.
    pub fn render(
        &self,
        error_text: &str,
        code_text: &str,
        line_text: Option<&str>,
    ) -> Result<String, PromptError> {
        match (self.strategy, line_text) {
            (Strategy::ErrorCodeLine, None) => return Err(PromptError::MissingLine),
            (Strategy::ErrorCode, Some(_)) => return Err(PromptError::UnexpectedLine),
            _ => {}
        }
        let mut out = String::with_capacity(code_text.len() + 256);
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(ERROR_MESSAGE) => out.push_str(error_text),
                Piece::Slot(ERROR_LINE) => out.push_str(line_text.unwrap_or_default()),
                Piece::Slot(_) => {
                    out.push_str(code_text);
                    if !code_text.is_empty() && !code_text.ends_with('\n') {
                        out.push('\n');
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Renders the built-in user prompt for `strategy`.
pub fn render_user_prompt(
    strategy: Strategy,
    error_text: &str,
    code_text: &str,
    line_text: Option<&str>,
) -> Result<String, PromptError> {
    PromptTemplate::builtin(strategy).render(error_text, code_text, line_text)
}

/// System text, user text and strategy, plus a content hash of all three.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub strategy: Strategy,
    pub fingerprint: String,
}

impl PromptBundle {
    pub fn new(system_text: String, user_text: String, strategy: Strategy) -> Self {
        let fingerprint = fingerprint(&system_text, &user_text, strategy);
        Self {
            system_text,
            user_text,
            strategy,
            fingerprint,
        }
    }

    /// Built-in system prompt plus the built-in template for `strategy`.
    pub fn build(
        strategy: Strategy,
        error_text: &str,
        code_text: &str,
        line_text: Option<&str>,
    ) -> Result<Self, PromptError> {
        let user = render_user_prompt(strategy, error_text, code_text, line_text)?;
        Ok(Self::new(system_prompt().to_owned(), user, strategy))
    }
}

/// Hex SHA-256 over the strategy tag, system text and user text (NUL-separated).
pub fn fingerprint(system_text: &str, user_text: &str, strategy: Strategy) -> String {
    let mut hasher = Sha256::new();
    hasher.update(strategy.as_str().as_bytes());
    hasher.update([0u8]);
    hasher.update(system_text.as_bytes());
    hasher.update([0u8]);
    hasher.update(user_text.as_bytes());
    hex(&hasher.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}
