//! Offline backend whose output is a pure function of
//! `(prompt fingerprint, model, sample index)`.
//!
//! A small library of canned explanations is matched against the prompt's
//! error text; sample `i` of a matching prompt returns the entry's `i`-th
//! response. Everything else gets generated filler in one of four quality
//! tiers, one of which includes a copy-pasteable fenced fix.

use std::thread;
use std::time::Duration;

use chrono::Utc;
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, Explanation, GenerationRequest};

pub const BUG1_GOOD: &str = include_str!("../../fixtures/explanations/bug1_good.txt");
pub const BUG1_BAD_MISSING_THEN: &str =
    include_str!("../../fixtures/explanations/bug1_bad_missing_then.txt");
pub const BUG1_COPY_PASTE_FIX: &str =
    include_str!("../../fixtures/explanations/bug1_copy_paste_fix.txt");
pub const BUG1_CLOCK_EDGE_MISREAD: &str =
    include_str!("../../fixtures/explanations/bug1_clock_edge_misread.txt");
pub const BUG1_SEMICOLON_WRONG_PLACE: &str =
    include_str!("../../fixtures/explanations/bug1_semicolon_wrong_place.txt");

/// Responses served, by sample index, for prompts whose user text contains `needle`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CannedEntry {
    pub needle: String,
    pub responses: Vec<String>,
}

impl CannedEntry {
    pub fn new(needle: impl Into<String>, responses: Vec<String>) -> Self {
        Self {
            needle: needle.into(),
            responses,
        }
    }
}

/// The bug-1 Vivado entry: good, bad, over-helpful, and two partially wrong answers.
pub fn bug1_entry() -> CannedEntry {
    CannedEntry::new(
        "syntax error near elsif",
        [
            BUG1_GOOD,
            BUG1_BAD_MISSING_THEN,
            BUG1_COPY_PASTE_FIX,
            BUG1_CLOCK_EDGE_MISREAD,
            BUG1_SEMICOLON_WRONG_PLACE,
        ]
        .iter()
        .map(|s| s.trim_end().to_owned())
        .collect(),
    )
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    library: Vec<CannedEntry>,
    latency: Option<Duration>,
    always_fail: bool,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl MockBackend {
    /// Mock seeded with the bug-1 canned entry.
    pub fn new() -> Self {
        Self::with_library(vec![bug1_entry()])
    }

    pub fn with_library(library: Vec<CannedEntry>) -> Self {
        Self {
            library,
            latency: None,
            always_fail: false,
        }
    }

    /// Sleeps this long per sample, to stand in for network round trips.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = Some(latency);
        self
    }

    /// A mock that rejects every call.
    pub fn failing() -> Self {
        Self {
            always_fail: true,
            ..Self::with_library(Vec::new())
        }
    }

    pub fn response_text(&self, request: &GenerationRequest, sample_index: u32) -> String {
        let user = &request.bundle.user_text;
        let canned = self
            .library
            .iter()
            .filter(|e| user.contains(&e.needle))
            .find_map(|e| e.responses.get(sample_index as usize));
        match canned {
            Some(text) => text.clone(),
            None => filler(
                &request.bundle.fingerprint,
                &request.model_name,
                sample_index,
                user,
            ),
        }
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn generate_sample(
        &self,
        request: &GenerationRequest,
        sample_index: u32,
    ) -> Result<Explanation, BackendError> {
        request.validate()?;
        if self.always_fail {
            return Err(BackendError::Other("mock configured to fail".into()));
        }
        if let Some(d) = self.latency {
            thread::sleep(d);
        }
        Ok(Explanation {
            text: self.response_text(request, sample_index),
            model_name: request.model_name.clone(),
            sample_index,
            created_at: Utc::now(),
            prompt_fingerprint: request.bundle.fingerprint.clone(),
            temperature: request.temperature,
        })
    }
}

fn seed(fingerprint: &str, model: &str, sample_index: u32) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(fingerprint.as_bytes());
    h.update([0u8]);
    h.update(model.as_bytes());
    h.update([0u8]);
    h.update(sample_index.to_le_bytes());
    h.finalize().into()
}

fn error_message(user_text: &str) -> &str {
    user_text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("Error message:"))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .unwrap_or("the reported error")
}

fn fenced_after<'a>(user_text: &'a str, header: &str) -> Option<&'a str> {
    let start = user_text.find(header)? + header.len();
    let body = user_text[start..].trim_start_matches([' ', '\n']);
    let body = body.strip_prefix("```")?;
    let body = body.strip_prefix('\n').unwrap_or(body);
    let end = body.find("```")?;
    Some(&body[..end])
}

/// A statement to quote in over-helpful answers: the reported line, else the
/// first assignment in the code.
fn quoted_statement(user_text: &str) -> String {
    if let Some(line) = fenced_after(user_text, "Error line:") {
        let line = line.trim();
        if !line.is_empty() {
            return line.to_owned();
        }
    }
    fenced_after(user_text, "Full code file:")
        .and_then(|code| {
            code.lines()
                .map(str::trim)
                .find(|l| l.ends_with(';') && (l.contains("<=") || l.contains('=')))
        })
        .unwrap_or("signal_out <= signal_in;")
        .to_owned()
}

fn filler(fingerprint: &str, model: &str, sample_index: u32, user_text: &str) -> String {
    let s = seed(fingerprint, model, sample_index);
    let msg = error_message(user_text);
    let opener = [
        "The synthesis tool is telling you",
        "This message means",
        "Here the tool reports",
    ][s[1] as usize % 3];
    match s[0] % 4 {
        0 => format!(
            "{opener} \"{msg}\". The statement at the reported location breaks a rule of \
             the language: compare how the names on that line are declared with how they \
             are used there. Look at the line the tool points to and the line just before \
             it, because the tool often only notices a problem once it reaches the next \
             token. Once the declaration and the use agree, the error should go away."
        ),
        1 => format!(
            "{opener} \"{msg}\". The problem is somewhere around the reported line. \
             Check the types and the syntax of the statements near it."
        ),
        2 => format!(
            "{opener} \"{msg}\". This usually happens because the process is missing \
             a clock edge, so the tool cannot infer a register. Adding the clock to the \
             sensitivity list should resolve it."
        ),
        _ => format!(
            "{opener} \"{msg}\". The faulty statement is:\n```\n{stmt}\n```\n\
             Rewrite it so that it follows the rule described in the message, for example:\n\
             ```\n{stmt} -- corrected\n```\n\
             After this change the design should synthesize.",
            stmt = quoted_statement(user_text)
        ),
    }
}
