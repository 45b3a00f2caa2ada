//! Five binary pedagogical judgments per response, an interactive grading
//! loop, and the "solution is provided" pre-fill heuristic.

use std::collections::HashSet;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusManifest;
use crate::experiment::{ExplanationRecord, Job};
use crate::store::{self, JsonlAppender, StoreError, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    ConceptAccurate,
    NoInaccuracies,
    Relevant,
    CorrectComplete,
    SolutionProvided,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::ConceptAccurate,
        Metric::NoInaccuracies,
        Metric::Relevant,
        Metric::CorrectComplete,
        Metric::SolutionProvided,
    ];

    /// Column name used in CSV output and stored grades.
    pub fn column(self) -> &'static str {
        match self {
            Metric::ConceptAccurate => "concept_accurate",
            Metric::NoInaccuracies => "no_inaccuracies",
            Metric::Relevant => "relevant",
            Metric::CorrectComplete => "correct_complete",
            Metric::SolutionProvided => "solution_provided",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::ConceptAccurate => "Concept accurate",
            Metric::NoInaccuracies => "No inaccuracies",
            Metric::Relevant => "Relevant",
            Metric::CorrectComplete => "Correct & complete",
            Metric::SolutionProvided => "Solution provided",
        }
    }

    pub fn question(self) -> &'static str {
        match self {
            Metric::ConceptAccurate => "Does the explanation link to the right concepts and keywords?",
            Metric::NoInaccuracies => "Does the explanation only contain factually correct information?",
            Metric::Relevant => "Is the explanation relevant to the problem at hand?",
            Metric::CorrectComplete => {
                "Does the explanation contain everything a user needs to understand and fix the error?"
            }
            Metric::SolutionProvided => {
                "Did the model provide 'too much' help (code that could be copied and pasted)?"
            }
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeRecord {
    pub schema_version: u32,
    #[serde(flatten)]
    pub key: Job,
    pub concept_accurate: bool,
    pub no_inaccuracies: bool,
    pub relevant: bool,
    pub correct_complete: bool,
    pub solution_provided: bool,
    pub grader_id: String,
    pub graded_at: DateTime<Utc>,
}

impl GradeRecord {
    pub fn new(key: Job, answers: [bool; 5], grader_id: impl Into<String>) -> Self {
        let [concept_accurate, no_inaccuracies, relevant, correct_complete, solution_provided] =
            answers;
        Self {
            schema_version: SCHEMA_VERSION,
            key,
            concept_accurate,
            no_inaccuracies,
            relevant,
            correct_complete,
            solution_provided,
            grader_id: grader_id.into(),
            graded_at: Utc::now(),
        }
    }

    /// Answers in metric order.
    pub fn answers(&self) -> [bool; 5] {
        [
            self.concept_accurate,
            self.no_inaccuracies,
            self.relevant,
            self.correct_complete,
            self.solution_provided,
        ]
    }

    pub fn get(&self, metric: Metric) -> bool {
        self.answers()[metric.index()]
    }
}

/// Reads a grades file; a missing file is an empty set.
/// Two grades for the same record by the same grader are an error.
pub fn load_grades(path: &Path) -> Result<Vec<GradeRecord>, StoreError> {
    let rows: Vec<(usize, GradeRecord)> = match store::read_jsonl(path) {
        Ok(rows) => rows,
        Err(StoreError::NotFound(_)) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, grade) in rows {
        if !seen.insert((grade.key.clone(), grade.grader_id.clone())) {
            return Err(StoreError::DuplicateKey {
                path: path.to_path_buf(),
                line,
                key: format!("{} by {}", grade.key, grade.grader_id),
            });
        }
        out.push(grade);
    }
    Ok(out)
}

/// Keywords that mark a line as an HDL statement.
pub const DEFAULT_SOLUTION_KEYWORDS: &[&str] = &[
    "if",
    "elsif",
    "else",
    "end",
    "begin",
    "case",
    "when",
    "process",
    "signal",
    "variable",
    "constant",
    "port",
    "generic",
    "entity",
    "architecture",
    "library",
    "use",
    "assign",
    "always",
    "wire",
    "reg",
    "logic",
    "module",
    "endmodule",
    "input",
    "output",
    "localparam",
    "parameter",
];

/// Flags responses that contain a fenced block with copy-pasteable HDL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolutionDetector {
    keywords: Vec<String>,
}

impl Default for SolutionDetector {
    fn default() -> Self {
        Self {
            keywords: DEFAULT_SOLUTION_KEYWORDS
                .iter()
                .map(|k| (*k).to_owned())
                .collect(),
        }
    }
}

impl SolutionDetector {
    /// The default keyword list plus `extra`.
    pub fn with_keywords<I, S>(extra: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut d = Self::default();
        for k in extra {
            let k = k.into().to_ascii_lowercase();
            if !k.is_empty() && !d.keywords.contains(&k) {
                d.keywords.push(k);
            }
        }
        d
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn flag(&self, text: &str) -> bool {
        fenced_blocks(text)
            .iter()
            .any(|block| block.iter().any(|line| self.is_statement(line)))
    }

    /// An assignment or keyword-led line ending in `;` or `then`,
    /// ignoring a trailing `--` or `//` comment.
    pub fn is_statement(&self, line: &str) -> bool {
        let code = strip_comment(line).trim();
        let lower = code.to_ascii_lowercase();
        let ends_ok = lower.ends_with(';')
            || lower
                .strip_suffix("then")
                .is_some_and(|head| head.is_empty() || !head.ends_with(is_ident_char));
        if !ends_ok {
            return false;
        }
        let has_assign = code.contains("<=") || code.contains(":=") || code.contains('=');
        has_assign
            || lower
                .split(|c: char| !is_ident_char(c))
                .any(|word| self.keywords.iter().any(|k| k == word))
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn strip_comment(line: &str) -> &str {
    let cut = [line.find("--"), line.find("//")]
        .into_iter()
        .flatten()
        .min();
    match cut {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Bodies of triple-backtick blocks, pairing fences left to right.
/// An unclosed final fence is not a block.
fn fenced_blocks(text: &str) -> Vec<Vec<&str>> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                Some(body) => blocks.push(body),
                None => current = Some(Vec::new()),
            }
        } else if let Some(body) = current.as_mut() {
            body.push(line);
        }
    }
    blocks
}

/// `true` iff the text contains a fenced block holding an HDL statement.
pub fn auto_flag_solution(response_text: &str) -> bool {
    SolutionDetector::default().flag(response_text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsistencyWarning {
    pub key: Job,
    pub grader_id: String,
    pub failed: Vec<Metric>,
}

impl fmt::Display for ConsistencyWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.failed.iter().map(|m| m.label()).collect();
        write!(
            f,
            "{} ({}): correct & complete but not {}",
            self.key,
            self.grader_id,
            names.join(", ")
        )
    }
}

/// Grades marked correct & complete while a supporting metric is "no".
pub fn consistency_warnings(grades: &[GradeRecord]) -> Vec<ConsistencyWarning> {
    grades
        .iter()
        .filter(|g| g.correct_complete)
        .filter_map(|g| {
            let failed: Vec<Metric> = [
                Metric::ConceptAccurate,
                Metric::NoInaccuracies,
                Metric::Relevant,
            ]
            .into_iter()
            .filter(|m| !g.get(*m))
            .collect();
            (!failed.is_empty()).then(|| ConsistencyWarning {
                key: g.key.clone(),
                grader_id: g.grader_id.clone(),
                failed,
            })
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum GradingError {
    #[error("the response store is empty")]
    EmptyStore,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot write grades: {0}")]
    Write(#[source] io::Error),
    #[error("terminal i/o failed: {0}")]
    Terminal(#[source] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GradeSession {
    pub graded: usize,
    pub remaining: usize,
    pub quit: bool,
}

enum Answer {
    Value(bool),
    Quit,
}

/// Walks every record this grader has not graded yet, asking the five
/// questions in order and appending each grade as soon as it is complete.
///
/// `q` or end of input stops the session; grades already written stay valid.
pub fn grade_interactive<R: BufRead, W: Write>(
    records: &[ExplanationRecord],
    manifest: &CorpusManifest,
    grades_path: &Path,
    grader_id: &str,
    detector: &SolutionDetector,
    input: &mut R,
    output: &mut W,
) -> Result<GradeSession, GradingError> {
    if records.is_empty() {
        return Err(GradingError::EmptyStore);
    }
    let done: HashSet<Job> = load_grades(grades_path)?
        .into_iter()
        .filter(|g| g.grader_id == grader_id)
        .map(|g| g.key)
        .collect();
    let todo: Vec<&ExplanationRecord> = records.iter().filter(|r| !done.contains(&r.key)).collect();
    let mut session = GradeSession {
        remaining: todo.len(),
        ..Default::default()
    };
    if todo.is_empty() {
        return Ok(session);
    }
    let mut sink = JsonlAppender::open(grades_path)?;
    let term = GradingError::Terminal;

    for (i, record) in todo.iter().enumerate() {
        let description = manifest
            .bug(record.key.bug_id)
            .map_or("(not in manifest)", |b| b.description.as_str());
        writeln!(
            output,
            "\n=== [{}/{}] {}: {}\n--- error\n{}\n--- response\n{}\n---",
            i + 1,
            todo.len(),
            record.key,
            description,
            record.error_text,
            record.response
        )
        .map_err(term)?;

        let mut answers = [false; 5];
        for metric in Metric::ALL {
            let default =
                (metric == Metric::SolutionProvided).then(|| detector.flag(&record.response));
            match ask(input, output, metric, default).map_err(term)? {
                Answer::Value(v) => answers[metric.index()] = v,
                Answer::Quit => {
                    session.quit = true;
                    return Ok(session);
                }
            }
        }
        sink.append(&GradeRecord::new(record.key.clone(), answers, grader_id))
            .map_err(GradingError::Write)?;
        session.graded += 1;
        session.remaining -= 1;
    }
    Ok(session)
}

fn ask<R: BufRead, W: Write>(
    input: &mut R,
    output: &mut W,
    metric: Metric,
    default: Option<bool>,
) -> io::Result<Answer> {
    let hint = match default {
        Some(true) => "[Y/n/q]",
        Some(false) => "[y/N/q]",
        None => "[y/n/q]",
    };
    loop {
        write!(
            output,
            "{}: {} {} ",
            metric.label(),
            metric.question(),
            hint
        )?;
        output.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            writeln!(output)?;
            return Ok(Answer::Quit);
        }
        match line.trim().to_ascii_lowercase().as_str() {
            "y" | "yes" => return Ok(Answer::Value(true)),
            "n" | "no" => return Ok(Answer::Value(false)),
            "q" | "quit" => return Ok(Answer::Quit),
            "" if default.is_some() => return Ok(Answer::Value(default.unwrap_or_default())),
            _ => writeln!(output, "please answer y or n (q to stop)")?,
        }
    }
}
