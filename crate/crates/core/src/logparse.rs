//! Finding vendor synthesis logs and pulling structured error records out of them.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;
use std::time::SystemTime;

use regex::Regex;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::model::Tool;

pub const VIVADO_SENTINEL: &str = "ERROR:";
pub const QUARTUS_SENTINEL: &str = "Error";

pub const QUARTUS_LOG_PATTERN: &str = "**/output_files/*.map.rpt";
pub const VIVADO_LOG_PATTERN: &str = "**/*.runs/synth_1/runme.log";

/// Default Quartus location token: `<file>(<line>)` where the file has an extension.
pub const DEFAULT_QUARTUS_LOCATION: &str =
    r"(?P<file>[A-Za-z0-9_.\-/\\:~]*[A-Za-z0-9_\-]\.[A-Za-z0-9]+)\((?P<line>\d+)\)";

static VIVADO_LOCATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[(?P<file>[^\[\]]*):(?P<line>\d+)\]").unwrap());

static QUARTUS_HEAD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^Error(?:\s*\((?P<code>\d+)\))?\s*:?\s*(?P<message>.*)$").unwrap()
});

static DEFAULT_SCANNER: LazyLock<LogScanner> = LazyLock::new(LogScanner::default);

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("project root does not exist: {0}")]
    RootNotFound(PathBuf),
    #[error("log not found under {root} (searched {pattern})")]
    NotFound {
        root: PathBuf,
        pattern: &'static str,
    },
    #[error("invalid Quartus location pattern: {0}")]
    BadPattern(String),
}

/// One extracted synthesis error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub tool: Tool,
    pub raw_line: String,
    pub code: Option<String>,
    pub message: String,
    pub source_file: Option<PathBuf>,
    pub line_no: Option<u32>,
    pub log_path: PathBuf,
    pub index: usize,
}

/// Fields recovered from a single error line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedError {
    pub code: Option<String>,
    pub message: String,
    pub source_file: Option<PathBuf>,
    pub line_no: Option<u32>,
}

pub fn log_pattern(tool: Tool) -> &'static str {
    match tool {
        Tool::Vivado => VIVADO_LOG_PATTERN,
        Tool::Quartus => QUARTUS_LOG_PATTERN,
    }
}

fn matches_log_pattern(path: &Path, tool: Tool) -> bool {
    let name = |p: Option<&Path>| {
        p.and_then(Path::file_name)
            .and_then(|n| n.to_str())
            .unwrap_or("")
            .to_owned()
    };
    let file = name(Some(path));
    let parent = path.parent();
    match tool {
        Tool::Quartus => file.ends_with(".map.rpt") && name(parent) == "output_files",
        Tool::Vivado => {
            file == "runme.log"
                && name(parent) == "synth_1"
                && name(parent.and_then(Path::parent)).ends_with(".runs")
        }
    }
}

/// Returns the newest synthesis log for `tool` below `project_root`.
///
/// Equal modification times fall back to the lexicographically first path.
pub fn locate_log(project_root: &Path, tool: Tool) -> Result<PathBuf, LogError> {
    if !project_root.exists() {
        return Err(LogError::RootNotFound(project_root.to_path_buf()));
    }
    let mut best: Option<(SystemTime, PathBuf)> = None;
    for entry in WalkDir::new(project_root)
        .follow_links(true)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
    {
        let path = entry.path();
        if !matches_log_pattern(path, tool) {
            continue;
        }
        let mtime = entry
            .metadata()
            .ok()
            .and_then(|m| m.modified().ok())
            .unwrap_or(SystemTime::UNIX_EPOCH);
        let better = match &best {
            None => true,
            Some((t, p)) => mtime > *t || (mtime == *t && path < p.as_path()),
        };
        if better {
            best = Some((mtime, path.to_path_buf()));
        }
    }
    best.map(|(_, p)| p).ok_or_else(|| LogError::NotFound {
        root: project_root.to_path_buf(),
        pattern: log_pattern(tool),
    })
}

/// Reads a log file, replacing invalid UTF-8 sequences.
pub fn read_log(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

pub fn is_error_line(line: &str, tool: Tool) -> bool {
    match tool {
        Tool::Vivado => line.starts_with(VIVADO_SENTINEL),
        Tool::Quartus => line.starts_with("Error:") || line.starts_with("Error ("),
    }
}

/// Error-line scanner. Holds the (configurable) Quartus location grammar.
#[derive(Debug, Clone)]
pub struct LogScanner {
    quartus_location: Regex,
}

impl Default for LogScanner {
    fn default() -> Self {
        Self {
            quartus_location: Regex::new(DEFAULT_QUARTUS_LOCATION).unwrap(),
        }
    }
}

impl LogScanner {
    /// Uses `pattern` to find the Quartus source location. The pattern must
    /// define the named groups `file` and `line`.
    pub fn with_quartus_location(pattern: &str) -> Result<Self, LogError> {
        let re = Regex::new(pattern).map_err(|e| LogError::BadPattern(e.to_string()))?;
        let names: Vec<_> = re.capture_names().flatten().collect();
        if !names.contains(&"file") || !names.contains(&"line") {
            return Err(LogError::BadPattern(
                "pattern needs named groups `file` and `line`".to_owned(),
            ));
        }
        Ok(Self {
            quartus_location: re,
        })
    }

    pub fn scan(&self, log_text: &str, tool: Tool, log_path: &Path) -> Vec<ErrorRecord> {
        log_text
            .lines()
            .filter(|line| is_error_line(line, tool))
            .enumerate()
            .map(|(index, line)| {
                let parsed = match tool {
                    Tool::Vivado => parse_vivado_location(line),
                    Tool::Quartus => self.parse_quartus_location(line),
                };
                ErrorRecord {
                    tool,
                    raw_line: line.to_owned(),
                    code: parsed.code,
                    message: parsed.message,
                    source_file: parsed.source_file,
                    line_no: parsed.line_no,
                    log_path: log_path.to_path_buf(),
                    index,
                }
            })
            .collect()
    }

    pub fn parse_quartus_location(&self, raw_line: &str) -> ParsedError {
        let Some(head) = QUARTUS_HEAD.captures(raw_line) else {
            return ParsedError {
                message: raw_line.trim().to_owned(),
                ..ParsedError::default()
            };
        };
        let code = head.name("code").map(|m| m.as_str().to_owned());
        let message = head
            .name("message")
            .map_or("", |m| m.as_str())
            .trim()
            .to_owned();
        let mut parsed = ParsedError {
            code,
            message,
            ..ParsedError::default()
        };
        if let Some(loc) = self.quartus_location.captures(&parsed.message) {
            let line_no = loc
                .name("line")
                .and_then(|m| m.as_str().parse::<u32>().ok())
                .filter(|n| *n > 0);
            let file = loc
                .name("file")
                .map(|m| m.as_str())
                .filter(|f| !f.is_empty());
            if let (Some(line_no), Some(file)) = (line_no, file) {
                parsed.source_file = Some(PathBuf::from(file));
                parsed.line_no = Some(line_no);
            }
        }
        parsed
    }
}

/// Extracts every error line for `tool`, in file order.
pub fn scan_errors(log_text: &str, tool: Tool, log_path: &Path) -> Vec<ErrorRecord> {
    DEFAULT_SCANNER.scan(log_text, tool, log_path)
}

/// Splits a Vivado `ERROR:` line into code, message and trailing location.
///
/// The code is the first bracket group after the sentinel; the location is the
/// last `[path:line]` group, split at the rightmost colon.
pub fn parse_vivado_location(raw_line: &str) -> ParsedError {
    let mut rest = raw_line
        .strip_prefix(VIVADO_SENTINEL)
        .unwrap_or(raw_line)
        .trim();
    let mut parsed = ParsedError::default();

    if let Some(inner) = rest.strip_prefix('[') {
        if let Some(end) = inner.find(']') {
            let code = inner[..end].trim();
            if !code.is_empty() {
                parsed.code = Some(code.to_owned());
            }
            rest = &inner[end + 1..];
        }
    }

    let location = VIVADO_LOCATION.captures_iter(rest).filter_map(|c| {
        let whole = c.get(0)?;
        let line_no = c["line"].parse::<u32>().ok().filter(|n| *n > 0)?;
        let file = c.name("file")?.as_str();
        (!file.is_empty()).then(|| (whole.start(), whole.end(), file.to_owned(), line_no))
    });
    match location.last() {
        Some((start, end, file, line_no)) => {
            let before = rest[..start].trim();
            let after = rest[end..].trim();
            parsed.message = if after.is_empty() {
                before.to_owned()
            } else {
                format!("{before} {after}").trim().to_owned()
            };
            parsed.source_file = Some(PathBuf::from(file));
            parsed.line_no = Some(line_no);
        }
        None => parsed.message = rest.trim().to_owned(),
    }
    parsed
}

pub fn parse_quartus_location(raw_line: &str) -> ParsedError {
    DEFAULT_SCANNER.parse_quartus_location(raw_line)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG_LINE: &str =
        "ERROR: [Synth 8-2715] syntax error near elsif [path/to/bug_1/rtl/top1.vhd:46]";

    #[test]
    fn vivado_reference_line() {
        let p = parse_vivado_location(FIG_LINE);
        assert_eq!(p.code.as_deref(), Some("Synth 8-2715"));
        assert_eq!(p.message, "syntax error near elsif");
        assert_eq!(
            p.source_file.as_deref(),
            Some(Path::new("path/to/bug_1/rtl/top1.vhd"))
        );
        assert_eq!(p.line_no, Some(46));
    }

    #[test]
    fn vivado_degenerate_line() {
        let p = parse_vivado_location("ERROR: something went wrong");
        assert_eq!(
            p,
            ParsedError {
                message: "something went wrong".into(),
                ..Default::default()
            }
        );
    }

    #[test]
    fn vivado_colon_in_directory_splits_at_rightmost_colon() {
        let p = parse_vivado_location(
            "ERROR: [Synth 8-36] 'tmp' is not declared [C:/work/a:b/top14.v:9]",
        );
        assert_eq!(
            p.source_file.as_deref(),
            Some(Path::new("C:/work/a:b/top14.v"))
        );
        assert_eq!(p.line_no, Some(9));
        assert_eq!(p.message, "'tmp' is not declared");
    }

    #[test]
    fn vivado_earlier_brackets_stay_in_message() {
        let p = parse_vivado_location(
            "ERROR: [Synth 8-448] port [3] of 'u' does not exist [/x/top.v:12]",
        );
        assert_eq!(p.message, "port [3] of 'u' does not exist");
        assert_eq!(p.line_no, Some(12));
    }

    #[test]
    fn vivado_line_zero_is_not_a_location() {
        let p = parse_vivado_location("ERROR: [Synth 1-1] bad [top.v:0]");
        assert_eq!(p.line_no, None);
        assert_eq!(p.source_file, None);
    }

    #[test]
    fn quartus_with_code_and_location() {
        let p = parse_quartus_location(
            r#"Error (10500): VHDL syntax error at top1.vhd(45) near text "elsif""#,
        );
        assert_eq!(p.code.as_deref(), Some("10500"));
        assert!(p.message.contains("syntax error"));
        assert_eq!(p.source_file.as_deref(), Some(Path::new("top1.vhd")));
        assert_eq!(p.line_no, Some(45));
    }

    #[test]
    fn quartus_plain_line() {
        let p = parse_quartus_location("Error: quartus_map failed.");
        assert_eq!(
            p,
            ParsedError {
                message: "quartus_map failed.".into(),
                ..Default::default()
            }
        );
    }

    #[test]
    fn quartus_code_without_location() {
        let p = parse_quartus_location(
            r#"Error (12007): Top-level design entity "top10" is undefined"#,
        );
        assert_eq!(p.code.as_deref(), Some("12007"));
        assert_eq!(p.source_file, None);
        assert_eq!(p.line_no, None);
    }

    #[test]
    fn custom_quartus_pattern() {
        let s = LogScanner::with_quartus_location(r"line (?P<line>\d+) of (?P<file>\S+)").unwrap();
        let p = s.parse_quartus_location("Error (1): oops at line 7 of a.v");
        assert_eq!(p.line_no, Some(7));
        assert_eq!(p.source_file.as_deref(), Some(Path::new("a.v")));
        assert!(LogScanner::with_quartus_location(r"(?P<file>x)").is_err());
    }

    #[test]
    fn quartus_sentinel_variants() {
        assert!(is_error_line("Error: x", Tool::Quartus));
        assert!(is_error_line("Error (1): x", Tool::Quartus));
        assert!(!is_error_line("Errors: 3", Tool::Quartus));
        assert!(!is_error_line(
            "    Error: Peak virtual memory",
            Tool::Quartus
        ));
        assert!(!is_error_line("error: x", Tool::Vivado));
    }

    #[test]
    fn scan_empty_text() {
        assert!(scan_errors("", Tool::Vivado, Path::new("x")).is_empty());
    }

    #[test]
    fn scan_two_errors_between_infos() {
        let log = "INFO: [Synth 8-1] start\n\
                   ERROR: [Synth 8-36] 'a' is not declared [/p/top.v:3]\n\
                   INFO: [Synth 8-2] more\n\
                   WARNING: [Synth 8-3] careful\n\
                   ERROR: [Common 17-69] Command failed: Synthesis failed\n\
                   INFO: done\n";
        let recs = scan_errors(log, Tool::Vivado, Path::new("runme.log"));
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].index, 0);
        assert_eq!(recs[1].index, 1);
        assert_eq!(recs[0].line_no, Some(3));
        assert_eq!(recs[1].code.as_deref(), Some("Common 17-69"));
        assert_eq!(recs[1].line_no, None);
    }

    #[test]
    fn crlf_log_lines_are_trimmed() {
        let recs = scan_errors("Error: a\r\nInfo: b\r\n", Tool::Quartus, Path::new("x"));
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].raw_line, "Error: a");
    }
}
