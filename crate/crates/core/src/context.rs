//! Pulling the tool-reported line (and optionally its neighbours) out of a source file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ContextError {
    #[error("line numbers are 1-indexed; got 0")]
    ZeroLine,
    #[error("line {line_no} is past the end of the file ({line_count} lines)")]
    OutOfRange { line_no: u32, line_count: usize },
    #[error("cannot read source file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A line of text plus the terminator that followed it (`"\n"`, `"\r\n"` or `""`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Line<'a> {
    pub text: &'a str,
    pub terminator: &'a str,
}

/// Splits on `\n`, stripping a preceding `\r`. A final unterminated line counts.
pub fn split_lines(text: &str) -> Vec<Line<'_>> {
    let mut lines = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        match rest.find('\n') {
            Some(pos) => {
                let (body, term_start) = match rest[..pos].strip_suffix('\r') {
                    Some(body) => (body, pos - 1),
                    None => (&rest[..pos], pos),
                };
                lines.push(Line {
                    text: body,
                    terminator: &rest[term_start..=pos],
                });
                rest = &rest[pos + 1..];
            }
            None => {
                lines.push(Line {
                    text: rest,
                    terminator: "",
                });
                rest = "";
            }
        }
    }
    lines
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceContext {
    pub file: PathBuf,
    pub line_no: u32,
    pub line_text: String,
    /// Contiguous `(line_no, text)` pairs around `line_no`, when requested.
    pub window: Option<Vec<(u32, String)>>,
}

fn check(lines: &[Line<'_>], line_no: u32) -> Result<usize, ContextError> {
    if line_no == 0 {
        return Err(ContextError::ZeroLine);
    }
    let idx = line_no as usize - 1;
    if idx >= lines.len() {
        return Err(ContextError::OutOfRange {
            line_no,
            line_count: lines.len(),
        });
    }
    Ok(idx)
}

/// Returns the text of 1-indexed line `line_no`, without its terminator.
pub fn extract_line(source_text: &str, line_no: u32) -> Result<String, ContextError> {
    let lines = split_lines(source_text);
    let idx = check(&lines, line_no)?;
    Ok(lines[idx].text.to_owned())
}

/// Returns the reported line with up to `before`/`after` neighbours, clamped to the file.
pub fn extract_window(
    source_text: &str,
    line_no: u32,
    before: u32,
    after: u32,
) -> Result<SourceContext, ContextError> {
    let lines = split_lines(source_text);
    let idx = check(&lines, line_no)?;
    let first = idx.saturating_sub(before as usize);
    let last = (idx + after as usize).min(lines.len() - 1);
    let window = (first..=last)
        .map(|i| (i as u32 + 1, lines[i].text.to_owned()))
        .collect();
    Ok(SourceContext {
        file: PathBuf::new(),
        line_no,
        line_text: lines[idx].text.to_owned(),
        window: Some(window),
    })
}

pub fn read_source(path: &Path) -> Result<String, ContextError> {
    fs::read(path)
        .map(|b| String::from_utf8_lossy(&b).into_owned())
        .map_err(|source| ContextError::Io {
            path: path.to_path_buf(),
            source,
        })
}

impl SourceContext {
    /// Reads `path` and extracts `line_no`, with an optional `(before, after)` window.
    pub fn load(
        path: &Path,
        line_no: u32,
        window: Option<(u32, u32)>,
    ) -> Result<Self, ContextError> {
        let text = read_source(path)?;
        let mut ctx = match window {
            Some((before, after)) => extract_window(&text, line_no, before, after)?,
            None => SourceContext {
                file: PathBuf::new(),
                line_no,
                line_text: extract_line(&text, line_no)?,
                window: None,
            },
        };
        ctx.file = path.to_path_buf();
        Ok(ctx)
    }

    /// Window lines joined with newlines, or the single line when no window was taken.
    pub fn excerpt(&self) -> String {
        match &self.window {
            Some(w) => w
                .iter()
                .map(|(_, t)| t.as_str())
                .collect::<Vec<_>>()
                .join("\n"),
            None => self.line_text.clone(),
        }
    }
}

/// Finds the file a tool reported, which may be an absolute path from another
/// machine. Tries the path as given, then relative to each root, then the first
/// file (in path order) below a root with the same file name.
pub fn resolve_source(reported: &Path, roots: &[&Path]) -> Option<PathBuf> {
    if reported.is_absolute() && reported.is_file() {
        return Some(reported.to_path_buf());
    }
    for root in roots {
        let joined = root.join(reported);
        if joined.is_file() {
            return Some(joined);
        }
    }
    let name = reported.file_name()?;
    roots.iter().find_map(|root| {
        let mut hits: Vec<PathBuf> = walkdir::WalkDir::new(root)
            .into_iter()
            .filter_map(Result::ok)
            .filter(|e| e.file_type().is_file() && e.file_name() == name)
            .map(walkdir::DirEntry::into_path)
            .collect();
        hits.sort();
        hits.into_iter().next()
    })
}

const HDL_EXTENSIONS: [&str; 4] = ["vhd", "vhdl", "v", "sv"];

/// First VHDL or Verilog file below `root`, in path order.
pub fn find_hdl_source(root: &Path) -> Option<PathBuf> {
    let mut hits: Vec<PathBuf> = walkdir::WalkDir::new(root)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(walkdir::DirEntry::into_path)
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| HDL_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    hits.sort();
    hits.into_iter().next()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn resolve_by_file_name() {
        let dir = tempfile::tempdir().unwrap();
        let rtl = dir.path().join("rtl");
        fs::create_dir_all(&rtl).unwrap();
        fs::write(rtl.join("top1.vhd"), "x").unwrap();
        let found = resolve_source(Path::new("path/to/bug_1/rtl/top1.vhd"), &[dir.path()]);
        assert_eq!(found, Some(rtl.join("top1.vhd")));
        assert_eq!(
            resolve_source(Path::new("rtl/top1.vhd"), &[dir.path()]),
            Some(rtl.join("top1.vhd"))
        );
        assert_eq!(resolve_source(Path::new("nope.v"), &[dir.path()]), None);
    }

    #[test]
    fn hdl_source_search() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("rtl")).unwrap();
        fs::write(dir.path().join("notes.txt"), "x").unwrap();
        assert_eq!(find_hdl_source(dir.path()), None);
        fs::write(dir.path().join("rtl/b.v"), "x").unwrap();
        fs::write(dir.path().join("rtl/a.VHD"), "x").unwrap();
        assert_eq!(
            find_hdl_source(dir.path()),
            Some(dir.path().join("rtl/a.VHD"))
        );
    }

    #[test]
    fn final_line_without_newline_counts() {
        assert_eq!(extract_line("a\nb", 2).unwrap(), "b");
        assert!(matches!(
            extract_line("a\nb\n", 3),
            Err(ContextError::OutOfRange { line_count: 2, .. })
        ));
    }

    #[test]
    fn crlf_is_stripped() {
        assert_eq!(extract_line("x\r\ny\r\n", 1).unwrap(), "x");
        assert_eq!(extract_line("x\r\ny\r\n", 2).unwrap(), "y");
    }

    #[test]
    fn zero_line_is_rejected() {
        assert!(matches!(
            extract_line("abc", 0),
            Err(ContextError::ZeroLine)
        ));
    }

    #[test]
    fn window_clamps_at_start() {
        let ctx = extract_window("1\n2\n3\n", 1, 5, 1).unwrap();
        let nums: Vec<u32> = ctx.window.unwrap().iter().map(|(n, _)| *n).collect();
        assert_eq!(nums, vec![1, 2]);
    }

    #[test]
    fn window_clamps_at_end() {
        let ctx = extract_window("1\n2\n3", 3, 1, 9).unwrap();
        let nums: Vec<u32> = ctx.window.unwrap().iter().map(|(n, _)| *n).collect();
        assert_eq!(nums, vec![2, 3]);
    }

    #[test]
    fn empty_text_has_no_lines() {
        assert!(split_lines("").is_empty());
        assert!(matches!(
            extract_line("", 1),
            Err(ContextError::OutOfRange { line_count: 0, .. })
        ));
    }

    proptest! {
        #[test]
        fn split_lines_round_trips(text in "[a-z \\r\\n]{0,80}") {
            let joined: String = split_lines(&text)
                .iter()
                .map(|l| format!("{}{}", l.text, l.terminator))
                .collect();
            prop_assert_eq!(joined, text);
        }

        #[test]
        fn zero_window_equals_single_line(text in "[a-z\\n]{1,60}", pick in 0usize..100) {
            let count = split_lines(&text).len();
            prop_assume!(count > 0);
            let line_no = (pick % count) as u32 + 1;
            let ctx = extract_window(&text, line_no, 0, 0).unwrap();
            let single = extract_line(&text, line_no).unwrap();
            prop_assert_eq!(&ctx.line_text, &single);
            prop_assert_eq!(ctx.window.unwrap(), vec![(line_no, single)]);
        }

        #[test]
        fn window_is_contiguous_and_contains_center(
            text in "[a-z\\n]{1,60}", pick in 0usize..100, before in 0u32..5, after in 0u32..5
        ) {
            let count = split_lines(&text).len();
            prop_assume!(count > 0);
            let line_no = (pick % count) as u32 + 1;
            let ctx = extract_window(&text, line_no, before, after).unwrap();
            let window = ctx.window.unwrap();
            prop_assert!(window.windows(2).all(|w| w[1].0 == w[0].0 + 1));
            let center = window.iter().find(|(n, _)| *n == line_no).unwrap();
            prop_assert_eq!(&center.1, &ctx.line_text);
        }
    }
}
