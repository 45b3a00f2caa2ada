//! The bug corpus: a manifest of small buggy HDL designs, each with recorded
//! synthesis logs for the tools that reject it.
//!
//! Layout on disk, relative to the directory holding `manifest.toml`:
//!
//! ```text
//! bug_<id>/<tool>/rtl/*.{vhd,v}
//! bug_<id>/<tool>/logs/...          (recorded vendor logs)
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::logparse;
use crate::model::{Language, Tool};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("corpus manifest not found: {0}")]
    MissingManifest(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("manifest version must be >= 1, found {0}")]
    BadVersion(u32),
    #[error("duplicate bug id {0}")]
    DuplicateId(u32),
    #[error("bug ids must run 1..=n in order; found {found} at position {position}")]
    NonContiguousIds { position: usize, found: u32 },
    #[error("bug {0} has an empty tool applicability set")]
    EmptyApplicability(u32),
    #[error("bug {bug}: fixtures listed for {tool}, which is not in its applicability set")]
    FixtureToolNotApplicable { bug: u32, tool: Tool },
    #[error("bug {bug}: no fixture files listed for applicable tool {tool}")]
    NoFixtures { bug: u32, tool: Tool },
    #[error("bug {bug}: fixture file missing: {path}")]
    MissingFixture { bug: u32, path: PathBuf },
    #[error("failed to serialize manifest: {0}")]
    Serialize(#[from] toml::ser::Error),
}

/// One corpus entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugSpec {
    pub id: u32,
    pub category: String,
    pub language: Language,
    pub description: String,
    pub applicability: BTreeSet<Tool>,
    #[serde(default)]
    pub fixtures: BTreeMap<Tool, Vec<PathBuf>>,
    /// Substring expected in each tool's error message.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub error_fingerprint: BTreeMap<Tool, String>,
}

impl BugSpec {
    pub fn applies_to(&self, tool: Tool) -> bool {
        self.applicability.contains(&tool)
    }

    /// `bug_<id>/<tool>` relative to the corpus root.
    pub fn tool_dir(&self, tool: Tool) -> PathBuf {
        PathBuf::from(format!("bug_{}", self.id)).join(tool.dir_name())
    }

    pub fn fingerprint(&self, tool: Tool) -> Option<&str> {
        self.error_fingerprint
            .get(&tool)
            .map(String::as_str)
            .filter(|s| !s.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    #[serde(default)]
    pub bugs: Vec<BugSpec>,
    #[serde(skip)]
    pub corpus_root: PathBuf,
}

impl CorpusManifest {
    pub fn bug(&self, id: u32) -> Option<&BugSpec> {
        self.bugs.iter().find(|b| b.id == id)
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        self.corpus_root.join(relative)
    }

    /// Serializes the manifest (without `corpus_root`) as TOML.
    pub fn to_toml(&self) -> Result<String, CorpusError> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Checks every invariant, including that fixture files exist on disk.
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.version < 1 {
            return Err(CorpusError::BadVersion(self.version));
        }
        let mut seen = HashSet::new();
        for bug in &self.bugs {
            if !seen.insert(bug.id) {
                return Err(CorpusError::DuplicateId(bug.id));
            }
        }
        for (position, bug) in self.bugs.iter().enumerate() {
            if bug.id as usize != position + 1 {
                return Err(CorpusError::NonContiguousIds {
                    position,
                    found: bug.id,
                });
            }
        }
        for bug in &self.bugs {
            if bug.applicability.is_empty() {
                return Err(CorpusError::EmptyApplicability(bug.id));
            }
            if let Some(tool) = bug.fixtures.keys().find(|t| !bug.applies_to(**t)) {
                return Err(CorpusError::FixtureToolNotApplicable {
                    bug: bug.id,
                    tool: *tool,
                });
            }
            for &tool in &bug.applicability {
                let files = bug.fixtures.get(&tool).map(Vec::as_slice).unwrap_or(&[]);
                if files.is_empty() {
                    return Err(CorpusError::NoFixtures { bug: bug.id, tool });
                }
                for rel in files {
                    if !self.resolve(rel).is_file() {
                        return Err(CorpusError::MissingFixture {
                            bug: bug.id,
                            path: rel.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Loads and validates a manifest. `corpus_root` becomes the manifest's directory.
pub fn load_corpus(manifest_path: &Path) -> Result<CorpusManifest, CorpusError> {
    if !manifest_path.is_file() {
        return Err(CorpusError::MissingManifest(manifest_path.to_path_buf()));
    }
    let text = fs::read_to_string(manifest_path).map_err(|source| CorpusError::Io {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let mut manifest: CorpusManifest =
        toml::from_str(&text).map_err(|e| CorpusError::Malformed {
            path: manifest_path.to_path_buf(),
            message: e.to_string(),
        })?;
    manifest.corpus_root = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    manifest.validate()?;
    Ok(manifest)
}

/// Accepts either a manifest file or a corpus directory containing one.
pub fn load_corpus_dir(path: &Path) -> Result<CorpusManifest, CorpusError> {
    if path.is_dir() {
        load_corpus(&path.join(MANIFEST_FILE))
    } else {
        load_corpus(path)
    }
}

pub fn write_manifest(manifest: &CorpusManifest, path: &Path) -> Result<(), CorpusError> {
    let text = manifest.to_toml()?;
    fs::write(path, text).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Every `(bug, tool)` pair that produces a synthesis error, ordered by bug id
/// and then Vivado before Quartus.
pub fn applicable_pairs(manifest: &CorpusManifest) -> Vec<(u32, Tool)> {
    let mut bugs: Vec<&BugSpec> = manifest.bugs.iter().collect();
    bugs.sort_by_key(|b| b.id);
    bugs.into_iter()
        .flat_map(|b| {
            Tool::ALL
                .into_iter()
                .filter(|t| b.applies_to(*t))
                .map(move |t| (b.id, t))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairValidation {
    pub bug_id: u32,
    pub tool: Tool,
    pub log_path: Option<PathBuf>,
    pub errors_found: usize,
    pub passed: bool,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub entries: Vec<PairValidation>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PairValidation> {
        self.entries.iter().filter(|e| !e.passed)
    }
}

/// Checks that each pair's recorded log yields an error matching its fingerprint.
///
/// Logs are looked up under `<log_root>/bug_<id>/<tool>/logs` with the usual
/// vendor log patterns. Missing logs are reported as failures.
pub fn validate_corpus(manifest: &CorpusManifest, log_root: &Path) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (bug_id, tool) in applicable_pairs(manifest) {
        let bug = manifest.bug(bug_id).expect("pair comes from manifest");
        let log_dir = log_root.join(bug.tool_dir(tool)).join("logs");
        let mut entry = PairValidation {
            bug_id,
            tool,
            log_path: None,
            errors_found: 0,
            passed: false,
            reason: None,
        };
        let log_path = match logparse::locate_log(&log_dir, tool) {
            Ok(p) => p,
            Err(e) => {
                entry.reason = Some(e.to_string());
                report.entries.push(entry);
                continue;
            }
        };
        entry.log_path = Some(log_path.clone());
        let records = match logparse::read_log(&log_path) {
            Ok(text) => logparse::scan_errors(&text, tool, &log_path),
            Err(e) => {
                entry.reason = Some(format!("failed to read log: {e}"));
                report.entries.push(entry);
                continue;
            }
        };
        entry.errors_found = records.len();
        if records.is_empty() {
            entry.reason = Some("no errors extracted".to_owned());
        } else if let Some(fp) = bug.fingerprint(tool) {
            if records.iter().any(|r| r.message.contains(fp)) {
                entry.passed = true;
            } else {
                entry.reason = Some(format!("no extracted error contains `{fp}`"));
            }
        } else {
            entry.passed = true;
        }
        report.entries.push(entry);
    }
    report
}
