//! Byte-for-byte snapshots of the rendered bug-1 prompts.
//!
//! Run with `UPDATE_SNAPSHOTS=1` to rewrite the files after an intended change.

use std::fs;
use std::path::{Path, PathBuf};

use hdl_explain::experiment::Experiment;
use hdl_explain::prompting::{system_prompt, PromptBundle, NO_CODE_SENTENCE};
use hdl_explain::{load_corpus_dir, Strategy, Tool};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).to_path_buf()
}

fn check_snapshot(name: &str, actual: &str) {
    let path = root().join("tests/snapshots").join(name);
    if std::env::var_os("UPDATE_SNAPSHOTS").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}; run with UPDATE_SNAPSHOTS=1", path.display()));
    assert_eq!(actual, expected, "snapshot {name} differs");
}

fn bug1(tool: Tool, strategy: Strategy) -> PromptBundle {
    let m = load_corpus_dir(&root().join("../../corpus")).unwrap();
    Experiment::prepare(&m)
        .unwrap()
        .bundle(1, tool, strategy)
        .unwrap()
        .clone()
}

#[test]
fn system_prompt_snapshot() {
    assert!(system_prompt().contains(NO_CODE_SENTENCE));
    check_snapshot("system.txt", system_prompt());
}

#[test]
fn bug1_vivado_ec_snapshot() {
    let b = bug1(Tool::Vivado, Strategy::ErrorCode);
    assert!(!b.user_text.contains("Error line:"));
    check_snapshot("bug1_vivado_ec.txt", &b.user_text);
}

#[test]
fn bug1_vivado_ecl_snapshot() {
    let b = bug1(Tool::Vivado, Strategy::ErrorCodeLine);
    assert_eq!(b.user_text.matches("Error line:").count(), 1);
    check_snapshot("bug1_vivado_ecl.txt", &b.user_text);
}

#[test]
fn bug1_quartus_ecl_snapshot() {
    let b = bug1(Tool::Quartus, Strategy::ErrorCodeLine);
    check_snapshot("bug1_quartus_ecl.txt", &b.user_text);
}

#[test]
fn fingerprints_are_stable_and_distinct() {
    let ec = bug1(Tool::Vivado, Strategy::ErrorCode);
    let ecl = bug1(Tool::Vivado, Strategy::ErrorCodeLine);
    assert_eq!(
        ec.fingerprint,
        bug1(Tool::Vivado, Strategy::ErrorCode).fingerprint
    );
    assert_ne!(ec.fingerprint, ecl.fingerprint);
    assert_eq!(ec.fingerprint.len(), 64);
}

#[test]
fn ec_and_ecl_share_everything_but_the_line_section() {
    let ec = bug1(Tool::Vivado, Strategy::ErrorCode).user_text;
    let ecl = bug1(Tool::Vivado, Strategy::ErrorCodeLine).user_text;
    let section = "Error line:\n```\n        elsif rising_edge(clk) then\n```\n\n";
    assert_eq!(ecl.replacen(section, "", 1), ec);
}
