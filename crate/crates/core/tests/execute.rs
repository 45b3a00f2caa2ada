use std::collections::HashSet;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use hdl_explain::backend::{Backend, BackendError, Explanation, GenerationRequest};
use hdl_explain::experiment::{load_store, ExplanationRecord, RecordSink, RunOptions};
use hdl_explain::store::JsonlAppender;
use hdl_explain::{default_model_plan, load_corpus_dir, plan, ExecMode, Experiment, MockBackend};

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// Fails every sample whose index is 3 until `heal` is set.
struct Flaky {
    inner: MockBackend,
    healed: AtomicBool,
}

impl Backend for Flaky {
    fn name(&self) -> &str {
        "flaky"
    }

    fn generate_sample(
        &self,
        req: &GenerationRequest,
        i: u32,
    ) -> Result<Explanation, BackendError> {
        if i == 3 && !self.healed.load(Ordering::SeqCst) {
            return Err(BackendError::Timeout);
        }
        self.inner.generate_sample(req, i)
    }
}

/// Accepts `budget` appends, then fails every write.
struct Crashing {
    inner: JsonlAppender,
    budget: usize,
}

impl RecordSink for Crashing {
    fn append(&mut self, record: &ExplanationRecord) -> io::Result<()> {
        if self.budget == 0 {
            return Err(io::Error::other("disk full"));
        }
        self.budget -= 1;
        self.inner.append(record)
    }
}

#[test]
fn mock_run_is_complete_fast_and_idempotent() {
    let m = load_corpus_dir(&corpus_dir()).unwrap();
    let jobs = plan(&m, &default_model_plan()).unwrap();
    let exp = Experiment::prepare(&m).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("out/responses.jsonl");
    let backend = MockBackend::new();

    let t = Instant::now();
    let first = exp
        .run_to_store(&jobs, &backend, &store, &RunOptions::default())
        .unwrap();
    assert!(t.elapsed().as_secs_f64() < 10.0);
    assert_eq!((first.succeeded, first.skipped, first.failed), (936, 0, 0));

    let second = exp
        .run_to_store(&jobs, &backend, &store, &RunOptions::default())
        .unwrap();
    assert_eq!((second.succeeded, second.skipped), (0, 936));

    let records = load_store(&store).unwrap();
    assert_eq!(records.len(), 936);
    let keys: HashSet<_> = records.iter().map(|r| r.key.clone()).collect();
    let planned: HashSet<_> = jobs.iter().cloned().collect();
    assert_eq!(keys, planned);
}

#[test]
fn store_round_trips_losslessly() {
    let m = load_corpus_dir(&corpus_dir()).unwrap();
    let jobs = plan(&m, &default_model_plan()).unwrap();
    let exp = Experiment::prepare(&m).unwrap();
    let mut in_memory: Vec<ExplanationRecord> = Vec::new();
    let opts = RunOptions {
        store_prompts: true,
        temperature: Some(0.7),
        ..RunOptions::default()
    };
    exp.execute(
        &jobs[..60],
        &HashSet::new(),
        &MockBackend::new(),
        &mut in_memory,
        &opts,
    )
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let mut w = JsonlAppender::open(&path).unwrap();
    for r in &in_memory {
        w.append(r).unwrap();
    }
    drop(w);
    assert_eq!(load_store(&path).unwrap(), in_memory);
    assert!(in_memory[0].prompt.is_some());
}

#[test]
fn sequential_and_parallel_write_identical_responses() {
    let m = load_corpus_dir(&corpus_dir()).unwrap();
    let jobs = plan(&m, &default_model_plan()).unwrap();
    let exp = Experiment::prepare(&m).unwrap();
    let run = |mode| {
        let mut out: Vec<ExplanationRecord> = Vec::new();
        let opts = RunOptions {
            mode,
            max_in_flight: 8,
            ..RunOptions::default()
        };
        exp.execute(&jobs, &HashSet::new(), &MockBackend::new(), &mut out, &opts)
            .unwrap();
        out.into_iter()
            .map(|r| (r.key, r.response, r.prompt_fingerprint))
            .collect::<Vec<_>>()
    };
    assert_eq!(run(ExecMode::Sequential), run(ExecMode::Parallel));
}

#[test]
fn exactly_once_under_backend_and_store_faults() {
    let m = load_corpus_dir(&corpus_dir()).unwrap();
    let jobs = plan(&m, &default_model_plan()).unwrap();
    let exp = Experiment::prepare(&m).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let backend = Flaky {
        inner: MockBackend::new(),
        healed: AtomicBool::new(false),
    };
    let opts = RunOptions::default();
    let done_keys = || -> HashSet<_> {
        match load_store(&path) {
            Ok(rs) => rs.into_iter().map(|r| r.key).collect(),
            Err(_) => HashSet::new(),
        }
    };

    // Store dies part-way through.
    let mut sink = Crashing {
        inner: JsonlAppender::open(&path).unwrap(),
        budget: 200,
    };
    let err = exp
        .execute(&jobs, &done_keys(), &backend, &mut sink, &opts)
        .unwrap_err();
    assert_eq!(err.summary.succeeded, 200);
    drop(sink);

    // Backend drops every sample 3; 78 pairs×strategy have a sample 3.
    let summary = exp.run_to_store(&jobs, &backend, &path, &opts).unwrap();
    assert_eq!(summary.skipped, 200);
    assert_eq!(summary.failed, 78);
    assert_eq!(summary.succeeded + summary.failed + summary.skipped, 936);

    backend.healed.store(true, Ordering::SeqCst);
    let summary = exp.run_to_store(&jobs, &backend, &path, &opts).unwrap();
    assert_eq!((summary.succeeded, summary.failed), (78, 0));

    let records = load_store(&path).unwrap();
    assert_eq!(records.len(), 936);
    assert_eq!(done_keys().len(), 936);
}

#[test]
fn duplicate_keys_in_a_store_are_rejected() {
    let m = load_corpus_dir(&corpus_dir()).unwrap();
    let jobs = plan(&m, &default_model_plan()).unwrap();
    let exp = Experiment::prepare(&m).unwrap();
    let mut out: Vec<ExplanationRecord> = Vec::new();
    exp.execute(
        &jobs[..1],
        &HashSet::new(),
        &MockBackend::new(),
        &mut out,
        &RunOptions::default(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let mut w = JsonlAppender::open(&path).unwrap();
    w.append(&out[0]).unwrap();
    w.append(&out[0]).unwrap();
    drop(w);
    assert!(matches!(
        load_store(&path),
        Err(hdl_explain::store::StoreError::DuplicateKey { line: 2, .. })
    ));
}

#[test]
fn backend_failures_are_reported_not_written() {
    let m = load_corpus_dir(&corpus_dir()).unwrap();
    let jobs = plan(&m, &default_model_plan()).unwrap();
    let exp = Experiment::prepare(&m).unwrap();
    let mut out: Vec<ExplanationRecord> = Vec::new();
    let s = exp
        .execute(
            &jobs[..24],
            &HashSet::new(),
            &MockBackend::failing(),
            &mut out,
            &RunOptions::default(),
        )
        .unwrap();
    assert_eq!((s.failed, s.succeeded), (24, 0));
    assert!(out.is_empty());
}

#[test]
fn canned_bug1_responses_land_on_vivado_samples() {
    let m = load_corpus_dir(&corpus_dir()).unwrap();
    let jobs = plan(&m, &default_model_plan()).unwrap();
    let exp = Experiment::prepare(&m).unwrap();
    let mut out: Vec<ExplanationRecord> = Vec::new();
    exp.execute(
        &jobs[..24],
        &HashSet::new(),
        &MockBackend::new(),
        &mut out,
        &RunOptions::default(),
    )
    .unwrap();
    let first = &out[0];
    assert_eq!(first.key.bug_id, 1);
    assert!(first
        .response
        .starts_with("The bug is in the process statement"));
    assert_eq!(
        first.error_text,
        "ERROR: [Synth 8-2715] syntax error near elsif [path/to/bug_1/rtl/top1.vhd:46]"
    );
}
