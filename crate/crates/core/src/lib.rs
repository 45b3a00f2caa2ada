//! Explaining FPGA synthesis errors with an LLM, and the experiment harness
//! around it: corpus, log parsing, prompt rendering, generation, grading and
//! reporting.

pub mod backend;
pub mod context;
pub mod corpus;
pub mod experiment;
pub mod grading;
pub mod logparse;
pub mod model;
pub mod par;
pub mod prompting;
pub mod report;
pub mod store;

pub use backend::{
    default_model_plan, Backend, BackendError, MockBackend, ModelSpec, RemoteBackend,
};
pub use corpus::{load_corpus, load_corpus_dir, CorpusManifest};
pub use experiment::{plan, Experiment, ExplanationRecord, Job, RunOptions, RunSummary};
pub use grading::{auto_flag_solution, GradeRecord};
pub use logparse::{scan_errors, ErrorRecord};
pub use model::{Language, Strategy, Tool};
pub use par::ExecMode;
pub use report::{aggregate, AggregateReport, Grouping};
