//! Planning the full job cross-product, running it against a backend, and
//! persisting responses append-only with idempotent resume.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, GenerationRequest, ModelSpec};
use crate::context::{self, ContextError};
use crate::corpus::{applicable_pairs, CorpusManifest};
use crate::logparse::{self, ErrorRecord, LogError, LogScanner};
use crate::model::{Language, Strategy, Tool};
use crate::par::{ExecMode, WorkPool};
use crate::prompting::{system_prompt, PromptBundle, PromptError, PromptTemplate};
use crate::store::{self, JsonlAppender, StoreError, SCHEMA_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("model plan is empty")]
    EmptyModelPlan,
    #[error("model `{0}` has zero samples")]
    ZeroSamples(String),
    #[error("model `{0}` appears twice in the plan")]
    DuplicateModel(String),
    #[error("bug {bug} / {tool}: {source}")]
    Harvest {
        bug: u32,
        tool: Tool,
        #[source]
        source: HarvestError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("job {0} has no prepared prompt")]
    UnpreparedJob(Job),
}

/// Failures turning a project directory into prompt inputs.
#[derive(Debug, thiserror::Error)]
pub enum HarvestError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("cannot read {path}: {source}")]
    ReadLog {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("no errors found in {0}")]
    NoErrors(PathBuf),
    #[error("error index {index} is out of range; {log} has {count} errors")]
    ErrorIndex {
        index: usize,
        count: usize,
        log: PathBuf,
    },
    #[error("source file `{}` not found", .0.display())]
    SourceNotFound(PathBuf),
    #[error("the error names no source file and the project has no HDL sources")]
    NoSource,
    #[error(transparent)]
    Context(#[from] ContextError),
}

/// One unit of work; also the unique key of its stored record.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Job {
    pub bug_id: u32,
    pub tool: Tool,
    pub strategy: Strategy,
    pub model_name: String,
    pub sample_index: u32,
}

impl fmt::Display for Job {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "bug {}/{}/{}/{}#{}",
            self.bug_id, self.tool, self.strategy, self.model_name, self.sample_index
        )
    }
}

/// Every applicable `(bug, tool)` × strategy × model sample, ordered by bug,
/// tool, strategy, model (plan order) and sample.
pub fn plan(
    manifest: &CorpusManifest,
    model_plan: &[ModelSpec],
) -> Result<Vec<Job>, ExperimentError> {
    if model_plan.is_empty() {
        return Err(ExperimentError::EmptyModelPlan);
    }
    let mut names = HashSet::new();
    for m in model_plan {
        if m.samples == 0 {
            return Err(ExperimentError::ZeroSamples(m.name.clone()));
        }
        if !names.insert(m.name.as_str()) {
            return Err(ExperimentError::DuplicateModel(m.name.clone()));
        }
    }
    let mut jobs = Vec::new();
    for (bug_id, tool) in applicable_pairs(manifest) {
        for strategy in Strategy::ALL {
            for model in model_plan {
                for sample_index in 0..model.samples {
                    jobs.push(Job {
                        bug_id,
                        tool,
                        strategy,
                        model_name: model.name.clone(),
                        sample_index,
                    });
                }
            }
        }
    }
    Ok(jobs)
}

/// Job counts per tool, language, strategy and model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PlanSummary {
    pub total: usize,
    pub by_tool: BTreeMap<Tool, usize>,
    pub by_language: BTreeMap<Language, usize>,
    pub by_strategy: BTreeMap<Strategy, usize>,
    /// In plan order.
    pub by_model: Vec<(String, usize)>,
}

impl PlanSummary {
    pub fn of(jobs: &[Job], manifest: &CorpusManifest) -> Self {
        let mut s = PlanSummary {
            total: jobs.len(),
            ..Default::default()
        };
        for job in jobs {
            *s.by_tool.entry(job.tool).or_default() += 1;
            *s.by_strategy.entry(job.strategy).or_default() += 1;
            if let Some(bug) = manifest.bug(job.bug_id) {
                *s.by_language.entry(bug.language).or_default() += 1;
            }
            match s.by_model.iter_mut().find(|(m, _)| *m == job.model_name) {
                Some((_, n)) => *n += 1,
                None => s.by_model.push((job.model_name.clone(), 1)),
            }
        }
        s
    }

    pub fn model(&self, name: &str) -> usize {
        self.by_model
            .iter()
            .find(|(m, _)| m == name)
            .map_or(0, |(_, n)| *n)
    }
}

/// What gets sent for one `(bug, tool)` pair: the first extracted error, the
/// faulty file, and the reported line when the tool gave one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairInputs {
    pub bug_id: u32,
    pub tool: Tool,
    pub error: ErrorRecord,
    pub code_path: PathBuf,
    pub code_text: String,
    pub line_text: Option<String>,
}

impl PairInputs {
    /// Harvests the recorded log for `(bug, tool)` from the corpus tree.
    pub fn harvest(
        manifest: &CorpusManifest,
        bug_id: u32,
        tool: Tool,
        scanner: &LogScanner,
    ) -> Result<Self, ExperimentError> {
        let bug = manifest.bug(bug_id).expect("pair comes from the manifest");
        let project = manifest.resolve(&bug.tool_dir(tool));
        let fixture = bug
            .fixtures
            .get(&tool)
            .and_then(|f| f.first())
            .map(|p| manifest.resolve(p));
        let mut inputs = Self::from_project(&project, tool, 0, scanner, fixture.as_deref())
            .map_err(|source| ExperimentError::Harvest {
                bug: bug_id,
                tool,
                source,
            })?;
        inputs.bug_id = bug_id;
        Ok(inputs)
    }

    /// Reads error `error_index` from the newest log below `project/logs` (or
    /// `project` itself when it has no `logs` directory) and loads its source.
    /// When the error names no file, `fallback` is used, else the first HDL
    /// file in the project.
    pub fn from_project(
        project: &Path,
        tool: Tool,
        error_index: usize,
        scanner: &LogScanner,
        fallback: Option<&Path>,
    ) -> Result<Self, HarvestError> {
        let logs = project.join("logs");
        let search = if logs.is_dir() {
            logs.as_path()
        } else {
            project
        };
        let log = logparse::locate_log(search, tool)?;
        let text = logparse::read_log(&log).map_err(|source| HarvestError::ReadLog {
            path: log.clone(),
            source,
        })?;
        let mut errors = scanner.scan(&text, tool, &log);
        if errors.is_empty() {
            return Err(HarvestError::NoErrors(log));
        }
        if error_index >= errors.len() {
            return Err(HarvestError::ErrorIndex {
                index: error_index,
                count: errors.len(),
                log,
            });
        }
        let error = errors.swap_remove(error_index);

        let code_path = match error.source_file.as_deref() {
            Some(reported) => context::resolve_source(reported, &[project])
                .ok_or_else(|| HarvestError::SourceNotFound(reported.to_path_buf()))?,
            None => fallback
                .map(Path::to_path_buf)
                .or_else(|| context::find_hdl_source(project))
                .ok_or(HarvestError::NoSource)?,
        };
        let code_text = context::read_source(&code_path)?;
        let line_text = match (&error.source_file, error.line_no) {
            (Some(_), Some(n)) => Some(context::extract_line(&code_text, n)?),
            _ => None,
        };
        Ok(Self {
            bug_id: 0,
            tool,
            error,
            code_path,
            code_text,
            line_text,
        })
    }

    /// Strategy actually used: ECL degrades to EC when there is no reported line.
    pub fn effective_strategy(&self, requested: Strategy) -> Strategy {
        match (requested, &self.line_text) {
            (Strategy::ErrorCodeLine, None) => Strategy::ErrorCode,
            (s, _) => s,
        }
    }

    pub fn bundle(
        &self,
        requested: Strategy,
        templates: &Templates,
    ) -> Result<PromptBundle, PromptError> {
        let strategy = self.effective_strategy(requested);
        let line = match strategy {
            Strategy::ErrorCode => None,
            Strategy::ErrorCodeLine => self.line_text.as_deref(),
        };
        let user = templates
            .get(strategy)
            .render(&self.error.raw_line, &self.code_text, line)?;
        Ok(PromptBundle::new(
            system_prompt().to_owned(),
            user,
            strategy,
        ))
    }
}

/// The user-prompt template for each strategy.
#[derive(Debug, Clone)]
pub struct Templates {
    pub ec: PromptTemplate,
    pub ecl: PromptTemplate,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            ec: PromptTemplate::builtin(Strategy::ErrorCode),
            ecl: PromptTemplate::builtin(Strategy::ErrorCodeLine),
        }
    }
}

impl Templates {
    pub fn get(&self, strategy: Strategy) -> &PromptTemplate {
        match strategy {
            Strategy::ErrorCode => &self.ec,
            Strategy::ErrorCodeLine => &self.ecl,
        }
    }
}

/// Full prompt text, kept only when auditing is switched on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredPrompt {
    pub system: String,
    pub user: String,
}

/// One persisted response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub schema_version: u32,
    #[serde(flatten)]
    pub key: Job,
    pub effective_strategy: Strategy,
    pub prompt_fingerprint: String,
    /// The extracted error line exactly as it was sent.
    pub error_text: String,
    pub response: String,
    pub backend: String,
    pub temperature: Option<f64>,
    pub started_at: DateTime<Utc>,
    pub completed_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<StoredPrompt>,
}

/// Where executed records go. The JSONL appender is the real one; tests wrap it.
pub trait RecordSink {
    fn append(&mut self, record: &ExplanationRecord) -> io::Result<()>;
}

impl RecordSink for JsonlAppender {
    fn append(&mut self, record: &ExplanationRecord) -> io::Result<()> {
        JsonlAppender::append(self, record)
    }
}

impl RecordSink for Vec<ExplanationRecord> {
    fn append(&mut self, record: &ExplanationRecord) -> io::Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub attempted: usize,
    pub succeeded: usize,
    pub skipped: usize,
    pub failed: usize,
    pub failures: Vec<(Job, String)>,
}

#[derive(Debug, thiserror::Error)]
#[error("store write failed after {} of {} jobs: {source}", .summary.succeeded, .summary.attempted)]
pub struct ExecuteError {
    pub summary: RunSummary,
    #[source]
    pub source: io::Error,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: ExecMode,
    pub max_in_flight: usize,
    pub temperature: Option<f64>,
    pub request_timeout: Duration,
    pub store_prompts: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            mode: ExecMode::default(),
            max_in_flight: 4,
            temperature: None,
            request_timeout: Duration::from_secs(120),
            store_prompts: false,
        }
    }
}

/// Prepared prompts for every `(bug, tool, strategy)` of a corpus.
#[derive(Debug, Clone)]
pub struct Experiment {
    bundles: BTreeMap<(u32, Tool, Strategy), PromptBundle>,
    error_text: BTreeMap<(u32, Tool), String>,
}

impl Experiment {
    pub fn prepare(manifest: &CorpusManifest) -> Result<Self, ExperimentError> {
        Self::prepare_with(manifest, &LogScanner::default(), &Templates::default())
    }

    pub fn prepare_with(
        manifest: &CorpusManifest,
        scanner: &LogScanner,
        templates: &Templates,
    ) -> Result<Self, ExperimentError> {
        let mut bundles = BTreeMap::new();
        let mut error_text = BTreeMap::new();
        for (bug_id, tool) in applicable_pairs(manifest) {
            let inputs = PairInputs::harvest(manifest, bug_id, tool, scanner)?;
            for strategy in Strategy::ALL {
                bundles.insert(
                    (bug_id, tool, strategy),
                    inputs.bundle(strategy, templates)?,
                );
            }
            error_text.insert((bug_id, tool), inputs.error.raw_line.clone());
        }
        Ok(Self {
            bundles,
            error_text,
        })
    }

    pub fn bundle(&self, bug_id: u32, tool: Tool, strategy: Strategy) -> Option<&PromptBundle> {
        self.bundles.get(&(bug_id, tool, strategy))
    }

    /// Runs every job not in `done`, appending results to `sink` in job order.
    ///
    /// Generation runs on up to `max_in_flight` workers; appends are serialized
    /// here. A sink failure stops the run and returns the progress so far.
    pub fn execute(
        &self,
        jobs: &[Job],
        done: &HashSet<Job>,
        backend: &dyn Backend,
        sink: &mut dyn RecordSink,
        options: &RunOptions,
    ) -> Result<RunSummary, ExecuteError> {
        let mut summary = RunSummary::default();
        let mut pending = Vec::new();
        let mut seen = HashSet::new();
        for job in jobs {
            if done.contains(job) || !seen.insert(job) {
                summary.skipped += 1;
            } else {
                pending.push(job.clone());
            }
        }

        let threads = options.max_in_flight.max(1);
        let pool = WorkPool::new(options.mode, threads);
        let chunk = (threads * 8).max(16);
        for batch in pending.chunks(chunk) {
            let results = pool.map(batch, |job| self.run_one(job, backend, options));
            for (job, result) in batch.iter().zip(results) {
                summary.attempted += 1;
                match result {
                    Ok(record) => {
                        if let Err(source) = sink.append(&record) {
                            summary.failed += 1;
                            summary.failures.push((job.clone(), source.to_string()));
                            return Err(ExecuteError { summary, source });
                        }
                        summary.succeeded += 1;
                    }
                    Err(reason) => {
                        summary.failed += 1;
                        summary.failures.push((job.clone(), reason));
                    }
                }
            }
        }
        Ok(summary)
    }

    fn run_one(
        &self,
        job: &Job,
        backend: &dyn Backend,
        options: &RunOptions,
    ) -> Result<ExplanationRecord, String> {
        let bundle = self
            .bundle(job.bug_id, job.tool, job.strategy)
            .ok_or_else(|| ExperimentError::UnpreparedJob(job.clone()).to_string())?;
        let error_text = self.error_text[&(job.bug_id, job.tool)].clone();
        let mut request =
            GenerationRequest::new(bundle.clone(), job.model_name.clone(), job.sample_index + 1);
        request.temperature = options.temperature;
        request.request_timeout = options.request_timeout;
        let started_at = Utc::now();
        let explanation = backend
            .generate_sample(&request, job.sample_index)
            .map_err(|e| e.to_string())?;
        if explanation.text.trim().is_empty() {
            return Err("backend returned an empty response".to_owned());
        }
        Ok(ExplanationRecord {
            schema_version: SCHEMA_VERSION,
            key: job.clone(),
            effective_strategy: bundle.strategy,
            prompt_fingerprint: bundle.fingerprint.clone(),
            error_text,
            response: explanation.text,
            backend: backend.name().to_owned(),
            temperature: explanation.temperature,
            started_at,
            completed_at: Utc::now(),
            prompt: options.store_prompts.then(|| StoredPrompt {
                system: bundle.system_text.clone(),
                user: bundle.user_text.clone(),
            }),
        })
    }

    /// Loads existing keys from `store_path` (if present), then executes the
    /// remainder of `jobs`, appending to the same file.
    pub fn run_to_store(
        &self,
        jobs: &[Job],
        backend: &dyn Backend,
        store_path: &Path,
        options: &RunOptions,
    ) -> Result<RunSummary, RunError> {
        let done: HashSet<Job> = match load_store(store_path) {
            Ok(records) => records.into_iter().map(|r| r.key).collect(),
            Err(StoreError::NotFound(_)) => HashSet::new(),
            Err(e) => return Err(RunError::Store(e)),
        };
        let mut sink = JsonlAppender::open(store_path).map_err(RunError::Store)?;
        Ok(self.execute(jobs, &done, backend, &mut sink, options)?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Execute(#[from] ExecuteError),
}

/// Reads a response store. Duplicate keys are an error.
pub fn load_store(path: &Path) -> Result<Vec<ExplanationRecord>, StoreError> {
    let rows: Vec<(usize, ExplanationRecord)> = store::read_jsonl(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, record) in rows {
        if !seen.insert(record.key.clone()) {
            return Err(StoreError::DuplicateKey {
                path: path.to_path_buf(),
                line,
                key: record.key.to_string(),
            });
        }
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::BugSpec;

    fn manifest(tools: &[&[Tool]]) -> CorpusManifest {
        CorpusManifest {
            version: 1,
            bugs: tools
                .iter()
                .enumerate()
                .map(|(i, t)| BugSpec {
                    id: i as u32 + 1,
                    category: "c".into(),
                    language: Language::Verilog,
                    description: "d".into(),
                    applicability: t.iter().copied().collect(),
                    fixtures: Default::default(),
                    error_fingerprint: Default::default(),
                })
                .collect(),
            corpus_root: PathBuf::new(),
        }
    }

    #[test]
    fn one_bug_both_tools_single_sample() {
        let m = manifest(&[&[Tool::Vivado, Tool::Quartus]]);
        let jobs = plan(&m, &[ModelSpec::new("m", 1)]).unwrap();
        assert_eq!(jobs.len(), 4);
        assert_eq!(jobs[0].tool, Tool::Vivado);
        assert_eq!(jobs[0].strategy, Strategy::ErrorCode);
        assert_eq!(jobs[1].strategy, Strategy::ErrorCodeLine);
        assert_eq!(jobs[2].tool, Tool::Quartus);
    }

    #[test]
    fn plan_rejects_bad_model_plans() {
        let m = manifest(&[&[Tool::Vivado]]);
        assert!(matches!(
            plan(&m, &[]),
            Err(ExperimentError::EmptyModelPlan)
        ));
        assert!(matches!(
            plan(&m, &[ModelSpec::new("m", 0)]),
            Err(ExperimentError::ZeroSamples(_))
        ));
        assert!(matches!(
            plan(&m, &[ModelSpec::new("m", 1), ModelSpec::new("m", 2)]),
            Err(ExperimentError::DuplicateModel(_))
        ));
    }

    #[test]
    fn model_order_follows_plan() {
        let m = manifest(&[&[Tool::Vivado]]);
        let jobs = plan(&m, &[ModelSpec::new("zeta", 1), ModelSpec::new("alpha", 2)]).unwrap();
        let names: Vec<&str> = jobs.iter().take(3).map(|j| j.model_name.as_str()).collect();
        assert_eq!(names, ["zeta", "alpha", "alpha"]);
    }
}
