use std::io::{self, Write};
use std::path::Path;
use std::time::Duration;

use anyhow::{anyhow, Context};
use hdl_explain::backend::{generate, GenerationRequest, RemoteConfig};
use hdl_explain::context::extract_window;
use hdl_explain::corpus::validate_corpus;
use hdl_explain::experiment::{
    load_store, Experiment, HarvestError, PairInputs, PlanSummary, RunOptions,
};
use hdl_explain::grading::{
    consistency_warnings, grade_interactive, load_grades, SolutionDetector,
};
use hdl_explain::logparse::{self, LogError};
use hdl_explain::report::aggregate;
use hdl_explain::{
    load_corpus_dir, plan, Backend, CorpusManifest, ExecMode, MockBackend, RemoteBackend, Strategy,
    Tool,
};

use crate::config::Config;
use crate::exit;
use crate::{
    Command, ExplainArgs, GradeArgs, HarvestArgs, ListFormat, PlanArgs, ReportArgs, RunArgs,
    TableFormat,
};

/// An error plus the process exit code it maps to.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: exit::FAILURE,
            error: e.into(),
        }
    }
}

fn coded(code: u8, error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code,
        error: error.into(),
    }
}

type CmdResult = Result<(), Failure>;

pub fn dispatch(command: Command, config: &Config) -> CmdResult {
    match command {
        Command::Explain(a) => explain(a, config),
        Command::Harvest(a) => harvest(a, config),
        Command::Plan(a) => plan_cmd(a, config),
        Command::Run(a) => run(a, config),
        Command::Grade(a) => grade(a, config),
        Command::Report(a) => report(a, config),
        Command::CorpusValidate(a) => corpus_validate(a.corpus.as_deref(), config),
    }
}

fn harvest_code(e: &HarvestError) -> u8 {
    match e {
        HarvestError::Log(_) | HarvestError::ReadLog { .. } => exit::NO_LOG,
        HarvestError::NoErrors(_) | HarvestError::ErrorIndex { .. } => exit::NO_ERRORS,
        HarvestError::SourceNotFound(_) | HarvestError::NoSource | HarvestError::Context(_) => {
            exit::SOURCE_UNREADABLE
        }
    }
}

fn harvest_failure(e: HarvestError) -> Failure {
    let code = harvest_code(&e);
    let error = match &e {
        HarvestError::Log(LogError::NotFound { root, pattern }) => anyhow!(
            "no synthesis log under {} (searched for {pattern})",
            root.display()
        ),
        _ => anyhow::Error::new(e),
    };
    coded(code, error)
}

fn remote_backend(config: &Config) -> Result<RemoteBackend, Failure> {
    let mut rc = RemoteConfig::from_env(config.backend.endpoint.clone())
        .map_err(|e| coded(exit::BACKEND, e))?;
    rc.max_in_flight = config.backend.max_in_flight;
    rc.retry = config.backend.retry;
    Ok(RemoteBackend::new(rc))
}

fn explain(args: ExplainArgs, config: &Config) -> CmdResult {
    let tool = Tool::from(args.project.tool);
    let scanner = config.scanner()?;
    let inputs = PairInputs::from_project(
        &args.project.project,
        tool,
        args.error_index,
        &scanner,
        None,
    )
    .map_err(harvest_failure)?;

    let requested = args
        .strategy
        .map_or(config.default_strategy, Strategy::from);
    let strategy = inputs.effective_strategy(requested);
    if strategy != requested {
        eprintln!("note: the error has no source line; using the EC prompt instead of ECL");
    }
    let bundle = inputs.bundle(requested, &config.templates()?)?;
    let model = match args.model {
        Some(m) => m,
        None => config.backend.models[0].name.clone(),
    };
    let mut request = GenerationRequest::new(bundle, model, 1);
    request.temperature = config.backend.temperature;
    request.request_timeout = config.backend.request_timeout();

    let backend: Box<dyn Backend> = if args.mock {
        Box::new(MockBackend::new())
    } else {
        Box::new(remote_backend(config)?)
    };
    let explanation = generate(backend.as_ref(), &request)
        .map_err(|e| coded(exit::BACKEND, e))?
        .into_iter()
        .next()
        .ok_or_else(|| coded(exit::BACKEND, anyhow!("backend returned no explanation")))?;

    let mut out = io::stdout().lock();
    writeln!(out, "Error: {}", inputs.error.raw_line)?;
    match inputs.error.line_no.filter(|_| inputs.line_text.is_some()) {
        Some(line) => writeln!(out, "Source: {}:{line}", inputs.code_path.display())?,
        None => writeln!(out, "Source: {}", inputs.code_path.display())?,
    }
    let context = args.context.unwrap_or(config.context_window);
    if let (Some(line), true) = (
        inputs.error.line_no,
        context > 0 && inputs.line_text.is_some(),
    ) {
        let window = extract_window(&inputs.code_text, line, context, context)?;
        let width = window
            .window
            .as_ref()
            .and_then(|w| w.last())
            .map_or(1, |(n, _)| n.to_string().len());
        for (n, text) in window.window.unwrap_or_default() {
            let mark = if n == line { '>' } else { ' ' };
            writeln!(out, "{mark}{n:>width$} | {text}")?;
        }
    }
    writeln!(out)?;
    writeln!(out, "{}", explanation.text.trim_end())?;
    Ok(())
}

fn harvest(args: HarvestArgs, config: &Config) -> CmdResult {
    let tool = Tool::from(args.project.tool);
    let root = &args.project.project;
    let logs = root.join("logs");
    let search = if logs.is_dir() { logs } else { root.clone() };
    let log = logparse::locate_log(&search, tool).map_err(|e| harvest_failure(e.into()))?;
    let text = logparse::read_log(&log).map_err(|source| {
        harvest_failure(HarvestError::ReadLog {
            path: log.clone(),
            source,
        })
    })?;
    let records = config.scanner()?.scan(&text, tool, &log);
    if records.is_empty() {
        return Err(harvest_failure(HarvestError::NoErrors(log)));
    }
    let mut out = io::stdout().lock();
    match args.format {
        ListFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&records)?)?,
        ListFormat::Text => {
            eprintln!("log: {}", log.display());
            for r in &records {
                let location = match (&r.source_file, r.line_no) {
                    (Some(f), Some(l)) => format!("{}:{l}", f.display()),
                    _ => "-".to_owned(),
                };
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}",
                    r.index,
                    r.code.as_deref().unwrap_or("-"),
                    location,
                    r.message
                )?;
            }
        }
    }
    Ok(())
}

fn load_manifest(corpus: Option<&Path>, config: &Config) -> Result<CorpusManifest, Failure> {
    let root = config.corpus_root(corpus);
    load_corpus_dir(&root)
        .with_context(|| format!("loading corpus {}", root.display()))
        .map_err(Failure::from)
}

fn plan_cmd(args: PlanArgs, config: &Config) -> CmdResult {
    let manifest = load_manifest(args.corpus.corpus.as_deref(), config)?;
    let jobs = plan(&manifest, &config.backend.models)?;
    let summary = PlanSummary::of(&jobs, &manifest);
    let mut out = io::stdout().lock();
    match args.format {
        ListFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?,
        ListFormat::Text => {
            let join = |pairs: Vec<(String, usize)>| {
                pairs
                    .into_iter()
                    .map(|(k, n)| format!("{k}={n}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            writeln!(out, "jobs: {}", summary.total)?;
            writeln!(
                out,
                "tool: {}",
                join(
                    summary
                        .by_tool
                        .iter()
                        .map(|(k, n)| (k.to_string(), *n))
                        .collect()
                )
            )?;
            writeln!(
                out,
                "language: {}",
                join(
                    summary
                        .by_language
                        .iter()
                        .map(|(k, n)| (k.to_string(), *n))
                        .collect()
                )
            )?;
            writeln!(
                out,
                "strategy: {}",
                join(
                    summary
                        .by_strategy
                        .iter()
                        .map(|(k, n)| (k.to_string(), *n))
                        .collect()
                )
            )?;
            writeln!(out, "model: {}", join(summary.by_model.clone()))?;
        }
    }
    Ok(())
}

fn run(args: RunArgs, config: &Config) -> CmdResult {
    let manifest = load_manifest(args.corpus.corpus.as_deref(), config)?;
    let jobs = plan(&manifest, &config.backend.models)?;
    let experiment = Experiment::prepare_with(&manifest, &config.scanner()?, &config.templates()?)?;
    let backend: Box<dyn Backend> = if args.mock {
        let mock = MockBackend::new();
        Box::new(match args.mock_latency_ms {
            Some(ms) => mock.with_latency(Duration::from_millis(ms)),
            None => mock,
        })
    } else {
        Box::new(remote_backend(config)?)
    };
    let options = RunOptions {
        mode: if args.sequential {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        },
        max_in_flight: args
            .max_in_flight
            .unwrap_or(config.backend.max_in_flight)
            .max(1),
        temperature: config.backend.temperature,
        request_timeout: config.backend.request_timeout(),
        store_prompts: args.store_prompts,
    };
    let summary = experiment.run_to_store(&jobs, backend.as_ref(), &args.store, &options)?;
    for (job, reason) in &summary.failures {
        eprintln!("failed: {job}: {reason}");
    }
    let mut out = io::stdout().lock();
    writeln!(out, "planned: {}", jobs.len())?;
    writeln!(out, "succeeded: {}", summary.succeeded)?;
    writeln!(out, "skipped: {}", summary.skipped)?;
    writeln!(out, "failed: {}", summary.failed)?;
    if summary.failed > 0 {
        return Err(coded(
            exit::BACKEND,
            anyhow!("{} jobs failed; re-run to retry them", summary.failed),
        ));
    }
    Ok(())
}

fn grade(args: GradeArgs, config: &Config) -> CmdResult {
    let manifest = load_manifest(args.corpus.corpus.as_deref(), config)?;
    let records = load_store(&args.store)?;
    let grader = args
        .grader
        .or_else(|| std::env::var("USER").ok())
        .unwrap_or_else(|| "grader".to_owned());
    let detector = SolutionDetector::with_keywords(config.solution_keywords.iter().cloned());
    let stdin = io::stdin();
    let session = grade_interactive(
        &records,
        &manifest,
        &args.grades,
        &grader,
        &detector,
        &mut stdin.lock(),
        &mut io::stdout().lock(),
    )?;
    eprintln!(
        "graded {} this session; {} remaining",
        session.graded, session.remaining
    );
    Ok(())
}

fn report(args: ReportArgs, config: &Config) -> CmdResult {
    let manifest = load_manifest(args.corpus.corpus.as_deref(), config)?;
    let records = load_store(&args.store)?;
    let grades = load_grades(&args.grades)?;
    for w in consistency_warnings(&grades) {
        eprintln!("warning: {w}");
    }
    let report = aggregate(&records, &grades, args.grouping, &manifest)?;
    let text = match args.format {
        TableFormat::Text => report.render_text(&manifest),
        TableFormat::Csv => report.render_csv(&manifest)?,
    };
    io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}

fn corpus_validate(corpus: Option<&Path>, config: &Config) -> CmdResult {
    let manifest = load_manifest(corpus, config)?;
    let report = validate_corpus(&manifest, &manifest.corpus_root);
    let mut out = io::stdout().lock();
    for e in &report.entries {
        let status = if e.passed { "ok" } else { "FAIL" };
        let detail = e
            .reason
            .clone()
            .unwrap_or_else(|| format!("{} errors", e.errors_found));
        writeln!(out, "{status}\tbug {}\t{}\t{detail}", e.bug_id, e.tool)?;
    }
    let failed = report.failures().count();
    writeln!(
        out,
        "{} of {} pairs passed",
        report.entries.len() - failed,
        report.entries.len()
    )?;
    if failed > 0 {
        return Err(anyhow!("{failed} corpus pairs failed validation").into());
    }
    Ok(())
}
