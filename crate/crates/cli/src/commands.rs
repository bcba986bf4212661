use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use cpig_core::analysis::{analyze_runs, ingest_ratings, write_reports, AnalysisOptions, AnalysisReport, HistogramSpec};
use cpig_core::itemgen::{Blacklist, FilterConfig};
use cpig_core::pipeline::{
    resume_trial, run_sweep, run_trial, PipelineError, RunState, RunStatus, SweepManifest, TrialConfig, SWEEP_FILE,
};
use cpig_core::wordlist::{check_word_list_file, generate_word_lists, save_word_lists, WordListError};
use serde::Serialize;

use crate::{
    AnalyzeArgs, Command, RunArgs, ValidateItemArgs, WordlistsCommand, WordlistsGenerateArgs, WordlistsValidateArgs,
    EXIT_BACKEND, EXIT_INVALID, EXIT_USAGE,
};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    fn usage(error: impl Into<anyhow::Error>) -> Self {
        CliError {
            code: EXIT_USAGE,
            error: error.into(),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = if e.is_backend() { EXIT_BACKEND } else { EXIT_USAGE };
        CliError { code, error: e.into() }
    }
}

impl From<WordListError> for CliError {
    fn from(e: WordListError) -> Self {
        let code = if matches!(e, WordListError::Backend(_)) { EXIT_BACKEND } else { EXIT_USAGE };
        CliError { code, error: e.into() }
    }
}

type CmdResult = Result<ExitCode, CliError>;

pub fn dispatch(command: Command) -> CmdResult {
    match command {
        Command::Wordlists(WordlistsCommand::Generate(a)) => wordlists_generate(a),
        Command::Wordlists(WordlistsCommand::Validate(a)) => wordlists_validate(a),
        Command::Run(a) => run(a),
        Command::ValidateItem(a) => validate_item(a),
        Command::Analyze(a) => analyze(a),
        Command::Reference => {
            print!("{}", crate::reference::render());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
}

fn load_config(path: Option<&Path>) -> Result<TrialConfig, CliError> {
    match path {
        Some(p) => Ok(TrialConfig::load(p)?),
        None => Ok(TrialConfig::default()),
    }
}

#[derive(Serialize)]
struct GenerateSummary<'a> {
    out: &'a Path,
    lists: usize,
    parsed_total: usize,
    duplicates_removed: usize,
}

fn wordlists_generate(a: WordlistsGenerateArgs) -> CmdResult {
    let cfg = load_config(a.config.as_deref())?;
    let registry = cfg.build_registry()?;
    let generator = registry.generator(&a.backend).map_err(CliError::usage)?;
    let mut params = cfg.word_list_params(a.seed)?;
    params.backend_id = a.backend;
    params.batches = a.batches;
    params.per_batch = a.per_batch;
    let generation = generate_word_lists(generator.as_ref(), &params)?;
    save_word_lists(&a.out, &generation.lists)?;
    let summary = GenerateSummary {
        out: &a.out,
        lists: generation.lists.len(),
        parsed_total: generation.parsed_total,
        duplicates_removed: generation.duplicates_removed,
    };
    if a.json {
        print_json(&summary);
    } else {
        println!(
            "wrote {} word lists to {} ({} parsed, {} duplicates removed)",
            summary.lists,
            a.out.display(),
            summary.parsed_total,
            summary.duplicates_removed
        );
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ValidationProblem {
    line: Option<usize>,
    message: String,
}

#[derive(Serialize)]
struct ValidationReport {
    file: PathBuf,
    valid: usize,
    problems: Vec<ValidationProblem>,
}

fn wordlists_validate(a: WordlistsValidateArgs) -> CmdResult {
    let (lists, problems) = check_word_list_file(&a.file)?;
    let problems: Vec<ValidationProblem> = problems
        .into_iter()
        .map(|p| ValidationProblem {
            line: match &p {
                WordListError::Parse { line, .. } | WordListError::DuplicateId { line, .. } => Some(*line),
                _ => None,
            },
            message: p.to_string(),
        })
        .collect();
    let failed = !problems.is_empty();
    let report = ValidationReport {
        file: a.file,
        valid: lists.len(),
        problems,
    };
    if a.json {
        print_json(&report);
    } else {
        for p in &report.problems {
            println!("{}", p.message);
        }
        println!("{}: {} valid, {} invalid", report.file.display(), report.valid, report.problems.len());
    }
    Ok(if failed { ExitCode::from(EXIT_INVALID) } else { ExitCode::SUCCESS })
}

#[derive(Serialize)]
struct RunSummary {
    run_dir: PathBuf,
    seed: u64,
    status: RunStatus,
    completed_iterations: usize,
    total_iterations: u32,
    final_exemplar_originality: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl RunSummary {
    fn of(state: &RunState) -> Self {
        RunSummary {
            run_dir: state.run_dir.clone(),
            seed: state.seed,
            status: state.status,
            completed_iterations: state.iterations.len(),
            total_iterations: state.config.iterations,
            final_exemplar_originality: state.iterations.last().map(|r| r.exemplar_set.i_o),
            error: None,
        }
    }

    fn print(&self) {
        let io = self.final_exemplar_originality.map_or(String::new(), |v| format!(", exemplar I_o {v:.4}"));
        let err = self.error.as_deref().map_or(String::new(), |e| format!(": {e}"));
        println!(
            "{}: {:?} ({}/{} iterations{io}){err}",
            self.run_dir.display(),
            self.status,
            self.completed_iterations,
            self.total_iterations
        );
    }
}

fn effective_config(a: &RunArgs) -> Result<TrialConfig, CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(b) = &a.backend_all {
        cfg.generator_backend = b.clone();
        cfg.response_backend = b.clone();
        cfg.scorer_backend = b.clone();
        cfg.embedder_backend = b.clone();
    }
    if let Some(n) = &a.name {
        cfg.name = n.clone();
    }
    if let Some(s) = a.strategy {
        cfg.selection_strategy = s.into();
    }
    if let Some(s) = a.style {
        cfg.prompting_style = s.into();
    }
    if let Some(i) = a.iterations {
        cfg.iterations = i;
    }
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(r) = a.responses_per_item {
        cfg.responses_per_item = r;
    }
    if let Some(p) = a.parallelism {
        cfg.parallelism = p;
    }
    if let Some(s) = a.seed {
        cfg.seeds = vec![s];
    } else if let Some(s) = &a.seeds {
        cfg.seeds = s.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(a: RunArgs) -> CmdResult {
    if let Some(dir) = &a.resume {
        let state = resume_trial(dir, None)?;
        let summary = RunSummary::of(&state);
        if a.json {
            print_json(&summary);
        } else {
            summary.print();
        }
        return Ok(ExitCode::SUCCESS);
    }
    let cfg = effective_config(&a)?;
    if let Some(seed) = a.seed {
        let dir = a.out.join(format!("{}-s{seed}", cfg.name));
        let state = run_trial(&cfg, seed, &dir)?;
        let summary = RunSummary::of(&state);
        if a.json {
            print_json(&summary);
        } else {
            summary.print();
        }
        return Ok(ExitCode::SUCCESS);
    }
    let sweep = run_sweep(std::slice::from_ref(&cfg), &a.out)?;
    let mut summaries = Vec::new();
    for cell in &sweep.cells {
        let dir = a.out.join(&cell.run_dir);
        let mut summary = match RunState::load(&dir) {
            Ok(state) => RunSummary::of(&state),
            Err(_) => RunSummary {
                run_dir: dir,
                seed: cell.seed,
                status: cell.status,
                completed_iterations: 0,
                total_iterations: cfg.iterations,
                final_exemplar_originality: None,
                error: None,
            },
        };
        summary.status = cell.status;
        summary.error = cell.error.clone();
        summaries.push(summary);
    }
    if a.json {
        print_json(&summaries);
    } else {
        summaries.iter().for_each(RunSummary::print);
    }
    let code = if sweep.cells.iter().any(|c| c.backend_failure) {
        EXIT_BACKEND
    } else if sweep.cells.iter().any(|c| c.status != RunStatus::Complete) {
        EXIT_USAGE
    } else {
        0
    };
    Ok(ExitCode::from(code))
}

fn validate_item(a: ValidateItemArgs) -> CmdResult {
    let text = match a.file.as_deref() {
        None => read_stdin()?,
        Some(p) if p == Path::new("-") => read_stdin()?,
        Some(p) => fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))
            .map_err(CliError::usage)?,
    };
    if text.trim().is_empty() {
        return Err(CliError::usage(anyhow!("no item text given")));
    }
    let mut filter = FilterConfig::default();
    if let Some(p) = &a.blacklist {
        filter.blacklist = Blacklist::load(p).map_err(CliError::usage)?;
    }
    let (report, _) = filter.validate(&text);
    print_json(&report);
    Ok(if report.verdict.is_pass() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_INVALID) })
}

fn read_stdin() -> Result<String, CliError> {
    let mut buf = String::new();
    std::io::stdin()
        .read_to_string(&mut buf)
        .context("reading stdin")
        .map_err(CliError::usage)?;
    Ok(buf)
}

/// Run directories named on the command line, with sweep roots expanded
/// to their cells.
fn expand_runs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.join("manifest.json").is_file() {
            out.push(p.clone());
        } else if p.join(SWEEP_FILE).is_file() {
            let raw = fs::read_to_string(p.join(SWEEP_FILE))
                .with_context(|| format!("reading {}", p.join(SWEEP_FILE).display()))
                .map_err(CliError::usage)?;
            let sweep: SweepManifest = serde_json::from_str(&raw)
                .with_context(|| format!("parsing {}", p.join(SWEEP_FILE).display()))
                .map_err(CliError::usage)?;
            out.extend(
                sweep
                    .cells
                    .iter()
                    .map(|c| p.join(&c.run_dir))
                    .filter(|d| d.join("manifest.json").is_file()),
            );
        } else {
            return Err(CliError::usage(anyhow!("{} is neither a run directory nor a sweep root", p.display())));
        }
    }
    Ok(out)
}

fn print_report(report: &AnalysisReport, out: &Path, files: usize) {
    if let Some(rc) = &report.round_comparison {
        for s in &rc.summaries {
            println!(
                "round {} [{}]: mean originality {:.4} (sd {:.4}, n {})",
                s.round, s.generator_backend, s.mean_originality, s.std_originality, s.n_responses
            );
        }
        for t in &rc.tests {
            match t.test {
                Some(tt) => println!(
                    "{}: last vs first round {:.4} vs {:.4}, t = {:.3}, df = {:.1}, p = {:.3e}",
                    t.style.as_str(),
                    t.mean_last,
                    t.mean_first,
                    tt.t,
                    tt.df,
                    tt.p
                ),
                None => println!("{}: last vs first round {:.4} vs {:.4}, no test", t.style.as_str(), t.mean_last, t.mean_first),
            }
        }
    }
    for l in &report.length_correlations {
        match l.r {
            Some(r) => println!("length/originality r [{}] = {r:.4} (n {})", l.backend, l.n),
            None => println!("length/originality r [{}] undefined (n {})", l.backend, l.n),
        }
    }
    for r in &report.icc {
        let cc = r.complete_case.as_ref().map_or("n/a".to_string(), |b| {
            format!("{:.4} ({} items x {} raters)", b.value, b.item_ids.len(), b.rater_ids.len())
        });
        print!("ICC(A,k) {}: {cc}", r.facet.as_str());
        if let Some(p) = r.pairwise_mean {
            print!(", pairwise {p:.4} over {} pairs", r.pairs_used);
        }
        println!();
        for w in &r.warnings {
            println!("  warning: {w}");
        }
    }
    for (run, h) in &report.joint_histograms {
        println!("joint histogram {run}: {} binned, {} dropped, {} out of range", h.binned(), h.dropped_ids.len(), h.out_of_range);
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    println!("wrote {files} report files to {}", out.display());
}

fn analyze(a: AnalyzeArgs) -> CmdResult {
    if !(a.drop_threshold > 0.0 && a.drop_threshold <= 1.0) {
        return Err(CliError::usage(anyhow!("--drop-threshold must be in (0, 1]")));
    }
    if a.bins == 0 {
        return Err(CliError::usage(anyhow!("--bins must be >= 1")));
    }
    let dirs = expand_runs(&a.runs)?;
    let runs = dirs.iter().map(|d| RunState::load(d)).collect::<Result<Vec<_>, _>>()?;
    let ratings = match &a.ratings {
        Some(p) => Some(ingest_ratings(p).map_err(CliError::usage)?),
        None => None,
    };
    let options = AnalysisOptions {
        joint_histogram: a.joint_hist.then(|| HistogramSpec {
            bins_x: a.bins,
            bins_y: a.bins,
            drop_threshold: a.drop_threshold,
            ..HistogramSpec::default()
        }),
    };
    let report = analyze_runs(&runs, ratings.as_deref(), &options);
    let files = write_reports(&a.out, &report).map_err(CliError::usage)?;
    if a.json {
        print_json(&report);
    } else {
        print_report(&report, &a.out, files.len());
    }
    Ok(ExitCode::SUCCESS)
}
