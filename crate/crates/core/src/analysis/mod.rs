//! Statistics over generated item pools and run directories.

mod icc;
mod stats;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use icc::{icc_absolute_average, icc_report, ingest_ratings, parse_ratings_str, Facet, IccBlock, IccReport, RatingRecord};
pub use stats::{
    gaussian_kde, linspace, ln_gamma, mean, pearson, regularized_incomplete_beta, sample_std, sample_variance,
    scott_bandwidth, student_t_cdf, student_t_two_sided_p, trapezoid, welch_t_test, TTest,
};

use crate::pipeline::RunState;
use crate::responsegen::{ItemResponse, PromptStyle};
use crate::selection::{SelectionStrategy, SimilarityMatrix};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("row {row}: {field} = {value} is outside 1..=5")]
    Range { row: usize, field: &'static str, value: i64 },
    #[error("row {row}: duplicate rating of item `{item_id}` by rater `{rater_id}`")]
    DuplicateRating { row: usize, item_id: String, rater_id: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One item placed on the originality/similarity plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistPoint {
    pub item_id: String,
    pub originality: f64,
    /// Mean cosine similarity to every other item in the pool.
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bins_x: usize,
    pub bins_y: usize,
    /// Bin range; the kept points' extent when absent.
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
    /// Items whose similarity to any other item exceeds this are dropped.
    pub drop_threshold: f64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        HistogramSpec {
            bins_x: 20,
            bins_y: 20,
            x_range: None,
            y_range: None,
            drop_threshold: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointHistogram {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// `counts[ix][iy]`.
    pub counts: Vec<Vec<u64>>,
    pub dropped_ids: Vec<String>,
    pub out_of_range: usize,
}

impl JointHistogram {
    pub fn binned(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Points for every item of a pool: mean originality and mean similarity to
/// the rest of the pool.
pub fn item_points(ids_and_means: &[(String, f64)], matrix: &SimilarityMatrix) -> Result<Vec<HistPoint>, AnalysisError> {
    if ids_and_means.len() != matrix.n {
        return Err(AnalysisError::InvalidArgument(format!("{} items for a {}-item matrix", ids_and_means.len(), matrix.n)));
    }
    ids_and_means
        .iter()
        .enumerate()
        .map(|(i, (id, m))| {
            let similarity = matrix
                .mean_off_diagonal(i)
                .ok_or_else(|| AnalysisError::InsufficientData("similarity needs at least 2 items".into()))?;
            Ok(HistPoint {
                item_id: id.clone(),
                originality: *m,
                similarity,
            })
        })
        .collect()
}

fn bin_of(v: f64, lo: f64, hi: f64, bins: usize) -> Option<usize> {
    if !(lo..=hi).contains(&v) {
        return None;
    }
    // The top edge belongs to the last bin.
    Some((((v - lo) / (hi - lo)) * bins as f64).floor().min((bins - 1) as f64) as usize)
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// 2-D histogram of (originality, similarity). Before binning, every item
/// whose maximum similarity to another item exceeds `drop_threshold` is
/// removed; `matrix` is indexed like `points`.
pub fn joint_histogram(
    points: &[HistPoint],
    matrix: &SimilarityMatrix,
    spec: &HistogramSpec,
) -> Result<JointHistogram, AnalysisError> {
    if spec.bins_x == 0 || spec.bins_y == 0 {
        return Err(AnalysisError::InvalidArgument("bins must be >= 1".into()));
    }
    if !(spec.drop_threshold > 0.0 && spec.drop_threshold <= 1.0) {
        return Err(AnalysisError::InvalidArgument("drop_threshold must be in (0, 1]".into()));
    }
    if points.len() != matrix.n || points.iter().zip(&matrix.item_ids).any(|(p, id)| &p.item_id != id) {
        return Err(AnalysisError::InvalidArgument("points and similarity matrix are not aligned".into()));
    }
    let mut kept = Vec::new();
    let mut dropped_ids = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if matrix.max_off_diagonal(i).is_some_and(|m| m > spec.drop_threshold) {
            dropped_ids.push(p.item_id.clone());
        } else {
            kept.push(p);
        }
    }
    let (xlo, xhi) = spec.x_range.unwrap_or_else(|| extent(kept.iter().map(|p| p.originality)));
    let (ylo, yhi) = spec.y_range.unwrap_or_else(|| extent(kept.iter().map(|p| p.similarity)));
    if !(xlo < xhi && ylo < yhi) {
        return Err(AnalysisError::InvalidArgument("empty bin range".into()));
    }
    let mut counts = vec![vec![0u64; spec.bins_y]; spec.bins_x];
    let mut out_of_range = 0;
    for p in kept {
        match (bin_of(p.originality, xlo, xhi, spec.bins_x), bin_of(p.similarity, ylo, yhi, spec.bins_y)) {
            (Some(ix), Some(iy)) => counts[ix][iy] += 1,
            _ => out_of_range += 1,
        }
    }
    Ok(JointHistogram {
        x_edges: linspace(xlo, xhi, spec.bins_x + 1),
        y_edges: linspace(ylo, yhi, spec.bins_y + 1),
        counts,
        dropped_ids,
        out_of_range,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthCorrelation {
    pub backend: String,
    pub n: usize,
    /// Absent when the group is too small or has no variance.
    pub r: Option<f64>,
}

/// Pearson correlation between response token count and originality, per
/// generator backend. Unscored responses are skipped.
pub fn length_originality_report(groups: &BTreeMap<String, Vec<ItemResponse>>) -> Vec<LengthCorrelation> {
    groups
        .iter()
        .map(|(backend, responses)| {
            let (len, orig): (Vec<f64>, Vec<f64>) = responses
                .iter()
                .filter_map(|r| r.originality.as_ref().map(|o| (r.token_count as f64, o.value)))
                .unzip();
            LengthCorrelation {
                backend: backend.clone(),
                n: len.len(),
                r: pearson(&len, &orig).ok(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundModelSummary {
    pub generator_backend: String,
    pub round: u32,
    pub mean_originality: f64,
    pub std_originality: f64,
    pub n_responses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleRoundTest {
    pub style: PromptStyle,
    pub n_first: usize,
    pub n_last: usize,
    pub mean_first: f64,
    pub mean_last: f64,
    /// Last round minus first round; absent when degenerate.
    pub test: Option<TTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundComparison {
    pub summaries: Vec<RoundModelSummary>,
    pub tests: Vec<StyleRoundTest>,
}

fn response_scores(responses: &[ItemResponse]) -> Vec<f64> {
    responses.iter().filter_map(|r| r.originality.as_ref().map(|o| o.value)).collect()
}

/// Per-(backend, round) response originality, and a Welch test of the last
/// round against the first per prompting style, pooling runs.
pub fn round_comparison(runs: &[RunState]) -> Result<RoundComparison, AnalysisError> {
    let multi: Vec<&RunState> = runs.iter().filter(|r| r.iterations.len() >= 2).collect();
    if multi.is_empty() {
        return Err(AnalysisError::InsufficientData("round comparison needs runs with at least 2 iterations".into()));
    }
    let mut cells: BTreeMap<(String, u32), Vec<f64>> = BTreeMap::new();
    for run in runs {
        for rec in &run.iterations {
            cells
                .entry((run.config.generator_backend.clone(), rec.iteration))
                .or_default()
                .extend(response_scores(&rec.responses));
        }
    }
    let summaries = cells
        .into_iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|((backend, round), v)| RoundModelSummary {
            generator_backend: backend,
            round,
            mean_originality: mean(&v),
            std_originality: sample_std(&v),
            n_responses: v.len(),
        })
        .collect();

    let mut by_style: BTreeMap<PromptStyle, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for run in multi {
        let e = by_style.entry(run.config.prompting_style).or_default();
        e.0.extend(response_scores(&run.iterations[0].responses));
        e.1.extend(response_scores(&run.iterations.last().expect("non-empty").responses));
    }
    let tests = by_style
        .into_iter()
        .filter(|(_, (a, b))| !a.is_empty() && !b.is_empty())
        .map(|(style, (first, last))| StyleRoundTest {
            style,
            n_first: first.len(),
            n_last: last.len(),
            mean_first: mean(&first),
            mean_last: mean(&last),
            test: welch_t_test(&last, &first).ok(),
        })
        .collect();
    Ok(RoundComparison { summaries, tests })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub run: String,
    pub strategy: SelectionStrategy,
    pub iteration: u32,
    pub i_o: f64,
    pub i_v: Option<f64>,
    pub fallback: bool,
}

/// Exemplar-set statistics for every iteration of a run.
pub fn exemplar_trajectory(run: &RunState) -> Vec<TrajectoryPoint> {
    let name = format!("{}-s{}", run.config.name, run.seed);
    run.iterations
        .iter()
        .map(|rec| TrajectoryPoint {
            run: name.clone(),
            strategy: run.config.selection_strategy,
            iteration: rec.iteration,
            i_o: rec.exemplar_set.i_o,
            i_v: rec.exemplar_set.i_v,
            fallback: rec.exemplar_set.fallback,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySeries {
    pub label: String,
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

/// KDE over a 200-point grid spanning the samples plus three bandwidths.
pub fn density_series(label: impl Into<String>, samples: &[f64]) -> Result<DensitySeries, AnalysisError> {
    let h = scott_bandwidth(samples);
    let (lo, hi) = extent(samples.iter().copied());
    let grid = linspace(lo - 3.0 * h, hi + 3.0 * h, 200);
    let density = gaussian_kde(samples, &grid, Some(h).filter(|h| *h > 0.0))?;
    Ok(DensitySeries {
        label: label.into(),
        bandwidth: h,
        grid,
        density,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub joint_histogram: Option<HistogramSpec>,
}

/// Everything `analyze` reports. Sections that could not be computed carry
/// the reason instead.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub runs: Vec<String>,
    pub round_comparison: Option<RoundComparison>,
    pub length_correlations: Vec<LengthCorrelation>,
    pub trajectories: Vec<TrajectoryPoint>,
    pub densities: Vec<DensitySeries>,
    pub joint_histograms: BTreeMap<String, JointHistogram>,
    pub icc: Vec<IccReport>,
    pub notes: Vec<String>,
}

/// Assembles the report over final-round pools of the given runs.
pub fn analyze_runs(runs: &[RunState], ratings: Option<&[RatingRecord]>, options: &AnalysisOptions) -> AnalysisReport {
    let mut report = AnalysisReport {
        runs: runs.iter().map(|r| r.run_dir.display().to_string()).collect(),
        ..Default::default()
    };
    match round_comparison(runs) {
        Ok(rc) => report.round_comparison = Some(rc),
        Err(e) => report.notes.push(format!("round comparison: {e}")),
    }

    let mut by_backend: BTreeMap<String, Vec<ItemResponse>> = BTreeMap::new();
    let mut originality_by_style: BTreeMap<PromptStyle, Vec<f64>> = BTreeMap::new();
    let mut similarity_by_strategy: BTreeMap<SelectionStrategy, Vec<f64>> = BTreeMap::new();
    for run in runs {
        report.trajectories.extend(exemplar_trajectory(run));
        let Some(last) = run.iterations.last() else { continue };
        by_backend
            .entry(run.config.generator_backend.clone())
            .or_default()
            .extend(last.responses.iter().cloned());
        originality_by_style
            .entry(run.config.prompting_style)
            .or_default()
            .extend(response_scores(&last.responses));
        let matrix = match last.similarity_matrix() {
            Ok(m) => m,
            Err(e) => {
                report.notes.push(format!("{}: similarity: {e}", run.run_dir.display()));
                continue;
            }
        };
        let ids_and_means: Vec<(String, f64)> = last.scores.iter().map(|s| (s.item_id.clone(), s.mean_originality)).collect();
        let points = match item_points(&ids_and_means, &matrix) {
            Ok(p) => p,
            Err(e) => {
                report.notes.push(format!("{}: {e}", run.run_dir.display()));
                continue;
            }
        };
        similarity_by_strategy
            .entry(run.config.selection_strategy)
            .or_default()
            .extend(points.iter().map(|p| p.similarity));
        if let Some(spec) = &options.joint_histogram {
            let key = format!("{}-s{}", run.config.name, run.seed);
            match joint_histogram(&points, &matrix, spec) {
                Ok(h) => {
                    report.joint_histograms.insert(key, h);
                }
                Err(e) => report.notes.push(format!("{key}: joint histogram: {e}")),
            }
        }
    }
    report.length_correlations = length_originality_report(&by_backend);
    let series = originality_by_style
        .iter()
        .map(|(s, v)| (format!("originality_{}", s.as_str()), v))
        .chain(similarity_by_strategy.iter().map(|(s, v)| (format!("similarity_{}", s.as_str()), v)));
    for (label, values) in series {
        match density_series(label.clone(), values) {
            Ok(d) => report.densities.push(d),
            Err(e) => report.notes.push(format!("{label}: {e}")),
        }
    }
    if let Some(records) = ratings {
        for facet in Facet::ALL {
            match icc_report(records, facet) {
                Ok(r) => report.icc.push(r),
                Err(e) => report.notes.push(format!("icc {}: {e}", facet.as_str())),
            }
        }
    }
    report
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `analysis.json` plus one plot-ready CSV per section into `dir`.
pub fn write_reports(dir: &Path, report: &AnalysisReport) -> Result<Vec<String>, AnalysisError> {
    let io = |path: &Path, source| AnalysisError::Io {
        path: path.display().to_string(),
        source,
    };
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut json = serde_json::to_vec_pretty(report).expect("report serializes");
    json.push(b'\n');
    files.push(("analysis.json".into(), json));

    if let Some(rc) = &report.round_comparison {
        files.push((
            "round_summary.csv".into(),
            csv_bytes(
                &["generator_backend", "round", "mean_originality", "std_originality", "n_responses"],
                rc.summaries
                    .iter()
                    .map(|s| vec![s.generator_backend.clone(), s.round.to_string(), s.mean_originality.to_string(), s.std_originality.to_string(), s.n_responses.to_string()])
                    .collect(),
            ),
        ));
        files.push((
            "round_tests.csv".into(),
            csv_bytes(
                &["style", "n_first", "n_last", "mean_first", "mean_last", "t", "df", "p"],
                rc.tests
                    .iter()
                    .map(|t| {
                        vec![
                            t.style.as_str().to_string(),
                            t.n_first.to_string(),
                            t.n_last.to_string(),
                            t.mean_first.to_string(),
                            t.mean_last.to_string(),
                            opt(t.test.map(|x| x.t)),
                            opt(t.test.map(|x| x.df)),
                            opt(t.test.map(|x| x.p)),
                        ]
                    })
                    .collect(),
            ),
        ));
    }
    files.push((
        "length_correlation.csv".into(),
        csv_bytes(
            &["backend", "n", "r"],
            report.length_correlations.iter().map(|l| vec![l.backend.clone(), l.n.to_string(), opt(l.r)]).collect(),
        ),
    ));
    files.push((
        "exemplar_trajectory.csv".into(),
        csv_bytes(
            &["run", "strategy", "iteration", "i_o", "i_v", "fallback"],
            report
                .trajectories
                .iter()
                .map(|t| vec![t.run.clone(), t.strategy.as_str().into(), t.iteration.to_string(), t.i_o.to_string(), opt(t.i_v), t.fallback.to_string()])
                .collect(),
        ),
    ));
    for d in &report.densities {
        files.push((
            format!("kde_{}.csv", d.label),
            csv_bytes(&["x", "density"], d.grid.iter().zip(&d.density).map(|(x, y)| vec![x.to_string(), y.to_string()]).collect()),
        ));
    }
    for (run, h) in &report.joint_histograms {
        let mut rows = Vec::new();
        for (ix, col) in h.counts.iter().enumerate() {
            for (iy, c) in col.iter().enumerate() {
                rows.push(vec![
                    h.x_edges[ix].to_string(),
                    h.x_edges[ix + 1].to_string(),
                    h.y_edges[iy].to_string(),
                    h.y_edges[iy + 1].to_string(),
                    c.to_string(),
                ]);
            }
        }
        files.push((
            format!("joint_histogram_{run}.csv"),
            csv_bytes(&["originality_lo", "originality_hi", "similarity_lo", "similarity_hi", "count"], rows),
        ));
    }
    if !report.icc.is_empty() {
        files.push((
            "icc.csv".into(),
            csv_bytes(
                &["facet", "complete_case", "block_items", "block_raters", "pairwise_mean", "pairs_used"],
                report
                    .icc
                    .iter()
                    .map(|r| {
                        vec![
                            r.facet.as_str().into(),
                            opt(r.complete_case.as_ref().map(|b| b.value)),
                            r.complete_case.as_ref().map_or(String::new(), |b| b.item_ids.len().to_string()),
                            r.complete_case.as_ref().map_or(String::new(), |b| b.rater_ids.len().to_string()),
                            opt(r.pairwise_mean),
                            r.pairs_used.to_string(),
                        ]
                    })
                    .collect(),
            ),
        ));
    }
    let mut names = Vec::new();
    for (name, bytes) in files {
        let p = dir.join(&name);
        fs::write(&p, bytes).map_err(|e| io(&p, e))?;
        names.push(name);
    }
    Ok(names)
}
