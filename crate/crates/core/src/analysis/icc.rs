//! Human rating ingestion and ICC(A,k) inter-rater reliability.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnalysisError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub item_id: String,
    pub rater_id: String,
    pub complexity: u8,
    pub difficulty: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Facet {
    Complexity,
    Difficulty,
}

impl Facet {
    pub const ALL: [Facet; 2] = [Facet::Complexity, Facet::Difficulty];

    pub fn as_str(self) -> &'static str {
        match self {
            Facet::Complexity => "complexity",
            Facet::Difficulty => "difficulty",
        }
    }

    fn of(self, r: &RatingRecord) -> f64 {
        f64::from(match self {
            Facet::Complexity => r.complexity,
            Facet::Difficulty => r.difficulty,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRating {
    item_id: String,
    rater_id: String,
    complexity: i64,
    difficulty: i64,
}

/// Reads a ratings CSV with header `item_id,rater_id,complexity,difficulty`.
/// Row numbers in errors are file line numbers.
pub fn ingest_ratings(path: &Path) -> Result<Vec<RatingRecord>, AnalysisError> {
    let reader = csv::Reader::from_path(path).map_err(|e| AnalysisError::Parse {
        row: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    parse_ratings(reader)
}

pub fn parse_ratings_str(contents: &str) -> Result<Vec<RatingRecord>, AnalysisError> {
    parse_ratings(csv::Reader::from_reader(contents.as_bytes()))
}

fn parse_ratings<R: std::io::Read>(mut reader: csv::Reader<R>) -> Result<Vec<RatingRecord>, AnalysisError> {
    let headers = reader
        .headers()
        .map_err(|e| AnalysisError::Parse { row: 1, message: e.to_string() })?
        .clone();
    let expected = ["item_id", "rater_id", "complexity", "difficulty"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(AnalysisError::Parse {
            row: 1,
            message: format!("header must be {}", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| AnalysisError::Parse {
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let raw: RawRating = rec
            .deserialize(Some(&headers))
            .map_err(|e| AnalysisError::Parse { row, message: e.to_string() })?;
        let check = |field: &'static str, v: i64| {
            if (1..=5).contains(&v) {
                Ok(v as u8)
            } else {
                Err(AnalysisError::Range { row, field, value: v })
            }
        };
        let r = RatingRecord {
            complexity: check("complexity", raw.complexity)?,
            difficulty: check("difficulty", raw.difficulty)?,
            item_id: raw.item_id,
            rater_id: raw.rater_id,
        };
        if !seen.insert((r.item_id.clone(), r.rater_id.clone())) {
            return Err(AnalysisError::DuplicateRating {
                row,
                item_id: r.item_id,
                rater_id: r.rater_id,
            });
        }
        out.push(r);
    }
    Ok(out)
}

/// ICC(A,k): absolute agreement of the average of k raters, from a
/// complete items-by-raters matrix.
pub fn icc_absolute_average(matrix: &[Vec<f64>]) -> Result<f64, AnalysisError> {
    let n = matrix.len();
    if n < 2 {
        return Err(AnalysisError::InsufficientData("ICC needs at least 2 items".into()));
    }
    let k = matrix[0].len();
    if k < 2 {
        return Err(AnalysisError::InsufficientData("ICC needs at least 2 raters".into()));
    }
    if matrix.iter().any(|r| r.len() != k) {
        return Err(AnalysisError::InsufficientData("ratings matrix is ragged".into()));
    }
    let (nf, kf) = (n as f64, k as f64);
    let grand = matrix.iter().flatten().sum::<f64>() / (nf * kf);
    let row_means: Vec<f64> = matrix.iter().map(|r| r.iter().sum::<f64>() / kf).collect();
    let col_means: Vec<f64> = (0..k).map(|j| matrix.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let ss_total: f64 = matrix.iter().flatten().map(|v| (v - grand).powi(2)).sum();
    let ss_rows = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_cols = nf * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_err = ss_total - ss_rows - ss_cols;
    let ms_rows = ss_rows / (nf - 1.0);
    let ms_cols = ss_cols / (kf - 1.0);
    let ms_err = ss_err / ((nf - 1.0) * (kf - 1.0));
    let denom = ms_rows + (ms_cols - ms_err) / nf;
    if ss_total == 0.0 || denom.abs() < 1e-12 {
        return Err(AnalysisError::DegenerateInput("ratings have no variance".into()));
    }
    Ok((ms_rows - ms_err) / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccBlock {
    pub value: f64,
    pub item_ids: Vec<String>,
    pub rater_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccReport {
    pub facet: Facet,
    /// ICC(A,k) on the largest complete items-by-raters block.
    pub complete_case: Option<IccBlock>,
    /// Mean ICC(A,2) over rater pairs, each on the items both rated. Only
    /// computed when the ratings are incomplete.
    pub pairwise_mean: Option<f64>,
    pub pairs_used: usize,
    pub warnings: Vec<String>,
}

/// Largest complete block: the rater subset (at least 2 raters) whose
/// commonly rated items times raters is maximal. Ties prefer more raters,
/// then the lexicographically smaller rater list.
fn maximal_complete_block<'a>(
    by_rater: &BTreeMap<&'a str, BTreeSet<&'a str>>,
) -> Option<(Vec<String>, Vec<String>)> {
    let raters: Vec<&'a str> = by_rater.keys().copied().collect();
    let r = raters.len();
    let mut best: Option<(usize, Vec<&'a str>, BTreeSet<&'a str>)> = None;
    let mut consider = |subset: Vec<&'a str>| {
        let mut common = by_rater[subset[0]].clone();
        for s in &subset[1..] {
            common = common.intersection(&by_rater[s]).copied().collect();
        }
        if common.len() < 2 {
            return;
        }
        let cells = common.len() * subset.len();
        let better = match &best {
            None => true,
            Some((c, s, _)) => cells > *c || (cells == *c && (subset.len() > s.len() || (subset.len() == s.len() && subset < *s))),
        };
        if better {
            best = Some((cells, subset, common));
        }
    };
    if r <= 16 {
        for mask in 1u32..(1 << r) {
            if mask.count_ones() >= 2 {
                consider((0..r).filter(|i| mask & (1 << i) != 0).map(|i| raters[i]).collect());
            }
        }
    } else {
        // Too many raters to enumerate: peel off the sparsest rater.
        let mut current = raters.clone();
        while current.len() >= 2 {
            consider(current.clone());
            let (drop, _) = current
                .iter()
                .enumerate()
                .min_by_key(|(_, r)| by_rater[**r].len())
                .expect("non-empty");
            current.remove(drop);
        }
    }
    best.map(|(_, s, items)| (items.into_iter().map(String::from).collect(), s.into_iter().map(String::from).collect()))
}

/// ICC(A,k) for one facet with missing-data handling: complete-case on the
/// maximal complete block, plus a pairwise-complete estimate when some
/// item/rater cells are missing.
pub fn icc_report(records: &[RatingRecord], facet: Facet) -> Result<IccReport, AnalysisError> {
    let mut cell: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    let mut by_rater: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut items: BTreeSet<&str> = BTreeSet::new();
    for r in records {
        cell.insert((r.item_id.as_str(), r.rater_id.as_str()), facet.of(r));
        by_rater.entry(r.rater_id.as_str()).or_default().insert(r.item_id.as_str());
        items.insert(r.item_id.as_str());
    }
    let complete = cell.len() == items.len() * by_rater.len();
    let matrix_for = |items: &[String], raters: &[String]| -> Vec<Vec<f64>> {
        items
            .iter()
            .map(|i| raters.iter().map(|r| cell[&(i.as_str(), r.as_str())]).collect())
            .collect()
    };

    let mut warnings = Vec::new();
    let complete_case = match maximal_complete_block(&by_rater) {
        None => None,
        Some((item_ids, rater_ids)) => {
            let m = matrix_for(&item_ids, &rater_ids);
            match icc_absolute_average(&m) {
                Ok(value) => Some(IccBlock { value, item_ids, rater_ids }),
                Err(e) => {
                    warnings.push(format!("complete-case block: {e}"));
                    None
                }
            }
        }
    };
    if !complete {
        if let Some(b) = &complete_case {
            warnings.push(format!(
                "ratings are incomplete; complete-case ICC uses {} of {} items and {} of {} raters",
                b.item_ids.len(),
                items.len(),
                b.rater_ids.len(),
                by_rater.len()
            ));
        }
    }

    let (mut pairwise_mean, mut pairs_used) = (None, 0);
    if !complete {
        let raters: Vec<&str> = by_rater.keys().copied().collect();
        let mut values = Vec::new();
        for (a, ra) in raters.iter().enumerate() {
            for rb in &raters[a + 1..] {
                let shared: Vec<String> = by_rater[ra].intersection(&by_rater[rb]).map(|s| s.to_string()).collect();
                if shared.len() < 2 {
                    continue;
                }
                if let Ok(v) = icc_absolute_average(&matrix_for(&shared, &[ra.to_string(), rb.to_string()])) {
                    values.push(v);
                }
            }
        }
        pairs_used = values.len();
        if !values.is_empty() {
            pairwise_mean = Some(values.iter().sum::<f64>() / values.len() as f64);
            warnings.push(format!(
                "pairwise-complete ICC averages {pairs_used} rater pairs and is not comparable to a complete-design ICC(A,k)"
            ));
        }
    }
    if complete_case.is_none() && pairwise_mean.is_none() {
        return Err(AnalysisError::InsufficientData(format!(
            "no {} ratings with at least 2 items shared by 2 raters",
            facet.as_str()
        )));
    }
    Ok(IccReport {
        facet,
        complete_case,
        pairwise_mean,
        pairs_used,
        warnings,
    })
}
