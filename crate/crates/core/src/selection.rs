//! Exemplar selection: per-item originality, pairwise similarity and the
//! random, greedy and constraint strategies.

use std::cmp::Ordering;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::EmbeddingVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("no originality scores")]
    EmptyScores,
    #[error("pool of {pool} items is smaller than k = {k}")]
    PoolTooSmall { pool: usize, k: usize },
    #[error("embedding {index} has dimension {found}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, found: usize },
    #[error("embedding {0} has zero norm")]
    ZeroNormVector(usize),
    #[error("no embeddings")]
    NoEmbeddings,
    #[error("subset needs at least 2 members, got {0}")]
    SubsetTooSmall(usize),
    #[error("subset index {index} out of range for {n} items")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("subset index {0} repeated")]
    DuplicateIndex(usize),
    #[error("constraint selection at iteration {0} needs the previous exemplar set")]
    MissingPrev(u32),
    #[error("previous exemplar set has no pairwise similarity")]
    PrevWithoutSimilarity,
    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),
    #[error("pool and similarity matrix disagree: {0}")]
    PoolMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    Random,
    Greedy,
    Constraint,
}

impl SelectionStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionStrategy::Random => "random",
            SelectionStrategy::Greedy => "greedy",
            SelectionStrategy::Constraint => "constraint",
        }
    }
}

/// An item with its response scores. Embeddings live in the
/// [`SimilarityMatrix`] built alongside the pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub item_id: String,
    pub response_scores: Vec<f64>,
    pub mean_originality: f64,
}

impl ScoredItem {
    pub fn new(item_id: impl Into<String>, response_scores: Vec<f64>) -> Result<Self, SelectionError> {
        let mean_originality = mean_item_originality(&response_scores)?;
        Ok(ScoredItem {
            item_id: item_id.into(),
            response_scores,
            mean_originality,
        })
    }

    /// Pool entry with a known mean and no per-response detail.
    pub fn from_mean(item_id: impl Into<String>, mean: f64) -> Self {
        ScoredItem {
            item_id: item_id.into(),
            response_scores: vec![mean],
            mean_originality: mean,
        }
    }
}

pub fn mean_item_originality(scores: &[f64]) -> Result<f64, SelectionError> {
    if scores.is_empty() {
        return Err(SelectionError::EmptyScores);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Dense symmetric cosine-similarity matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub n: usize,
    pub item_ids: Vec<String>,
    entries: Vec<f64>,
}

impl SimilarityMatrix {
    /// Builds a matrix from explicit entries; used for fixtures.
    pub fn from_entries(item_ids: Vec<String>, entries: Vec<Vec<f64>>) -> Result<Self, SelectionError> {
        let n = item_ids.len();
        if entries.len() != n || entries.iter().any(|r| r.len() != n) {
            return Err(SelectionError::PoolMismatch(format!("expected a {n}x{n} matrix")));
        }
        Ok(SimilarityMatrix {
            n,
            item_ids,
            entries: entries.into_iter().flatten().collect(),
        })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// Largest similarity between `i` and any other item.
    pub fn max_off_diagonal(&self, i: usize) -> Option<f64> {
        (0..self.n).filter(|&j| j != i).map(|j| self.get(i, j)).reduce(f64::max)
    }

    /// Mean similarity between `i` and every other item.
    pub fn mean_off_diagonal(&self, i: usize) -> Option<f64> {
        if self.n < 2 {
            return None;
        }
        let s: f64 = (0..self.n).filter(|&j| j != i).map(|j| self.get(i, j)).sum();
        Some(s / (self.n - 1) as f64)
    }
}

pub fn pairwise_similarity_matrix(
    item_ids: Vec<String>,
    embeddings: &[EmbeddingVector],
) -> Result<SimilarityMatrix, SelectionError> {
    let n = embeddings.len();
    if n == 0 {
        return Err(SelectionError::NoEmbeddings);
    }
    if item_ids.len() != n {
        return Err(SelectionError::PoolMismatch(format!("{} ids for {n} embeddings", item_ids.len())));
    }
    let dim = embeddings[0].dim();
    for (i, e) in embeddings.iter().enumerate() {
        if e.dim() != dim {
            return Err(SelectionError::DimensionMismatch { index: i, expected: dim, found: e.dim() });
        }
        if e.norm() == 0.0 {
            return Err(SelectionError::ZeroNormVector(i));
        }
    }
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        entries[i * n + i] = 1.0;
        for j in i + 1..n {
            let c = embeddings[i].cosine(&embeddings[j]).expect("dims checked").clamp(-1.0, 1.0);
            entries[i * n + j] = c;
            entries[j * n + i] = c;
        }
    }
    Ok(SimilarityMatrix { n, item_ids, entries })
}

pub fn mean_pairwise_similarity(subset: &[usize], matrix: &SimilarityMatrix) -> Result<f64, SelectionError> {
    if subset.len() < 2 {
        return Err(SelectionError::SubsetTooSmall(subset.len()));
    }
    for (a, &i) in subset.iter().enumerate() {
        if i >= matrix.n {
            return Err(SelectionError::IndexOutOfRange { index: i, n: matrix.n });
        }
        if subset[..a].contains(&i) {
            return Err(SelectionError::DuplicateIndex(i));
        }
    }
    Ok(pair_mean(subset, matrix))
}

fn pair_mean(subset: &[usize], matrix: &SimilarityMatrix) -> f64 {
    let mut sum = 0.0;
    for (a, &i) in subset.iter().enumerate() {
        for &j in &subset[a + 1..] {
            sum += matrix.get(i, j);
        }
    }
    let k = subset.len();
    sum / (k * (k - 1) / 2) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConstraints {
    pub delta_o: f64,
    pub delta_v: f64,
    pub k: usize,
}

impl Default for SelectionConstraints {
    fn default() -> Self {
        SelectionConstraints {
            delta_o: 0.05,
            delta_v: 0.05,
            k: 4,
        }
    }
}

impl SelectionConstraints {
    pub fn validate(&self, strategy: SelectionStrategy) -> Result<(), SelectionError> {
        if self.k == 0 {
            return Err(SelectionError::InvalidConstraints("k must be positive".into()));
        }
        if strategy == SelectionStrategy::Constraint && self.k < 2 {
            return Err(SelectionError::InvalidConstraints("constraint selection needs k >= 2".into()));
        }
        // NaN fails both comparisons.
        if !(self.delta_o >= 0.0 && self.delta_v >= 0.0) {
            return Err(SelectionError::InvalidConstraints("deltas must be non-negative".into()));
        }
        Ok(())
    }

    /// Both acceptance conditions for a candidate (η_o, η_v) against the
    /// previous set's (I_o, I_v).
    pub fn feasible(&self, eta_o: f64, eta_v: f64, i_o: f64, i_v: f64) -> bool {
        let originality_ok = eta_o > i_o || i_o - eta_o <= self.delta_o;
        let similarity_ok = eta_v < i_v || eta_v - i_v <= self.delta_v;
        originality_ok && similarity_ok
    }
}

/// A selected set of exemplars with its mean originality `i_o` and mean
/// pairwise similarity `i_v` (absent for k = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub item_ids: Vec<String>,
    pub i_o: f64,
    pub i_v: Option<f64>,
    pub iteration: u32,
    pub strategy: SelectionStrategy,
    /// Constraint selection found no feasible set and used greedy.
    pub fallback: bool,
    pub delta_o: f64,
    pub delta_v: f64,
}

/// Precomputed pool statistics shared by the strategies.
struct Pool<'a> {
    items: &'a [ScoredItem],
    matrix: &'a SimilarityMatrix,
}

impl<'a> Pool<'a> {
    fn new(items: &'a [ScoredItem], matrix: &'a SimilarityMatrix, k: usize) -> Result<Self, SelectionError> {
        if items.len() != matrix.n {
            return Err(SelectionError::PoolMismatch(format!("{} items, {}x{} matrix", items.len(), matrix.n, matrix.n)));
        }
        if let Some((i, _)) = items.iter().zip(&matrix.item_ids).enumerate().find(|(_, (a, b))| &a.item_id != *b) {
            return Err(SelectionError::PoolMismatch(format!("item {i} id differs from matrix id")));
        }
        if items.len() < k {
            return Err(SelectionError::PoolTooSmall { pool: items.len(), k });
        }
        Ok(Pool { items, matrix })
    }

    /// Higher mean first, then ascending id.
    fn rank_cmp(&self, a: usize, b: usize) -> Ordering {
        let (x, y) = (&self.items[a], &self.items[b]);
        y.mean_originality
            .total_cmp(&x.mean_originality)
            .then_with(|| x.item_id.cmp(&y.item_id))
    }

    fn build(&self, mut members: Vec<usize>, iteration: u32, strategy: SelectionStrategy, c: &SelectionConstraints, fallback: bool) -> ExemplarSet {
        members.sort_by(|&a, &b| self.rank_cmp(a, b));
        let i_o = members.iter().map(|&i| self.items[i].mean_originality).sum::<f64>() / members.len() as f64;
        let i_v = (members.len() >= 2).then(|| pair_mean(&members, self.matrix));
        ExemplarSet {
            item_ids: members.iter().map(|&i| self.items[i].item_id.clone()).collect(),
            i_o,
            i_v,
            iteration,
            strategy,
            fallback,
            delta_o: c.delta_o,
            delta_v: c.delta_v,
        }
    }

    fn greedy_members(&self, k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.items.len()).collect();
        order.sort_by(|&a, &b| self.rank_cmp(a, b));
        order.truncate(k);
        order
    }
}

/// Uniform k-subset without replacement.
pub fn select_random<R: Rng + ?Sized>(
    pool: &[ScoredItem],
    matrix: &SimilarityMatrix,
    constraints: &SelectionConstraints,
    iteration: u32,
    rng: &mut R,
) -> Result<ExemplarSet, SelectionError> {
    constraints.validate(SelectionStrategy::Random)?;
    let p = Pool::new(pool, matrix, constraints.k)?;
    let members = index::sample(rng, pool.len(), constraints.k).into_vec();
    Ok(p.build(members, iteration, SelectionStrategy::Random, constraints, false))
}

/// The k items with the highest mean originality; ties go to the smaller id.
pub fn select_greedy(
    pool: &[ScoredItem],
    matrix: &SimilarityMatrix,
    constraints: &SelectionConstraints,
    iteration: u32,
) -> Result<ExemplarSet, SelectionError> {
    constraints.validate(SelectionStrategy::Greedy)?;
    let p = Pool::new(pool, matrix, constraints.k)?;
    Ok(p.build(p.greedy_members(constraints.k), iteration, SelectionStrategy::Greedy, constraints, false))
}

/// Best feasible candidate seen so far. Compared by larger η_o, then smaller
/// η_v, then the ascending sorted id tuple.
#[derive(Debug, Clone)]
struct Candidate {
    members: Vec<usize>,
    eta_o: f64,
    eta_v: f64,
    ids: Vec<String>,
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    match a.eta_o.total_cmp(&b.eta_o) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => match a.eta_v.total_cmp(&b.eta_v) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => a.ids < b.ids,
        },
    }
}

fn pick(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if better(&b, &a) { b } else { a }),
        (a, b) => a.or(b),
    }
}

/// Enumerates every k-subset whose smallest index is `lead`, in
/// lexicographic order, keeping the best feasible one.
fn enumerate_from(
    p: &Pool<'_>,
    lead: usize,
    k: usize,
    prev: (f64, f64),
    c: &SelectionConstraints,
) -> Option<Candidate> {
    let n = p.items.len();
    let pairs = (k * (k - 1) / 2) as f64;
    let means: Vec<f64> = p.items.iter().map(|s| s.mean_originality).collect();
    let mut best: Option<Candidate> = None;

    let mut idx = Vec::with_capacity(k);
    idx.push(lead);
    // Partial sums indexed by depth, so each extension is O(depth).
    let mut osum = vec![0.0; k + 1];
    let mut vsum = vec![0.0; k + 1];
    osum[1] = means[lead];

    #[allow(clippy::too_many_arguments)]
    fn rec(
        p: &Pool<'_>,
        means: &[f64],
        n: usize,
        k: usize,
        pairs: f64,
        prev: (f64, f64),
        c: &SelectionConstraints,
        idx: &mut Vec<usize>,
        osum: &mut [f64],
        vsum: &mut [f64],
        best: &mut Option<Candidate>,
    ) {
        let depth = idx.len();
        if depth == k {
            let eta_o = osum[k] / k as f64;
            let eta_v = vsum[k] / pairs;
            if !c.feasible(eta_o, eta_v, prev.0, prev.1) {
                return;
            }
            if let Some(b) = best.as_ref() {
                match eta_o.total_cmp(&b.eta_o) {
                    Ordering::Less => return,
                    Ordering::Equal if eta_v.total_cmp(&b.eta_v) == Ordering::Greater => return,
                    _ => {}
                }
            }
            let mut ids: Vec<String> = idx.iter().map(|&i| p.items[i].item_id.clone()).collect();
            ids.sort_unstable();
            let cand = Candidate {
                members: idx.clone(),
                eta_o,
                eta_v,
                ids,
            };
            if best.as_ref().map_or(true, |b| better(&cand, b)) {
                *best = Some(cand);
            }
            return;
        }
        let start = idx[depth - 1] + 1;
        for j in start..=n - (k - depth) {
            let row = p.matrix.row(j);
            let add: f64 = idx.iter().map(|&i| row[i]).sum();
            osum[depth + 1] = osum[depth] + means[j];
            vsum[depth + 1] = vsum[depth] + add;
            idx.push(j);
            rec(p, means, n, k, pairs, prev, c, idx, osum, vsum, best);
            idx.pop();
        }
    }

    rec(p, &means, n, k, pairs, prev, c, &mut idx, &mut osum, &mut vsum, &mut best);
    best
}

/// Exhaustive search over all k-subsets for the feasible set with the
/// highest mean originality, measured against the previous set's stored
/// statistics. Falls back to greedy (flagged) when no subset is feasible.
pub fn select_constraint(
    pool: &[ScoredItem],
    matrix: &SimilarityMatrix,
    prev: &ExemplarSet,
    constraints: &SelectionConstraints,
    iteration: u32,
) -> Result<ExemplarSet, SelectionError> {
    constraints.validate(SelectionStrategy::Constraint)?;
    let p = Pool::new(pool, matrix, constraints.k)?;
    let i_v = prev.i_v.ok_or(SelectionError::PrevWithoutSimilarity)?;
    let k = constraints.k;
    let n = pool.len();

    let best = (0..=n - k)
        .into_par_iter()
        .map(|lead| enumerate_from(&p, lead, k, (prev.i_o, i_v), constraints))
        .reduce(|| None, pick);

    Ok(match best {
        Some(c) => p.build(c.members, iteration, SelectionStrategy::Constraint, constraints, false),
        None => {
            tracing::warn!(iteration, "no feasible exemplar set; falling back to greedy");
            p.build(p.greedy_members(k), iteration, SelectionStrategy::Constraint, constraints, true)
        }
    })
}

/// Strategy dispatch. Constraint selection has no previous set at
/// iteration 1 and uses greedy there.
pub fn select_exemplars<R: Rng + ?Sized>(
    pool: &[ScoredItem],
    matrix: &SimilarityMatrix,
    strategy: SelectionStrategy,
    iteration: u32,
    prev: Option<&ExemplarSet>,
    constraints: &SelectionConstraints,
    rng: &mut R,
) -> Result<ExemplarSet, SelectionError> {
    match strategy {
        SelectionStrategy::Random => select_random(pool, matrix, constraints, iteration, rng),
        SelectionStrategy::Greedy => select_greedy(pool, matrix, constraints, iteration),
        SelectionStrategy::Constraint if iteration <= 1 => {
            let mut set = select_greedy(pool, matrix, constraints, iteration)?;
            set.strategy = SelectionStrategy::Constraint;
            Ok(set)
        }
        SelectionStrategy::Constraint => {
            let prev = prev.ok_or(SelectionError::MissingPrev(iteration))?;
            select_constraint(pool, matrix, prev, constraints, iteration)
        }
    }
}
