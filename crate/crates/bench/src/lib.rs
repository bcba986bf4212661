//! Input builders shared by the benchmarks.

use cpig_core::providers::EmbeddingVector;
use cpig_core::selection::{pairwise_similarity_matrix, ExemplarSet, ScoredItem, SelectionStrategy, SimilarityMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A scored pool of `n` items with random 64-dim embeddings, plus a
/// previous exemplar set of size `k` taken from a different part of the
/// pool, so the constraint search has both feasible and infeasible subsets.
pub fn selection_instance(n: usize, k: usize, seed: u64) -> (Vec<ScoredItem>, SimilarityMatrix, ExemplarSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = (0..n).map(|i| format!("item-{i:03}")).collect();
    let pool: Vec<ScoredItem> = ids
        .iter()
        .map(|id| ScoredItem::from_mean(id.clone(), rng.random_range(1.0..5.0)))
        .collect();
    let embeddings: Vec<EmbeddingVector> = (0..n)
        .map(|_| EmbeddingVector::new((0..64).map(|_| rng.random_range(0.0..1.0)).collect()).expect("non-zero"))
        .collect();
    let matrix = pairwise_similarity_matrix(ids.clone(), &embeddings).expect("valid embeddings");
    let prev_idx: Vec<usize> = (0..k).collect();
    let i_o = prev_idx.iter().map(|&i| pool[i].mean_originality).sum::<f64>() / k as f64;
    let mut sim = 0.0;
    let mut pairs = 0;
    for a in 0..k {
        for b in a + 1..k {
            sim += matrix.get(a, b);
            pairs += 1;
        }
    }
    let prev = ExemplarSet {
        item_ids: prev_idx.iter().map(|&i| ids[i].clone()).collect(),
        i_o,
        i_v: Some(sim / pairs.max(1) as f64),
        iteration: 1,
        strategy: SelectionStrategy::Greedy,
        fallback: false,
        delta_o: 0.05,
        delta_v: 0.05,
    };
    (pool, matrix, prev)
}

/// A readable ~150-token scenario for the text benchmarks.
pub const SAMPLE_ITEM: &str = "Omar is the captain of his town's soccer team. The team practices three nights a week at the park. \
His teammate Lila just told him that the city will close the field for repairs next month, right before the big game. \
Omar's coach, Mr. Reyes, is away visiting family and will not be back until the week of the game. \
Some players want to practice in the school gym, but the gym is small and the floor is slippery. \
Others want to ask a farmer outside town if they can use his empty field, but it is far away and not everyone has a ride. \
Omar also knows that two younger players have been skipping practice because they feel left out. \
The team has very little money, and the parents are already busy with work. \
Omar wants the team to be ready, and he wants everyone to feel like part of the team.";
