//! Acceptance suite. Runs every primary criterion in order, prints one
//! PASS/FAIL line per criterion and fails if any criterion failed.
//!
//! Lines go straight to the process stdout so they show up without
//! `--nocapture`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use cpig_core::analysis::{
    gaussian_kde, icc_absolute_average, joint_histogram, linspace, pearson, scott_bandwidth, trapezoid, welch_t_test,
    HistPoint, HistogramSpec,
};
use cpig_core::itemgen::{
    check_and_strip_termination, count_tokens, validate_item, FilterConfig, Verdict, DEFAULT_MIN_READABILITY,
    DEFAULT_MIN_TOKENS, DEFAULT_PRIMING_PHRASES, SENTINEL,
};
use cpig_core::pipeline::{resume_trial, run_trial, run_trial_with, RunState, TrialConfig};
use cpig_core::providers::{EmbeddingVector, MockGeneratorConfig};
use cpig_core::responsegen::{parse_profile_pool, sample_profile, ParticipantProfile, ProfileKind, ProfilePool, SHIPPED_PROFILES};
use cpig_core::selection::{
    pairwise_similarity_matrix, select_constraint, select_greedy, ExemplarSet, ScoredItem, SelectionConstraints,
    SelectionStrategy, SimilarityMatrix,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn report(n: u32, title: &str, elapsed: Duration, o: &Outcome) {
    let line = format!(
        "acceptance criterion {n} [{title}]: {} ({:.2}s) {}\n",
        if o.pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        o.detail
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

// ---------------------------------------------------------------- criterion 1

/// Short easy sentences totalling exactly `n` tokens.
fn easy_body(n: usize) -> String {
    let (units, gos) = match n % 3 {
        0 => (n / 3, 0),
        2 => (n / 3, 1),
        _ => (n / 3 - 1, 2),
    };
    let mut parts = vec!["Tom ran."; units];
    parts.extend(vec!["Go."; gos]);
    parts.join(" ")
}

fn filter_gate() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let cfg = FilterConfig::default();
    check(DEFAULT_MIN_READABILITY == 45.0, "readability threshold is 45");
    check(DEFAULT_MIN_TOKENS == 140, "token minimum is 140");
    check(cfg.verdict(true, 200, Some(44.99), &[]) == Verdict::FailReadability, "44.99 fails");
    check(cfg.verdict(true, 200, Some(45.0), &[]) == Verdict::Pass, "45.0 passes");

    let b139 = easy_body(139);
    let b140 = easy_body(140);
    check(count_tokens(&b139) == 139 && count_tokens(&b140) == 140, "token-exact bodies");
    check(validate_item(&format!("{b139} {SENTINEL}")).verdict == Verdict::FailLength, "139 tokens fail");
    check(validate_item(&format!("{b140} {SENTINEL}")).verdict == Verdict::Pass, "140 tokens pass");

    let expected = [
        "on the one hand",
        "on the other hand",
        "dilemma",
        "must navigate",
        "must decide",
        "has to decide",
        "is torn between",
    ];
    check(DEFAULT_PRIMING_PHRASES == expected, "seven priming phrases verbatim");
    let base = easy_body(150);
    for phrase in expected {
        let upper: String = phrase.to_uppercase();
        let text = format!("{base} Tom said {upper} now. {SENTINEL}");
        let r = validate_item(&text);
        check(r.verdict == Verdict::FailPriming && r.priming_hits == vec![phrase.to_string()], phrase);
    }

    check(validate_item(&b140).verdict == Verdict::FailTermination, "missing sentinel fails");
    let trailing = format!("{b140} {SENTINEL} Sure, here is another version with more words than before.");
    let r = validate_item(&trailing);
    check(r.verdict == Verdict::Pass && r.token_count == 140, "sentinel and trailing text stripped");
    let (has, stripped) = check_and_strip_termination(&trailing);
    check(has && stripped == b140, "stripped text is the body");
    check(SENTINEL == "I am finished with this scenario.", "sentinel text");

    if failures.is_empty() {
        outcome(true, "thresholds, phrases and sentinel as specified")
    } else {
        outcome(false, format!("failed checks: {failures:?}"))
    }
}

// ------------------------------------------------------------ criteria 2 to 4

struct Instance {
    pool: Vec<ScoredItem>,
    matrix: SimilarityMatrix,
}

/// Random pool with shuffled ids; `quantized` means come from a handful of
/// levels so ties are common.
fn instance(rng: &mut ChaCha8Rng, n: usize, quantized: bool) -> Instance {
    let mut ids: Vec<String> = (0..n).map(|i| format!("item-{i:02}")).collect();
    ids.shuffle(rng);
    let pool: Vec<ScoredItem> = ids
        .iter()
        .map(|id| {
            let m = if quantized { 1.0 + 0.5 * rng.random_range(0..8) as f64 } else { rng.random_range(1.0..5.0) };
            ScoredItem::from_mean(id.clone(), m)
        })
        .collect();
    let dim = 8;
    let embeddings: Vec<EmbeddingVector> = (0..n)
        .map(|_| EmbeddingVector::new((0..dim).map(|_| rng.random_range(0.01..1.0)).collect()).unwrap())
        .collect();
    let matrix = pairwise_similarity_matrix(ids, &embeddings).unwrap();
    Instance { pool, matrix }
}

/// Reference ranking: higher mean first, then smaller id.
fn oracle_rank(pool: &[ScoredItem]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&pool[a], &pool[b]);
        if x.mean_originality > y.mean_originality {
            Ordering::Less
        } else if x.mean_originality < y.mean_originality {
            Ordering::Greater
        } else {
            x.item_id.cmp(&y.item_id)
        }
    });
    order
}

fn ids_of(pool: &[ScoredItem], idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| pool[i].item_id.clone()).collect()
}

fn greedy_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let constraints = SelectionConstraints {
        k: 4,
        ..SelectionConstraints::default()
    };
    let mut ties = 0;
    for case in 0..100 {
        let n = rng.random_range(4..=50);
        let inst = instance(&mut rng, n, case % 2 == 0);
        let got = select_greedy(&inst.pool, &inst.matrix, &constraints, 1).unwrap();
        let expected = ids_of(&inst.pool, &oracle_rank(&inst.pool)[..4]);
        let fifth_ties = n > 4 && {
            let r = oracle_rank(&inst.pool);
            inst.pool[r[3]].mean_originality == inst.pool[r[4]].mean_originality
        };
        ties += fifth_ties as usize;
        if got.item_ids != expected {
            return outcome(false, format!("case {case} (n={n}): got {:?}, oracle {:?}", got.item_ids, expected));
        }
    }
    outcome(true, format!("100/100 pools match ({ties} with a tie at the cut)"))
}

/// Every k-subset of 0..n in lexicographic order.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn eta(inst: &Instance, s: &[usize]) -> (f64, f64) {
    let o = s.iter().map(|&i| inst.pool[i].mean_originality).sum::<f64>() / s.len() as f64;
    let mut v = 0.0;
    let mut pairs = 0.0;
    for a in 0..s.len() {
        for b in a + 1..s.len() {
            v += inst.matrix.get(s[a], s[b]);
            pairs += 1.0;
        }
    }
    (o, v / pairs)
}

fn satisfies(eta_o: f64, eta_v: f64, i_o: f64, i_v: f64, d_o: f64, d_v: f64) -> bool {
    (eta_o > i_o || i_o - eta_o <= d_o) && (eta_v < i_v || eta_v - i_v <= d_v)
}

/// Exhaustive reference: best feasible set by (max η_o, min η_v, smallest
/// sorted id tuple), or `None` when nothing is feasible.
fn constraint_reference(inst: &Instance, k: usize, prev: &ExemplarSet) -> Option<Vec<String>> {
    let i_v = prev.i_v.unwrap();
    let mut best: Option<(f64, f64, Vec<String>)> = None;
    for s in subsets(inst.pool.len(), k) {
        let (o, v) = eta(inst, &s);
        if !satisfies(o, v, prev.i_o, i_v, prev.delta_o, prev.delta_v) {
            continue;
        }
        let mut ids = ids_of(&inst.pool, &s);
        ids.sort();
        let replace = match &best {
            None => true,
            Some((bo, bv, bids)) => o > *bo || (o == *bo && (v < *bv || (v == *bv && ids < *bids))),
        };
        if replace {
            best = Some((o, v, ids));
        }
    }
    best.map(|b| b.2)
}

fn constraint_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut feasible, mut fallback) = (0, 0);
    for case in 0..200 {
        let k = [2, 3, 4][case % 3];
        let n = rng.random_range(k..=12);
        let inst = instance(&mut rng, n, case % 4 < 2);
        let d_o = rng.random_range(0.0..0.6);
        let d_v = rng.random_range(0.0..0.15);
        let prev = ExemplarSet {
            item_ids: vec![],
            i_o: rng.random_range(1.5..4.5),
            i_v: Some(rng.random_range(0.5..0.95)),
            iteration: 1,
            strategy: SelectionStrategy::Constraint,
            fallback: false,
            delta_o: d_o,
            delta_v: d_v,
        };
        let constraints = SelectionConstraints { delta_o: d_o, delta_v: d_v, k };
        let got = select_constraint(&inst.pool, &inst.matrix, &prev, &constraints, 2).unwrap();
        let mut got_sorted = got.item_ids.clone();
        got_sorted.sort();
        let rank = oracle_rank(&inst.pool);
        let rank_pos = |id: &String| rank.iter().position(|&i| &inst.pool[i].item_id == id).unwrap();
        if got.item_ids.windows(2).any(|w| rank_pos(&w[0]) > rank_pos(&w[1])) {
            return outcome(false, format!("case {case}: members not in rank order: {:?}", got.item_ids));
        }
        match constraint_reference(&inst, k, &prev) {
            Some(expected) => {
                feasible += 1;
                if got.fallback || got_sorted != expected {
                    return outcome(false, format!("case {case}: got {got_sorted:?} (fallback {}), oracle {expected:?}", got.fallback));
                }
                let idx: Vec<usize> = got.item_ids.iter().map(|id| inst.pool.iter().position(|s| &s.item_id == id).unwrap()).collect();
                let (o, v) = eta(&inst, &idx);
                if !satisfies(o, v, prev.i_o, prev.i_v.unwrap(), d_o, d_v) {
                    return outcome(false, format!("case {case}: returned set violates the constraints"));
                }
            }
            None => {
                fallback += 1;
                let expected = ids_of(&inst.pool, &rank[..k]);
                if !got.fallback || got.item_ids != expected {
                    return outcome(false, format!("case {case}: expected greedy fallback {expected:?}, got {:?}", got.item_ids));
                }
            }
        }
    }
    outcome(true, format!("200/200 match ({feasible} feasible, {fallback} greedy fallbacks)"))
}

fn constraint_scale() -> (Outcome, Duration) {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let inst = instance(&mut rng, 50, false);
    let first: Vec<usize> = (0..4).collect();
    let (o, v) = eta(&inst, &first);
    let prev = ExemplarSet {
        item_ids: ids_of(&inst.pool, &first),
        i_o: o,
        i_v: Some(v),
        iteration: 1,
        strategy: SelectionStrategy::Constraint,
        fallback: false,
        delta_o: 0.05,
        delta_v: 0.05,
    };
    let constraints = SelectionConstraints::default();
    let start = Instant::now();
    let got = select_constraint(&inst.pool, &inst.matrix, &prev, &constraints, 2).unwrap();
    let took = start.elapsed();
    let count = subsets(50, 4).len();
    (
        outcome(
            took < Duration::from_secs(5) && count == 230_300 && got.item_ids.len() == 4,
            format!("{count} subsets searched in {:.3}s", took.as_secs_f64()),
        ),
        took,
    )
}

// ---------------------------------------------------------------- criterion 5

fn statistics() -> Outcome {
    let mut failures = Vec::new();
    // Deviations (-2,-1,0,1,2) and (-2,0,-1,2,1): covariance 8/4, variances
    // 10/4 each, so r = 8/10.
    let r = pearson(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap();
    if (r - 0.8).abs() > 1e-9 {
        failures.push(format!("pearson {r}"));
    }
    // Means 3 and 0.48; variances 2.5 and 5.4390625; n = 5 each:
    // t = 2.52 / sqrt(0.5 + 1.0878125) = 1.99987 to five places.
    let w = welch_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[-2.47, -0.995, 0.48, 1.955, 3.43]).unwrap();
    if (w.t - 1.99987).abs() > 1e-3 {
        failures.push(format!("welch t {}", w.t));
    }
    // Six targets rated by four judges; ICC(A,k) from the two-way ANOVA
    // mean squares MSR = 11.24, MSC = 32.487, MSE = 1.019: 0.62005.
    let ratings: Vec<Vec<f64>> = [[9, 2, 5, 8], [6, 1, 3, 2], [8, 4, 6, 8], [7, 1, 2, 6], [10, 5, 6, 9], [6, 2, 4, 7]]
        .iter()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect();
    let icc = icc_absolute_average(&ratings).unwrap();
    if (icc - 0.6200505).abs() > 1e-6 {
        failures.push(format!("icc {icc}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples: Vec<f64> = (0..500).map(|_| rng.random_range(1.0..5.0) + rng.random_range(0.0..1.0)).collect();
    let h = scott_bandwidth(&samples);
    let grid = linspace(1.0 - 4.0 * h, 6.0 + 4.0 * h, 2001);
    let area = trapezoid(&grid, &gaussian_kde(&samples, &grid, None).unwrap());
    if (area - 1.0).abs() > 0.01 {
        failures.push(format!("kde area {area}"));
    }

    // Four points, 2x2 grid over [0,4]x[0,1]; the first two items are
    // near duplicates (0.96 > 0.95) and are dropped.
    let ids: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
    let sim = vec![
        vec![1.0, 0.96, 0.1, 0.2],
        vec![0.96, 1.0, 0.3, 0.1],
        vec![0.1, 0.3, 1.0, 0.95],
        vec![0.2, 0.1, 0.95, 1.0],
    ];
    let matrix = SimilarityMatrix::from_entries(ids.clone(), sim).unwrap();
    let pts: Vec<HistPoint> = [(0.5, 0.2), (1.5, 0.9), (3.0, 0.4), (4.0, 0.75)]
        .iter()
        .zip(&ids)
        .map(|(&(x, y), id)| HistPoint {
            item_id: id.clone(),
            originality: x,
            similarity: y,
        })
        .collect();
    let spec = HistogramSpec {
        bins_x: 2,
        bins_y: 2,
        x_range: Some((0.0, 4.0)),
        y_range: Some((0.0, 1.0)),
        drop_threshold: 0.95,
    };
    let hist = joint_histogram(&pts, &matrix, &spec).unwrap();
    if hist.dropped_ids != vec!["a", "b"] || hist.counts != vec![vec![0, 0], vec![1, 1]] || hist.out_of_range != 0 {
        failures.push(format!("histogram {:?} dropped {:?}", hist.counts, hist.dropped_ids));
    }
    let keep = HistogramSpec { drop_threshold: 1.0, ..spec };
    let hist = joint_histogram(&pts, &matrix, &keep).unwrap();
    if hist.counts != vec![vec![1, 1], vec![1, 1]] {
        failures.push(format!("histogram without drops {:?}", hist.counts));
    }

    if failures.is_empty() {
        outcome(
            true,
            format!("pearson {r:.12}, welch t {:.6}, icc {icc:.9}, kde area {area:.5}, histogram exact", w.t),
        )
    } else {
        outcome(false, failures.join("; "))
    }
}

// ---------------------------------------------------------------- criterion 6

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn determinism() -> (Outcome, Duration) {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = TrialConfig {
        name: "determinism".into(),
        selection_strategy: SelectionStrategy::Constraint,
        ..TrialConfig::default()
    };
    let start = Instant::now();
    let a = run_trial(&cfg, 42, &tmp.path().join("a")).unwrap();
    run_trial(&cfg, 42, &tmp.path().join("b")).unwrap();
    let registry = cfg.build_registry().unwrap();
    run_trial_with(&registry, &cfg, 42, &tmp.path().join("c"), Some(3)).unwrap();
    resume_trial(&tmp.path().join("c"), Some(&cfg)).unwrap();
    let took = start.elapsed();

    let (sa, sb, sc) = (snapshot(&tmp.path().join("a")), snapshot(&tmp.path().join("b")), snapshot(&tmp.path().join("c")));
    let shape_ok = a.iterations.len() == 5 && a.word_lists.len() == 50 && a.iterations.iter().all(|r| r.responses.len() == 15 * r.items.len());
    let pass = shape_ok && sa == sb && sa == sc && took < Duration::from_secs(60);
    (
        outcome(
            pass,
            format!(
                "{} files; repeat identical: {}, resumed identical: {}; 5 iterations x {} word lists x 15 responses",
                sa.len(),
                sa == sb,
                sa == sc,
                a.word_lists.len()
            ),
        ),
        took,
    )
}

// ------------------------------------------------------------ criteria 7 to 9

fn trial(name: &str, strategy: SelectionStrategy, seed: u64, root: &Path, generator: MockGeneratorConfig) -> RunState {
    let mut cfg = TrialConfig {
        name: name.into(),
        selection_strategy: strategy,
        ..TrialConfig::default()
    };
    cfg.mock.generator = generator;
    run_trial(&cfg, seed, &root.join(format!("{name}-s{seed}"))).unwrap()
}

fn loop_dynamics() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for strategy in [SelectionStrategy::Greedy, SelectionStrategy::Constraint] {
        let (mut ge, mut gt) = (0, 0);
        for seed in 1..=10 {
            let state = trial(strategy.as_str(), strategy, seed, tmp.path(), MockGeneratorConfig::default());
            let first = state.iterations.first().unwrap().exemplar_set.i_o;
            let last = state.iterations.last().unwrap().exemplar_set.i_o;
            ge += (last >= first) as usize;
            gt += (last > first) as usize;
        }
        pass &= ge >= 9 && gt >= 7;
        parts.push(format!("{}: final >= first in {ge}/10, > in {gt}/10", strategy.as_str()));
    }
    outcome(pass, parts.join("; "))
}

fn redundancy() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    // Marker carriers are frequently cloned: high scorers come in near
    // duplicate families.
    let generator = MockGeneratorConfig {
        clone_rate: 0.9,
        ..MockGeneratorConfig::default()
    };
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 1..=10 {
        let g = trial("greedy", SelectionStrategy::Greedy, seed, tmp.path(), generator.clone());
        let c = trial("constraint", SelectionStrategy::Constraint, seed, tmp.path(), generator.clone());
        let gv = g.iterations.last().unwrap().exemplar_set.i_v.unwrap();
        let cv = c.iterations.last().unwrap().exemplar_set.i_v.unwrap();
        wins += (cv <= gv) as usize;
        pairs.push(format!("{cv:.3}/{gv:.3}"));
    }
    outcome(wins >= 8, format!("constraint I_v <= greedy I_v in {wins}/10 seeds (constraint/greedy: {})", pairs.join(" ")))
}

fn profile_sampling() -> Outcome {
    let all = parse_profile_pool(SHIPPED_PROFILES, "profiles.jsonl").unwrap();
    let four: Vec<ParticipantProfile> = all.of_kind(ProfileKind::Psychometric).iter().take(4).cloned().collect();
    let pool = ProfilePool::new(four).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..10_000 {
        *counts.entry(sample_profile(&pool, ProfileKind::Psychometric, &mut rng).unwrap().id.clone()).or_default() += 1;
    }
    let freqs: Vec<f64> = counts.values().map(|&c| c as f64 / 10_000.0).collect();
    let pass = counts.len() == 4 && freqs.iter().all(|f| (0.20..=0.30).contains(f));
    outcome(pass, format!("frequencies {freqs:?}"))
}

#[test]
fn primary_acceptance_criteria() {
    let mut all = true;
    let mut timed = |n: u32, title: &str, limit: Duration, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let mut o = f();
        let took = start.elapsed();
        if took > limit {
            o.pass = false;
            o.detail.push_str(&format!(" (over the {:.0}s budget)", limit.as_secs_f64()));
        }
        report(n, title, took, &o);
        all &= o.pass;
    };
    timed(1, "filter gate", Duration::from_secs(1), &filter_gate);
    timed(2, "greedy oracle", Duration::from_secs(1), &greedy_oracle);
    timed(3, "constraint oracle", Duration::from_secs(10), &constraint_oracle);
    timed(4, "constraint scale", Duration::from_secs(5), &|| constraint_scale().0);
    timed(5, "statistics oracles", Duration::from_secs(5), &statistics);
    timed(6, "end-to-end determinism", Duration::from_secs(60), &|| determinism().0);
    timed(7, "loop dynamics", Duration::from_secs(300), &loop_dynamics);
    timed(8, "redundancy", Duration::from_secs(300), &redundancy);
    timed(9, "profile sampling", Duration::from_secs(5), &profile_sampling);
    assert!(all, "at least one acceptance criterion failed; see the lines above");
}
