#![allow(clippy::needless_range_loop)]

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::*;
use crate::data::{make_spiral_dataset, Dataset};
use crate::ops::OpKind;
use crate::rng::rng_from_seed;
use crate::supernet::{AllowedOps, SharedWeights, Slot, SpaceDescription};
use crate::tensor::Tensor;

fn flat(values: Vec<f64>, cuts: &[usize]) -> FlatGradient {
    let mut segments = Vec::new();
    let mut start = 0;
    for (i, &len) in cuts.iter().enumerate() {
        segments.push(Segment {
            slot: Slot::Edge { edge: i, op: 0 },
            start,
            len,
        });
        start += len;
    }
    FlatGradient { values, segments }
}

fn matrix(scores: Vec<Vec<f64>>) -> GMMatrix {
    let n = scores.len();
    GMMatrix::new(0, (0..n).collect(), scores, Similarity::Cosine, 1).unwrap()
}

fn random_matrix(n: usize, seed: u64) -> GMMatrix {
    let mut rng = rng_from_seed(seed);
    let mut s = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = rng.random_range(-1.0..1.0);
            s[i][j] = v;
            s[j][i] = v;
        }
    }
    matrix(s)
}

#[test]
fn cosine_basics() {
    let g = flat(vec![1.0, 2.0, -0.5], &[3]);
    let neg = flat(vec![-1.0, -2.0, 0.5], &[3]);
    let orth = flat(vec![2.0, -1.0, 0.0], &[3]);
    let scaled = flat(vec![3.0, 6.0, -1.5], &[3]);
    assert!((gm_score(&g, &g, Similarity::Cosine).unwrap() - 1.0).abs() < 1e-12);
    assert!((gm_score(&g, &neg, Similarity::Cosine).unwrap() + 1.0).abs() < 1e-12);
    assert!(gm_score(&g, &orth, Similarity::Cosine).unwrap().abs() < 1e-12);
    assert!((gm_score(&g, &scaled, Similarity::Cosine).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(gm_score(&g, &g, Similarity::NegL2).unwrap(), 0.0);
    assert!((gm_score(&g, &neg, Similarity::NegL2).unwrap() + 2.0 * 5.25f64.sqrt()).abs() < 1e-12);
}

#[test]
fn per_filter_cosine_averages_segments() {
    // first bundle agrees, second is orthogonal: mean 0.5
    let a = flat(vec![1.0, 0.0, 1.0, 0.0], &[2, 2]);
    let b = flat(vec![2.0, 0.0, 0.0, 5.0], &[2, 2]);
    assert!((gm_score(&a, &b, Similarity::PerFilterCosine).unwrap() - 0.5).abs() < 1e-12);
    // flat cosine weights by magnitude instead
    let flat_cos = 2.0 / (2.0f64.sqrt() * 29.0f64.sqrt());
    assert!((gm_score(&a, &b, Similarity::Cosine).unwrap() - flat_cos).abs() < 1e-12);
}

#[test]
fn zero_vectors_and_length_mismatch_are_errors() {
    let z = flat(vec![0.0; 3], &[3]);
    let g = flat(vec![1.0, 0.0, 0.0], &[3]);
    assert_eq!(gm_score(&z, &g, Similarity::Cosine), Err(Error::ZeroNorm));
    let short = flat(vec![1.0, 0.0], &[2]);
    assert!(matches!(
        gm_score(&g, &short, Similarity::Cosine),
        Err(Error::ShapeMismatch { .. })
    ));
}

#[test]
fn matrix_invariants_are_checked() {
    assert!(GMMatrix::new(
        0,
        vec![0, 1],
        vec![vec![1.0, 0.3], vec![0.2, 1.0]],
        Similarity::Cosine,
        1
    )
    .is_err());
    assert!(GMMatrix::new(
        0,
        vec![0, 1],
        vec![vec![0.9, 0.3], vec![0.3, 1.0]],
        Similarity::Cosine,
        1
    )
    .is_err());
    assert!(GMMatrix::new(
        0,
        vec![0, 1],
        vec![vec![0.0, 0.3], vec![0.3, 0.0]],
        Similarity::NegL2,
        1
    )
    .is_err());
    assert!(GMMatrix::new(
        0,
        vec![0, 1],
        vec![vec![0.0, -0.3], vec![-0.3, 0.0]],
        Similarity::NegL2,
        1
    )
    .is_ok());
}

fn zero_input_dataset() -> Dataset {
    // 8 rows of zeros, labels alternate between two classes
    let labels: Vec<usize> = (0..8).map(|i| i % 2).collect();
    Dataset::new(
        Tensor::zeros(&[8, 8]),
        labels,
        2,
        (0..6).collect(),
        (6..8).collect(),
        0,
    )
    .unwrap()
}

#[test]
fn zero_inputs_with_balanced_labels_give_degenerate_gradient() {
    // two classes keep the uniform softmax exact, so the gradient is exactly zero
    let g = CellGraph::uniform(3, &[(0, 1), (0, 2), (1, 2)], &OpKind::ALL, 8, 2).unwrap();
    let w = SharedWeights::init(&g, &AllowedOps::full(&g), 1);
    let data = zero_input_dataset();
    let batches = GmBatches(vec![(0..6).collect()]);
    assert_eq!(
        collect_op_gradient(&g, &w, &data, 0, 2, &batches),
        Err(Error::DegenerateGradient { edge: 0, op: 2 })
    );
}

#[test]
fn collection_averages_single_batch_gradients() {
    let g = CellGraph::toy();
    let w = SharedWeights::init(&g, &AllowedOps::full(&g), 3);
    let data = make_spiral_dataset(2, 40, 3, 0.1).unwrap();
    let mut rng = rng_from_seed(9);
    let batches = sample_gm_batches(&data, 8, 16, &mut rng);
    let avg = collect_op_gradient(&g, &w, &data, 1, 3, &batches).unwrap();
    let mut manual = vec![0.0; avg.values.len()];
    for b in &batches.0 {
        let one = collect_op_gradient(&g, &w, &data, 1, 3, &GmBatches(vec![b.clone()])).unwrap();
        assert_eq!(one.segments, avg.segments);
        for (m, v) in manual.iter_mut().zip(&one.values) {
            *m += v / 8.0;
        }
    }
    for (a, m) in avg.values.iter().zip(&manual) {
        assert!((a - m).abs() < 1e-12);
    }
    // the store is untouched
    assert_eq!(w, SharedWeights::init(&g, &AllowedOps::full(&g), 3));
}

#[test]
fn shared_gradient_excludes_the_target_edge() {
    let g = CellGraph::toy();
    let w = SharedWeights::init(&g, &AllowedOps::full(&g), 3);
    let data = make_spiral_dataset(2, 40, 3, 0.1).unwrap();
    let batches = GmBatches(vec![data.train[..16].to_vec()]);
    let grad = collect_op_gradient(&g, &w, &data, 0, 2, &batches).unwrap();
    assert!(grad
        .segments
        .iter()
        .all(|s| !matches!(s.slot, Slot::Edge { edge: 0, .. })));
    assert_eq!(grad.segments.last().unwrap().slot, Slot::Head);
    // 2 parametric ops on each of the other 2 edges, plus the head
    assert_eq!(grad.segments.len(), 5);
    assert_eq!(grad.values.len(), 4 * (8 * 8 + 8) + 8 * 3 + 3);
}

#[test]
fn two_op_edge_gives_a_2x2_matrix() {
    let g = CellGraph::uniform(
        3,
        &[(0, 1), (0, 2), (1, 2)],
        &[OpKind::Skip, OpKind::LinearTanh],
        8,
        3,
    )
    .unwrap();
    let w = SharedWeights::init(&g, &AllowedOps::full(&g), 4);
    let data = make_spiral_dataset(2, 40, 3, 0.1).unwrap();
    let batches = GmBatches(vec![data.train[..32].to_vec()]);
    for measure in [
        Similarity::Cosine,
        Similarity::PerFilterCosine,
        Similarity::NegL2,
    ] {
        let m = build_gm_matrix(
            &g,
            &w,
            &data,
            2,
            &batches,
            measure,
            GmAggregation::AverageThenScore,
        )
        .unwrap();
        assert_eq!(m.size(), 2);
        m.validate().unwrap();
        let d = balanced_min_cut(&m, 2).unwrap();
        assert_eq!(d.groups, vec![vec![0], vec![1]]);
        assert_eq!(d.cut_cost, Some(m.get(0, 1)));
    }
}

#[test]
fn identical_ops_score_one() {
    let g = CellGraph::new_unchecked(SpaceDescription {
        num_nodes: 3,
        edges: vec![(0, 1), (0, 2), (1, 2)],
        op_sets: vec![
            vec![OpKind::Skip, OpKind::Skip],
            vec![OpKind::LinearTanh],
            vec![OpKind::LinearRelu],
        ],
        feature_dim: 8,
        num_classes: 3,
    });
    let w = SharedWeights::init(&g, &AllowedOps::full(&g), 5);
    let data = make_spiral_dataset(2, 40, 3, 0.1).unwrap();
    let batches = GmBatches(vec![data.train[..32].to_vec(), data.train[32..64].to_vec()]);
    for agg in [
        GmAggregation::AverageThenScore,
        GmAggregation::ScorePerBatch,
    ] {
        let m = build_gm_matrix(&g, &w, &data, 0, &batches, Similarity::Cosine, agg).unwrap();
        assert!((m.get(0, 1) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn per_batch_aggregation_is_bounded() {
    let g = CellGraph::toy();
    let w = SharedWeights::init(&g, &AllowedOps::full(&g), 6);
    let data = make_spiral_dataset(2, 40, 3, 0.1).unwrap();
    let mut rng = rng_from_seed(1);
    let batches = sample_gm_batches(&data, 4, 16, &mut rng);
    let m = build_gm_matrix(
        &g,
        &w,
        &data,
        1,
        &batches,
        Similarity::Cosine,
        GmAggregation::ScorePerBatch,
    )
    .unwrap();
    m.validate().unwrap();
    assert_eq!(m.num_batches, 4);
}

#[test]
fn two_ops_have_one_cut() {
    let m = matrix(vec![vec![1.0, 0.4], vec![0.4, 1.0]]);
    let d = balanced_min_cut(&m, 2).unwrap();
    assert_eq!(d.groups, vec![vec![0], vec![1]]);
    assert_eq!(d.cut_cost, Some(0.4));
    assert!(balanced_min_cut(&m, 3).is_err());
    assert!(balanced_min_cut(&m, 1).is_err());
}

#[test]
fn similar_pairs_stay_together() {
    let m = matrix(vec![
        vec![1.0, 0.9, 0.1, 0.1],
        vec![0.9, 1.0, 0.1, 0.1],
        vec![0.1, 0.1, 1.0, 0.9],
        vec![0.1, 0.1, 0.9, 1.0],
    ]);
    let d = balanced_min_cut(&m, 2).unwrap();
    assert_eq!(d.groups, vec![vec![0, 1], vec![2, 3]]);
    assert!((d.cut_cost.unwrap() - 0.4).abs() < 1e-12);
}

#[test]
fn odd_sizes_split_three_two() {
    assert_eq!(balanced_partitions(5, 2).len(), 10);
    assert_eq!(balanced_partitions(4, 2).len(), 3);
    assert_eq!(balanced_partitions(6, 3).len(), 15);
    let d = balanced_min_cut(&random_matrix(5, 3), 2).unwrap();
    let mut sizes: Vec<usize> = d.groups.iter().map(Vec::len).collect();
    sizes.sort_unstable();
    assert_eq!(sizes, vec![2, 3]);
}

/// Every labelling in `0..b` of `n` items, kept if it uses all labels with
/// balanced sizes; returns the cheapest cost.
fn brute_force_min(m: &GMMatrix, b: usize) -> f64 {
    let n = m.size();
    let mut best = f64::INFINITY;
    let total = b.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let mut assign = vec![0; n];
        for a in assign.iter_mut() {
            *a = c % b;
            c /= b;
        }
        let mut sizes = vec![0; b];
        assign.iter().for_each(|&a| sizes[a] += 1);
        if sizes.iter().any(|&s| s < n / b || s > n.div_ceil(b)) {
            continue;
        }
        let mut cost = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                if assign[i] != assign[j] {
                    cost += m.get(i, j);
                }
            }
        }
        best = best.min(cost);
    }
    best
}

#[test]
fn min_cut_matches_brute_force_labelling() {
    for seed in 0..40 {
        let n = 2 + (seed as usize % 6);
        let m = random_matrix(n, seed);
        for b in 2..=n.min(4) {
            let d = balanced_min_cut(&m, b).unwrap();
            let oracle = brute_force_min(&m, b);
            assert!(
                (d.cut_cost.unwrap() - oracle).abs() < 1e-9,
                "n={n} b={b} seed={seed}"
            );
            assert_eq!(d.branches(), b);
            let mut all: Vec<usize> = d.groups.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}

#[test]
fn ties_take_the_first_partition() {
    let m = matrix(vec![vec![1.0; 4]; 4]);
    let d = balanced_min_cut(&m, 2).unwrap();
    assert_eq!(d.groups, vec![vec![0, 1], vec![2, 3]]);
}

#[test]
fn edge_selection_prefers_the_cheaper_cut() {
    let cheap = GMMatrix::new(
        4,
        vec![0, 1],
        vec![vec![1.0, 0.2], vec![0.2, 1.0]],
        Similarity::Cosine,
        1,
    )
    .unwrap();
    let dear = GMMatrix::new(
        1,
        vec![0, 1],
        vec![vec![1.0, 0.8], vec![0.8, 1.0]],
        Similarity::Cosine,
        1,
    )
    .unwrap();
    let s = select_edge(vec![dear.clone(), cheap.clone()], 2).unwrap();
    assert_eq!(s.selected_decision().edge, 4);
    let tie = GMMatrix { edge: 0, ..dear };
    let s = select_edge(vec![cheap, tie.clone(), GMMatrix { edge: 2, ..tie }], 2).unwrap();
    assert_eq!(s.selected_decision().edge, 4);
    assert_eq!(
        select_edge(Vec::new(), 2),
        Err(Error::NothingToSplit { branches: 2 })
    );
}

#[test]
fn exhaustive_gives_singletons() {
    let d = exhaustive_split(3, &[0, 1, 2, 3], None);
    assert_eq!(d.groups, vec![vec![0], vec![1], vec![2], vec![3]]);
    assert_eq!(d.cut_cost, None);
    let m = matrix(vec![
        vec![1.0, 0.5, 0.5, 0.5],
        vec![0.5, 1.0, 0.5, 0.5],
        vec![0.5, 0.5, 1.0, 0.5],
        vec![0.5, 0.5, 0.5, 1.0],
    ]);
    assert_eq!(
        exhaustive_split(0, &[0, 1, 2, 3], Some(&m)).cut_cost,
        Some(3.0)
    );
}

#[test]
fn random_split_reaches_every_bipartition() {
    let mut rng = rng_from_seed(11);
    let mut seen = Vec::new();
    for _ in 0..200 {
        let d = random_split(0, &[0, 1, 2, 3], 2, &mut rng, None).unwrap();
        assert_eq!(
            d.groups.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![2, 2]
        );
        if !seen.contains(&d.groups) {
            seen.push(d.groups);
        }
    }
    assert_eq!(seen.len(), 3);
    assert!(random_split(0, &[0, 1], 3, &mut rng, None).is_err());
}
