//! Structural invariants checked over randomly generated inputs.

use std::collections::BTreeSet;

use graphfraud_core::eval::{accuracy, kfold_split, micro_f1, verify_folds};
use graphfraud_core::features::{pagerank, PageRankConfig};
use graphfraud_core::graph::{transform_to_single_entity, Csr, LabeledSet, MultiEntityGraph, TransformConfig};
use graphfraud_core::nn::{encoder_forward, gin_layer, EmbeddingMode, EncoderConfig, EncoderParams, GinLayer};
use graphfraud_core::pretrain::info_nce;
use graphfraud_core::sampling::SubGraph;
use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_multi(rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<(usize, usize)>) {
    let targets = rng.random_range(2..15);
    let others = rng.random_range(3..15);
    let mut types = vec![0; targets];
    // types 1..=3, each present at least once
    types.extend((0..others).map(|i| if i < 3 { i + 1 } else { rng.random_range(1..=3) }));
    let mut edges = Vec::new();
    for u in 0..targets {
        for w in targets..targets + others {
            if rng.random_bool(0.3) {
                edges.push((u, w));
            }
        }
    }
    (types, edges)
}

fn build(types: &[usize], edges: &[(usize, usize)]) -> MultiEntityGraph {
    let names = ["user", "device", "ip", "phone"].map(String::from).to_vec();
    let e: Vec<_> = edges.iter().map(|&(u, v)| (u, v, None)).collect();
    MultiEntityGraph::new(names, 0, types.to_vec(), &e).unwrap()
}

/// Edges of the single-entity graph as (multi id, multi id, bits).
fn projected_edges(g: &MultiEntityGraph) -> BTreeSet<(usize, usize, u64)> {
    let (single, _) = transform_to_single_entity(g, &TransformConfig::default());
    let origin = single.origin();
    single
        .adjacency()
        .edges()
        .map(|(u, v)| {
            let (a, b) = (origin[u], origin[v]);
            (a.min(b), a.max(b), single.edge_feature(u, v).unwrap())
        })
        .collect()
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csr_is_simple_and_symmetric(n in 1usize..30, raw in prop::collection::vec((0usize..30, 0usize..30), 0..120)) {
        let edges: Vec<(usize, usize)> = raw.into_iter().map(|(u, v)| (u % n, v % n)).collect();
        let csr = Csr::from_undirected(n, &edges);
        prop_assert!(csr.validate().is_ok());
        let expected: BTreeSet<(usize, usize)> =
            edges.iter().filter(|(u, v)| u != v).map(|&(u, v)| (u.min(v), u.max(v))).collect();
        let got: BTreeSet<(usize, usize)> = csr.edges().collect();
        prop_assert_eq!(got, expected);
        prop_assert_eq!(csr.nnz(), 2 * csr.edge_count());
    }

    #[test]
    fn transform_commutes_with_relabeling(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (types, edges) = random_multi(&mut rng);
        let n = types.len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut permuted_types = vec![0; n];
        for (old, &new) in perm.iter().enumerate() {
            permuted_types[new] = types[old];
        }
        let permuted_edges: Vec<_> = edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();

        let original = projected_edges(&build(&types, &edges));
        let relabeled = projected_edges(&build(&permuted_types, &permuted_edges));
        let mapped: BTreeSet<_> = original
            .into_iter()
            .map(|(a, b, bits)| (perm[a].min(perm[b]), perm[a].max(perm[b]), bits))
            .collect();
        prop_assert_eq!(mapped, relabeled);
    }

    #[test]
    fn pagerank_is_a_distribution(seed in any::<u64>(), n in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges: Vec<_> = (0..n * 2).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
        let pr = pagerank(&Csr::from_undirected(n, &edges), &PageRankConfig::default()).unwrap();
        prop_assert!((pr.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(pr.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn gin_is_permutation_equivariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..12);
        let edges: Vec<_> = (0..2 * n).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
        let adj = Csr::from_undirected(n, &edges);
        let bits = vec![1u64; adj.nnz()];
        let view = graphfraud_core::graph::GraphView { adjacency: &adj, edge_dim: 1, edge_bits: &bits };
        let features = gaussian(&mut rng, n, 3);

        let members: Vec<usize> = (0..n).collect();
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        let a = SubGraph::induced(view, &features, 0, members);
        let b = SubGraph::induced(view, &features, 0, shuffled.clone());

        let layer = GinLayer::new(3, 6, 4, &mut rng);
        let ya = gin_layer(&layer, &a, &a.features).unwrap();
        let yb = gin_layer(&layer, &b, &b.features).unwrap();
        for (local, &node) in shuffled.iter().enumerate() {
            for c in 0..4 {
                prop_assert!((yb[[local, c]] - ya[[node, c]]).abs() < 1e-10);
            }
        }

        let cfg = EncoderConfig { input_dim: 3, hidden_dim: 5, output_dim: 4, layers: 2, edge_dim: None };
        let enc = EncoderParams::new(cfg, &mut rng).unwrap();
        for mode in [EmbeddingMode::Ne, EmbeddingMode::Se] {
            let ea = encoder_forward(&enc, &a, mode).unwrap();
            let eb = encoder_forward(&enc, &b, mode).unwrap();
            for (x, y) in ea.iter().zip(&eb) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn folds_partition_any_labeled_set(seed in any::<u64>(), k in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(4 * k..80);
        let mut nodes: Vec<usize> = (0..n).collect();
        nodes.shuffle(&mut rng);
        let take = rng.random_range(2 * k..=n);
        let entries: Vec<(usize, u8)> = nodes[..take].iter().enumerate().map(|(i, &u)| (u, (i % 2) as u8)).collect();
        let labeled = LabeledSet::new(entries, n).unwrap();
        let folds = kfold_split(&labeled, k, seed, n).unwrap();
        prop_assert_eq!(folds.len(), k);
        prop_assert!(verify_folds(&labeled, &folds).is_ok());
    }

    #[test]
    fn binary_micro_f1_is_accuracy(labels in prop::collection::vec((0u8..2, 0u8..2), 1..200)) {
        let (pred, truth): (Vec<u8>, Vec<u8>) = labels.into_iter().unzip();
        let f1 = micro_f1(&pred, &truth).unwrap();
        prop_assert!((f1 - accuracy(&pred, &truth).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn info_nce_is_non_negative(seed in any::<u64>(), negs in 1usize..16, tau in 0.05f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = || (0..5).map(|_| rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>();
        let q = v();
        let k = v();
        let negatives: Vec<Vec<f64>> = (0..negs).map(|_| v()).collect();
        let loss = info_nce(&q, &k, &negatives, tau).unwrap();
        prop_assert!(loss >= 0.0 && loss.is_finite());
    }
}
