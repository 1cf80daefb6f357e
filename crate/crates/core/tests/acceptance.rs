//! Acceptance criteria. Runs every criterion, prints one PASS/FAIL line for
//! each and exits nonzero if any failed. Pass substrings as arguments to run
//! a subset, e.g. `cargo test --test acceptance -- c07`.

use std::collections::{BTreeMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use graphfraud_core::eval::{
    accuracy, kfold_split, micro_f1, run_synthetic_grid, EvalConfig, ExperimentResult, GraphKind, SynthConfig,
};
use graphfraud_core::eval::{generate_synthetic, run_grid};
use graphfraud_core::features::{
    initialize, pagerank, top_eigenpairs, write_features, EigenConfig, FeatureConfig, FeatureMethod, PageRankConfig,
};
use graphfraud_core::finetune::{finetune_fit, predict, save_model, FineTuneModel};
use graphfraud_core::graph::io::{write_labels, write_multi_entity_graph, write_single_entity_graph};
use graphfraud_core::graph::{transform_to_single_entity, Csr, MultiEntityGraph, SingleEntityGraph, TransformConfig};
use graphfraud_core::nn::{
    fd_check, save_encoder, EmbeddingMode, EncoderConfig, EncoderParams, FdReport, GinLayer, GraphBatch, Linear, Mlp,
    Params, Pooling, Tape, Var,
};
use graphfraud_core::pretrain::{info_nce, info_nce_on_tape, pretrain, KeyQueue, MoCoState, PretrainConfig};
use graphfraud_core::sampling::{rwr_subgraph, SamplerConfig, SubGraph};
use graphfraud_core::Result;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

// Tolerances and budgets, one per checked quantity.
const TRANSFORM_BUDGET: Duration = Duration::from_secs(10);
const FD_MAX_REL: f64 = 1e-4;
const FD_SEEDS: u64 = 5;
const GRADIENT_BUDGET: Duration = Duration::from_secs(60);
const PAGERANK_L1: f64 = 1e-8;
const PAGERANK_SUM: f64 = 1e-9;
const PAGERANK_P3: f64 = 1e-3;
const EIGEN_RESIDUAL: f64 = 1e-6;
const EIGEN_ANGLE: f64 = 1e-6;
const INFONCE_LN: f64 = 1e-9;
const MONOTONE_INSTANCES: usize = 1000;
const MOMENTUM_TOL: f64 = 1e-9;
const GRID_MARGIN: f64 = 0.10;
const GRID_BUDGET: Duration = Duration::from_secs(15 * 60);
const F1_IDENTITY: f64 = 1e-12;

type Check = fn() -> std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lib<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- helpers

fn random_multi(rng: &mut ChaCha8Rng, max_nodes: usize) -> MultiEntityGraph {
    let types = rng.random_range(3..=5);
    let n = rng.random_range(10..=max_nodes);
    let targets = rng.random_range(3..n - types);
    let mut node_type: Vec<usize> = vec![0; targets];
    for i in 0..n - targets {
        // every non-target type appears at least once
        node_type.push(if i < types { i + 1 } else { rng.random_range(1..=types) });
    }
    let p = rng.random_range(0.02..0.3);
    let mut edges = Vec::new();
    for u in 0..targets {
        for w in targets..n {
            if rng.random_bool(p) {
                edges.push((u, w, None));
            }
        }
    }
    let mut names = vec!["user".to_string()];
    names.extend((1..=types).map(|t| format!("e{t}")));
    MultiEntityGraph::new(names, 0, node_type, &edges).expect("valid bipartite graph")
}

fn random_csr(rng: &mut ChaCha8Rng, n: usize, p: f64, connected: bool) -> Csr {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    if connected {
        for u in 1..n {
            edges.push((rng.random_range(0..u), u));
        }
    }
    Csr::from_undirected(n, &edges)
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal))
}

/// A random single-entity graph with node features and a handful of
/// sampled sub-graphs.
struct Fixture {
    single: SingleEntityGraph,
    features: Array2<f64>,
    subs: Vec<SubGraph>,
}

fn fixture(seed: u64, input_dim: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let multi = loop {
        let g = random_multi(&mut rng, 60);
        if g.target_nodes().len() >= 8 {
            break g;
        }
    };
    let (single, _) = transform_to_single_entity(&multi, &TransformConfig::default());
    let features = gaussian(&mut rng, single.node_count(), input_dim);
    let sampler = SamplerConfig {
        max_nodes: 8,
        ..Default::default()
    };
    let subs = (0..4)
        .map(|i| rwr_subgraph(single.view(), &features, i % single.node_count(), &sampler, &mut rng))
        .collect();
    Fixture { single, features, subs }
}

fn perturb_eps(layer: &mut GinLayer, rng: &mut ChaCha8Rng) {
    layer.eps[[0, 0]] = rng.random_range(-0.5..0.5);
}

/// Biases start at zero, which puts dead rows exactly on a ReLU kink where
/// central differences are meaningless. Move them off it.
fn jitter_biases<P: Params>(params: &mut P, rng: &mut ChaCha8Rng) {
    params.visit_mut("", &mut |name, a| {
        if name.ends_with("bias") {
            a.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
    });
}

/// Analytic gradients of `f` checked against central differences.
fn grad_check<P: Params + Clone>(
    params: &P,
    prefix: &str,
    f: impl Fn(&mut Tape, &P) -> Result<Var>,
) -> Result<FdReport> {
    let mut tape = Tape::new();
    let loss = f(&mut tape, params)?;
    let grads = tape.backward(loss)?;
    fd_check(params, prefix, &grads, |p| {
        let mut t = Tape::new();
        let l = f(&mut t, p)?;
        Ok(t.scalar(l))
    })
}

fn encoder(input: usize, edge_dim: Option<usize>, rng: &mut ChaCha8Rng) -> EncoderParams {
    let cfg = EncoderConfig {
        input_dim: input,
        hidden_dim: 5,
        output_dim: 4,
        layers: 2,
        edge_dim,
    };
    let mut enc = EncoderParams::new(cfg, rng).expect("encoder");
    for l in &mut enc.layers {
        perturb_eps(l, rng);
    }
    jitter_biases(&mut enc, rng);
    enc
}

// --------------------------------------------------------------- criteria

fn c01_transform_oracle() -> std::result::Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut edges_seen = 0;
    for case in 0..100 {
        let g = random_multi(&mut rng, 200);
        ensure(g.node_count() <= 200 && g.non_target_types().len() >= 3, || {
            format!("case {case}: bad generator")
        })?;
        let (single, _) = transform_to_single_entity(&g, &TransformConfig::default());
        let adj = g.adjacency();
        let targets = g.target_nodes();
        let bit: BTreeMap<usize, u64> = g
            .non_target_types()
            .iter()
            .enumerate()
            .map(|(d, &t)| (t, 1u64 << d))
            .collect();
        // brute force: every target pair, every common neighbor
        let mut oracle: BTreeMap<(usize, usize), (u64, u32)> = BTreeMap::new();
        for (i, &u) in targets.iter().enumerate() {
            for (j, &v) in targets.iter().enumerate().skip(i + 1) {
                let mut bits = 0;
                let mut count = 0;
                for w in 0..g.node_count() {
                    if !g.is_target(w) && adj.has_edge(u, w) && adj.has_edge(v, w) {
                        bits |= bit[&g.node_type(w)];
                        count += 1;
                    }
                }
                if count > 0 {
                    oracle.insert((i, j), (bits, count));
                }
            }
        }
        let s = single.adjacency();
        ensure(single.origin() == targets.as_slice(), || {
            format!("case {case}: origin map")
        })?;
        let counts = single.shared_counts().ok_or("shared counts not recorded")?;
        let mut got = BTreeMap::new();
        for u in 0..s.node_count() {
            for e in s.entry_range(u) {
                let v = s.targets()[e];
                if u < v {
                    got.insert((u, v), (single.edge_features()[e], counts[e]));
                }
            }
        }
        ensure(got == oracle, || {
            format!("case {case}: edge set or feature bits differ from the oracle")
        })?;
        edges_seen += got.len();
    }
    let elapsed = start.elapsed();
    ensure(elapsed < TRANSFORM_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "100 graphs, {edges_seen} edges exact, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn c02_gradients() -> std::result::Result<String, String> {
    let start = Instant::now();
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut record = |name: &'static str, r: FdReport| -> std::result::Result<(), String> {
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(r.max_rel_error);
        ensure(r.max_rel_error < FD_MAX_REL, || {
            format!("{name}: {} at {}", r.max_rel_error, r.worst)
        })
    };
    for seed in 0..FD_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let fx = fixture(seed, 3);
        let refs: Vec<&SubGraph> = fx.subs.iter().collect();
        let batch = GraphBatch::new(&refs).map_err(|e| e.to_string())?;

        let mut mlp = Mlp::new(&[3, 6, 2], &mut rng);
        jitter_biases(&mut mlp, &mut rng);
        let x = gaussian(&mut rng, 5, 3);
        record(
            "mlp",
            lib(grad_check(&mlp, "mlp", |t, p| {
                let b = p.bind(t, "mlp");
                let xv = t.constant(x.clone());
                let y = b.forward(t, xv)?;
                Ok(t.sum_squares(y))
            }))?,
        )?;

        let mut gin = GinLayer::new(3, 5, 4, &mut rng);
        perturb_eps(&mut gin, &mut rng);
        jitter_biases(&mut gin, &mut rng);
        record(
            "gin",
            lib(grad_check(&gin, "gin", |t, p| {
                let b = p.bind(t, "gin");
                let xv = t.constant(batch.features.clone());
                let y = b.forward(t, xv, &batch.adjacency)?;
                Ok(t.sum_squares(y))
            }))?,
        )?;

        let mut gin_e = GinLayer::new(3, 5, 4, &mut rng);
        perturb_eps(&mut gin_e, &mut rng);
        gin_e.edge_projection = Some(Linear::new(fx.single.edge_dim(), 3, &mut rng));
        jitter_biases(&mut gin_e, &mut rng);
        record(
            "gin_edge",
            lib(grad_check(&gin_e, "gin", |t, p| {
                let b = p.bind(t, "gin");
                let xv = t.constant(batch.features.clone());
                let ev = t.constant(batch.edge_features.clone());
                let y = b.forward_edge(t, xv, ev, &batch.adjacency)?;
                Ok(t.sum_squares(y))
            }))?,
        )?;

        let enc = encoder(3, None, &mut rng);
        for pooling in [Pooling::Sum, Pooling::Mean] {
            record(
                "readout",
                lib(grad_check(&enc, "", |t, p| {
                    let b = p.bind(t, "");
                    let y = b.forward(t, &batch, EmbeddingMode::Se, pooling)?;
                    Ok(t.sum_squares(y))
                }))?,
            )?;
        }

        let keys = gaussian(&mut rng, batch.graphs(), 4);
        let queue = gaussian(&mut rng, 6, 4);
        record(
            "infonce",
            lib(grad_check(&enc, "", |t, p| {
                let b = p.bind(t, "");
                let q = b.forward(t, &batch, EmbeddingMode::Se, Pooling::Sum)?;
                info_nce_on_tape(t, q, &keys, &queue, 0.5)
            }))?,
        )?;

        let mut model = lib(FineTuneModel::new(&enc, fx.single.edge_dim(), 3, seed))?;
        jitter_biases(&mut model, &mut rng);
        let labels: Vec<u8> = (0..refs.len()).map(|i| (i % 2) as u8).collect();
        for mode in [EmbeddingMode::Ne, EmbeddingMode::Se] {
            record(
                "cross_entropy",
                lib(grad_check(&model, "", |t, p| {
                    p.loss_on_tape(t, &refs, &labels, mode, Pooling::Sum)
                }))?,
            )?;
        }
        let _ = &fx.features;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < GRADIENT_BUDGET, || format!("took {elapsed:?}"))?;
    let summary: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    Ok(format!("{FD_SEEDS} seeds, max rel error: {}", summary.join(", ")))
}

/// Solves `(I - d M) x = (1 - d)/n` with dangling columns spread uniformly.
fn pagerank_oracle(adj: &Csr, d: f64) -> Vec<f64> {
    let n = adj.node_count();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let deg = adj.degree(j);
        for i in 0..n {
            let w = if deg == 0 {
                1.0 / n as f64
            } else if adj.has_edge(i, j) {
                1.0 / deg as f64
            } else {
                0.0
            };
            m[(i, j)] = w;
        }
    }
    let a = DMatrix::<f64>::identity(n, n) - m * d;
    let b = nalgebra::DVector::from_element(n, (1.0 - d) / n as f64);
    a.lu().solve(&b).expect("nonsingular").iter().copied().collect()
}

fn c03_pagerank() -> std::result::Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = PageRankConfig {
        tol: 1e-13,
        max_iter: 10_000,
        ..Default::default()
    };
    let mut max_l1: f64 = 0.0;
    for case in 0..20 {
        let n = rng.random_range(2..=500);
        let p = rng.random_range(0.5..4.0) / n as f64;
        let adj = random_csr(&mut rng, n, p, false);
        let got = lib(pagerank(&adj, &cfg))?;
        let want = pagerank_oracle(&adj, cfg.damping);
        let l1: f64 = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).sum();
        let sum: f64 = got.iter().sum();
        ensure(l1 < PAGERANK_L1, || format!("case {case} (n={n}): L1 {l1:e}"))?;
        ensure((sum - 1.0).abs() < PAGERANK_SUM, || format!("case {case}: sum {sum}"))?;
        max_l1 = max_l1.max(l1);
    }
    let p3 = lib(pagerank(
        &Csr::from_undirected(3, &[(0, 1), (1, 2)]),
        &PageRankConfig::default(),
    ))?;
    let want = [0.2568, 0.4865, 0.2568];
    ensure(p3.iter().zip(want).all(|(a, b)| (a - b).abs() < PAGERANK_P3), || {
        format!("P3 gave {p3:?}")
    })?;
    Ok(format!(
        "20 graphs <= 500 nodes, max L1 {max_l1:.1e}; P3 {:.4} {:.4} {:.4}",
        p3[0], p3[1], p3[2]
    ))
}

fn normalized_dense(adj: &Csr) -> DMatrix<f64> {
    let n = adj.node_count();
    let inv: Vec<f64> = (0..n)
        .map(|i| {
            if adj.degree(i) == 0 {
                0.0
            } else {
                1.0 / (adj.degree(i) as f64).sqrt()
            }
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| if adj.has_edge(i, j) { inv[i] * inv[j] } else { 0.0 })
}

fn max_residual(adj: &Csr, values: &[f64], vectors: &Array2<f64>) -> f64 {
    let a = normalized_dense(adj);
    let mut worst: f64 = 0.0;
    for (j, &lambda) in values.iter().enumerate() {
        let v = nalgebra::DVector::from_iterator(vectors.nrows(), vectors.column(j).iter().copied());
        worst = worst.max((&a * &v - &v * lambda).norm());
    }
    worst
}

fn c04_eigen() -> std::result::Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let k = 8;
    let mut max_sin: f64 = 0.0;
    let mut max_res: f64 = 0.0;
    let mut compared = 0;
    while compared < 20 {
        let adj = random_csr(&mut rng, 50, 0.08, true);
        let a = normalized_dense(&adj);
        let full = SymmetricEigen::new(a);
        let mut order: Vec<usize> = (0..50).collect();
        order.sort_by(|&x, &y| full.eigenvalues[y].total_cmp(&full.eigenvalues[x]));
        // the top-k subspace is only defined with a spectral gap after it
        if full.eigenvalues[order[k - 1]] - full.eigenvalues[order[k]] < 1e-6 {
            continue;
        }
        for dense_threshold in [2000, 2] {
            let cfg = EigenConfig {
                k,
                dense_threshold,
                ..Default::default()
            };
            let pairs = lib(top_eigenpairs(&adj, &cfg))?;
            let res = max_residual(&adj, &pairs.values, &pairs.vectors);
            ensure(res <= EIGEN_RESIDUAL, || format!("residual {res:e}"))?;
            max_res = max_res.max(res);
            let q = DMatrix::from_fn(50, k, |i, j| full.eigenvectors[(i, order[j])]);
            let v = DMatrix::from_fn(50, k, |i, j| pairs.vectors[[i, j]]);
            // sine of the largest principal angle: ||(I - Q Q^T) V||_2
            let proj = &v - &q * (q.transpose() * &v);
            let sin = proj.singular_values().max();
            ensure(sin < EIGEN_ANGLE, || format!("principal angle sine {sin:e}"))?;
            max_sin = max_sin.max(sin);
        }
        compared += 1;
    }
    // a component large enough for the iterative solver
    let big = random_csr(&mut rng, 2500, 1.5 / 2500.0, true);
    let pairs = lib(top_eigenpairs(
        &big,
        &EigenConfig {
            k: 16,
            ..Default::default()
        },
    ))?;
    let mut big_res: f64 = 0.0;
    for (j, &lambda) in pairs.values.iter().enumerate() {
        let v: Vec<f64> = pairs.vectors.column(j).to_vec();
        let mut r = 0.0;
        for i in 0..big.node_count() {
            let di = (big.degree(i) as f64).sqrt();
            let av: f64 = big
                .neighbors(i)
                .iter()
                .map(|&n| v[n] / (di * (big.degree(n) as f64).sqrt()))
                .sum();
            r += (av - lambda * v[i]).powi(2);
        }
        big_res = big_res.max(r.sqrt());
    }
    ensure(big_res <= EIGEN_RESIDUAL, || format!("2500-node residual {big_res:e}"))?;
    Ok(format!(
        "20 graphs x 2 solvers: max residual {max_res:.1e}, max angle sine {max_sin:.1e}; 2500 nodes residual {big_res:.1e}"
    ))
}

fn unit_random(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn c05_infonce() -> std::result::Result<String, String> {
    let v = vec![0.3, -1.2, 0.5];
    for n in [2usize, 4, 64] {
        let negs = vec![v.clone(); n - 1];
        let loss = lib(info_nce(&v, &v, &negs, 1.0))?;
        ensure((loss - (n as f64).ln()).abs() < INFONCE_LN, || {
            format!("n={n}: {loss} vs ln n")
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..MONOTONE_INSTANCES {
        let dim = rng.random_range(2..12);
        let q = unit_random(&mut rng, dim);
        let k1 = unit_random(&mut rng, dim);
        let negs: Vec<Vec<f64>> = (0..rng.random_range(1..20))
            .map(|_| unit_random(&mut rng, dim))
            .collect();
        let tau = rng.random_range(0.05..2.0);
        // rotate the key toward the query, raising the cosine
        let alpha = rng.random_range(0.05..2.0);
        let k2: Vec<f64> = k1.iter().zip(&q).map(|(a, b)| a + alpha * b).collect();
        let cos = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
                / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
        };
        if cos(&q, &k2) <= cos(&q, &k1) + 1e-9 {
            continue;
        }
        let l1 = lib(info_nce(&q, &k1, &negs, tau))?;
        let l2 = lib(info_nce(&q, &k2, &negs, tau))?;
        ensure(l1 > 0.0 && l2 > 0.0, || format!("case {case}: non-positive loss"))?;
        ensure(l2 < l1, || {
            format!("case {case}: loss {l1} -> {l2} while similarity rose")
        })?;
    }
    Ok(format!(
        "ln n for n in {{2, 4, 64}}; monotone on {MONOTONE_INSTANCES} instances"
    ))
}

fn flat(p: &dyn Params) -> Vec<f64> {
    let mut out = Vec::new();
    p.visit("", &mut |_, a| out.extend(a.iter().copied()));
    out
}

fn c06_moco() -> std::result::Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = encoder(4, None, &mut rng);
    let k0 = encoder(4, None, &mut rng);
    let mut worst: f64 = 0.0;
    for m in [0.999, 0.9] {
        for t in [1u32, 10, 100] {
            let mut state = lib(MoCoState::new(q.clone(), m, 0.07, 8, 0.0))?;
            state.theta_k = k0.clone();
            for _ in 0..t {
                state.momentum_update();
            }
            let mt = m.powi(t as i32);
            let (qs, ks, got) = (flat(&q), flat(&k0), flat(&state.theta_k));
            for i in 0..got.len() {
                let want = mt * ks[i] + (1.0 - mt) * qs[i];
                let err = (got[i] - want).abs();
                worst = worst.max(err);
                ensure(err < MOMENTUM_TOL, || format!("m={m} t={t}: entry {i} off by {err:e}"))?;
            }
        }
    }
    for cap in [1usize, 8, 1024] {
        let mut queue = lib(KeyQueue::new(cap, 2))?;
        let mut oracle: VecDeque<f64> = VecDeque::new();
        let mut next = 0.0;
        for step in 0..50 {
            let b = 1 + (step * 7919) % cap.min(300);
            let batch = Array2::from_shape_fn((b, 2), |(i, j)| if j == 0 { next + i as f64 } else { -1.0 });
            lib(queue.push(&batch))?;
            for i in 0..b {
                oracle.push_back(next + i as f64);
                if oracle.len() > cap {
                    oracle.pop_front();
                }
            }
            next += b as f64;
            ensure(queue.len() <= cap, || format!("K={cap}: size {}", queue.len()))?;
            let got: Vec<f64> = queue.to_matrix().column(0).to_vec();
            ensure(got == oracle.iter().copied().collect::<Vec<_>>(), || {
                format!("K={cap}: order differs at step {step}")
            })?;
        }
        ensure(queue.push(&Array2::zeros((cap + 1, 2))).is_err(), || {
            format!("K={cap}: oversized batch accepted")
        })?;
    }
    Ok(format!(
        "closed form max error {worst:.1e}; FIFO for K in {{1, 8, 1024}}"
    ))
}

static GRID: OnceLock<std::result::Result<(ExperimentResult, Duration), String>> = OnceLock::new();

fn grid() -> std::result::Result<&'static (ExperimentResult, Duration), String> {
    GRID.get_or_init(|| {
        let start = Instant::now();
        let result =
            run_synthetic_grid(&SynthConfig::default(), &EvalConfig::desk_preset()).map_err(|e| e.to_string())?;
        Ok((result, start.elapsed()))
    })
    .as_ref()
    .map_err(Clone::clone)
}

fn c07_grid_directions() -> std::result::Result<String, String> {
    let (result, elapsed) = grid()?;
    println!("{}", result.render_table());
    let failed: Vec<String> = result.cells.iter().filter_map(|c| c.error.clone()).collect();
    ensure(failed.is_empty(), || format!("failed cells: {failed:?}"))?;
    let single = GraphKind::Single;
    let se = EmbeddingMode::Se;
    let cell = |mode, method, pt| result.mean(single, mode, method, pt).ok_or("missing cell".to_string());
    let eigen_pt = cell(se, FeatureMethod::Eigen, true)?;
    let eigen = cell(se, FeatureMethod::Eigen, false)?;
    let random = cell(se, FeatureMethod::Random, false)?;
    let best_single = result.best(single).ok_or("no single-entity cells")?;
    let best_multi = result.best(GraphKind::Multi).ok_or("no multi-entity cells")?;
    let detail = format!(
        "(a) Eigen+PT SE {eigen_pt:.4} vs Random SE {random:.4} (gap {:+.4}, need {GRID_MARGIN}); \
         (b) Eigen SE {eigen:.4} -> {eigen_pt:.4} with PT; (c) best single {best_single:.4} vs best multi {best_multi:.4}; {:.0}s",
        eigen_pt - random,
        elapsed.as_secs_f64()
    );
    let mut misses = Vec::new();
    if eigen_pt - random < GRID_MARGIN {
        misses.push("(a)");
    }
    if eigen_pt < eigen {
        misses.push("(b)");
    }
    if best_single < best_multi {
        misses.push("(c)");
    }
    if *elapsed >= GRID_BUDGET {
        misses.push("runtime");
    }
    ensure(misses.is_empty(), || format!("{} not met: {detail}", misses.join(" ")))?;
    Ok(detail)
}

fn c08_f1_and_folds() -> std::result::Result<String, String> {
    // every grid evaluation already asserts the identity; a violation would
    // surface as a failed cell
    let (result, _) = grid()?;
    let evaluations: usize = result.cells.iter().map(|c| c.fold_scores.len()).sum();
    ensure(result.cells.iter().all(|c| c.error.is_none()), || {
        "a grid cell failed".into()
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..1000 {
        let n = rng.random_range(1..200);
        let truth: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let pred: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let f1 = lib(micro_f1(&pred, &truth))?;
        let acc = lib(accuracy(&pred, &truth))?;
        let hits = pred.iter().zip(&truth).filter(|(a, b)| a == b).count() as f64 / n as f64;
        ensure(
            (f1 - hits).abs() < F1_IDENTITY && (acc - hits).abs() < F1_IDENTITY,
            || format!("case {case}"),
        )?;
    }

    for seed in 0..3 {
        let data = lib(generate_synthetic(&SynthConfig {
            seed,
            ..Default::default()
        }))?;
        let labeled = &data.labeled;
        let folds = lib(kfold_split(labeled, 5, seed, data.graph.node_count()))?;
        let mut seen = vec![0usize; data.graph.node_count()];
        let [neg, pos] = labeled.class_counts();
        for (i, f) in folds.iter().enumerate() {
            for &(u, _) in f.test.entries() {
                seen[u] += 1;
            }
            let test: std::collections::HashSet<usize> = f.test.nodes().into_iter().collect();
            ensure(f.train.nodes().iter().all(|u| !test.contains(u)), || {
                format!("fold {i}: train and test overlap")
            })?;
            ensure(f.train.len() + f.test.len() == labeled.len(), || {
                format!("fold {i}: sizes")
            })?;
            let [tn, tp] = f.test.class_counts();
            ensure(tn.abs_diff(neg / 5) <= 1 && tp.abs_diff(pos / 5) <= 1, || {
                format!("fold {i}: not stratified")
            })?;
        }
        let covered = labeled.entries().iter().all(|&(u, _)| seen[u] == 1);
        let extra = seen.iter().sum::<usize>() == labeled.len();
        ensure(covered && extra, || {
            "test folds do not partition the labeled set".into()
        })?;
    }
    Ok(format!(
        "{evaluations} grid evaluations; 1000 random identity checks; 3 five-fold splits partition and stratify"
    ))
}

fn run_pipeline(dir: &Path) -> Result<()> {
    let synth = SynthConfig {
        n_users: 2000,
        ring_count: 20,
        ..Default::default()
    };
    let data = generate_synthetic(&synth)?;
    let ids: Vec<usize> = (0..data.graph.node_count()).collect();
    write_multi_entity_graph(&data.graph, &dir.join("edges.tsv"), &dir.join("types.tsv"))?;
    write_labels(&dir.join("labels.tsv"), &data.labeled, &ids)?;

    let (single, _) = transform_to_single_entity(&data.graph, &TransformConfig::default());
    write_single_entity_graph(&single, &dir.join("single.tsv"))?;

    let x = initialize(single.adjacency(), &FeatureConfig::default())?;
    write_features(&dir.join("features.tsv"), &x, "fixed")?;

    let mut eval = EvalConfig::desk_preset();
    eval.seeds = vec![0];
    eval.pretrain.epochs = 2;
    let outcome = pretrain(single.view(), x.values(), None, &eval.pretrain, Some(dir))?;
    save_encoder(&dir.join("encoder.ckpt"), &outcome.encoder, serde_json::json!({}))?;

    let mut model = FineTuneModel::new(&outcome.encoder, single.edge_dim(), eval.finetune.dim, 0)?;
    let labeled = graphfraud_core::graph::LabeledSet::new(data.labeled.entries().to_vec(), single.node_count())?;
    finetune_fit(&mut model, single.view(), x.values(), &labeled, &eval.finetune)?;
    save_model(&dir.join("model.ckpt"), &model, serde_json::json!({}))?;
    let nodes: Vec<usize> = (0..single.node_count()).collect();
    let preds = predict(&model, single.view(), x.values(), &nodes, &eval.finetune)?;
    let lines: String = preds
        .iter()
        .map(|p| format!("{}\t{}\t{:?}\n", p.node, p.label, p.p_fraud))
        .collect();
    std::fs::write(dir.join("predictions.tsv"), lines)?;

    let result = run_grid(&data.graph, &data.labeled, &eval)?;
    std::fs::write(dir.join("results.tsv"), result.to_tsv())?;
    std::fs::write(dir.join("results.txt"), result.render_table())?;
    Ok(())
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("readable dir") {
        let path = entry.expect("entry").path();
        out.insert(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            std::fs::read(&path).expect("file"),
        );
    }
    out
}

fn c09_determinism() -> std::result::Result<String, String> {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    lib(run_pipeline(a.path()))?;
    lib(run_pipeline(b.path()))?;
    let (fa, fb) = (dir_bytes(a.path()), dir_bytes(b.path()));
    ensure(fa.keys().eq(fb.keys()), || "runs wrote different file sets".into())?;
    for (name, bytes) in &fa {
        ensure(&fb[name] == bytes, || format!("{name} differs between runs"))?;
    }
    Ok(format!(
        "{} files bit-identical across two runs, {:.0}s",
        fa.len(),
        start.elapsed().as_secs_f64()
    ))
}

fn c10_pretrain_progress() -> std::result::Result<String, String> {
    let data = lib(generate_synthetic(&SynthConfig::default()))?;
    let (single, _) = transform_to_single_entity(&data.graph, &TransformConfig::default());
    let eval = EvalConfig::desk_preset();
    let x = lib(initialize(single.adjacency(), &eval.features))?;
    let cfg = PretrainConfig {
        epochs: 10,
        ..eval.pretrain
    };
    let outcome = lib(pretrain(single.view(), x.values(), None, &cfg, None))?;
    let (first, last) = (outcome.epoch_losses[0], outcome.epoch_losses[9]);
    ensure(last < first, || format!("epoch 1 {first:.6}, epoch 10 {last:.6}"))?;
    Ok(format!("epoch 1 {first:.6} -> epoch 10 {last:.6}"))
}

fn main() {
    let criteria: [(&str, &str, Check); 10] = [
        ("c01", "transform equals shared-neighbor oracle", c01_transform_oracle),
        ("c02", "finite-difference gradient suite", c02_gradients),
        ("c03", "PageRank against dense oracle", c03_pagerank),
        ("c04", "eigen residuals and subspace agreement", c04_eigen),
        ("c05", "InfoNCE identities", c05_infonce),
        ("c06", "momentum closed form and queue FIFO", c06_moco),
        ("c07", "grid directions on synthetic data", c07_grid_directions),
        ("c08", "micro-F1 identity and fold partitions", c08_f1_and_folds),
        ("c09", "bit-identical pipeline reruns", c09_determinism),
        ("c10", "pre-training loss decreases", c10_pretrain_progress),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    let mut ran = 0;
    for (id, name, check) in criteria {
        if !filters.is_empty()
            && !filters
                .iter()
                .any(|f| id.contains(f.as_str()) || name.contains(f.as_str()))
        {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id} {name} [{secs:.1}s]: {detail}"),
            Err(why) => {
                failures += 1;
                println!("FAIL {id} {name} [{secs:.1}s]: {why}");
            }
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
