//! Spectral node features from the symmetric normalized adjacency
//! `D^{-1/2} A D^{-1/2}`.
//!
//! The matrix is block diagonal over connected components, so each component
//! is decomposed on its own: densely below `dense_threshold` nodes, with
//! restarted Lanczos above it. The global top-`k` pairs are then merged, ties
//! going to the component with the smaller first node id. This handles the
//! eigenvalue 1 that every non-trivial component contributes exactly, however
//! many components there are.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{lanczos_top, FeatureMatrix};
use crate::error::{Error, Result};
use crate::graph::Csr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenConfig {
    pub k: usize,
    /// Maximum allowed `||A v - lambda v||_2` per retained pair.
    pub tolerance: f64,
    /// Components with at least this many nodes use the iterative solver.
    pub dense_threshold: usize,
    pub seed: u64,
    pub max_cycles: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig {
            k: 16,
            tolerance: 1e-6,
            dense_threshold: 2000,
            seed: 0,
            max_cycles: 500,
        }
    }
}

/// Top eigenpairs, eigenvalues descending; column `j` of `vectors` is the
/// unit eigenvector for `values[j]`.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Array2<f64>,
}

fn inv_sqrt_degrees(adj: &Csr) -> Vec<f64> {
    (0..adj.node_count())
        .map(|i| match adj.degree(i) {
            0 => 0.0,
            d => 1.0 / (d as f64).sqrt(),
        })
        .collect()
}

/// `y = Â x` on the whole graph.
pub(crate) fn normalized_matvec(adj: &Csr, inv_sqrt: &[f64], x: &[f64], y: &mut [f64]) {
    for i in 0..adj.node_count() {
        let s: f64 = adj.neighbors(i).iter().map(|&j| inv_sqrt[j] * x[j]).sum();
        y[i] = inv_sqrt[i] * s;
    }
}

struct Candidate {
    value: f64,
    component: usize,
    rank: usize,
    nodes: std::rc::Rc<Vec<usize>>,
    vector: Vec<f64>,
}

fn component_pairs(
    adj: &Csr,
    inv_sqrt: &[f64],
    comp: &[usize],
    cfg: &EigenConfig,
    component: usize,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = comp.len();
    let want = cfg.k.min(n);
    if n == 1 {
        return Ok(vec![(0.0, vec![1.0])]);
    }
    let local = |node: usize| comp.binary_search(&node).expect("member of component");
    if n < cfg.dense_threshold {
        let mut m = DMatrix::<f64>::zeros(n, n);
        for (a, &i) in comp.iter().enumerate() {
            for &j in adj.neighbors(i) {
                m[(a, local(j))] = inv_sqrt[i] * inv_sqrt[j];
            }
        }
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        return Ok(order
            .into_iter()
            .take(want)
            .map(|c| (eig.eigenvalues[c], eig.eigenvectors.column(c).iter().copied().collect()))
            .collect());
    }
    let rows: Vec<Vec<(usize, f64)>> = comp
        .iter()
        .map(|&i| {
            adj.neighbors(i)
                .iter()
                .map(|&j| (local(j), inv_sqrt[i] * inv_sqrt[j]))
                .collect()
        })
        .collect();
    let op = |x: &[f64], y: &mut [f64]| {
        for (yi, row) in y.iter_mut().zip(&rows) {
            *yi = row.iter().map(|&(j, w)| w * x[j]).sum();
        }
    };
    lanczos_top(n, op, want, cfg.seed ^ component as u64, cfg.max_cycles)
}

/// Largest `k` eigenpairs of the normalized adjacency, with the sign of each
/// eigenvector fixed so its largest-magnitude entry is positive. Every pair
/// is checked against the residual tolerance.
pub fn top_eigenpairs(adj: &Csr, cfg: &EigenConfig) -> Result<EigenPairs> {
    let n = adj.node_count();
    let k = cfg.k.min(n);
    let inv_sqrt = inv_sqrt_degrees(adj);
    let mut candidates = Vec::new();
    for (c, comp) in adj.components().into_iter().enumerate() {
        let pairs = component_pairs(adj, &inv_sqrt, &comp, cfg, c)?;
        let nodes = std::rc::Rc::new(comp);
        for (rank, (value, vector)) in pairs.into_iter().enumerate() {
            candidates.push(Candidate {
                value,
                component: c,
                rank,
                nodes: nodes.clone(),
                vector,
            });
        }
    }
    // Values agreeing to 1e-9 count as tied so rounding noise cannot reorder
    // components that share an eigenvalue.
    let key = |c: &Candidate| (-(c.value * 1e9).round() as i64, c.component, c.rank);
    candidates.sort_by_key(key);
    candidates.truncate(k);

    let mut values = Vec::with_capacity(k);
    let mut vectors = Array2::zeros((n, k));
    let mut av = vec![0.0; n];
    for (j, cand) in candidates.into_iter().enumerate() {
        let mut full = vec![0.0; n];
        for (&node, &x) in cand.nodes.iter().zip(&cand.vector) {
            full[node] = x;
        }
        let norm = full.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut pivot = 0;
        for i in 0..n {
            if full[i].abs() > full[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if full[pivot] < 0.0 { -1.0 } else { 1.0 } / norm;
        full.iter_mut().for_each(|x| *x *= sign);

        normalized_matvec(adj, &inv_sqrt, &full, &mut av);
        let residual = av
            .iter()
            .zip(&full)
            .map(|(a, x)| (a - cand.value * x).powi(2))
            .sum::<f64>()
            .sqrt();
        if !(residual <= cfg.tolerance) {
            return Err(Error::EigenResidual {
                residual,
                tolerance: cfg.tolerance,
            });
        }
        values.push(cand.value);
        vectors.column_mut(j).assign(&ndarray::Array1::from(full));
    }
    Ok(EigenPairs { values, vectors })
}

/// Node `i`'s feature is `(v_1[i], ..., v_k[i])` over the top-`k`
/// eigenvectors; columns beyond the node count are zero.
pub fn init_eigen(adj: &Csr, cfg: &EigenConfig) -> Result<FeatureMatrix> {
    if cfg.k == 0 {
        return Err(Error::Config("eigen feature dimension k must be at least 1".into()));
    }
    let pairs = top_eigenpairs(adj, cfg)?;
    let mut values = Array2::zeros((adj.node_count(), cfg.k));
    values
        .slice_mut(ndarray::s![.., ..pairs.values.len()])
        .assign(&pairs.vectors);
    FeatureMatrix::new(values, format!("eigen k={}", cfg.k))
}
