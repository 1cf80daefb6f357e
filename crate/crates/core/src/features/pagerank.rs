use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::graph::Csr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PageRankConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        PageRankConfig {
            damping: 0.85,
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

/// PageRank of the undirected random walk by power iteration.
///
/// Isolated nodes are dangling: their mass is spread uniformly, so every
/// isolated node ends up with the teleport share plus its part of the
/// redistributed dangling mass. Iterates until the L1 change drops below
/// `tol`.
pub fn pagerank(adj: &Csr, cfg: &PageRankConfig) -> Result<Vec<f64>> {
    let d = cfg.damping;
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::Config(format!("damping {d} outside (0, 1)")));
    }
    if cfg.tol <= 0.0 {
        return Err(Error::Config("PageRank tolerance must be positive".into()));
    }
    let n = adj.node_count();
    if n == 0 {
        return Ok(Vec::new());
    }
    let inv_n = 1.0 / n as f64;
    let inv_deg: Vec<f64> = (0..n)
        .map(|i| match adj.degree(i) {
            0 => 0.0,
            k => 1.0 / k as f64,
        })
        .collect();
    let mut rank = vec![inv_n; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        let dangling: f64 = (0..n).filter(|&i| adj.degree(i) == 0).map(|i| rank[i]).sum();
        let base = (1.0 - d) * inv_n + d * dangling * inv_n;
        for (j, slot) in next.iter_mut().enumerate() {
            let inflow: f64 = adj.neighbors(j).iter().map(|&i| rank[i] * inv_deg[i]).sum();
            *slot = base + d * inflow;
        }
        // keep the total at exactly one against rounding drift
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        residual = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if residual < cfg.tol {
            return Ok(rank);
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iter,
        residual,
    })
}

/// One-column feature matrix of PageRank scores.
pub fn init_pagerank(adj: &Csr, cfg: &PageRankConfig) -> Result<FeatureMatrix> {
    let scores = pagerank(adj, cfg)?;
    let n = scores.len();
    let values = Array2::from_shape_vec((n, 1), scores).expect("n x 1");
    FeatureMatrix::new(
        values,
        format!(
            "pagerank damping={} tol={:e} max_iter={}",
            cfg.damping, cfg.tol, cfg.max_iter
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_cases() {
        let cfg = PageRankConfig::default();
        let tri = pagerank(&Csr::from_undirected(3, &[(0, 1), (1, 2), (0, 2)]), &cfg).unwrap();
        for v in tri {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let pair = pagerank(&Csr::from_undirected(2, &[(0, 1)]), &cfg).unwrap();
        assert!((pair[0] - 0.5).abs() < 1e-12 && (pair[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn path_closed_form() {
        // r_a = 0.05 + 0.425 r_b, r_b = 0.05 + 1.7 r_a solved by hand
        let r = pagerank(&Csr::from_undirected(3, &[(0, 1), (1, 2)]), &PageRankConfig::default()).unwrap();
        let a = 0.07125 / 0.2775;
        let b = 0.05 + 1.7 * a;
        assert!((r[0] - a).abs() < 1e-9 && (r[2] - a).abs() < 1e-9 && (r[1] - b).abs() < 1e-9);
        assert!((r[0] - 0.2568).abs() < 1e-3 && (r[1] - 0.4865).abs() < 1e-3);
    }

    #[test]
    fn isolated_nodes_get_dangling_share() {
        let r = pagerank(&Csr::from_undirected(3, &[(0, 1)]), &PageRankConfig::default()).unwrap();
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(r[2] > 0.0 && r[2] < r[0]);
    }

    #[test]
    fn reports_non_convergence() {
        let cfg = PageRankConfig {
            max_iter: 1,
            ..Default::default()
        };
        let err = pagerank(&Csr::from_undirected(3, &[(0, 1), (1, 2)]), &cfg).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 1, .. }));
    }
}
