//! Collapses non-target entities into edge features between target entities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Csr, MultiEntityGraph, SingleEntityGraph};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TransformConfig {
    /// Non-target nodes with more than this many target neighbors are skipped.
    /// `None` keeps every node.
    pub hub_threshold: Option<usize>,
    /// Record how many non-target entities each edge shares.
    pub record_counts: bool,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig {
            hub_threshold: None,
            record_counts: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TransformSummary {
    /// Skipped hub nodes as (multi-entity id, degree), ascending by id.
    pub skipped_hubs: Vec<(usize, usize)>,
    pub target_nodes: usize,
    pub single_edges: usize,
}

/// Builds the single-entity graph. An edge `(u, v)` exists iff `u` and `v`
/// share at least one (non-skipped) non-target neighbor; bit `t` of its
/// feature is set iff one such neighbor has the `t`-th non-target type.
///
/// Work is split over target nodes; each node's neighbor list is built
/// independently and sorted, so the result does not depend on scheduling.
pub fn transform_to_single_entity(
    g: &MultiEntityGraph,
    cfg: &TransformConfig,
) -> (SingleEntityGraph, TransformSummary) {
    let adj = g.adjacency();
    let n = g.node_count();
    let targets = g.target_nodes();
    let non_target = g.non_target_types();

    // multi id -> single id for targets, feature bit for non-targets
    let mut local = vec![usize::MAX; n];
    for (i, &t) in targets.iter().enumerate() {
        local[t] = i;
    }
    let mut type_bit = vec![0u64; g.type_names().len()];
    for (dim, &t) in non_target.iter().enumerate() {
        type_bit[t] = 1 << dim;
    }

    let is_hub = |w: usize| cfg.hub_threshold.is_some_and(|h| adj.degree(w) > h);
    let mut skipped_hubs: Vec<(usize, usize)> = (0..n)
        .filter(|&w| !g.is_target(w) && is_hub(w))
        .map(|w| (w, adj.degree(w)))
        .collect();
    skipped_hubs.sort_unstable();
    for &(w, d) in &skipped_hubs {
        log::warn!("skipping hub node {w} ({d} target neighbors) during transformation");
    }

    let rows: Vec<Vec<(usize, u64, u32)>> = targets
        .par_iter()
        .map_init(
            || (vec![usize::MAX; targets.len()], Vec::<(usize, u64, u32)>::new()),
            |(slot, row), &u| {
                row.clear();
                for &w in adj.neighbors(u) {
                    if is_hub(w) {
                        continue;
                    }
                    let bit = type_bit[g.node_type(w)];
                    for &v in adj.neighbors(w) {
                        if v == u {
                            continue;
                        }
                        let sv = local[v];
                        let pos = slot[sv];
                        if pos < row.len() && row[pos].0 == sv {
                            row[pos].1 |= bit;
                            row[pos].2 += 1;
                        } else {
                            slot[sv] = row.len();
                            row.push((sv, bit, 1));
                        }
                    }
                }
                let mut out: Vec<(usize, u64, u32)> = row.clone();
                for &(sv, _, _) in row.iter() {
                    slot[sv] = usize::MAX;
                }
                out.sort_unstable_by_key(|e| e.0);
                out
            },
        )
        .collect();

    let mut offsets = Vec::with_capacity(targets.len() + 1);
    offsets.push(0);
    let nnz: usize = rows.iter().map(Vec::len).sum();
    let mut neighbors = Vec::with_capacity(nnz);
    let mut features = Vec::with_capacity(nnz);
    let mut counts = Vec::with_capacity(if cfg.record_counts { nnz } else { 0 });
    for row in rows {
        for (v, bits, count) in row {
            neighbors.push(v);
            features.push(bits);
            if cfg.record_counts {
                counts.push(count);
            }
        }
        offsets.push(neighbors.len());
    }
    let adjacency = Csr::from_raw(offsets, neighbors);
    let edge_types = non_target.iter().map(|&t| g.type_names()[t].clone()).collect();
    let summary = TransformSummary {
        skipped_hubs,
        target_nodes: targets.len(),
        single_edges: adjacency.edge_count(),
    };
    let single = SingleEntityGraph {
        adjacency,
        edge_features: features,
        edge_types,
        origin: targets,
        shared_counts: cfg.record_counts.then_some(counts),
    };
    (single, summary)
}
