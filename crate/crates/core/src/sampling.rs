//! Ego networks and random-walk-with-restart sub-graph sampling for
//! contrastive pre-training and fine-tuning.

use std::collections::{HashMap, HashSet, VecDeque};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Csr, GraphView};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Ego radius: walks never leave the `r`-hop neighborhood of the anchor.
    pub r: usize,
    pub restart_prob: f64,
    pub max_nodes: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            r: 3,
            restart_prob: 0.8,
            max_nodes: 64,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r < 1 {
            return Err(Error::Config("sampler radius r must be at least 1".into()));
        }
        if !(self.restart_prob > 0.0 && self.restart_prob < 1.0) {
            return Err(Error::Config(format!(
                "restart probability {} outside (0, 1)",
                self.restart_prob
            )));
        }
        if self.max_nodes < 1 {
            return Err(Error::Config("max_nodes must be at least 1".into()));
        }
        Ok(())
    }

    /// Walk steps allowed before giving up on filling the node budget.
    pub fn step_budget(&self) -> usize {
        10 * self.max_nodes
    }
}

/// Induced sub-graph around an anchor node, with its node and edge features.
#[derive(Debug, Clone, PartialEq)]
pub struct SubGraph {
    pub anchor: usize,
    /// Parent-graph ids; local id `i` is `members[i]`.
    pub members: Vec<usize>,
    /// Induced adjacency over local ids.
    pub adjacency: Csr,
    /// Edge bit sets aligned with `adjacency` entries.
    pub edge_bits: Vec<u64>,
    pub edge_dim: usize,
    /// Node feature rows for `members`, in member order.
    pub features: Array2<f64>,
}

impl SubGraph {
    /// Builds the sub-graph induced by `members` (which must contain the
    /// anchor and be duplicate free).
    pub fn induced(g: GraphView<'_>, features: &Array2<f64>, anchor: usize, members: Vec<usize>) -> Self {
        let index: HashMap<usize, usize> = members.iter().enumerate().map(|(i, &m)| (m, i)).collect();
        debug_assert_eq!(index.len(), members.len());
        debug_assert!(index.contains_key(&anchor));
        let mut lists = Vec::with_capacity(members.len());
        let mut bits_per_node = Vec::with_capacity(members.len());
        for &m in &members {
            let mut row: Vec<(usize, u64)> = g
                .adjacency
                .entry_range(m)
                .filter_map(|e| {
                    index
                        .get(&g.adjacency.targets()[e])
                        .map(|&local| (local, g.edge_bits[e]))
                })
                .collect();
            row.sort_unstable_by_key(|p| p.0);
            lists.push(row.iter().map(|p| p.0).collect::<Vec<_>>());
            bits_per_node.push(row.into_iter().map(|p| p.1));
        }
        let edge_bits = bits_per_node.into_iter().flatten().collect();
        let mut feats = Array2::zeros((members.len(), features.ncols()));
        for (i, &m) in members.iter().enumerate() {
            feats.row_mut(i).assign(&features.row(m));
        }
        SubGraph {
            anchor,
            adjacency: Csr::from_sorted_lists(lists),
            members,
            edge_bits,
            edge_dim: g.edge_dim,
            features: feats,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Local index of the anchor.
    pub fn anchor_index(&self) -> usize {
        self.members
            .iter()
            .position(|&m| m == self.anchor)
            .expect("anchor is a member")
    }
}

/// Hop distances (up to `r`) from `u`, breadth first.
fn ego_distances(adj: &Csr, u: usize, r: usize) -> HashMap<usize, usize> {
    let mut dist = HashMap::new();
    dist.insert(u, 0);
    let mut queue = VecDeque::from([u]);
    while let Some(x) = queue.pop_front() {
        let dx = dist[&x];
        if dx == r {
            continue;
        }
        for &y in adj.neighbors(x) {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(y) {
                e.insert(dx + 1);
                queue.push_back(y);
            }
        }
    }
    dist
}

/// All nodes within `r` hops of `u`, ascending.
pub fn ego_network(adj: &Csr, u: usize, r: usize) -> Vec<usize> {
    let mut nodes: Vec<usize> = ego_distances(adj, u, r).into_keys().collect();
    nodes.sort_unstable();
    nodes
}

/// Random walk with restart from `u`, confined to its `r`-ego network.
///
/// Each step moves to a uniformly chosen neighbor (a neighbor outside the ego
/// network, or a dead end, sends the walk back to `u`), then restarts at `u`
/// with probability `restart_prob`. Distinct nodes are collected in visit
/// order until `max_nodes` is reached or the step budget runs out.
pub fn rwr_subgraph<R: Rng + ?Sized>(
    g: GraphView<'_>,
    features: &Array2<f64>,
    u: usize,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> SubGraph {
    let members = rwr_members(g.adjacency, u, cfg, rng);
    SubGraph::induced(g, features, u, members)
}

fn rwr_members<R: Rng + ?Sized>(adj: &Csr, u: usize, cfg: &SamplerConfig, rng: &mut R) -> Vec<usize> {
    let mut members = vec![u];
    if adj.degree(u) == 0 || cfg.max_nodes <= 1 {
        return members;
    }
    let ego = ego_distances(adj, u, cfg.r);
    let mut seen: HashSet<usize> = HashSet::from([u]);
    let mut current = u;
    for _ in 0..cfg.step_budget() {
        if members.len() >= cfg.max_nodes {
            break;
        }
        let nbrs = adj.neighbors(current);
        current = if nbrs.is_empty() {
            u
        } else {
            let next = nbrs[rng.random_range(0..nbrs.len())];
            if ego.contains_key(&next) {
                next
            } else {
                u
            }
        };
        if seen.insert(current) {
            members.push(current);
        }
        if rng.random::<f64>() < cfg.restart_prob {
            current = u;
        }
    }
    members
}

/// Private sampling stream for `node`, so per-node samples do not depend on
/// the order in which nodes are visited.
pub fn node_stream(seed: u64, node: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (node as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Two independent walk samples from the same anchor, each on its own
/// stream split off `rng`.
pub fn positive_pair<R: Rng + ?Sized>(
    g: GraphView<'_>,
    features: &Array2<f64>,
    u: usize,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> (SubGraph, SubGraph) {
    let mut q_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
    let mut k_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
    (
        rwr_subgraph(g, features, u, cfg, &mut q_rng),
        rwr_subgraph(g, features, u, cfg, &mut k_rng),
    )
}

/// One positive pair per anchor. Within a batch, the keys of the other
/// anchors act as negatives.
pub fn contrastive_batch<R: Rng + ?Sized>(
    g: GraphView<'_>,
    features: &Array2<f64>,
    anchors: &[usize],
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<(SubGraph, SubGraph)>> {
    let mut seen = HashSet::with_capacity(anchors.len());
    if let Some(dup) = anchors.iter().find(|a| !seen.insert(**a)) {
        return Err(Error::Config(format!("anchor {dup} appears twice in one batch")));
    }
    Ok(anchors
        .iter()
        .map(|&u| positive_pair(g, features, u, cfg, rng))
        .collect())
}
