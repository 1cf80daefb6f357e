use serde::Serialize;

use super::{Csr, MultiEntityGraph, SingleEntityGraph};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    /// Node count per type, in type-id order.
    pub type_counts: Vec<(String, usize)>,
    pub max_degree: usize,
}

/// Multi-entity vs single-entity sizes and their compression ratios.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformStats {
    pub multi: GraphStats,
    pub single: GraphStats,
    pub target_nodes: usize,
    pub non_target_nodes: usize,
    pub node_ratio: f64,
    pub edge_ratio: f64,
}

fn base(adj: &Csr) -> GraphStats {
    GraphStats {
        nodes: adj.node_count(),
        edges: adj.edge_count(),
        type_counts: Vec::new(),
        max_degree: adj.max_degree(),
    }
}

pub fn csr_stats(adj: &Csr) -> GraphStats {
    base(adj)
}

pub fn multi_stats(g: &MultiEntityGraph) -> GraphStats {
    let mut s = base(g.adjacency());
    let mut counts = vec![0usize; g.type_names().len()];
    for &t in g.node_types() {
        counts[t] += 1;
    }
    s.type_counts = g.type_names().iter().cloned().zip(counts).collect();
    s
}

pub fn single_stats(g: &SingleEntityGraph) -> GraphStats {
    base(g.adjacency())
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn transform_stats(multi: &MultiEntityGraph, single: &SingleEntityGraph) -> TransformStats {
    let m = multi_stats(multi);
    let mut s = single_stats(single);
    let target_nodes = single.node_count();
    let target_name = multi.type_names()[multi.target_type()].clone();
    s.type_counts = vec![(target_name, target_nodes)];
    TransformStats {
        node_ratio: ratio(m.nodes, s.nodes),
        edge_ratio: ratio(m.edges, s.edges),
        target_nodes,
        non_target_nodes: m.nodes - target_nodes,
        multi: m,
        single: s,
    }
}
