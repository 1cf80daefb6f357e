//! Graph representations: the heterogeneous multi-entity graph, the
//! target-only single-entity graph with one-hot edge features, and the
//! labeled subset of target nodes.

mod csr;
pub mod io;
pub mod stats;
pub mod transform;

use std::collections::HashSet;

pub use csr::Csr;
pub use stats::{GraphStats, TransformStats};
pub use transform::{transform_to_single_entity, TransformConfig, TransformSummary};

use crate::error::{Error, Result};

/// Edge features are stored as bit sets; this bounds their dimension.
pub const MAX_EDGE_DIM: usize = 64;

/// Borrowed view over any graph the learning pipeline can consume:
/// adjacency plus one bit-set edge feature per directed entry.
#[derive(Debug, Clone, Copy)]
pub struct GraphView<'a> {
    pub adjacency: &'a Csr,
    pub edge_dim: usize,
    pub edge_bits: &'a [u64],
}

impl GraphView<'_> {
    pub fn node_count(&self) -> usize {
        self.adjacency.node_count()
    }
}

/// Heterogeneous graph of target and non-target entities.
///
/// Every edge joins a target node to a non-target node. Node types are
/// indexed in order of first appearance in the node-type file.
#[derive(Debug, Clone)]
pub struct MultiEntityGraph {
    type_names: Vec<String>,
    target_type: usize,
    node_type: Vec<usize>,
    adjacency: Csr,
    /// One-hot relation id per directed entry.
    relation_bits: Vec<u64>,
    relation_count: usize,
}

impl MultiEntityGraph {
    /// Validates and builds the graph. Duplicate edges are collapsed (first
    /// relation id wins); a missing relation id defaults to the index of the
    /// non-target endpoint's type among the non-target types.
    pub fn new(
        type_names: Vec<String>,
        target_type: usize,
        node_type: Vec<usize>,
        edges: &[(usize, usize, Option<usize>)],
    ) -> Result<Self> {
        if target_type >= type_names.len() {
            return Err(Error::InvalidGraph(format!(
                "target type id {target_type} out of range"
            )));
        }
        if let Some((i, &t)) = node_type.iter().enumerate().find(|(_, &t)| t >= type_names.len()) {
            return Err(Error::InvalidGraph(format!(
                "node {i} has type id {t} outside [0, {})",
                type_names.len()
            )));
        }
        let n = node_type.len();
        let non_target = non_target_types(type_names.len(), target_type);
        if non_target.len() > MAX_EDGE_DIM {
            return Err(Error::InvalidGraph(format!(
                "{} non-target types exceed the supported maximum of {MAX_EDGE_DIM}",
                non_target.len()
            )));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut pairs = Vec::with_capacity(edges.len());
        let mut relations = Vec::with_capacity(edges.len());
        for &(u, v, rel) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) references a node outside [0, {n})"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            let u_target = node_type[u] == target_type;
            let v_target = node_type[v] == target_type;
            if u_target == v_target {
                let kind = if u_target { "target" } else { "non-target" };
                return Err(Error::NotBipartite(u, v, kind));
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                continue;
            }
            let other = if u_target { v } else { u };
            let rel = match rel {
                Some(r) => r,
                None => non_target
                    .iter()
                    .position(|&t| t == node_type[other])
                    .expect("non-target endpoint"),
            };
            if rel >= MAX_EDGE_DIM {
                return Err(Error::InvalidGraph(format!(
                    "relation id {rel} exceeds the supported maximum of {}",
                    MAX_EDGE_DIM - 1
                )));
            }
            pairs.push(key);
            relations.push(rel);
        }
        let relation_count = relations.iter().map(|r| r + 1).max().unwrap_or(0).max(non_target.len());
        let adjacency = Csr::from_undirected(n, &pairs);
        let mut relation_bits = vec![0u64; adjacency.nnz()];
        for (&(u, v), &rel) in pairs.iter().zip(&relations) {
            let a = adjacency.find_entry(u, v).unwrap();
            let b = adjacency.find_entry(v, u).unwrap();
            relation_bits[a] = 1 << rel;
            relation_bits[b] = 1 << rel;
        }
        Ok(MultiEntityGraph {
            type_names,
            target_type,
            node_type,
            adjacency,
            relation_bits,
            relation_count,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_type.len()
    }

    pub fn adjacency(&self) -> &Csr {
        &self.adjacency
    }

    pub fn type_names(&self) -> &[String] {
        &self.type_names
    }

    pub fn target_type(&self) -> usize {
        self.target_type
    }

    pub fn node_type(&self, node: usize) -> usize {
        self.node_type[node]
    }

    pub fn node_types(&self) -> &[usize] {
        &self.node_type
    }

    pub fn is_target(&self, node: usize) -> bool {
        self.node_type[node] == self.target_type
    }

    /// Target node ids in ascending order. Position `i` in this list is the
    /// node's id in the single-entity graph.
    pub fn target_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&i| self.is_target(i)).collect()
    }

    /// Non-target type ids in edge-feature dimension order.
    pub fn non_target_types(&self) -> Vec<usize> {
        non_target_types(self.type_names.len(), self.target_type)
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    /// Relation id of the directed entry at `entry`.
    pub fn relation(&self, entry: usize) -> usize {
        self.relation_bits[entry].trailing_zeros() as usize
    }

    /// Edge features for the multi-entity learning path are one-hot
    /// relation types of dimension `relation_count`.
    pub fn view(&self) -> GraphView<'_> {
        GraphView {
            adjacency: &self.adjacency,
            edge_dim: self.relation_count,
            edge_bits: &self.relation_bits,
        }
    }
}

fn non_target_types(type_count: usize, target: usize) -> Vec<usize> {
    (0..type_count).filter(|&t| t != target).collect()
}

/// Graph over target entities only. Edge `(u, v)` carries a `d`-bit
/// indicator: bit `t` is set iff `u` and `v` share a non-target neighbor of
/// the `t`-th non-target type.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleEntityGraph {
    pub(crate) adjacency: Csr,
    pub(crate) edge_features: Vec<u64>,
    pub(crate) edge_types: Vec<String>,
    pub(crate) origin: Vec<usize>,
    pub(crate) shared_counts: Option<Vec<u32>>,
}

impl SingleEntityGraph {
    /// Validating constructor for graphs read back from disk or built by hand.
    pub fn new(
        adjacency: Csr,
        edge_features: Vec<u64>,
        edge_types: Vec<String>,
        origin: Vec<usize>,
        shared_counts: Option<Vec<u32>>,
    ) -> Result<Self> {
        adjacency.validate().map_err(Error::InvalidGraph)?;
        if edge_features.len() != adjacency.nnz() {
            return Err(Error::InvalidGraph(
                "edge feature count does not match adjacency".into(),
            ));
        }
        if origin.len() != adjacency.node_count() {
            return Err(Error::InvalidGraph("origin map does not match node count".into()));
        }
        if edge_types.len() > MAX_EDGE_DIM {
            return Err(Error::InvalidGraph("too many edge types".into()));
        }
        let mask = if edge_types.len() == 64 {
            u64::MAX
        } else {
            (1u64 << edge_types.len()) - 1
        };
        for u in 0..adjacency.node_count() {
            for e in adjacency.entry_range(u) {
                let bits = edge_features[e];
                if bits == 0 || bits & !mask != 0 {
                    return Err(Error::InvalidGraph(format!(
                        "edge ({u}, {}) has an invalid feature vector",
                        adjacency.targets()[e]
                    )));
                }
                let v = adjacency.targets()[e];
                let rev = adjacency.find_entry(v, u).unwrap();
                if edge_features[rev] != bits {
                    return Err(Error::InvalidGraph(format!(
                        "edge ({u}, {v}) features differ by direction"
                    )));
                }
            }
        }
        if let Some(c) = &shared_counts {
            if c.len() != adjacency.nnz() {
                return Err(Error::InvalidGraph("shared-count length mismatch".into()));
            }
        }
        Ok(SingleEntityGraph {
            adjacency,
            edge_features,
            edge_types,
            origin,
            shared_counts,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.node_count()
    }

    pub fn adjacency(&self) -> &Csr {
        &self.adjacency
    }

    /// Feature dimension `d` (number of non-target types).
    pub fn edge_dim(&self) -> usize {
        self.edge_types.len()
    }

    pub fn edge_types(&self) -> &[String] {
        &self.edge_types
    }

    /// Bit-set feature per directed entry, aligned with the adjacency.
    pub fn edge_features(&self) -> &[u64] {
        &self.edge_features
    }

    pub fn edge_feature(&self, u: usize, v: usize) -> Option<u64> {
        self.adjacency.find_entry(u, v).map(|e| self.edge_features[e])
    }

    /// Number of shared non-target entities per entry, when recorded.
    pub fn shared_counts(&self) -> Option<&[u32]> {
        self.shared_counts.as_deref()
    }

    /// Multi-entity id of each single-entity node.
    pub fn origin(&self) -> &[usize] {
        &self.origin
    }

    pub fn view(&self) -> GraphView<'_> {
        GraphView {
            adjacency: &self.adjacency,
            edge_dim: self.edge_types.len(),
            edge_bits: &self.edge_features,
        }
    }
}

/// Labeled target entities: 0 is benign, 1 is suspicious.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabeledSet {
    entries: Vec<(usize, u8)>,
}

impl LabeledSet {
    pub fn new(entries: Vec<(usize, u8)>, node_count: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for &(node, label) in &entries {
            if node >= node_count {
                return Err(Error::InvalidLabels(format!("node {node} outside [0, {node_count})")));
            }
            if label > 1 {
                return Err(Error::InvalidLabels(format!(
                    "node {node} has label {label}; expected 0 or 1"
                )));
            }
            if !seen.insert(node) {
                return Err(Error::InvalidLabels(format!("node {node} labeled twice")));
            }
        }
        Ok(LabeledSet { entries })
    }

    pub fn entries(&self) -> &[(usize, u8)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nodes(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for &(_, y) in &self.entries {
            counts[y as usize] += 1;
        }
        counts
    }
}
