//! GIN aggregation layers, readout and the stacked encoder.
//!
//! Tape builders operate on a [`GraphBatch`], the disjoint union of several
//! sub-graphs, so one forward pass covers a whole mini-batch. The free
//! functions at the bottom evaluate a single sub-graph without recording
//! gradients.

use std::rc::Rc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::{BoundEncoder, BoundGin, EncoderParams, GinLayer, Mlp};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Csr;
use crate::sampling::SubGraph;

/// Node embedding (anchor row) or sub-graph embedding (pooled members).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    #[serde(alias = "node")]
    Ne,
    #[serde(alias = "subgraph")]
    Se,
}

impl EmbeddingMode {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingMode::Ne => "NE",
            EmbeddingMode::Se => "SE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Sum,
    Mean,
}

/// Disjoint union of sub-graphs laid out for batched evaluation.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub adjacency: Rc<Csr>,
    pub features: Array2<f64>,
    /// Dense edge features, one row per adjacency entry.
    pub edge_features: Array2<f64>,
    /// Member rows of graph `s` are `segments[s]..segments[s + 1]`.
    pub segments: Rc<[usize]>,
    /// Row of each graph's anchor.
    pub anchors: Rc<[usize]>,
}

impl GraphBatch {
    pub fn new(subs: &[&SubGraph]) -> Result<Self> {
        let first = subs
            .first()
            .ok_or_else(|| Error::Shape("empty sub-graph batch".into()))?;
        let dim = first.features.ncols();
        let edge_dim = first.edge_dim.max(1);
        let total: usize = subs.iter().map(|s| s.len()).sum();
        let nnz: usize = subs.iter().map(|s| s.adjacency.nnz()).sum();
        let mut features = Array2::zeros((total, dim));
        let mut edge_features = Array2::zeros((nnz, edge_dim));
        let mut offsets = Vec::with_capacity(total + 1);
        offsets.push(0);
        let mut targets = Vec::with_capacity(nnz);
        let mut segments = Vec::with_capacity(subs.len() + 1);
        segments.push(0);
        let mut anchors = Vec::with_capacity(subs.len());
        let mut base = 0;
        for s in subs {
            if s.features.ncols() != dim || s.edge_dim.max(1) != edge_dim {
                return Err(Error::Shape("sub-graphs in a batch disagree on feature dims".into()));
            }
            if s.is_empty() {
                return Err(Error::Shape("empty sub-graph".into()));
            }
            features
                .slice_mut(ndarray::s![base..base + s.len(), ..])
                .assign(&s.features);
            for local in 0..s.len() {
                for e in s.adjacency.entry_range(local) {
                    let row = targets.len();
                    targets.push(base + s.adjacency.targets()[e]);
                    let bits = s.edge_bits[e];
                    for t in 0..edge_dim {
                        if bits >> t & 1 == 1 {
                            edge_features[[row, t]] = 1.0;
                        }
                    }
                }
                offsets.push(targets.len());
            }
            anchors.push(base + s.anchor_index());
            base += s.len();
            segments.push(base);
        }
        Ok(GraphBatch {
            adjacency: Rc::new(Csr::from_raw(offsets, targets)),
            features,
            edge_features,
            segments: segments.into(),
            anchors: anchors.into(),
        })
    }

    pub fn graphs(&self) -> usize {
        self.anchors.len()
    }
}

impl BoundGin {
    /// `MLP((1 + eps) x_i + sum_j x_j)`
    pub fn forward(&self, tape: &mut Tape, x: Var, graph: &Rc<Csr>) -> Result<Var> {
        let agg = tape.neighbor_sum(x, graph)?;
        self.combine(tape, x, agg)
    }

    /// `MLP((1 + eps) x_i + sum_j relu(x_j + P e_ij))` where `P` projects the
    /// raw edge features into the layer's input space.
    pub fn forward_edge(&self, tape: &mut Tape, x: Var, edge_raw: Var, graph: &Rc<Csr>) -> Result<Var> {
        let proj = self
            .edge_projection
            .ok_or_else(|| Error::Config("edge-aware layer has no edge projection".into()))?;
        let e = proj.forward(tape, edge_raw)?;
        let agg = tape.edge_relu_sum(x, e, graph)?;
        self.combine(tape, x, agg)
    }

    fn combine(&self, tape: &mut Tape, x: Var, agg: Var) -> Result<Var> {
        let scaled = tape.mul_scalar_var(x, self.eps)?;
        let self_term = tape.add(x, scaled)?;
        let h = tape.add(self_term, agg)?;
        self.mlp.forward(tape, h)
    }
}

pub fn readout_on_tape(tape: &mut Tape, x: Var, segments: &Rc<[usize]>, pooling: Pooling) -> Result<Var> {
    match pooling {
        Pooling::Sum => tape.segment_sum(x, segments),
        Pooling::Mean => tape.segment_mean(x, segments),
    }
}

impl BoundEncoder {
    /// Per-node embeddings after all layers, with ReLU between layers.
    pub fn node_embeddings(&self, tape: &mut Tape, batch: &GraphBatch) -> Result<Var> {
        let mut x = tape.constant(batch.features.clone());
        let edge = self.edge_aware.then(|| tape.constant(batch.edge_features.clone()));
        for (l, layer) in self.layers.iter().enumerate() {
            x = match edge {
                Some(e) => layer.forward_edge(tape, x, e, &batch.adjacency)?,
                None => layer.forward(tape, x, &batch.adjacency)?,
            };
            if l + 1 < self.layers.len() {
                x = tape.relu(x);
            }
        }
        Ok(x)
    }

    /// One embedding row per graph in the batch.
    pub fn forward(&self, tape: &mut Tape, batch: &GraphBatch, mode: EmbeddingMode, pooling: Pooling) -> Result<Var> {
        let x = self.node_embeddings(tape, batch)?;
        match mode {
            EmbeddingMode::Ne => tape.gather(x, &batch.anchors),
            EmbeddingMode::Se => readout_on_tape(tape, x, &batch.segments, pooling),
        }
    }
}

fn single_graph(sub_adj: &Csr) -> Rc<Csr> {
    Rc::new(sub_adj.clone())
}

/// Evaluates an MLP on one input vector.
pub fn mlp_forward(params: &Mlp, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != params.input_dim() {
        return Err(Error::Shape(format!(
            "MLP expects {} inputs, got {}",
            params.input_dim(),
            x.len()
        )));
    }
    let mut tape = Tape::inference();
    let m = params.bind(&mut tape, "mlp");
    let input = tape.constant(Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row"));
    let out = m.forward(&mut tape, input)?;
    Ok(tape.value(out).iter().copied().collect())
}

/// Plain GIN aggregation over a sub-graph's induced adjacency.
pub fn gin_layer(params: &GinLayer, sub: &SubGraph, x: &Array2<f64>) -> Result<Array2<f64>> {
    let mut tape = Tape::inference();
    let layer = params.bind(&mut tape, "gin");
    let xv = tape.constant(x.clone());
    let out = layer.forward(&mut tape, xv, &single_graph(&sub.adjacency))?;
    Ok(tape.value(out).clone())
}

/// Edge-aware GIN aggregation; `edges` holds one raw feature row per
/// adjacency entry of `sub`.
pub fn gin_edge_layer(params: &GinLayer, sub: &SubGraph, x: &Array2<f64>, edges: &Array2<f64>) -> Result<Array2<f64>> {
    let mut tape = Tape::inference();
    let layer = params.bind(&mut tape, "gin");
    let xv = tape.constant(x.clone());
    let ev = tape.constant(edges.clone());
    let out = layer.forward_edge(&mut tape, xv, ev, &single_graph(&sub.adjacency))?;
    Ok(tape.value(out).clone())
}

pub fn readout(rows: &Array2<f64>, pooling: Pooling) -> Result<Vec<f64>> {
    if rows.nrows() == 0 {
        return Err(Error::Shape("readout of an empty set of rows".into()));
    }
    let mut tape = Tape::inference();
    let x = tape.constant(rows.clone());
    let segments: Rc<[usize]> = vec![0, rows.nrows()].into();
    let out = readout_on_tape(&mut tape, x, &segments, pooling)?;
    Ok(tape.value(out).iter().copied().collect())
}

/// Embedding of one sub-graph under `mode` (sum pooling for SE).
pub fn encoder_forward(params: &EncoderParams, sub: &SubGraph, mode: EmbeddingMode) -> Result<Vec<f64>> {
    if sub.features.ncols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "encoder expects {} input features, sub-graph has {}",
            params.input_dim(),
            sub.features.ncols()
        )));
    }
    let batch = GraphBatch::new(&[sub])?;
    let mut tape = Tape::inference();
    let enc = params.bind(&mut tape, "encoder");
    let out = enc.forward(&mut tape, &batch, mode, Pooling::Sum)?;
    Ok(tape.value(out).iter().copied().collect())
}
