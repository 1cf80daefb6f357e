//! Embedding export for external plotting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::GraphView;
use crate::nn::{EmbeddingMode, EncoderParams, GraphBatch, Pooling, Tape};
use crate::sampling::{node_stream, rwr_subgraph, SamplerConfig, SubGraph};

/// Encoder embeddings of `nodes`, each from a sub-graph drawn on the node's
/// own seeded stream.
#[allow(clippy::too_many_arguments)]
pub fn encoder_embeddings(
    encoder: &EncoderParams,
    g: GraphView<'_>,
    features: &Array2<f64>,
    nodes: &[usize],
    mode: EmbeddingMode,
    pooling: Pooling,
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((nodes.len(), encoder.output_dim()));
    for (c, chunk) in nodes.chunks(256).enumerate() {
        let subs: Vec<SubGraph> = chunk
            .iter()
            .map(|&u| rwr_subgraph(g, features, u, sampler, &mut node_stream(seed, u)))
            .collect();
        let refs: Vec<&SubGraph> = subs.iter().collect();
        let batch = GraphBatch::new(&refs)?;
        let mut tape = Tape::inference();
        let enc = encoder.bind(&mut tape, "");
        let e = enc.forward(&mut tape, &batch, mode, pooling)?;
        out.slice_mut(ndarray::s![c * 256..c * 256 + chunk.len(), ..])
            .assign(tape.value(e));
    }
    Ok(out)
}

/// Rows `node_id<TAB>label<TAB>e_1 ... e_dim`; unknown labels print as -1.
pub fn export_embeddings(path: &Path, nodes: &[usize], labels: &[Option<u8>], emb: &Array2<f64>) -> Result<()> {
    if nodes.len() != emb.nrows() || labels.len() != nodes.len() {
        return Err(Error::Shape(format!(
            "{} nodes, {} labels, {} embedding rows",
            nodes.len(),
            labels.len(),
            emb.nrows()
        )));
    }
    if emb.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite embedding value".into()));
    }
    let mut out = BufWriter::new(File::create(path)?);
    for ((&u, y), row) in nodes.iter().zip(labels).zip(emb.rows()) {
        match y {
            Some(y) => write!(out, "{u}\t{y}")?,
            None => write!(out, "{u}\t-1")?,
        }
        for v in row {
            write!(out, "\t{v:?}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
