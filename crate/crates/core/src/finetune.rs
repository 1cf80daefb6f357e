//! Supervised fine-tuning: edge-aware encoder, projection to the fine-tune
//! embedding size, and a two-class MLP head under softmax cross-entropy.

use std::path::Path;
use std::rc::Rc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphView, LabeledSet};
use crate::nn::params::join;
use crate::nn::{
    Adam, Checkpoint, EmbeddingMode, EncoderConfig, EncoderParams, GraphBatch, Linear, Mlp, Optimizer, Params, Pooling,
    Reduction, Tape, Var,
};
use crate::pretrain::init_encoder;
use crate::sampling::{node_stream, rwr_subgraph, SamplerConfig, SubGraph};

const HEAD_SALT: u64 = 0x5eed_4ead_0000_0002;

#[derive(Debug, Clone, PartialEq)]
pub struct FineTuneModel {
    pub encoder: EncoderParams,
    pub projection: Linear,
    pub head: Mlp,
}

impl FineTuneModel {
    /// Wraps `encoder` (pre-trained or fresh) with new edge projections,
    /// a projection to `dim` and a `dim -> dim -> 2` head, all drawn from
    /// `seed`.
    pub fn new(encoder: &EncoderParams, edge_dim: usize, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("fine-tune embedding dim must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ HEAD_SALT);
        let encoder = encoder
            .without_edge_projection()
            .with_edge_projection(edge_dim, &mut rng);
        let projection = Linear::new(encoder.output_dim(), dim, &mut rng);
        let head = Mlp::new(&[dim, dim, 2], &mut rng);
        Ok(FineTuneModel {
            encoder,
            projection,
            head,
        })
    }

    /// Fresh encoder initialized exactly as pre-training would start.
    pub fn fresh(encoder_cfg: EncoderConfig, edge_dim: usize, dim: usize, seed: u64) -> Result<Self> {
        let enc = init_encoder(encoder_cfg, seed)?;
        Self::new(&enc, edge_dim, dim, seed)
    }

    fn bind_logits(&self, tape: &mut Tape, batch: &GraphBatch, mode: EmbeddingMode, pooling: Pooling) -> Result<Var> {
        let enc = self.encoder.bind(tape, "encoder");
        let proj = self.projection.bind(tape, "projection");
        let head = self.head.bind(tape, "head");
        let nodes = enc.node_embeddings(tape, batch)?;
        let projected = proj.forward(tape, nodes)?;
        let emb = match mode {
            EmbeddingMode::Ne => tape.gather(projected, &batch.anchors)?,
            EmbeddingMode::Se => crate::nn::layers::readout_on_tape(tape, projected, &batch.segments, pooling)?,
        };
        head.forward(tape, emb)
    }

    /// Logits for every sub-graph in the batch, without gradients.
    pub fn logits(&self, subs: &[&SubGraph], mode: EmbeddingMode, pooling: Pooling) -> Result<Array2<f64>> {
        let batch = GraphBatch::new(subs)?;
        let mut tape = Tape::inference();
        let out = self.bind_logits(&mut tape, &batch, mode, pooling)?;
        Ok(tape.value(out).clone())
    }

    /// Projected embeddings (before the head) for every sub-graph.
    pub fn embeddings(&self, subs: &[&SubGraph], mode: EmbeddingMode, pooling: Pooling) -> Result<Array2<f64>> {
        let batch = GraphBatch::new(subs)?;
        let mut tape = Tape::inference();
        let enc = self.encoder.bind(&mut tape, "encoder");
        let proj = self.projection.bind(&mut tape, "projection");
        let nodes = enc.node_embeddings(&mut tape, &batch)?;
        let projected = proj.forward(&mut tape, nodes)?;
        let emb = match mode {
            EmbeddingMode::Ne => tape.gather(projected, &batch.anchors)?,
            EmbeddingMode::Se => crate::nn::layers::readout_on_tape(&mut tape, projected, &batch.segments, pooling)?,
        };
        Ok(tape.value(emb).clone())
    }

    /// Summed cross-entropy of the batch on a recording tape.
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape,
        subs: &[&SubGraph],
        labels: &[u8],
        mode: EmbeddingMode,
        pooling: Pooling,
    ) -> Result<Var> {
        let batch = GraphBatch::new(subs)?;
        let logits = self.bind_logits(tape, &batch, mode, pooling)?;
        let targets: Rc<[usize]> = labels.iter().map(|&y| y as usize).collect();
        tape.softmax_cross_entropy(logits, &targets, Reduction::Sum)
    }
}

impl Params for FineTuneModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Array2<f64>)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.projection.visit(&join(prefix, "projection"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Array2<f64>)) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.projection.visit_mut(&join(prefix, "projection"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Class probabilities for one sub-graph.
pub fn classify_forward(model: &FineTuneModel, sub: &SubGraph, mode: EmbeddingMode) -> Result<[f64; 2]> {
    let logits = model.logits(&[sub], mode, Pooling::Sum)?;
    let p = softmax(&logits.row(0).to_vec());
    Ok([p[0], p[1]])
}

/// `-ln p(label)`, with the probability clamped at 1e-12.
pub fn cross_entropy(probs: &[f64; 2], label: u8) -> f64 {
    -probs[label as usize].max(1e-12).ln()
}

pub fn batch_cross_entropy(probs: &[[f64; 2]], labels: &[u8]) -> f64 {
    probs.iter().zip(labels).map(|(p, &y)| cross_entropy(p, y)).sum()
}

/// Argmax with ties going to class 0.
pub fn argmax(probs: &[f64; 2]) -> u8 {
    u8::from(probs[1] > probs[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub dim: usize,
    pub lr: f64,
    pub mode: EmbeddingMode,
    pub pooling: Pooling,
    /// Draw a new sub-graph per labeled node every epoch; otherwise the
    /// first epoch's samples are reused.
    pub resample: bool,
    pub sampler: SamplerConfig,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            epochs: 20,
            batch_size: 100,
            dim: 32,
            lr: 1e-5,
            mode: EmbeddingMode::Se,
            pooling: Pooling::Sum,
            resample: true,
            sampler: SamplerConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    /// Summed training loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch training on the labeled nodes. Gradients reach the encoder,
/// the projection and the head.
pub fn finetune_fit(
    model: &mut FineTuneModel,
    g: GraphView<'_>,
    features: &Array2<f64>,
    labeled: &LabeledSet,
    cfg: &FinetuneConfig,
) -> Result<FitReport> {
    cfg.sampler.validate()?;
    let [neg, pos] = labeled.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::Config(
            "fine-tuning needs both classes in the training set".into(),
        ));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("fine-tune batch_size must be at least 1".into()));
    }
    if features.nrows() != g.node_count() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} nodes",
            features.nrows(),
            g.node_count()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::with_lr(cfg.lr);
    let mut entries: Vec<(usize, u8)> = labeled.entries().to_vec();
    let mut frozen: Option<Vec<SubGraph>> = None;
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        entries.shuffle(&mut rng);
        let subs: Vec<SubGraph> = match (&frozen, cfg.resample) {
            (Some(s), false) => {
                // keep the node -> sub-graph pairing when reusing samples
                let by_node: std::collections::HashMap<usize, &SubGraph> = s.iter().map(|x| (x.anchor, x)).collect();
                entries.iter().map(|(u, _)| by_node[u].clone()).collect()
            }
            _ => entries
                .iter()
                .map(|&(u, _)| rwr_subgraph(g, features, u, &cfg.sampler, &mut rng))
                .collect(),
        };
        if !cfg.resample && frozen.is_none() {
            frozen = Some(subs.clone());
        }
        let mut total = 0.0;
        for (chunk, lab) in subs.chunks(cfg.batch_size).zip(entries.chunks(cfg.batch_size)) {
            let refs: Vec<&SubGraph> = chunk.iter().collect();
            let labels: Vec<u8> = lab.iter().map(|e| e.1).collect();
            let mut tape = Tape::new();
            let loss = model.loss_on_tape(&mut tape, &refs, &labels, cfg.mode, cfg.pooling)?;
            total += tape.scalar(loss);
            let grads = tape.backward(loss)?;
            opt.step(model, "", &grads)?;
        }
        log::debug!("finetune epoch loss {total:.6}");
        losses.push(total);
    }
    Ok(FitReport { epoch_losses: losses })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub node: usize,
    pub label: u8,
    pub p_fraud: f64,
}

/// Predicted label and fraud probability per node. Each node's sub-graph is
/// drawn from its own seeded stream, so results do not depend on the order
/// or grouping of `nodes`.
pub fn predict(
    model: &FineTuneModel,
    g: GraphView<'_>,
    features: &Array2<f64>,
    nodes: &[usize],
    cfg: &FinetuneConfig,
) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(nodes.len());
    for chunk in nodes.chunks(cfg.batch_size.max(1)) {
        let subs: Vec<SubGraph> = chunk
            .iter()
            .map(|&u| {
                let mut rng = node_stream(cfg.seed, u);
                rwr_subgraph(g, features, u, &cfg.sampler, &mut rng)
            })
            .collect();
        let refs: Vec<&SubGraph> = subs.iter().collect();
        let logits = model.logits(&refs, cfg.mode, cfg.pooling)?;
        for (&u, row) in chunk.iter().zip(logits.rows()) {
            let p = softmax(&row.to_vec());
            let probs = [p[0], p[1]];
            out.push(Prediction {
                node: u,
                label: argmax(&probs),
                p_fraud: probs[1],
            });
        }
    }
    Ok(out)
}

/// Embeddings of `nodes` under the same per-node sampling as [`predict`].
pub fn embed_nodes(
    model: &FineTuneModel,
    g: GraphView<'_>,
    features: &Array2<f64>,
    nodes: &[usize],
    cfg: &FinetuneConfig,
) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((nodes.len(), model.projection.output_dim()));
    let mut row = 0;
    for chunk in nodes.chunks(cfg.batch_size.max(1)) {
        let subs: Vec<SubGraph> = chunk
            .iter()
            .map(|&u| {
                let mut rng = node_stream(cfg.seed, u);
                rwr_subgraph(g, features, u, &cfg.sampler, &mut rng)
            })
            .collect();
        let refs: Vec<&SubGraph> = subs.iter().collect();
        let e = model.embeddings(&refs, cfg.mode, cfg.pooling)?;
        out.slice_mut(ndarray::s![row..row + chunk.len(), ..]).assign(&e);
        row += chunk.len();
    }
    Ok(out)
}

/// Saves a fine-tuned model. The architecture goes under `config.model`,
/// caller metadata under `config.meta`.
pub fn save_model(path: &Path, model: &FineTuneModel, meta: serde_json::Value) -> Result<()> {
    let config = serde_json::json!({
        "model": {
            "encoder": model.encoder.without_edge_projection().config(),
            "edge_dim": model.encoder.config().edge_dim,
            "dim": model.projection.output_dim(),
        },
        "meta": meta,
    });
    Checkpoint::capture(config, model).save(path)
}

pub fn load_model(path: &Path) -> Result<(FineTuneModel, serde_json::Value)> {
    let ck = Checkpoint::load(path)?;
    let spec = &ck.config["model"];
    let cfg: EncoderConfig = serde_json::from_value(spec["encoder"].clone())
        .map_err(|e| Error::Checkpoint(format!("model encoder config: {e}")))?;
    let field = |name: &str| {
        spec[name]
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| Error::Checkpoint(format!("model config lacks `{name}`")))
    };
    let mut model = FineTuneModel::fresh(cfg, field("edge_dim")?, field("dim")?, 0)?;
    ck.restore_into(&mut model)?;
    Ok((model, ck.config["meta"].clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy(&[0.0, 1.0], 1), 0.0);
        assert!((cross_entropy(&[0.5, 0.5], 0) - 2f64.ln()).abs() < 1e-15);
        let b = batch_cross_entropy(&[[0.1, 0.9], [0.25, 0.75]], &[1, 0]);
        assert!((b - 1.4917).abs() < 1e-4);
        assert!(cross_entropy(&[1.0, 0.0], 1).is_finite());
    }

    #[test]
    fn model_round_trip() {
        let cfg = EncoderConfig {
            input_dim: 3,
            hidden_dim: 4,
            output_dim: 5,
            layers: 2,
            edge_dim: None,
        };
        let model = FineTuneModel::fresh(cfg, 2, 6, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_model(&path, &model, serde_json::json!({ "tag": 1 })).unwrap();
        let (back, meta) = load_model(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(meta["tag"], 1);
    }

    #[test]
    fn argmax_tie_goes_to_zero() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.4, 0.6]), 1);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, -1000.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
    }
}
