//! Contrastive pre-training of the GIN encoder: InfoNCE over random-walk
//! sub-graph pairs with a momentum key encoder and a FIFO key queue.

use std::collections::VecDeque;
use std::path::Path;
use std::rc::Rc;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphView;
use crate::nn::{
    save_encoder, Adam, EmbeddingMode, EncoderConfig, EncoderParams, GraphBatch, Optimizer, Params, Pooling, Reduction,
    Tape, Var,
};
use crate::sampling::{contrastive_batch, rwr_subgraph, SamplerConfig};

/// Salt mixed into the run seed for encoder initialization. Pre-training and
/// fine-tuning from scratch both use it, so a run with zero pre-training
/// epochs starts from exactly the weights a fresh fine-tune would use.
const ENCODER_SALT: u64 = 0x5eed_e4c0_de00_0001;

pub fn init_encoder(cfg: EncoderConfig, seed: u64) -> Result<EncoderParams> {
    let cfg = EncoderConfig { edge_dim: None, ..cfg };
    EncoderParams::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed ^ ENCODER_SALT))
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.iter().map(|x| x / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// InfoNCE for one query: `-log(exp(q.k/tau) / sum_i exp(q.e_i/tau))`, the
/// sum running over the positive key and the negatives. All vectors are
/// L2-normalized first.
pub fn info_nce(e_q: &[f64], e_k: &[f64], negatives: &[Vec<f64>], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    if e_k.len() != e_q.len() || negatives.iter().any(|n| n.len() != e_q.len()) {
        return Err(Error::Shape("InfoNCE inputs differ in dimension".into()));
    }
    let q = unit(e_q);
    let pos = dot(&q, &unit(e_k)) / tau;
    let logits: Vec<f64> = std::iter::once(pos)
        .chain(negatives.iter().map(|n| dot(&q, &unit(n)) / tau))
        .collect();
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    Ok(lse - pos)
}

/// Batched InfoNCE on the tape. Row `i` of `queries` is positive with row
/// `i` of `keys`; the other rows of `keys` and all of `queue` are its
/// negatives. Keys carry no gradient. Returns the mean loss.
pub fn info_nce_on_tape(
    tape: &mut Tape,
    queries: Var,
    keys: &Array2<f64>,
    queue: &Array2<f64>,
    tau: f64,
) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    let b = tape.value(queries).nrows();
    if keys.nrows() != b {
        return Err(Error::Shape(format!("{b} queries but {} keys", keys.nrows())));
    }
    if queue.nrows() > 0 && queue.ncols() != keys.ncols() {
        return Err(Error::Shape("queue and keys differ in dimension".into()));
    }
    let mut all = Array2::zeros((b + queue.nrows(), keys.ncols()));
    all.slice_mut(s![..b, ..]).assign(&normalize_rows(keys));
    all.slice_mut(s![b.., ..]).assign(&normalize_rows(queue));
    let q = tape.l2_normalize_rows(queries);
    let k = tape.constant(all);
    let raw = tape.matmul_t(q, k)?;
    let logits = tape.scale(raw, 1.0 / tau);
    let targets: Rc<[usize]> = (0..b).collect();
    tape.softmax_cross_entropy(logits, &targets, Reduction::Mean)
}

pub fn normalize_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt().max(1e-12);
        row /= n;
    }
    out
}

/// Fixed-capacity FIFO of key embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyQueue {
    capacity: usize,
    dim: usize,
    rows: VecDeque<Vec<f64>>,
}

impl KeyQueue {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("queue capacity must be at least 1".into()));
        }
        Ok(KeyQueue {
            capacity,
            dim,
            rows: VecDeque::with_capacity(capacity),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends a batch, evicting the oldest entries beyond capacity.
    pub fn push(&mut self, keys: &Array2<f64>) -> Result<()> {
        if keys.nrows() > self.capacity {
            return Err(Error::Config(format!(
                "key batch of {} exceeds queue capacity {}",
                keys.nrows(),
                self.capacity
            )));
        }
        if keys.ncols() != self.dim {
            return Err(Error::Shape(format!(
                "key dim {} vs queue dim {}",
                keys.ncols(),
                self.dim
            )));
        }
        for row in keys.rows() {
            if self.rows.len() == self.capacity {
                self.rows.pop_front();
            }
            self.rows.push_back(row.to_vec());
        }
        Ok(())
    }

    /// Oldest entry first.
    pub fn to_matrix(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows.len(), self.dim));
        for (mut dst, src) in out.rows_mut().into_iter().zip(&self.rows) {
            dst.assign(&ndarray::ArrayView1::from(src.as_slice()));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct MoCoState {
    pub theta_q: EncoderParams,
    pub theta_k: EncoderParams,
    pub queue: KeyQueue,
    pub m: f64,
    pub tau: f64,
    pub optimizer: Adam,
}

impl MoCoState {
    /// `theta_k` starts as a copy of `theta_q`; the queue starts empty.
    pub fn new(theta_q: EncoderParams, m: f64, tau: f64, queue_size: usize, lr: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&m) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {m}")));
        }
        if !(tau > 0.0) {
            return Err(Error::Config(format!("temperature must be positive, got {tau}")));
        }
        let queue = KeyQueue::new(queue_size, theta_q.output_dim())?;
        Ok(MoCoState {
            theta_k: theta_q.clone(),
            theta_q,
            queue,
            m,
            tau,
            optimizer: Adam::with_lr(lr),
        })
    }

    /// `theta_k <- m theta_k + (1 - m) theta_q`, element-wise.
    pub fn momentum_update(&mut self) {
        let mut q = Vec::new();
        self.theta_q.visit("", &mut |_, a| q.push(a.clone()));
        let mut it = q.into_iter();
        let m = self.m;
        self.theta_k.visit_mut("", &mut |_, k| {
            let qa = it.next().expect("query and key encoders share a layout");
            ndarray::Zip::from(k)
                .and(&qa)
                .for_each(|k, &q| *k = m * *k + (1.0 - m) * q);
        });
    }

    pub fn queue_push(&mut self, keys: &Array2<f64>) -> Result<()> {
        self.queue.push(keys)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub tau: f64,
    pub momentum: f64,
    pub queue_size: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub layers: usize,
    pub mode: EmbeddingMode,
    pub pooling: Pooling,
    /// Caps the anchors drawn per epoch; `None` uses every node.
    pub anchors_per_epoch: Option<usize>,
    pub sampler: SamplerConfig,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 10,
            batch_size: 200,
            lr: 1e-6,
            tau: 0.07,
            momentum: 0.999,
            queue_size: 1024,
            hidden_dim: 16,
            output_dim: 16,
            layers: 3,
            mode: EmbeddingMode::Se,
            pooling: Pooling::Sum,
            anchors_per_epoch: None,
            sampler: SamplerConfig::default(),
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn encoder_config(&self, input_dim: usize) -> EncoderConfig {
        EncoderConfig {
            input_dim,
            hidden_dim: self.hidden_dim,
            output_dim: self.output_dim,
            layers: self.layers,
            edge_dim: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("pretrain batch_size must be at least 1".into()));
        }
        if self.batch_size > self.queue_size {
            return Err(Error::Config(format!(
                "pretrain batch_size {} exceeds queue_size {}",
                self.batch_size, self.queue_size
            )));
        }
        if !(self.lr >= 0.0) {
            return Err(Error::Config("pretrain lr must be non-negative".into()));
        }
        Ok(())
    }
}

/// One pass over `anchors` in batches of `cfg.batch_size`. For each batch:
/// sample positive pairs, encode queries with `theta_q` and keys with
/// `theta_k`, take an optimizer step on InfoNCE, apply the momentum update
/// and enqueue the keys. Returns the mean batch loss.
pub fn pretrain_epoch<R: Rng + ?Sized>(
    g: GraphView<'_>,
    features: &Array2<f64>,
    anchors: &[usize],
    state: &mut MoCoState,
    cfg: &PretrainConfig,
    rng: &mut R,
) -> Result<f64> {
    if anchors.is_empty() {
        return Err(Error::Config("no pre-training anchors".into()));
    }
    if state.queue.capacity() < cfg.batch_size.min(anchors.len()) {
        return Err(Error::Config("queue smaller than one batch".into()));
    }
    state.optimizer.config.lr = cfg.lr;
    let mut total = 0.0;
    let mut batches = 0;
    for chunk in anchors.chunks(cfg.batch_size.max(1)) {
        let pairs = contrastive_batch(g, features, chunk, &cfg.sampler, rng)?;
        let queries: Vec<_> = pairs.iter().map(|p| &p.0).collect();
        let keys: Vec<_> = pairs.iter().map(|p| &p.1).collect();
        let qb = GraphBatch::new(&queries)?;
        let kb = GraphBatch::new(&keys)?;

        let key_emb = {
            let mut tape = Tape::inference();
            let enc = state.theta_k.bind(&mut tape, "");
            let k = enc.forward(&mut tape, &kb, cfg.mode, cfg.pooling)?;
            normalize_rows(tape.value(k))
        };
        let mut tape = Tape::new();
        let enc = state.theta_q.bind(&mut tape, "");
        let q = enc.forward(&mut tape, &qb, cfg.mode, cfg.pooling)?;
        let loss = info_nce_on_tape(&mut tape, q, &key_emb, &state.queue.to_matrix(), state.tau)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Numeric(format!("InfoNCE loss became {value}")));
        }
        let grads = tape.backward(loss)?;
        state.optimizer.step(&mut state.theta_q, "", &grads)?;
        state.momentum_update();
        state.queue_push(&key_emb)?;
        total += value;
        batches += 1;
    }
    Ok(total / batches as f64)
}

/// Fills the queue with key embeddings of the leading `anchors` before any
/// training step, so the first batches already see a full set of negatives.
pub fn warm_queue<R: Rng + ?Sized>(
    g: GraphView<'_>,
    features: &Array2<f64>,
    anchors: &[usize],
    state: &mut MoCoState,
    cfg: &PretrainConfig,
    rng: &mut R,
) -> Result<()> {
    let take = state.queue.capacity().min(anchors.len());
    for chunk in anchors[..take].chunks(cfg.batch_size.max(1)) {
        let subs: Vec<_> = chunk
            .iter()
            .map(|&u| rwr_subgraph(g, features, u, &cfg.sampler, rng))
            .collect();
        let refs: Vec<_> = subs.iter().collect();
        let batch = GraphBatch::new(&refs)?;
        let mut tape = Tape::inference();
        let enc = state.theta_k.bind(&mut tape, "");
        let k = enc.forward(&mut tape, &batch, cfg.mode, cfg.pooling)?;
        state.queue_push(&normalize_rows(tape.value(k)))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub encoder: EncoderParams,
    pub epoch_losses: Vec<f64>,
}

/// Full pre-training run from a fresh encoder. Anchors are drawn from all
/// nodes (or from `anchor_pool` when given), reshuffled every epoch. With
/// `checkpoint_dir`, the query encoder is saved after every epoch.
pub fn pretrain(
    g: GraphView<'_>,
    features: &Array2<f64>,
    anchor_pool: Option<&[usize]>,
    cfg: &PretrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if features.nrows() != g.node_count() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} nodes",
            features.nrows(),
            g.node_count()
        )));
    }
    let encoder = init_encoder(cfg.encoder_config(features.ncols()), cfg.seed)?;
    let mut state = MoCoState::new(encoder, cfg.momentum, cfg.tau, cfg.queue_size, cfg.lr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pool: Vec<usize> = match anchor_pool {
        Some(p) => p.to_vec(),
        None => (0..g.node_count()).collect(),
    };
    if cfg.epochs > 0 {
        pool.shuffle(&mut rng);
        warm_queue(g, features, &pool, &mut state, cfg, &mut rng)?;
    }
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        pool.shuffle(&mut rng);
        let take = cfg.anchors_per_epoch.unwrap_or(pool.len()).min(pool.len());
        let loss = pretrain_epoch(g, features, &pool[..take], &mut state, cfg, &mut rng)?;
        log::info!("pretrain epoch {} loss {loss:.6}", epoch + 1);
        losses.push(loss);
        if let Some(dir) = checkpoint_dir {
            let meta = serde_json::json!({ "epoch": epoch + 1, "loss": loss, "pretrain": cfg });
            save_encoder(
                &dir.join(format!("pretrain_epoch{:03}.ckpt", epoch + 1)),
                &state.theta_q,
                meta,
            )?;
        }
    }
    Ok(PretrainOutcome {
        encoder: state.theta_q,
        epoch_losses: losses,
    })
}
