//! Planted-fraud generator for multi-entity graphs.
//!
//! Users are the target type. For each non-target type, a user links to at
//! most one entity: fraud ring members draw from a small pool private to
//! their ring with probability `share_rate_fraud`, anyone may link to a
//! popular entity from a global pool with probability `share_rate_benign`,
//! and otherwise the user gets an entity of its own (or, with probability
//! `missing_rate`, none at all).

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{LabeledSet, MultiEntityGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub non_target_types: Vec<String>,
    pub ring_count: usize,
    pub ring_size: usize,
    /// Private entities per type in each ring's pool.
    pub ring_pool: usize,
    pub share_rate_fraud: f64,
    pub share_rate_benign: f64,
    /// Users per popular entity, on average, when every user shared.
    pub popular_pool_occupancy: usize,
    pub missing_rate: f64,
    pub label_fraction: f64,
    /// Fraud share of the exposed labels; capped by the number of fraudsters.
    pub fraud_label_share: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 10_000,
            non_target_types: ["device", "ip", "address", "phone", "email"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            ring_count: 100,
            ring_size: 8,
            ring_pool: 2,
            share_rate_fraud: 0.6,
            share_rate_benign: 0.1,
            popular_pool_occupancy: 30,
            missing_rate: 0.2,
            label_fraction: 0.1,
            fraud_label_share: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Label scarcity close to production fraud data: 0.2% of users labeled.
    /// Fraud stays at half of the labels so every fold still sees both
    /// classes.
    pub fn scarce_labels() -> Self {
        SynthConfig {
            label_fraction: 0.002,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_users == 0 {
            return bad("n_users must be positive".into());
        }
        if self.non_target_types.is_empty() {
            return bad("at least one non-target type is required".into());
        }
        if self.ring_count.saturating_mul(self.ring_size) > self.n_users {
            return bad(format!(
                "{} rings of {} do not fit in {} users",
                self.ring_count, self.ring_size, self.n_users
            ));
        }
        if self.ring_pool == 0 || self.popular_pool_occupancy == 0 {
            return bad("pool sizes must be positive".into());
        }
        for (name, p) in [
            ("share_rate_fraud", self.share_rate_fraud),
            ("share_rate_benign", self.share_rate_benign),
            ("missing_rate", self.missing_rate),
            ("fraud_label_share", self.fraud_label_share),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(self.share_rate_fraud > self.share_rate_benign) {
            return bad("share_rate_fraud must exceed share_rate_benign".into());
        }
        if self.share_rate_fraud + self.missing_rate > 1.0 {
            return bad("share_rate_fraud + missing_rate exceeds 1".into());
        }
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return bad(format!(
                "label_fraction must lie in (0, 1], got {}",
                self.label_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub graph: MultiEntityGraph,
    /// Ground-truth label of every user (user `i` is node `i`).
    pub truth: Vec<u8>,
    /// Ring id of every fraudster, `None` for benign users.
    pub ring: Vec<Option<usize>>,
    /// Exposed labels, in node ids (which coincide for users in the
    /// multi-entity and single-entity graphs).
    pub labeled: LabeledSet,
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_users;
    let types = cfg.non_target_types.len();

    let fraud_count = cfg.ring_count * cfg.ring_size;
    let mut ring = vec![None; n];
    for (k, u) in index::sample(&mut rng, n, fraud_count).into_iter().enumerate() {
        ring[u] = Some(k / cfg.ring_size);
    }
    let truth: Vec<u8> = ring.iter().map(|r| u8::from(r.is_some())).collect();

    let mut node_type: Vec<usize> = vec![0; n];
    let mut edges: Vec<(usize, usize, Option<usize>)> = Vec::new();
    let new_entity = |t: usize, node_type: &mut Vec<usize>| {
        node_type.push(t + 1);
        node_type.len() - 1
    };

    let popular = (n / cfg.popular_pool_occupancy).max(1);
    for t in 0..types {
        let popular_ids: Vec<usize> = (0..popular).map(|_| new_entity(t, &mut node_type)).collect();
        let ring_ids: Vec<Vec<usize>> = (0..cfg.ring_count)
            .map(|_| (0..cfg.ring_pool).map(|_| new_entity(t, &mut node_type)).collect())
            .collect();
        for (u, &member) in ring.iter().enumerate() {
            let x: f64 = rng.random();
            let entity = match member {
                Some(r) if x < cfg.share_rate_fraud => Some(*ring_ids[r].choose(&mut rng).expect("pool")),
                _ => {
                    let y: f64 = rng.random();
                    if y < cfg.share_rate_benign {
                        Some(popular_ids[rng.random_range(0..popular)])
                    } else if y < cfg.share_rate_benign + cfg.missing_rate {
                        None
                    } else {
                        Some(new_entity(t, &mut node_type))
                    }
                }
            };
            if let Some(e) = entity {
                edges.push((u, e, None));
            }
        }
    }
    // entities nobody linked to are dropped by re-indexing
    let mut used = vec![false; node_type.len()];
    used[..n].iter_mut().for_each(|b| *b = true);
    for &(_, e, _) in &edges {
        used[e] = true;
    }
    let mut remap = vec![usize::MAX; node_type.len()];
    let mut kept_types = Vec::new();
    for (i, &t) in node_type.iter().enumerate() {
        if used[i] {
            remap[i] = kept_types.len();
            kept_types.push(t);
        }
    }
    let edges: Vec<_> = edges.into_iter().map(|(u, e, r)| (u, remap[e], r)).collect();

    let mut type_names = vec!["user".to_string()];
    type_names.extend(cfg.non_target_types.iter().cloned());
    let graph = MultiEntityGraph::new(type_names, 0, kept_types, &edges)?;

    let labeled = sample_labels(&truth, cfg, &mut rng)?;
    Ok(SyntheticData {
        graph,
        truth,
        ring,
        labeled,
    })
}

fn sample_labels(truth: &[u8], cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<LabeledSet> {
    let total = ((truth.len() as f64 * cfg.label_fraction).round() as usize).clamp(1, truth.len());
    let mut fraud: Vec<usize> = (0..truth.len()).filter(|&u| truth[u] == 1).collect();
    let mut benign: Vec<usize> = (0..truth.len()).filter(|&u| truth[u] == 0).collect();
    fraud.shuffle(rng);
    benign.shuffle(rng);
    let want_fraud = ((total as f64 * cfg.fraud_label_share).round() as usize).min(fraud.len());
    let want_benign = (total - want_fraud).min(benign.len());
    let mut entries: Vec<(usize, u8)> = fraud[..want_fraud]
        .iter()
        .map(|&u| (u, 1))
        .chain(benign[..want_benign].iter().map(|&u| (u, 0)))
        .collect();
    entries.sort_unstable();
    LabeledSet::new(entries, truth.len())
}
