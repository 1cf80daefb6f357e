//! The evaluation grid: graph variant x embedding mode x feature method x
//! pre-training, each cell scored by stratified k-fold micro-F1.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::kfold::{kfold_split, micro_f1, verify_folds};
use super::synth::{generate_synthetic, SynthConfig};
use crate::error::{Error, Result};
use crate::features::{initialize, FeatureConfig, FeatureMethod};
use crate::finetune::{finetune_fit, predict, FineTuneModel, FinetuneConfig};
use crate::graph::{transform_to_single_entity, GraphView, LabeledSet, MultiEntityGraph, TransformConfig};
use crate::nn::{EmbeddingMode, EncoderParams};
use crate::pretrain::{pretrain, PretrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Multi,
    Single,
}

impl GraphKind {
    pub fn name(self) -> &'static str {
        match self {
            GraphKind::Multi => "multi",
            GraphKind::Single => "single",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub folds: usize,
    pub seeds: Vec<u64>,
    pub graphs: Vec<GraphKind>,
    pub modes: Vec<EmbeddingMode>,
    pub methods: Vec<FeatureMethod>,
    /// Pre-training variants to score; `[false, true]` is the full grid.
    pub pretrain_variants: Vec<bool>,
    pub features: FeatureConfig,
    pub transform: TransformConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 5,
            seeds: vec![0],
            graphs: vec![GraphKind::Multi, GraphKind::Single],
            modes: vec![EmbeddingMode::Ne, EmbeddingMode::Se],
            methods: FeatureMethod::ALL.to_vec(),
            pretrain_variants: vec![false, true],
            features: FeatureConfig::default(),
            transform: TransformConfig::default(),
            pretrain: PretrainConfig::default(),
            finetune: FinetuneConfig::default(),
        }
    }
}

impl EvalConfig {
    /// Settings sized for a full synthetic grid on a single core in
    /// minutes: small sub-graphs, capped pre-training anchors, and learning
    /// rates large enough to move in few epochs.
    pub fn desk_preset() -> Self {
        let mut cfg = EvalConfig {
            seeds: vec![0, 1, 2],
            ..Default::default()
        };
        cfg.features.eigen.k = 16;
        cfg.pretrain.epochs = 10;
        cfg.pretrain.lr = 1e-3;
        cfg.pretrain.anchors_per_epoch = Some(1000);
        cfg.pretrain.sampler.max_nodes = 16;
        cfg.finetune.epochs = 10;
        cfg.finetune.lr = 5e-3;
        cfg.finetune.sampler.max_nodes = 16;
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub graph: GraphKind,
    pub mode: EmbeddingMode,
    pub method: FeatureMethod,
    pub pretrained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    #[serde(flatten)]
    pub key: CellKey,
    /// One score per (seed, fold), seeds outer.
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub cells: Vec<CellResult>,
    pub seeds: Vec<u64>,
    pub folds: usize,
    pub config: serde_json::Value,
}

impl ExperimentResult {
    pub fn cell(
        &self,
        graph: GraphKind,
        mode: EmbeddingMode,
        method: FeatureMethod,
        pretrained: bool,
    ) -> Option<&CellResult> {
        let key = CellKey {
            graph,
            mode,
            method,
            pretrained,
        };
        self.cells.iter().find(|c| c.key == key)
    }

    pub fn mean(&self, graph: GraphKind, mode: EmbeddingMode, method: FeatureMethod, pretrained: bool) -> Option<f64> {
        self.cell(graph, mode, method, pretrained)
            .filter(|c| c.error.is_none())
            .map(|c| c.mean)
    }

    /// Best mean over the successful cells of one graph variant.
    pub fn best(&self, graph: GraphKind) -> Option<f64> {
        self.cells
            .iter()
            .filter(|c| c.key.graph == graph && c.error.is_none())
            .map(|c| c.mean)
            .max_by(f64::total_cmp)
    }

    /// Aligned text table: one row per feature method and pre-training
    /// variant, one column per graph variant and embedding mode.
    pub fn render_table(&self) -> String {
        let mut columns: Vec<(GraphKind, EmbeddingMode)> = Vec::new();
        let mut rows: Vec<(FeatureMethod, bool)> = Vec::new();
        for c in &self.cells {
            if !columns.contains(&(c.key.graph, c.key.mode)) {
                columns.push((c.key.graph, c.key.mode));
            }
            if !rows.contains(&(c.key.method, c.key.pretrained)) {
                rows.push((c.key.method, c.key.pretrained));
            }
        }
        columns.sort();
        rows.sort_by_key(|&(m, p)| (FeatureMethod::ALL.iter().position(|&x| x == m), p));
        let mut out = String::new();
        let _ = write!(out, "{:<10} {:<3}", "feature", "PT");
        for (g, m) in &columns {
            let _ = write!(out, " | {:>9}", format!("{} {}", g.name(), m.name()));
        }
        out.push('\n');
        let _ = writeln!(out, "{}", "-".repeat(14 + 12 * columns.len()));
        for &(method, pt) in &rows {
            let _ = write!(out, "{:<10} {:<3}", method.name(), if pt { "yes" } else { "no" });
            for &(g, m) in &columns {
                let cell = match self.cell(g, m, method, pt) {
                    Some(c) if c.error.is_none() => format!("{:.4}", c.mean),
                    Some(_) => "failed".to_string(),
                    None => "-".to_string(),
                };
                let _ = write!(out, " | {cell:>9}");
            }
            out.push('\n');
        }
        out
    }

    /// Tab-separated cell listing with per-fold scores.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("graph\tmode\tfeature\tpretrain\tmean\tfold_scores\terror\n");
        for c in &self.cells {
            let scores: Vec<String> = c.fold_scores.iter().map(|s| format!("{s:?}")).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:?}\t{}\t{}",
                c.key.graph.name(),
                c.key.mode.name(),
                c.key.method.name(),
                c.key.pretrained,
                c.mean,
                scores.join(","),
                c.error.as_deref().unwrap_or("")
            );
        }
        out
    }
}

/// One evaluation input: a graph view, its anchor pool and labels in its
/// own node ids.
struct Variant<'a> {
    view: GraphView<'a>,
    labeled: LabeledSet,
    pool: Vec<usize>,
}

fn remap_labels(labeled: &LabeledSet, map: &HashMap<usize, usize>, node_count: usize) -> Result<LabeledSet> {
    let entries = labeled
        .entries()
        .iter()
        .map(|&(u, y)| {
            map.get(&u)
                .map(|&v| (v, y))
                .ok_or_else(|| Error::InvalidLabels(format!("labeled node {u} is not a target entity")))
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledSet::new(entries, node_count)
}

type Scores = HashMap<CellKey, Result<Vec<f64>>>;

fn score_cells(kind: GraphKind, variant: &Variant<'_>, cfg: &EvalConfig, seed: u64, scores: &mut Scores) {
    let folds = match kfold_split(&variant.labeled, cfg.folds, seed, variant.view.node_count())
        .and_then(|f| verify_folds(&variant.labeled, &f).map(|_| f))
    {
        Ok(f) => f,
        Err(e) => {
            let msg = e.to_string();
            for &method in &cfg.methods {
                for &mode in &cfg.modes {
                    for &pt in &cfg.pretrain_variants {
                        let key = CellKey {
                            graph: kind,
                            mode,
                            method,
                            pretrained: pt,
                        };
                        scores.insert(key, Err(Error::InvalidLabels(msg.clone())));
                    }
                }
            }
            return;
        }
    };
    for &method in &cfg.methods {
        let start = Instant::now();
        let fcfg = FeatureConfig {
            method,
            seed,
            ..cfg.features.clone()
        };
        let features = initialize(variant.view.adjacency, &fcfg).map(|f| f.into_values());
        let pcfg = PretrainConfig {
            seed,
            ..cfg.pretrain.clone()
        };
        let encoder: Option<Result<EncoderParams>> = cfg.pretrain_variants.contains(&true).then(|| {
            let x = features.as_ref().map_err(|e| Error::Numeric(e.to_string()))?;
            pretrain(variant.view, x, Some(&variant.pool), &pcfg, None).map(|o| o.encoder)
        });
        for &mode in &cfg.modes {
            for &pt in &cfg.pretrain_variants {
                let key = CellKey {
                    graph: kind,
                    mode,
                    method,
                    pretrained: pt,
                };
                let result = (|| {
                    let x = features.as_ref().map_err(|e| Error::Numeric(e.to_string()))?;
                    let enc = if pt {
                        Some(
                            encoder
                                .as_ref()
                                .expect("pre-trained above")
                                .as_ref()
                                .map_err(|e| Error::Numeric(e.to_string()))?,
                        )
                    } else {
                        None
                    };
                    run_folds(variant, x, &folds, enc, &pcfg, cfg, mode, seed)
                })();
                if let Err(e) = &result {
                    log::warn!("cell {key:?} seed {seed} failed: {e}");
                }
                let entry = scores.entry(key).or_insert_with(|| Ok(Vec::new()));
                match (entry.as_mut(), result) {
                    (Ok(acc), Ok(s)) => acc.extend(s),
                    (Ok(_), Err(e)) => *entry = Err(e),
                    (Err(_), _) => {}
                }
            }
        }
        log::info!(
            "{} {} seed {seed}: {:.1}s",
            kind.name(),
            method.name(),
            start.elapsed().as_secs_f64()
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn run_folds(
    variant: &Variant<'_>,
    features: &Array2<f64>,
    folds: &[super::kfold::Fold],
    pretrained: Option<&EncoderParams>,
    pcfg: &PretrainConfig,
    cfg: &EvalConfig,
    mode: EmbeddingMode,
    seed: u64,
) -> Result<Vec<f64>> {
    let edge_dim = variant.view.edge_dim;
    let mut out = Vec::with_capacity(folds.len());
    for (f, fold) in folds.iter().enumerate() {
        let fseed = seed.wrapping_mul(1_000_003).wrapping_add(f as u64);
        let ft = FinetuneConfig {
            mode,
            seed: fseed,
            ..cfg.finetune.clone()
        };
        let mut model = match pretrained {
            Some(enc) => FineTuneModel::new(enc, edge_dim, ft.dim, fseed)?,
            None => FineTuneModel::fresh(pcfg.encoder_config(features.ncols()), edge_dim, ft.dim, fseed)?,
        };
        finetune_fit(&mut model, variant.view, features, &fold.train, &ft)?;
        let nodes = fold.test.nodes();
        if let Some(&u) = nodes.iter().find(|u| variant.pool.binary_search(u).is_err()) {
            return Err(Error::InvalidLabels(format!("node {u} is not a target entity")));
        }
        let preds = predict(&model, variant.view, features, &nodes, &ft)?;
        let pred: Vec<u8> = preds.iter().map(|p| p.label).collect();
        let truth: Vec<u8> = fold.test.entries().iter().map(|e| e.1).collect();
        out.push(micro_f1(&pred, &truth)?);
    }
    Ok(out)
}

/// Scores every configured cell on one dataset. `labeled` uses
/// multi-entity node ids.
pub fn run_grid_seed(
    multi: &MultiEntityGraph,
    labeled: &LabeledSet,
    cfg: &EvalConfig,
    seed: u64,
    scores: &mut Scores,
) -> Result<()> {
    for &kind in &cfg.graphs {
        match kind {
            GraphKind::Multi => {
                let variant = Variant {
                    view: multi.view(),
                    labeled: labeled.clone(),
                    pool: multi.target_nodes(),
                };
                score_cells(kind, &variant, cfg, seed, scores);
            }
            GraphKind::Single => {
                let (single, summary) = transform_to_single_entity(multi, &cfg.transform);
                if !summary.skipped_hubs.is_empty() {
                    log::info!("transform skipped {} hub entities", summary.skipped_hubs.len());
                }
                let map: HashMap<usize, usize> = single.origin().iter().enumerate().map(|(i, &o)| (o, i)).collect();
                let variant = Variant {
                    view: single.view(),
                    labeled: remap_labels(labeled, &map, single.node_count())?,
                    pool: (0..single.node_count()).collect(),
                };
                score_cells(kind, &variant, cfg, seed, scores);
            }
        }
    }
    Ok(())
}

fn assemble(scores: Scores, cfg: &EvalConfig, config: serde_json::Value) -> ExperimentResult {
    let mut cells: Vec<CellResult> = scores
        .into_iter()
        .map(|(key, r)| match r {
            Ok(s) => CellResult {
                key,
                mean: s.iter().sum::<f64>() / s.len().max(1) as f64,
                fold_scores: s,
                error: None,
            },
            Err(e) => CellResult {
                key,
                fold_scores: Vec::new(),
                mean: f64::NAN,
                error: Some(e.to_string()),
            },
        })
        .collect();
    cells.sort_by_key(|c| c.key);
    ExperimentResult {
        cells,
        seeds: cfg.seeds.clone(),
        folds: cfg.folds,
        config,
    }
}

/// The grid on a fixed dataset, once per configured seed.
pub fn run_grid(multi: &MultiEntityGraph, labeled: &LabeledSet, cfg: &EvalConfig) -> Result<ExperimentResult> {
    let mut scores = Scores::new();
    for &seed in &cfg.seeds {
        run_grid_seed(multi, labeled, cfg, seed, &mut scores)?;
    }
    let config = serde_json::json!({ "eval": cfg });
    Ok(assemble(scores, cfg, config))
}

/// The grid on freshly generated synthetic data, one dataset per seed.
pub fn run_synthetic_grid(synth: &SynthConfig, cfg: &EvalConfig) -> Result<ExperimentResult> {
    let mut scores = Scores::new();
    for &seed in &cfg.seeds {
        let data = generate_synthetic(&SynthConfig {
            seed: synth.seed.wrapping_add(seed),
            ..synth.clone()
        })?;
        run_grid_seed(&data.graph, &data.labeled, cfg, seed, &mut scores)?;
    }
    let config = serde_json::json!({ "synth": synth, "eval": cfg });
    Ok(assemble(scores, cfg, config))
}
