//! One function per sub-command. Each reads its inputs, runs the module and
//! records what it wrote in a [`Run`], which becomes the manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use graphfraud_core::eval::{encoder_embeddings, export_embeddings, generate_synthetic, run_grid};
use graphfraud_core::features::{initialize, read_features, write_features, FeatureMatrix};
use graphfraud_core::finetune::{embed_nodes, finetune_fit, load_model, predict, save_model, FineTuneModel};
use graphfraud_core::graph::io::{
    load_labels, load_multi_entity_graph, read_single_entity_graph, write_labels, write_multi_entity_graph,
    write_single_entity_graph,
};
use graphfraud_core::graph::stats::transform_stats;
use graphfraud_core::graph::{transform_to_single_entity, LabeledSet, SingleEntityGraph};
use graphfraud_core::nn::{load_encoder, save_encoder, Checkpoint};
use graphfraud_core::pretrain::pretrain;
use graphfraud_core::{Error, Result};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{PipelineConfig, Resolved};

/// File names inside the output directory.
pub const EDGES: &str = "edges.tsv";
pub const TYPES: &str = "types.tsv";
pub const LABELS: &str = "labels.tsv";
pub const TRUTH: &str = "truth.tsv";
pub const SINGLE: &str = "single.tsv";
pub const TRANSFORM: &str = "transform.json";
pub const FEATURES: &str = "features.tsv";
pub const ENCODER: &str = "encoder.ckpt";
pub const PRETRAIN_DIR: &str = "pretrain";
pub const PRETRAIN_LOSSES: &str = "pretrain_losses.tsv";
pub const MODEL: &str = "model.ckpt";
pub const FINETUNE_LOSSES: &str = "finetune_losses.tsv";
pub const PREDICTIONS: &str = "predictions.tsv";
pub const RESULTS_TXT: &str = "results.txt";
pub const RESULTS_TSV: &str = "results.tsv";
pub const RESULTS_JSON: &str = "results.json";
pub const EMBEDDINGS: &str = "embeddings.tsv";

pub struct Run {
    pub command: &'static str,
    pub cfg: PipelineConfig,
    pub res: Resolved,
    pub hash: String,
    pub artifacts: Vec<PathBuf>,
}

impl Run {
    pub fn new(command: &'static str, cfg: PipelineConfig) -> Self {
        let res = cfg.resolved();
        let hash = cfg.hash();
        Run {
            command,
            cfg,
            res,
            hash,
            artifacts: Vec::new(),
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.paths.out(name)
    }

    fn stamp_line(&self) -> String {
        format!("# config_hash={}\n", self.hash)
    }

    /// Writes a text artifact whose first line carries the config hash.
    fn write_text(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.out(name);
        fs::write(&path, format!("{}{body}", self.stamp_line()))?;
        self.artifacts.push(path.clone());
        Ok(path)
    }

    /// Prepends the hash line to a text file produced by a library writer.
    fn stamp(&mut self, path: PathBuf) -> Result<()> {
        let body = fs::read_to_string(&path)?;
        fs::write(&path, format!("{}{body}", self.stamp_line()))?;
        self.artifacts.push(path);
        Ok(())
    }

    fn write_json(&mut self, name: &str, mut value: serde_json::Value) -> Result<()> {
        value["config_hash"] = json!(self.hash);
        let text = serde_json::to_string_pretty(&value).map_err(|e| Error::Numeric(e.to_string()))?;
        self.write_text_raw(name, &(text + "\n"))
    }

    fn write_text_raw(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.out(name);
        fs::write(&path, body)?;
        self.artifacts.push(path);
        Ok(())
    }

    fn meta(&self) -> serde_json::Value {
        json!({ "config_hash": self.hash, "command": self.command })
    }

    /// Run manifest: command, hash, seed, versions, the full configuration
    /// and a digest of every artifact.
    pub fn write_manifest(&self, threads: usize) -> Result<PathBuf> {
        let mut artifacts = Vec::new();
        for path in &self.artifacts {
            let digest = Sha256::digest(fs::read(path)?);
            let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
            let name = path.strip_prefix(&self.cfg.paths.output).unwrap_or(path);
            artifacts.push(json!({ "path": name, "sha256": hex }));
        }
        let manifest = json!({
            "command": self.command,
            "config_hash": self.hash,
            "seed": self.cfg.seed,
            "threads": threads,
            "versions": {
                "graphfraud": env!("CARGO_PKG_VERSION"),
                "checkpoint_format": graphfraud_core::nn::checkpoint::FORMAT_VERSION,
            },
            "config": self.cfg,
            "artifacts": artifacts,
        });
        let path = self.out(&format!("manifest.{}.json", self.command));
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Numeric(e.to_string()))?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} `{}` does not exist", path.display())))
    }
}

fn load_single(run: &Run) -> Result<SingleEntityGraph> {
    let path = run.out(SINGLE);
    require(&path, "single-entity graph (run `transform` first)")?;
    read_single_entity_graph(&path)
}

fn load_features(run: &Run, g: &SingleEntityGraph) -> Result<FeatureMatrix> {
    let path = run.out(FEATURES);
    require(&path, "feature file (run `featurize` first)")?;
    let x = read_features(&path)?;
    if x.rows() != g.node_count() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} nodes",
            x.rows(),
            g.node_count()
        )));
    }
    Ok(x)
}

fn load_single_labels(g: &SingleEntityGraph, path: &Path) -> Result<LabeledSet> {
    require(path, "label file")?;
    load_labels(path, g.origin())
}

pub fn synth(run: &mut Run) -> Result<()> {
    let data = generate_synthetic(&run.res.synth)?;
    let g = &data.graph;
    let (edges, types) = (run.out(EDGES), run.out(TYPES));
    write_multi_entity_graph(g, &edges, &types)?;
    run.stamp(edges)?;
    run.stamp(types)?;
    let identity: Vec<usize> = (0..g.node_count()).collect();
    let labels = run.out(LABELS);
    write_labels(&labels, &data.labeled, &identity)?;
    run.stamp(labels)?;
    let truth: String = data
        .truth
        .iter()
        .enumerate()
        .map(|(u, y)| format!("{u}\t{y}\n"))
        .collect();
    run.write_text(TRUTH, &truth)?;
    log::info!(
        "synthetic graph: {} nodes, {} users, {} labeled",
        g.node_count(),
        data.truth.len(),
        data.labeled.len()
    );
    Ok(())
}

pub fn transform(run: &mut Run) -> Result<()> {
    let p = &run.cfg.paths;
    let (edges, types) = (p.graph(), p.types());
    require(&edges, "edge list")?;
    require(&types, "node type file")?;
    let multi = load_multi_entity_graph(&edges, &types, &p.target_type)?;
    let (single, summary) = transform_to_single_entity(&multi, &run.cfg.transform);
    let path = run.out(SINGLE);
    write_single_entity_graph(&single, &path)?;
    run.stamp(path)?;
    let stats = transform_stats(&multi, &single);
    run.write_json(TRANSFORM, json!({ "stats": stats, "summary": summary }))?;
    log::info!(
        "single-entity graph: {} nodes, {} edges ({} hubs skipped)",
        single.node_count(),
        single.adjacency().edge_count(),
        summary.skipped_hubs.len()
    );
    Ok(())
}

pub fn featurize(run: &mut Run) -> Result<()> {
    let g = load_single(run)?;
    let x = initialize(g.adjacency(), &run.res.features)?;
    let path = run.out(FEATURES);
    write_features(&path, &x, &run.hash)?;
    run.artifacts.push(path);
    log::info!("features: {} x {} ({})", x.rows(), x.dim(), x.description());
    Ok(())
}

pub fn pretrain_cmd(run: &mut Run) -> Result<()> {
    let g = load_single(run)?;
    let x = load_features(run, &g)?;
    let dir = run.out(PRETRAIN_DIR);
    fs::create_dir_all(&dir)?;
    let outcome = pretrain(g.view(), x.values(), None, &run.res.pretrain, Some(&dir))?;
    // re-save the per-epoch checkpoints with the config hash in their metadata
    for epoch in 1..=outcome.epoch_losses.len() {
        let path = dir.join(format!("pretrain_epoch{epoch:03}.ckpt"));
        let mut ck = Checkpoint::load(&path)?;
        ck.config["meta"]["config_hash"] = json!(run.hash);
        ck.save(&path)?;
        run.artifacts.push(path);
    }
    let mut meta = run.meta();
    meta["epoch_losses"] = json!(outcome.epoch_losses);
    let path = run.out(ENCODER);
    save_encoder(&path, &outcome.encoder, meta)?;
    run.artifacts.push(path);
    let losses: String = outcome
        .epoch_losses
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{}\t{l:?}\n", i + 1))
        .collect();
    run.write_text(PRETRAIN_LOSSES, &format!("epoch\tloss\n{losses}"))?;
    Ok(())
}

pub fn finetune_cmd(run: &mut Run) -> Result<()> {
    let g = load_single(run)?;
    let x = load_features(run, &g)?;
    let labeled = load_single_labels(&g, &run.cfg.paths.labels())?;
    let ft = &run.res.finetune.clone();
    let mut model = if run.cfg.use_pretrained {
        let path = run.out(ENCODER);
        require(
            &path,
            "pre-trained encoder (run `pretrain` first or set use_pretrained = false)",
        )?;
        let (enc, _) = load_encoder(&path)?;
        if enc.input_dim() != x.dim() {
            return Err(Error::Shape(format!(
                "encoder expects {} input features, feature file has {}",
                enc.input_dim(),
                x.dim()
            )));
        }
        FineTuneModel::new(&enc, g.edge_dim(), ft.dim, ft.seed)?
    } else {
        FineTuneModel::fresh(run.res.pretrain.encoder_config(x.dim()), g.edge_dim(), ft.dim, ft.seed)?
    };
    let report = finetune_fit(&mut model, g.view(), x.values(), &labeled, ft)?;
    let path = run.out(MODEL);
    let mut meta = run.meta();
    meta["epoch_losses"] = json!(report.epoch_losses);
    save_model(&path, &model, meta)?;
    run.artifacts.push(path);
    let losses: String = report
        .epoch_losses
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{}\t{l:?}\n", i + 1))
        .collect();
    run.write_text(FINETUNE_LOSSES, &format!("epoch\tloss\n{losses}"))?;

    let nodes: Vec<usize> = (0..g.node_count()).collect();
    let preds = predict(&model, g.view(), x.values(), &nodes, ft)?;
    let mut body = String::from("node\tlabel\tp_fraud\n");
    for p in &preds {
        body.push_str(&format!("{}\t{}\t{:?}\n", g.origin()[p.node], p.label, p.p_fraud));
    }
    run.write_text(PREDICTIONS, &body)?;
    Ok(())
}

pub fn eval(run: &mut Run) -> Result<()> {
    let p = &run.cfg.paths;
    let (edges, types, labels) = (p.graph(), p.types(), p.labels());
    require(&edges, "edge list")?;
    require(&types, "node type file")?;
    require(&labels, "label file")?;
    let multi = load_multi_entity_graph(&edges, &types, &p.target_type)?;
    let identity: Vec<usize> = (0..multi.node_count()).collect();
    let labeled = load_labels(&labels, &identity)?;
    let result = run_grid(&multi, &labeled, &run.res.eval)?;
    let table = result.render_table();
    print!("{table}");
    run.write_text(RESULTS_TXT, &table)?;
    run.write_text(RESULTS_TSV, &result.to_tsv())?;
    let value = serde_json::to_value(&result).map_err(|e| Error::Numeric(e.to_string()))?;
    run.write_json(RESULTS_JSON, value)?;
    if let Some(bad) = result.cells.iter().find(|c| c.error.is_some()) {
        log::warn!("cell {:?} failed: {}", bad.key, bad.error.as_deref().unwrap_or(""));
    }
    Ok(())
}

/// Embeddings of every target node, from the fine-tuned model or, with
/// `encoder_only`, from the pre-trained encoder.
pub fn export(run: &mut Run, encoder_only: bool) -> Result<()> {
    let g = load_single(run)?;
    let x = load_features(run, &g)?;
    let nodes: Vec<usize> = (0..g.node_count()).collect();
    let ft = &run.res.finetune.clone();
    let emb = if encoder_only {
        let path = run.out(ENCODER);
        require(&path, "pre-trained encoder")?;
        let (enc, _) = load_encoder(&path)?;
        encoder_embeddings(
            &enc,
            g.view(),
            x.values(),
            &nodes,
            ft.mode,
            ft.pooling,
            &ft.sampler,
            ft.seed,
        )?
    } else {
        let path = run.out(MODEL);
        require(&path, "fine-tuned model (run `finetune` first)")?;
        let (model, _) = load_model(&path)?;
        embed_nodes(&model, g.view(), x.values(), &nodes, ft)?
    };
    let truth = {
        let path = run.out(TRUTH);
        if path.exists() {
            path
        } else {
            run.cfg.paths.labels()
        }
    };
    let mut labels = vec![None; g.node_count()];
    if truth.exists() {
        for &(u, y) in load_single_labels(&g, &truth)?.entries() {
            labels[u] = Some(y);
        }
    }
    let origin: Vec<usize> = g.origin().to_vec();
    let path = run.out(EMBEDDINGS);
    export_embeddings(&path, &origin, &labels, &emb)?;
    run.stamp(path)?;
    Ok(())
}

/// Writes a one-line summary of the run to stderr.
pub fn report(run: &Run, manifest: &Path) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(
        err,
        "{}: {} artifacts, manifest {}",
        run.command,
        run.artifacts.len(),
        manifest.display()
    );
}
