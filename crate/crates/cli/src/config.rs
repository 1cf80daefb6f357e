//! Pipeline configuration: one TOML file with a section per module.
//!
//! Loading starts from a preset (`reference` or `desk`), overlays the file's
//! tables key by key and then rejects anything the schema does not know.
//! A run manifest (`manifest.<command>.json`) is accepted in place of a TOML
//! file and reproduces the recorded configuration exactly.

use std::path::{Path, PathBuf};

use graphfraud_core::eval::{EvalConfig, GraphKind, SynthConfig};
use graphfraud_core::features::{FeatureConfig, FeatureMethod};
use graphfraud_core::finetune::FinetuneConfig;
use graphfraud_core::graph::TransformConfig;
use graphfraud_core::nn::EmbeddingMode;
use graphfraud_core::pretrain::PretrainConfig;
use graphfraud_core::sampling::SamplerConfig;
use graphfraud_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Reference,
    Desk,
}

/// Input and output locations. Unset inputs default to the files `synth`
/// writes into the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub graph: Option<PathBuf>,
    pub types: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub output: PathBuf,
    pub target_type: String,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            graph: None,
            types: None,
            labels: None,
            output: PathBuf::from("out"),
            target_type: "user".into(),
        }
    }
}

impl Paths {
    pub fn graph(&self) -> PathBuf {
        self.graph.clone().unwrap_or_else(|| self.output.join("edges.tsv"))
    }

    pub fn types(&self) -> PathBuf {
        self.types.clone().unwrap_or_else(|| self.output.join("types.tsv"))
    }

    pub fn labels(&self) -> PathBuf {
        self.labels.clone().unwrap_or_else(|| self.output.join("labels.tsv"))
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.output.join(name)
    }
}

/// Grid axes. Module settings come from the top-level sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub folds: usize,
    pub seeds: Vec<u64>,
    pub graphs: Vec<GraphKind>,
    pub modes: Vec<EmbeddingMode>,
    pub methods: Vec<FeatureMethod>,
    pub pretrain_variants: Vec<bool>,
}

impl Default for EvalSection {
    fn default() -> Self {
        let e = EvalConfig::default();
        EvalSection {
            folds: e.folds,
            seeds: e.seeds,
            graphs: e.graphs,
            modes: e.modes,
            methods: e.methods,
            pretrain_variants: e.pretrain_variants,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub preset: Preset,
    /// Base seed, added to every module seed.
    pub seed: u64,
    /// Fine-tune from `encoder.ckpt` rather than a fresh encoder.
    pub use_pretrained: bool,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub transform: TransformConfig,
    pub features: FeatureConfig,
    /// Sampler shared by pre-training and fine-tuning.
    pub sampler: Option<SamplerConfig>,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub eval: EvalSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            preset: Preset::Reference,
            seed: 0,
            use_pretrained: true,
            paths: Paths::default(),
            synth: SynthConfig::default(),
            transform: TransformConfig::default(),
            features: FeatureConfig::default(),
            sampler: None,
            pretrain: PretrainConfig::default(),
            finetune: FinetuneConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut cfg = PipelineConfig {
            preset,
            ..Default::default()
        };
        if preset == Preset::Desk {
            let d = EvalConfig::desk_preset();
            cfg.features = d.features;
            cfg.pretrain = d.pretrain;
            cfg.finetune = d.finetune;
            cfg.eval.seeds = d.seeds;
        }
        cfg
    }

    /// Parses TOML text over the chosen preset.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for section in ["pretrain", "finetune"] {
            let nested = table
                .get(section)
                .and_then(|v| v.as_table())
                .is_some_and(|t| t.contains_key("sampler"));
            if nested && table.contains_key("sampler") {
                return Err(Error::Config(format!(
                    "`{section}.sampler` conflicts with the top-level [sampler] section"
                )));
            }
        }
        let preset: Preset = match table.get("preset") {
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("preset: {e}")))?,
            None => Preset::default(),
        };
        let base = toml::Table::try_from(Self::preset(preset)).map_err(|e| Error::Config(e.to_string()))?;
        let merged = merge(base, table);
        merged
            .try_into::<PipelineConfig>()
            .map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
    }

    /// Reads a TOML config, or the `config` field of a run manifest when the
    /// path ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let cfg = manifest
                .get("config")
                .ok_or_else(|| Error::Config(format!("{} has no `config` field", path.display())))?;
            serde_json::from_value(cfg.clone()).map_err(|e| Error::Config(e.to_string()))
        } else {
            Self::from_toml(&text)
        }
    }

    /// Module configs with the base seed added and the shared sampler
    /// copied in. Manifests store the unresolved form.
    pub fn resolved(&self) -> Resolved {
        let s = self.seed;
        let mut synth = self.synth.clone();
        synth.seed = synth.seed.wrapping_add(s);
        let mut features = self.features.clone();
        features.seed = features.seed.wrapping_add(s);
        features.eigen.seed = features.eigen.seed.wrapping_add(s);
        let mut pretrain = self.pretrain.clone();
        pretrain.seed = pretrain.seed.wrapping_add(s);
        let mut finetune = self.finetune.clone();
        finetune.seed = finetune.seed.wrapping_add(s);
        if let Some(sampler) = &self.sampler {
            pretrain.sampler = sampler.clone();
            finetune.sampler = sampler.clone();
        }
        let eval = EvalConfig {
            folds: self.eval.folds,
            seeds: self.eval.seeds.iter().map(|x| x.wrapping_add(s)).collect(),
            graphs: self.eval.graphs.clone(),
            modes: self.eval.modes.clone(),
            methods: self.eval.methods.clone(),
            pretrain_variants: self.eval.pretrain_variants.clone(),
            features: self.features.clone(),
            transform: self.transform.clone(),
            pretrain: PretrainConfig {
                sampler: pretrain.sampler.clone(),
                ..self.pretrain.clone()
            },
            finetune: FinetuneConfig {
                sampler: finetune.sampler.clone(),
                ..self.finetune.clone()
            },
        };
        Resolved {
            synth,
            features,
            pretrain,
            finetune,
            eval,
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory so
    /// that identical runs into different directories share a hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.output = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Module configs with the base seed and shared sampler applied.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub synth: SynthConfig,
    pub features: FeatureConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub eval: EvalConfig,
}

fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                let merged = merge(std::mem::take(b), o);
                *b = merged;
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_reference_defaults() {
        let cfg = PipelineConfig::from_toml("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.pretrain.lr, 1e-6);
        assert_eq!(cfg.pretrain.tau, 0.07);
        assert_eq!(cfg.pretrain.queue_size, 1024);
    }

    #[test]
    fn desk_preset_overlays_keys() {
        let cfg = PipelineConfig::from_toml("preset = \"desk\"\n[pretrain]\nepochs = 2\n").unwrap();
        assert_eq!(cfg.pretrain.epochs, 2);
        assert_eq!(cfg.pretrain.lr, EvalConfig::desk_preset().pretrain.lr);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = PipelineConfig::from_toml("[pretrain]\nlearning_rate = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
        let err = PipelineConfig::from_toml("bogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn nested_sampler_conflict() {
        let text = "[sampler]\nmax_nodes = 8\n[pretrain.sampler]\nmax_nodes = 4\n";
        assert!(PipelineConfig::from_toml(text).is_err());
    }

    #[test]
    fn seed_and_sampler_propagate() {
        let cfg = PipelineConfig::from_toml("seed = 7\n[sampler]\nmax_nodes = 9\n[eval]\nseeds = [0, 1]\n").unwrap();
        let r = cfg.resolved();
        assert_eq!(r.pretrain.seed, 7);
        assert_eq!(r.finetune.sampler.max_nodes, 9);
        assert_eq!(r.eval.pretrain.sampler.max_nodes, 9);
        assert_eq!(r.eval.seeds, vec![7, 8]);
        assert_eq!(r.synth.seed, 7);
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.paths.output = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
