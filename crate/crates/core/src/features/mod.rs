//! Node feature initialization for graphs without native node attributes.

mod eigen;
mod lanczos;
mod pagerank;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use eigen::{init_eigen, top_eigenpairs, EigenConfig, EigenPairs};
pub use lanczos::lanczos_top;
pub use pagerank::{init_pagerank, pagerank, PageRankConfig};

use crate::error::{Error, Result};
use crate::graph::Csr;

/// Node feature matrix, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Array2<f64>,
    description: String,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>, description: impl Into<String>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::Shape("feature dimension must be positive".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("feature matrix contains non-finite values".into()));
        }
        Ok(FeatureMatrix {
            values,
            description: description.into(),
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Method and configuration the matrix was produced with.
    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMethod {
    Random,
    Degree,
    PageRank,
    Eigen,
}

impl FeatureMethod {
    pub const ALL: [FeatureMethod; 4] = [
        FeatureMethod::Random,
        FeatureMethod::Degree,
        FeatureMethod::PageRank,
        FeatureMethod::Eigen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureMethod::Random => "Random",
            FeatureMethod::Degree => "Degree",
            FeatureMethod::PageRank => "PageRank",
            FeatureMethod::Eigen => "Eigen",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub method: FeatureMethod,
    pub random_dim: usize,
    /// Degree one-hot cap; `None` sizes the vector by the maximum degree.
    pub degree_cap: Option<usize>,
    pub pagerank: PageRankConfig,
    pub eigen: EigenConfig,
    pub normalize: bool,
    pub seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            method: FeatureMethod::Eigen,
            random_dim: 16,
            degree_cap: Some(128),
            pagerank: PageRankConfig::default(),
            eigen: EigenConfig::default(),
            normalize: true,
            seed: 0,
        }
    }
}

/// Runs the configured initializer, followed by z-scoring when enabled.
pub fn initialize(adj: &Csr, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    let raw = match cfg.method {
        FeatureMethod::Random => init_random(adj, cfg.random_dim, cfg.seed),
        FeatureMethod::Degree => init_degree(adj, cfg.degree_cap.unwrap_or(usize::MAX)),
        FeatureMethod::PageRank => init_pagerank(adj, &cfg.pagerank)?,
        FeatureMethod::Eigen => init_eigen(adj, &cfg.eigen)?,
    };
    Ok(if cfg.normalize { normalize_features(&raw) } else { raw })
}

/// I.i.d. standard normal features, deterministic in `seed`.
pub fn init_random(adj: &Csr, dim: usize, seed: u64) -> FeatureMatrix {
    let dim = dim.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Array2::from_shape_simple_fn((adj.node_count(), dim), || StandardNormal.sample(&mut rng));
    FeatureMatrix {
        values,
        description: format!("random dim={dim} seed={seed}"),
    }
}

/// One-hot degree features. The dimension is `min(max_degree, cap) + 1` and
/// degrees above `cap` share the last slot.
pub fn init_degree(adj: &Csr, cap: usize) -> FeatureMatrix {
    let cap = cap.max(1);
    let top = adj.max_degree().min(cap);
    let mut values = Array2::zeros((adj.node_count(), top + 1));
    for i in 0..adj.node_count() {
        values[[i, adj.degree(i).min(top)]] = 1.0;
    }
    let cap_desc = if cap == usize::MAX {
        "none".to_string()
    } else {
        cap.to_string()
    };
    FeatureMatrix {
        values,
        description: format!("degree cap={cap_desc}"),
    }
}

/// Per-column z-score with population variance. Constant columns become 0.
pub fn normalize_features(x: &FeatureMatrix) -> FeatureMatrix {
    let mut values = x.values.clone();
    let n = values.nrows() as f64;
    if n > 0.0 {
        for mut col in values.columns_mut() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            if std <= 1e-12 * mean.abs().max(1.0) {
                col.fill(0.0);
            } else {
                col.mapv_inplace(|v| (v - mean) / std);
            }
        }
    }
    FeatureMatrix {
        values,
        description: format!("{} normalized", x.description),
    }
}

/// Text format: a `#` header line naming the method, a `shape` record, then
/// one tab-separated row per node. Values use shortest round-trip notation.
pub fn write_features(path: &Path, x: &FeatureMatrix, config_hash: &str) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# features {} config_hash={config_hash}", x.description)?;
    writeln!(out, "shape\t{}\t{}", x.rows(), x.dim())?;
    for row in x.values.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.write_all(b"\t")?;
            }
            first = false;
            write!(out, "{v:?}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let reader = BufReader::new(File::open(path)?);
    let err = |line: usize, msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    };
    let mut description = String::new();
    let mut shape = None;
    let mut data = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some(rest) = line.strip_prefix("# features ") {
            description = rest.rsplit_once(" config_hash=").map_or(rest, |(d, _)| d).to_string();
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("shape\t") {
            let (r, c) = rest.split_once('\t').ok_or_else(|| err(i + 1, "bad shape"))?;
            let r: usize = r.parse().map_err(|_| err(i + 1, "bad row count"))?;
            let c: usize = c.parse().map_err(|_| err(i + 1, "bad column count"))?;
            shape = Some((r, c));
            continue;
        }
        let (_, c) = shape.ok_or_else(|| err(i + 1, "row before shape record"))?;
        let before = data.len();
        for f in line.split('\t') {
            data.push(f.parse::<f64>().map_err(|_| err(i + 1, "bad value"))?);
        }
        if data.len() - before != c {
            return Err(err(i + 1, "row has the wrong number of columns"));
        }
    }
    let (r, c) = shape.ok_or_else(|| err(0, "missing shape record"))?;
    if data.len() != r * c {
        return Err(err(0, "row count does not match shape"));
    }
    let values = Array2::from_shape_vec((r, c), data).map_err(|e| Error::Shape(e.to_string()))?;
    FeatureMatrix::new(values, description)
}
