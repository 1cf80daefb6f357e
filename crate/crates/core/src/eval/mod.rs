//! Synthetic data, cross-validation, the method grid and embedding export.

pub mod export;
pub mod grid;
pub mod kfold;
pub mod synth;

pub use export::{encoder_embeddings, export_embeddings};
pub use grid::{run_grid, run_synthetic_grid, CellKey, CellResult, EvalConfig, ExperimentResult, GraphKind};
pub use kfold::{accuracy, kfold_split, micro_f1, verify_folds, Fold};
pub use synth::{generate_synthetic, SynthConfig, SyntheticData};
