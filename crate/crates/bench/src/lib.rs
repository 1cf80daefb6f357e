//! Criterion benchmarks for the pipeline kernels; see `benches/`.
