//! Criterion benchmarks for the symstack pipeline live under `benches/`.
