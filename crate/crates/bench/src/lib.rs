//! Criterion benchmarks for the hot paths; see `benches/hot_paths.rs`.
