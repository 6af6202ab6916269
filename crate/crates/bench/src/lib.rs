//! Criterion benchmarks for the passband toolkit. See `benches/`.
