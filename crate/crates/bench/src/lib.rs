//! Criterion benchmarks for the restoration kernels live in `benches/`.
