//! Criterion benchmarks for the swingfill solvers live in `benches/`.
