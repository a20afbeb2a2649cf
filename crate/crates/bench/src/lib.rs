//! Criterion benchmarks for the configuration-game solvers live under `benches/`.
