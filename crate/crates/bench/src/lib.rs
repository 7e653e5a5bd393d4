//! Criterion benchmarks for the solver engines live under `benches/`.
