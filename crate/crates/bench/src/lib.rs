//! Criterion benchmarks for the `gmm-nls` formulations and solver; see `benches/`.
