//! Criterion benchmarks for the learner and evaluation paths; see `benches/`.
