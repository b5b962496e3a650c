//! Criterion benchmarks for the planners and the trainer live in `benches/`.
