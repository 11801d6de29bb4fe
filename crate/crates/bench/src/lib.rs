//! Criterion benchmarks for the pipeline stages live under `benches/`.
