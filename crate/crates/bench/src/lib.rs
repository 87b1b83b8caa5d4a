//! Criterion benchmarks for `mrc-align`; see `benches/`.
