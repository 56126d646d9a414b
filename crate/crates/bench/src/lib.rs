//! Criterion benchmarks for the phase-alignment crate; see `benches/`.
