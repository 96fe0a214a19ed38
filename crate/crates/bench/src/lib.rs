//! Criterion benchmarks for posekit; see `benches/`.
