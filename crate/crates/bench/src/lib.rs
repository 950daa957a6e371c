//! Criterion benchmarks for `ndnsmc`; the code lives in `benches/`.
