//! Criterion benchmarks for the rawpipe kernels; see `benches/`.
