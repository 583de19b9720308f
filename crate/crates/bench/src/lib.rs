//! Benchmark-only crate: all code lives in the bench targets.
