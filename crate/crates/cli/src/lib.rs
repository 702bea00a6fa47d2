//! Stage orchestration behind the `phonematch` binary: config handling,
//! per-stage runners with atomic artifact persistence, and synthetic
//! fixture generation. Kept as a library so integration tests drive the
//! same code paths the binary does.

pub mod config;
pub mod fixture;
pub mod stages;
