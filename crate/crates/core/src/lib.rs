//! Evaluation workbench for ocean SAR foundation-model embeddings.
//!
//! Consumes precomputed image/patch embeddings and detection outputs and
//! scores them on classification, regression, circular regression and
//! detection benchmarks. Supporting pieces: satellite matchup co-location,
//! diversity-based subset selection and patch similarity maps.

pub mod circular;
pub mod cli;
pub mod coloc;
pub mod detect_eval;
pub mod digest;
pub mod embed_store;
pub mod probes;
pub mod pruning;
pub mod registry;
pub mod simmap;
