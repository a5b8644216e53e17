//! Resource-interaction graphs from Linux audit logs, with two unsupervised
//! anomaly detectors (graph-autoencoder link prediction and shingle-vector
//! clustering) plus the supporting parsing, labeling, and evaluation tooling.

pub mod audit;
pub mod cluster;
pub mod eval;
pub mod gae;
pub mod graph;
pub mod growth;
pub mod label;
pub mod segment;
pub mod synth;
pub mod syscalls;
pub mod time;
