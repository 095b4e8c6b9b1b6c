//! Heterogeneous graph learning toolkit.
//!
//! A from-scratch pipeline for desk-scale heterogeneous graphs: feature
//! preprocessing into a shared space, graph attention encoders with
//! edge-type embeddings and residual connections (plus GCN/GAT/RGCN
//! baselines), task decoders, ranking metrics, and seeded training loops
//! with validation-based early stopping.

pub mod decoders;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod models;
pub mod preprocess;
pub mod report;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
