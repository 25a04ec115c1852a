//! Sequential recommendation with high-order item associations.
//!
//! The pipeline: [`data`] turns raw interaction logs into chronological
//! per-user sequences, splits and sliding-window instances; [`model`] holds
//! the embeddings and the forward pass; [`training`] fits them with BPR and
//! Adam; [`evaluation`] ranks the full catalogue and reports Recall@k and
//! NDCG@k; [`cli`] wires it all into the `ham` binary.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
