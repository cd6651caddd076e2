//! Graph structure refinement by self-supervised pretraining: structural and
//! feature views of a graph are contrasted, the learned embeddings are used to
//! add and remove edges, and a GCN is fine-tuned on the refined graph.

pub mod config;
pub mod data;
pub mod deepwalk;
pub mod error;
pub mod features;
pub mod finetune;
pub mod graph;
pub mod nn;
pub mod pipeline;
pub mod pretrain;
pub mod refine;
pub mod seed;
pub mod sparse;

pub use error::{Error, Result};
